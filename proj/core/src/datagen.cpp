#include "ncm/datagen.hpp"

#include <atomic>
#include <cmath>
#include <memory>
#include <mutex>
#include <stdexcept>
#include <thread>

#include "ncm/rhs.hpp"
#include "ncm/spectral.hpp"

namespace ncm {

void GenConfig::validate() const {
    if (fine_n_x <= 0 || coarse_n_x <= 0 || fine_n_x % coarse_n_x != 0)
        throw std::invalid_argument("GenConfig: fine_n_x must be a multiple of coarse_n_x");
    if (!(length > 0.0) || !(t_end > 0.0) || !(dt_snap > 0.0))
        throw std::invalid_argument("GenConfig: length, t_end, dt_snap must be positive");
    const double ratio = t_end / dt_snap;
    if (std::abs(ratio - std::llround(ratio)) > 1e-9)
        throw std::invalid_argument("GenConfig: dt_snap must divide t_end");
    if (n_trajectories < 1)
        throw std::invalid_argument("GenConfig: need at least one trajectory");
    if (n_train + n_validation + n_test != n_trajectories)
        throw std::invalid_argument("GenConfig: split counts must sum to the trajectory count");
    const int n_snap = static_cast<int>(std::llround(ratio)) + 1;
    if (discard_snapshots < 0 || discard_snapshots >= n_snap)
        throw std::invalid_argument("GenConfig: discard count out of range");
    if (max_retries < 0 || workers < 1)
        throw std::invalid_argument("GenConfig: max_retries >= 0 and workers >= 1 required");
}

GenConfig burgers_preset(std::uint64_t seed) {
    GenConfig cfg;
    cfg.equation = Equation::burgers;
    cfg.fine_n_x = 4096;
    cfg.coarse_n_x = 64;
    cfg.nu = 5e-4;
    cfg.length = 1.0;
    cfg.t_end = 0.5;
    cfg.dt_snap = std::ldexp(1.0, -7);
    cfg.n_trajectories = 128;
    cfg.n_train = 96;
    cfg.n_validation = 0;
    cfg.n_test = 32;
    cfg.seed = seed;
    cfg.fine_solver.method = Method::tsit5_adaptive;
    cfg.fine_solver.abstol = 1e-8;
    cfg.fine_solver.reltol = 1e-8;
    return cfg;
}

GenConfig ks_preset(std::uint64_t seed) {
    GenConfig cfg;
    cfg.equation = Equation::kuramoto_sivashinsky;
    cfg.fine_n_x = 1024;
    cfg.coarse_n_x = 128;
    cfg.length = 64.0;
    cfg.t_end = 272.0;
    cfg.dt_snap = 0.5;
    cfg.discard_snapshots = 32;
    cfg.n_trajectories = 100;
    cfg.n_train = 80;
    cfg.n_validation = 10;
    cfg.n_test = 10;
    cfg.seed = seed;
    cfg.fine_solver.method = Method::etdrk4;
    cfg.fine_solver.dt = 0.05;
    return cfg;
}

GenConfig ks_desk_preset(std::uint64_t seed) {
    GenConfig cfg = ks_preset(seed);
    cfg.t_end = 144.0;
    cfg.n_trajectories = 36;
    cfg.n_train = 24;
    cfg.n_validation = 4;
    cfg.n_test = 8;
    return cfg;
}

namespace {

Trajectory solve_fine(const GenConfig& cfg, std::uint64_t sub_index) {
    const PeriodicGrid fine(cfg.fine_n_x, cfg.length);
    Rng rng = Rng::child(cfg.seed, sub_index);
    const State u0 = random_initial_state(fine, rng);

    const int n_snap = static_cast<int>(std::llround(cfg.t_end / cfg.dt_snap)) + 1;
    std::vector<double> save_times(n_snap);
    for (int i = 0; i < n_snap; ++i) save_times[i] = i * cfg.dt_snap;

    SolveRecord rec;
    std::unique_ptr<OdeRhs> full;
    if (cfg.equation == Equation::burgers) {
        full = std::make_unique<BurgersRhs>(fine, cfg.nu);
        rec = solve(*full, u0, 0.0, save_times, cfg.fine_solver);
    } else {
        KsFvmConvection conv(fine);
        SplitRhs split{ks_fvm_linear_eigenvalues(fine), &conv};
        rec = etdrk4_solve(split, u0, 0.0, save_times, cfg.fine_solver.dt);
        full = std::make_unique<KsRhs>(fine);
    }

    Trajectory traj;
    traj.grid = fine;
    traj.t0 = 0.0;
    traj.dt_snap = cfg.dt_snap;
    traj.n_snapshots = n_snap - cfg.discard_snapshots;
    traj.states.reserve(static_cast<std::size_t>(traj.n_snapshots) * fine.n_x);
    traj.derivatives.emplace();
    traj.derivatives->reserve(traj.states.capacity());
    std::vector<double> d(fine.n_x);
    for (int i = cfg.discard_snapshots; i < n_snap; ++i) {
        const std::vector<double>& u = rec.snapshots[i];
        traj.states.insert(traj.states.end(), u.begin(), u.end());
        full->eval(u, d);
        traj.derivatives->insert(traj.derivatives->end(), d.begin(), d.end());
    }
    return traj;
}

} // namespace

GenOutput generate(const GenConfig& cfg, bool keep_fine, std::ostream* log) {
    cfg.validate();
    const int factor = cfg.fine_n_x / cfg.coarse_n_x;

    std::vector<Trajectory> fine_trajs(cfg.n_trajectories);
    std::vector<Trajectory> coarse_trajs(cfg.n_trajectories);
    std::mutex log_mutex;

    auto generate_one = [&](int p) {
        // sub-seed index leaves room for retry variants per trajectory
        for (int retry = 0;; ++retry) {
            try {
                Trajectory fine = solve_fine(cfg, static_cast<std::uint64_t>(p) * 16 + retry);
                coarse_trajs[p] = downsample(fine, factor);
                if (keep_fine) fine_trajs[p] = std::move(fine);
                return;
            } catch (const BlowUpError& e) {
                if (log) {
                    std::lock_guard<std::mutex> lock(log_mutex);
                    *log << "trajectory " << p << " blew up (attempt " << retry + 1
                         << "): " << e.what() << "\n";
                }
                if (retry >= cfg.max_retries)
                    throw BlowUpError("trajectory " + std::to_string(p) + " failed after " +
                                      std::to_string(retry + 1) + " attempts");
            }
        }
    };

    if (cfg.workers <= 1) {
        for (int p = 0; p < cfg.n_trajectories; ++p) generate_one(p);
    } else {
        std::atomic<int> next{0};
        std::exception_ptr error;
        std::mutex error_mutex;
        auto worker = [&] {
            for (;;) {
                const int p = next.fetch_add(1);
                if (p >= cfg.n_trajectories) return;
                try {
                    generate_one(p);
                } catch (...) {
                    std::lock_guard<std::mutex> lock(error_mutex);
                    if (!error) error = std::current_exception();
                    return;
                }
            }
        };
        std::vector<std::thread> pool;
        const int n_workers = std::min(cfg.workers, cfg.n_trajectories);
        for (int w = 0; w < n_workers; ++w) pool.emplace_back(worker);
        for (std::thread& t : pool) t.join();
        if (error) std::rethrow_exception(error);
    }

    GenOutput out;
    out.coarse.trajectories = std::move(coarse_trajs);
    out.coarse.equation = cfg.equation;
    out.coarse.seed = cfg.seed;
    out.coarse = split_dataset(std::move(out.coarse), cfg.n_train, cfg.n_validation, cfg.n_test);
    out.coarse.validate();
    if (keep_fine) {
        Dataset fine;
        fine.trajectories = std::move(fine_trajs);
        fine.equation = cfg.equation;
        fine.seed = cfg.seed;
        out.fine = split_dataset(std::move(fine), cfg.n_train, cfg.n_validation, cfg.n_test);
    }
    return out;
}

} // namespace ncm
