// End-to-end acceptance checks. Each test case prints a single
// "criterion NN ...: PASS/FAIL" line; generated datasets are cached on
// disk under acceptance_cache/ so later criteria reuse earlier work.
#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <string>
#include <vector>

#include "ncm/datagen.hpp"
#include "ncm/dataset_io.hpp"
#include "ncm/metrics.hpp"
#include "ncm/nn.hpp"
#include "ncm/rhs.hpp"
#include "ncm/solvers.hpp"
#include "ncm/spectral.hpp"
#include "ncm/training.hpp"
#include "test_helpers.hpp"

using namespace ncm;
using ncm::testing::fd_gradient;
using ncm::testing::max_rel_error;
using ncm::testing::random_vector;
using ncm::testing::smooth_state;

namespace {

bool report(int num, const char* name, bool pass) {
    std::printf("criterion %02d (%s): %s\n", num, name, pass ? "PASS" : "FAIL");
    std::fflush(stdout);
    return pass;
}

const std::filesystem::path& cache_dir() {
    static const std::filesystem::path dir = [] {
        std::filesystem::path d = "acceptance_cache";
        std::filesystem::create_directories(d);
        return d;
    }();
    return dir;
}

Dataset load_or_generate(const std::string& name, const GenConfig& cfg) {
    const std::filesystem::path path = cache_dir() / name;
    if (std::filesystem::exists(path)) return read_ncm1(path.string());
    Dataset ds = generate(cfg).coarse;
    write_ncm1(path.string(), ds);
    return ds;
}

// Training runs are deterministic for a fixed seed, so their scores are
// cached alongside the datasets; an interrupted suite resumes instead of
// retraining from scratch. Delete acceptance_cache/ to force recomputation.
bool try_load_scores(const std::filesystem::path& p, std::size_t n, std::vector<double>& out) {
    std::ifstream f(p);
    if (!f) return false;
    out.assign(n, 0.0);
    for (double& x : out)
        if (!(f >> x)) return false;
    return true;
}

void save_scores(const std::filesystem::path& p, const std::vector<double>& vals) {
    const std::filesystem::path tmp = p.string() + ".tmp";
    {
        std::ofstream f(tmp);
        f.precision(17);
        for (double v : vals) f << v << "\n";
    }
    std::filesystem::rename(tmp, p);
}

constexpr std::uint64_t kBurgersSeed = 1001;
constexpr std::uint64_t kKsSeed = 2001;

Dataset burgers_dataset() { return load_or_generate("burgers_full.ncm1", burgers_preset(kBurgersSeed)); }
Dataset ks_desk_dataset() { return load_or_generate("ks_desk.ncm1", ks_desk_preset(kKsSeed)); }

Trajectory rollout_trajectory(const ClosureModel& model, const Trajectory& ref,
                              const SolverConfig& solver) {
    std::vector<double> times(ref.n_snapshots);
    for (int i = 0; i < ref.n_snapshots; ++i) times[i] = ref.time(i);
    const auto snaps = model.rollout(ref.snapshot(0), ref.t0, times, solver);
    Trajectory out;
    out.grid = ref.grid;
    out.t0 = ref.t0;
    out.dt_snap = ref.dt_snap;
    out.n_snapshots = ref.n_snapshots;
    out.states.reserve(static_cast<std::size_t>(ref.n_snapshots) * ref.grid.n_x);
    for (const auto& s : snaps) out.states.insert(out.states.end(), s.begin(), s.end());
    return out;
}

MetricsReport evaluate_on_split(const ClosureModel& model, const Dataset& ds, Split split,
                                const SolverConfig& solver, double lambda_max) {
    std::vector<Trajectory> preds;
    std::vector<const Trajectory*> pp, rp;
    for (int idx : ds.indices_of(split)) {
        preds.push_back(rollout_trajectory(model, ds.trajectories[idx], solver));
        rp.push_back(&ds.trajectories[idx]);
    }
    for (const Trajectory& t : preds) pp.push_back(&t);
    return evaluate_trajectories(pp, rp, lambda_max);
}

double burgers_baseline_rmse(const Dataset& ds) {
    const PeriodicGrid grid = ds.trajectories.at(0).grid;
    const CnnArchitecture arch = CnnArchitecture::small();
    CnnParams zero{std::vector<double>(arch.param_count(), 0.0)};
    const ClosureModel coarse(Equation::burgers, grid, 5e-4, ClosureModel::Form::fvm, &arch,
                              &zero, false);
    SolverConfig eval;
    eval.method = Method::tsit5_adaptive;
    eval.abstol = eval.reltol = 1e-8;
    std::vector<Trajectory> preds;
    std::vector<const Trajectory*> pp, rp;
    for (int idx : ds.indices_of(Split::test)) {
        preds.push_back(rollout_trajectory(coarse, ds.trajectories[idx], eval));
        rp.push_back(&ds.trajectories[idx]);
    }
    for (const Trajectory& t : preds) pp.push_back(&t);
    return rmse_pooled(pp, rp);
}

// reference trajectory from the dispatch-matched zero-closure model, so
// gradient checks run on realistic (non-zero-residual) data
Trajectory synthetic_reference(Equation eq, const PeriodicGrid& grid, ClosureModel::Form form,
                               const CnnArchitecture& arch, int n_t, double dt_snap,
                               const SolverConfig& solver, std::uint64_t seed) {
    CnnParams zero{std::vector<double>(arch.param_count(), 0.0)};
    const ClosureModel truth(eq, grid, 5e-4, form, &arch, &zero);
    Rng rng(seed);
    State u0(grid.n_x);
    const State smooth = smooth_state(grid.n_x, grid.length);
    for (int i = 0; i < grid.n_x; ++i) u0[i] = smooth[i] + 0.05 * rng.normal();
    std::vector<double> times(n_t + 1);
    for (int i = 0; i <= n_t; ++i) times[i] = i * dt_snap;
    const auto snaps = truth.rollout(u0, 0.0, times, solver);
    Trajectory ref;
    ref.grid = grid;
    ref.dt_snap = dt_snap;
    ref.n_snapshots = n_t + 1;
    for (const auto& s : snaps) ref.states.insert(ref.states.end(), s.begin(), s.end());
    // make the residual non-zero
    for (double& x : ref.states) x += 1e-3 * std::sin(x);
    std::copy(u0.begin(), u0.end(), ref.states.begin());
    return ref;
}

struct KsRunResult {
    double vpt_avg = 0.0;
    bool ok = false;
};

KsRunResult train_and_score_ks(const Dataset& ds, int n_t, std::uint64_t seed) {
    const PeriodicGrid grid = ds.trajectories.at(0).grid;
    const CnnArchitecture arch = CnnArchitecture::large();
    Rng rng(seed * 1000 + 7);
    CnnParams params = init_params(arch, rng);

    TrainConfig cfg;
    cfg.approach = Approach::disc_then_opt;
    cfg.n_t = n_t;
    cfg.epochs = 500;
    cfg.batch_size = 8;
    cfg.learning_rate = 1e-3;
    cfg.solver.method = Method::etdrk4;
    cfg.solver.dt = 0.5;
    cfg.seed = seed;

    KsRunResult res;
    try {
        const TrainResult tr = train_on_dataset(ds, arch, params, cfg, 0.0);
        const CnnParams& chosen = tr.has_best ? tr.best_params : params;
        const ClosureModel model(Equation::kuramoto_sivashinsky, grid, 0.0,
                                 ClosureModel::Form::spectral, &arch, &chosen);
        const MetricsReport rep =
            evaluate_on_split(model, ds, Split::test, cfg.solver, lyapunov(grid.length).lambda_max);
        res.vpt_avg = rep.vpt_avg;
        res.ok = std::isfinite(rep.vpt_avg);
    } catch (const TrainStepError&) {
        res.ok = false;
    }
    return res;
}

} // namespace

TEST_SUITE("acceptance") {

TEST_CASE("criterion 01 gradient exactness") {
    bool pass = true;
    const PeriodicGrid grid(16, 1.0);
    const CnnArchitecture arch = CnnArchitecture::small();
    Rng rng(101);

    // NN backward vs central differences
    {
        CnnParams params = init_params(arch, rng);
        const State u = smooth_state(16, 1.0);
        const std::vector<double> w = random_vector(16, rng);
        std::vector<double> grad(arch.param_count(), 0.0), grad_u(16);
        nn_backward(arch, params, u, w, grad, grad_u);
        auto f = [&](std::span<const double> th) {
            CnnParams p{std::vector<double>(th.begin(), th.end())};
            std::vector<double> out(16);
            nn_forward(arch, p, u, out);
            double acc = 0.0;
            for (int i = 0; i < 16; ++i) acc += w[i] * out[i];
            return acc;
        };
        pass = pass && max_rel_error(grad, fd_gradient(f, params.theta)) < 1e-5;
    }

    // RHS state VJPs vs central differences
    {
        const State u = smooth_state(16, 1.0);
        const std::vector<double> w = random_vector(16, rng);
        const PeriodicGrid ks_grid(16, 64.0);
        const State uk = smooth_state(16, 64.0);
        const BurgersRhs burgers(grid, 5e-4);
        const KsRhs ks(ks_grid);
        const KsSpectralConvection conv(ks_grid);
        auto check_vjp = [&](const OdeRhs& rhs, const State& at) {
            std::vector<double> got(16);
            rhs.vjp_state(at, w, got);
            auto f = [&](std::span<const double> x) {
                std::vector<double> out(16);
                rhs.eval(x, out);
                double acc = 0.0;
                for (int i = 0; i < 16; ++i) acc += w[i] * out[i];
                return acc;
            };
            return max_rel_error(got, fd_gradient(f, at)) < 1e-5;
        };
        pass = pass && check_vjp(burgers, u) && check_vjp(ks, uk) && check_vjp(conv, uk);
    }

    // unrolled trajectory gradients vs central differences (n_x=16, N_t=3)
    {
        SolverConfig bsolver;
        bsolver.method = Method::tsit5_fixed;
        bsolver.dt = 1.0 / 128;
        const Trajectory bref = synthetic_reference(Equation::burgers, grid,
                                                    ClosureModel::Form::fvm, arch, 3, 1.0 / 128,
                                                    bsolver, 11);
        SolverConfig ksolver;
        ksolver.method = Method::etdrk4;
        ksolver.dt = 0.25;
        const PeriodicGrid ks_grid(16, 64.0);
        const Trajectory kref = synthetic_reference(Equation::kuramoto_sivashinsky, ks_grid,
                                                    ClosureModel::Form::spectral, arch, 3, 0.5,
                                                    ksolver, 12);
        auto check_dto = [&](Equation eq, const PeriodicGrid& g, ClosureModel::Form form,
                             const Trajectory& ref, const SolverConfig& solver) {
            CnnParams params = init_params(arch, rng);
            TrainConfig cfg;
            cfg.approach = Approach::disc_then_opt;
            cfg.n_t = 3;
            cfg.solver = solver;
            const ClosureModel model(eq, g, 5e-4, form, &arch, &params);
            std::vector<const Trajectory*> batch = {&ref};
            const BatchGrad bg = trajectory_gradient(model, Approach::disc_then_opt, batch, cfg);
            auto f = [&](std::span<const double> th) {
                CnnParams p{std::vector<double>(th.begin(), th.end())};
                const ClosureModel m(eq, g, 5e-4, form, &arch, &p);
                return trajectory_gradient(m, Approach::disc_then_opt, batch, cfg).loss;
            };
            return max_rel_error(bg.grad, fd_gradient(f, params.theta)) < 1e-5;
        };
        pass = pass && check_dto(Equation::burgers, grid, ClosureModel::Form::fvm, bref, bsolver);
        pass = pass && check_dto(Equation::kuramoto_sivashinsky, ks_grid,
                                 ClosureModel::Form::spectral, kref, ksolver);

        // adjoint agreement and convergence toward the discrete gradient
        {
            CnnParams params = init_params(arch, rng);
            const ClosureModel model(Equation::burgers, grid, 5e-4, ClosureModel::Form::fvm,
                                     &arch, &params);
            std::vector<const Trajectory*> batch = {&bref};
            TrainConfig disc;
            disc.n_t = 3;
            disc.solver = bsolver;
            TrainConfig adj = disc;
            adj.solver.method = Method::tsit5_adaptive;
            adj.solver.abstol = adj.solver.reltol = 1e-11;
            const BatchGrad gd = trajectory_gradient(model, Approach::disc_then_opt, batch, disc);
            const BatchGrad ga = trajectory_gradient(model, Approach::opt_then_disc, batch, adj);
            pass = pass && max_rel_error(gd.grad, ga.grad) < 1e-3;
        }
        {
            CnnParams params = init_params(arch, rng);
            const ClosureModel model(Equation::kuramoto_sivashinsky, ks_grid, 0.0,
                                     ClosureModel::Form::fvm, &arch, &params);
            SolverConfig fsolver;
            fsolver.method = Method::etdrk4;
            fsolver.dt = 0.5;
            const Trajectory fref = synthetic_reference(Equation::kuramoto_sivashinsky, ks_grid,
                                                        ClosureModel::Form::fvm, arch, 2, 0.5,
                                                        fsolver, 13);
            std::vector<const Trajectory*> batch = {&fref};
            TrainConfig cfg;
            cfg.n_t = 2;
            cfg.solver = fsolver;
            auto adjoint = [&](double dt) {
                TrainConfig c = cfg;
                c.solver.dt = dt;
                return trajectory_gradient(model, Approach::opt_then_disc, batch, c).grad;
            };
            TrainConfig fine = cfg;
            fine.solver.dt = 0.5 / 64;
            const std::vector<double> g_ref =
                trajectory_gradient(model, Approach::disc_then_opt, batch, fine).grad;
            const double e1 = max_rel_error(adjoint(0.5 / 4), g_ref);
            const double e2 = max_rel_error(adjoint(0.5 / 8), g_ref);
            const double e3 = max_rel_error(adjoint(0.5 / 16), g_ref);
            pass = pass && e2 < e1 && e3 < e2 && e3 < 1e-3;
        }
    }
    CHECK(report(1, "gradient exactness", pass));
}

TEST_CASE("criterion 02 theorem suites") {
    Rng rng(102);
    int violations_continuous = 0;
    for (int inst = 0; inst < 100; ++inst) {
        // A = s R(theta): spectral norm (Lipschitz constant) is exactly s
        const double s = 0.2 + rng.uniform();
        const double th = 2.0 * M_PI * rng.uniform();
        const double a11 = s * std::cos(th), a12 = -s * std::sin(th);
        const double a21 = s * std::sin(th), a22 = s * std::cos(th);
        CallableRhs g(2, [=](std::span<const double> u, std::span<double> out) {
            out[0] = a11 * u[0] + a12 * u[1];
            out[1] = a21 * u[0] + a22 * u[1];
        });
        const double eps = 1e-3 * (0.5 + rng.uniform());
        const double ang = 2.0 * M_PI * rng.uniform();
        const double d0 = eps * std::cos(ang), d1 = eps * std::sin(ang);
        CallableRhs gd(2, [=](std::span<const double> u, std::span<double> out) {
            out[0] = a11 * u[0] + a12 * u[1] + d0;
            out[1] = a21 * u[0] + a22 * u[1] + d1;
        });
        const std::vector<double> x0 = {rng.normal(), rng.normal()};
        SolverConfig cfg;
        cfg.method = Method::tsit5_adaptive;
        cfg.abstol = cfg.reltol = 1e-13;
        std::vector<double> times(41);
        for (int i = 0; i <= 40; ++i) times[i] = 2.0 * i / 40;
        const SolveRecord ref = solve(gd, x0, 0.0, times, cfg, true);
        const ReferencePath path = [&](double t) {
            std::vector<double> u(2);
            ref.dense->interpolate(t, u);
            return u;
        };
        violations_continuous += check_continuous_bound(g, path, eps, s, 2.0, 40).violations();
    }

    int violations_discrete = 0;
    for (int inst = 0; inst < 1000; ++inst) {
        const int n = 4;
        // G = c R with R a rotation in one coordinate plane: Lipschitz c
        const double c = inst % 5 == 0 ? 1.0 : 0.3 + 1.2 * rng.uniform();
        const double th = 2.0 * M_PI * rng.uniform();
        const StepMap g = [=](const std::vector<double>& u) {
            std::vector<double> out = u;
            out[0] = c * (std::cos(th) * u[0] - std::sin(th) * u[1]);
            out[1] = c * (std::sin(th) * u[0] + std::cos(th) * u[1]);
            out[2] = c * u[2];
            out[3] = c * u[3];
            return out;
        };
        const double eps = 1e-3 * (0.5 + rng.uniform());
        std::vector<std::vector<double>> ref;
        ref.push_back(random_vector(n, rng));
        for (int k = 0; k < 30; ++k) {
            std::vector<double> next = g(ref.back());
            std::vector<double> noise = random_vector(n, rng);
            double norm = 0.0;
            for (double x : noise) norm += x * x;
            norm = std::sqrt(norm);
            const double scale = eps * rng.uniform() / std::max(norm, 1e-300);
            for (int i = 0; i < n; ++i) next[i] += scale * noise[i];
            ref.push_back(std::move(next));
        }
        violations_discrete += check_discrete_bound(g, ref, eps, c).violations();
    }

    const bool pass = violations_continuous == 0 && violations_discrete == 0;
    CHECK(violations_continuous == 0);
    CHECK(violations_discrete == 0);
    CHECK(report(2, "theorem suites", pass));
}

TEST_CASE("criterion 03 conservation and structure") {
    bool pass = true;
    Rng rng(103);
    const CnnArchitecture small = CnnArchitecture::small();
    const CnnArchitecture large = CnnArchitecture::large();
    pass = pass && small.param_count() == 57 && large.param_count() == 533;

    const PeriodicGrid grid(64, 64.0);
    const State u = smooth_state(64, 64.0);

    // closure output sums to zero exactly (projection)
    for (const CnnArchitecture* arch : {&small, &large}) {
        CnnParams params = init_params(*arch, rng);
        const ClosureRhs closure(nullptr, arch, &params, grid.n_x, true);
        std::vector<double> out(64);
        closure.eval(u, out);
        double sum = 0.0;
        for (double x : out) sum += x;
        pass = pass && std::abs(sum) <= 1e-12;
    }

    // momentum-conserving right-hand sides
    {
        const PeriodicGrid bgrid(64, 1.0);
        const BurgersRhs burgers(bgrid, 5e-4);
        const KsRhs ks(grid);
        for (const OdeRhs* rhs : {static_cast<const OdeRhs*>(&burgers),
                                  static_cast<const OdeRhs*>(&ks)}) {
            const State x = rhs == static_cast<const OdeRhs*>(&burgers) ? smooth_state(64, 1.0) : u;
            std::vector<double> out(64);
            rhs->eval(x, out);
            double sum = 0.0;
            for (double v : out) sum += v;
            pass = pass && std::abs(sum) <= 1e-11;
        }
    }

    // translation equivariance of the closed model
    {
        CnnParams params = init_params(small, rng);
        const ClosureModel model(Equation::kuramoto_sivashinsky, grid, 0.0,
                                 ClosureModel::Form::fvm, &small, &params);
        std::vector<double> f(64), f_shift(64), u_shift(64);
        const int shift = 5;
        for (int i = 0; i < 64; ++i) u_shift[i] = u[(i + shift) % 64];
        model.full_rhs().eval(u, f);
        model.full_rhs().eval(u_shift, f_shift);
        double worst = 0.0;
        for (int i = 0; i < 64; ++i)
            worst = std::max(worst, std::abs(f_shift[i] - f[(i + shift) % 64]));
        pass = pass && worst <= 1e-12;
    }
    CHECK(report(3, "conservation and structure", pass));
}

TEST_CASE("criterion 04 solver orders") {
    bool pass = true;

    // Burgers step-halving order for RK4 and the Tsitouras pair
    {
        const PeriodicGrid grid(64, 1.0);
        const BurgersRhs rhs(grid, 5e-3);
        const State u0 = smooth_state(64, 1.0);
        auto end_state = [&](Method m, double dt) {
            SolverConfig cfg;
            cfg.method = m;
            cfg.dt = dt;
            const std::vector<double> times = {0.0, 0.1};
            return solve(rhs, u0, 0.0, times, cfg).snapshots.back();
        };
        for (Method m : {Method::rk4, Method::tsit5_fixed}) {
            const auto u1 = end_state(m, 0.1 / 16);
            const auto u2 = end_state(m, 0.1 / 32);
            const auto u3 = end_state(m, 0.1 / 64);
            double d12 = 0.0, d23 = 0.0;
            for (int i = 0; i < 64; ++i) {
                d12 = std::max(d12, std::abs(u1[i] - u2[i]));
                d23 = std::max(d23, std::abs(u2[i] - u3[i]));
            }
            pass = pass && std::log2(d12 / d23) >= 3.9;
        }
    }

    // ETDRK4 self-convergence on KS
    {
        const PeriodicGrid grid(64, 64.0);
        SplitRhs split;
        split.linear_eigenvalues = ks_fvm_linear_eigenvalues(grid);
        KsFvmConvection conv(grid);
        split.nonlinear = &conv;
        const State u0 = smooth_state(64, 64.0);
        const std::vector<double> times = {0.0, 2.0};
        auto end_state = [&](double dt) {
            return etdrk4_solve(split, u0, 0.0, times, dt).snapshots.back();
        };
        const auto u1 = end_state(0.1), u2 = end_state(0.05), u3 = end_state(0.025);
        double d12 = 0.0, d23 = 0.0;
        for (int i = 0; i < 64; ++i) {
            d12 = std::max(d12, std::abs(u1[i] - u2[i]));
            d23 = std::max(d23, std::abs(u2[i] - u3[i]));
        }
        pass = pass && std::log2(d12 / d23) >= 3.0;
    }

    // exact linear-part integration per step
    {
        const PeriodicGrid grid(16, 64.0);
        SplitRhs split;
        split.linear_eigenvalues = ks_spectral_linear_eigenvalues(grid);
        const State u0 = smooth_state(16, 64.0);
        const double h = 0.5;
        const std::vector<double> times = {0.0, h};
        const auto got = etdrk4_solve(split, u0, 0.0, times, h).snapshots.back();
        auto hat = dft(u0);
        for (std::size_t k = 0; k < hat.size(); ++k)
            hat[k] *= std::exp(split.linear_eigenvalues[k] * h);
        const auto expect = idft_real(hat);
        double worst = 0.0;
        for (int i = 0; i < 16; ++i) worst = std::max(worst, std::abs(got[i] - expect[i]));
        pass = pass && worst <= 1e-13;
    }
    CHECK(report(4, "solver orders", pass));
}

TEST_CASE("criterion 05 burgers baseline") {
    const Dataset ds = burgers_dataset();
    const double baseline = burgers_baseline_rmse(ds);
    std::printf("  coarse no-closure test RMSE = %.4f\n", baseline);
    const bool pass = baseline >= 0.05 && baseline <= 0.2;
    CHECK(report(5, "burgers baseline", pass));
}

TEST_CASE("criterion 06 burgers trained comparison") {
    const Dataset ds = burgers_dataset();
    const double baseline = burgers_baseline_rmse(ds);
    const PeriodicGrid grid = ds.trajectories.at(0).grid;
    const CnnArchitecture arch = CnnArchitecture::small();
    SolverConfig eval;
    eval.method = Method::tsit5_adaptive;
    eval.abstol = eval.reltol = 1e-8;

    auto test_rmse = [&](const CnnParams& params) {
        const ClosureModel model(Equation::burgers, grid, 5e-4, ClosureModel::Form::fvm, &arch,
                                 &params);
        std::vector<Trajectory> preds;
        std::vector<const Trajectory*> pp, rp;
        for (int idx : ds.indices_of(Split::test)) {
            preds.push_back(rollout_trajectory(model, ds.trajectories[idx], eval));
            rp.push_back(&ds.trajectories[idx]);
        }
        for (const Trajectory& t : preds) pp.push_back(&t);
        return rmse_pooled(pp, rp);
    };

    int passing_seeds = 0;
    for (std::uint64_t seed : {11ull, 12ull, 13ull}) {
        const std::filesystem::path cpath =
            cache_dir() / ("crit6_seed" + std::to_string(seed) + ".txt");
        std::vector<double> scores;  // dto rmse, derivfit rmse, derivfit loss reduction
        if (!try_load_scores(cpath, 3, scores)) {
            scores.assign(3, 0.0);

            // discretise-then-optimise on full trajectories (N_t = 64,
            // batch 8, dt = 2^-7, with epochs reduced to 2000)
            {
                Rng rng(seed * 1000 + 7);
                CnnParams params = init_params(arch, rng);
                TrainConfig cfg;
                cfg.approach = Approach::disc_then_opt;
                cfg.n_t = 64;
                cfg.epochs = 2000;
                cfg.batch_size = 8;
                cfg.solver.method = Method::tsit5_fixed;
                cfg.solver.dt = std::ldexp(1.0, -7);
                cfg.seed = seed;
                train_on_dataset(ds, arch, params, cfg, 5e-4);
                scores[0] = test_rmse(params);
            }

            // derivative fitting: large loss reduction, no trajectory gain
            {
                Rng rng(seed * 1000 + 8);
                CnnParams params = init_params(arch, rng);
                std::vector<const Trajectory*> train_split;
                for (int idx : ds.indices_of(Split::train))
                    train_split.push_back(&ds.trajectories[idx]);
                const ClosureModel at_init(Equation::burgers, grid, 5e-4,
                                           ClosureModel::Form::fvm, &arch, &params);
                const double loss0 = loss_derivative_fit(at_init.full_rhs(), train_split).loss;
                TrainConfig cfg;
                cfg.approach = Approach::derivative_fit;
                cfg.epochs = 2000;
                cfg.batch_size = 64;
                cfg.seed = seed;
                const TrainResult tr = train_on_dataset(ds, arch, params, cfg, 5e-4);
                scores[2] = loss0 / std::max(tr.history.back().train_loss, 1e-300);
                scores[1] = test_rmse(params);
            }
            save_scores(cpath, scores);
        }
        std::printf("  seed %llu: dto RMSE = %.4f (baseline %.4f)\n",
                    static_cast<unsigned long long>(seed), scores[0], baseline);
        std::printf("  seed %llu: derivfit RMSE = %.4f, loss reduction = %.1fx\n",
                    static_cast<unsigned long long>(seed), scores[1], scores[2]);
        std::fflush(stdout);
        const bool seed_ok =
            scores[0] <= 0.5 * baseline && scores[2] >= 100.0 && scores[1] >= baseline;
        if (seed_ok) ++passing_seeds;
    }
    CHECK(report(6, "burgers trained comparison", passing_seeds >= 2));
}

TEST_CASE("criterion 07 ks baseline") {
    const Dataset ds = ks_desk_dataset();
    const PeriodicGrid grid = ds.trajectories.at(0).grid;
    const CnnArchitecture arch = CnnArchitecture::small();
    CnnParams zero{std::vector<double>(arch.param_count(), 0.0)};
    const ClosureModel coarse(Equation::kuramoto_sivashinsky, grid, 0.0, ClosureModel::Form::fvm,
                              &arch, &zero, false);
    SolverConfig eval;
    eval.method = Method::etdrk4;
    eval.dt = 0.5;
    const MetricsReport rep =
        evaluate_on_split(coarse, ds, Split::test, eval, lyapunov(grid.length).lambda_max);
    std::printf("  coarse VPT (Lyapunov units): min %.2f avg %.2f max %.2f\n", rep.vpt_min,
                rep.vpt_avg, rep.vpt_max);
    const bool pass = rep.vpt_avg >= 1.0 && rep.vpt_avg <= 3.0;
    CHECK(report(7, "ks baseline", pass));
}

TEST_CASE("criterion 08 ks trained comparison") {
    const Dataset ds = ks_desk_dataset();
    const PeriodicGrid grid = ds.trajectories.at(0).grid;

    // coarse baseline for comparison
    const CnnArchitecture small = CnnArchitecture::small();
    CnnParams zero{std::vector<double>(small.param_count(), 0.0)};
    const ClosureModel coarse(Equation::kuramoto_sivashinsky, grid, 0.0, ClosureModel::Form::fvm,
                              &small, &zero, false);
    SolverConfig eval;
    eval.method = Method::etdrk4;
    eval.dt = 0.5;
    const double baseline =
        evaluate_on_split(coarse, ds, Split::test, eval, lyapunov(grid.length).lambda_max).vpt_avg;
    std::printf("  coarse baseline avg VPT = %.2f\n", baseline);
    std::fflush(stdout);

    int passing_seeds = 0;
    for (std::uint64_t seed : {21ull, 22ull, 23ull}) {
        double vpt_by_nt[3] = {0.0, 0.0, 0.0};
        bool seed_ok = true;
        const int nts[3] = {1, 30, 120};
        for (int i = 0; i < 3; ++i) {
            const std::filesystem::path cpath =
                cache_dir() / ("crit8_seed" + std::to_string(seed) + "_nt" +
                               std::to_string(nts[i]) + ".txt");
            std::vector<double> scores;  // ok flag, avg VPT
            if (!try_load_scores(cpath, 2, scores)) {
                const KsRunResult computed = train_and_score_ks(ds, nts[i], seed);
                scores = {computed.ok ? 1.0 : 0.0, computed.vpt_avg};
                save_scores(cpath, scores);
            }
            const KsRunResult r{scores[1], scores[0] != 0.0};
            seed_ok = seed_ok && r.ok;
            vpt_by_nt[i] = r.vpt_avg;
            std::printf("  seed %llu: N_t=%d avg VPT = %.2f\n",
                        static_cast<unsigned long long>(seed), nts[i], r.vpt_avg);
            std::fflush(stdout);
        }
        seed_ok = seed_ok && vpt_by_nt[1] >= vpt_by_nt[2];  // N_t=30 >= N_t=120
        for (double v : vpt_by_nt) seed_ok = seed_ok && v > baseline;
        if (seed_ok) ++passing_seeds;
    }
    CHECK(report(8, "ks trained comparison", passing_seeds >= 2));
}

TEST_CASE("criterion 09 weighted loss machinery") {
    bool pass = true;

    // weight normaliser sums to one
    {
        const std::vector<double> w = loss_weights(30, 0.5, 0.4, 0.0841);
        double z = 0.0;
        for (double x : w) z += x;
        double unit = 0.0;
        for (double x : w) unit += x / z;
        pass = pass && std::abs(unit - 1.0) <= 1e-12;
    }

    // c = 0 reproduces the unweighted mean-square trajectory loss bitwise
    {
        const PeriodicGrid grid(16, 1.0);
        const CnnArchitecture arch = CnnArchitecture::small();
        Rng rng(109);
        CnnParams params = init_params(arch, rng);
        const ClosureModel model(Equation::burgers, grid, 5e-4, ClosureModel::Form::fvm, &arch,
                                 &params);
        SolverConfig solver;
        solver.method = Method::tsit5_fixed;
        solver.dt = 1.0 / 128;
        const Trajectory ref = synthetic_reference(Equation::burgers, grid,
                                                   ClosureModel::Form::fvm, arch, 3, 1.0 / 128,
                                                   solver, 21);
        std::vector<const Trajectory*> batch = {&ref};
        TrainConfig weighted;
        weighted.n_t = 3;
        weighted.solver = solver;
        weighted.weight_exponent = 0.0;
        weighted.lambda_max = 0.0841;
        TrainConfig plain = weighted;
        plain.weight_exponent = 0.0;
        plain.lambda_max = 0.0;
        const double a = trajectory_gradient(model, Approach::disc_then_opt, batch, weighted).loss;
        const double b = trajectory_gradient(model, Approach::disc_then_opt, batch, plain).loss;
        pass = pass && a == b;
    }

    // Lyapunov constants at L = 64, to four significant figures
    {
        const LyapunovInfo info = lyapunov(64.0);
        pass = pass && std::abs(info.lambda_max - 0.0841) / 0.0841 < 5e-4;
        pass = pass && std::abs(info.t_lyap - 11.89) / 11.89 < 5e-4;
    }
    CHECK(report(9, "weighted loss machinery", pass));
}

TEST_CASE("criterion 10 reproducibility") {
    bool pass = true;
    const auto dir = cache_dir();

    auto file_bytes = [](const std::filesystem::path& p) {
        std::ifstream f(p, std::ios::binary);
        return std::string((std::istreambuf_iterator<char>(f)), std::istreambuf_iterator<char>());
    };

    // datasets
    GenConfig gcfg = burgers_preset(77);
    gcfg.fine_n_x = 256;
    gcfg.coarse_n_x = 32;
    gcfg.nu = 5e-3;
    gcfg.t_end = 0.125;
    gcfg.n_trajectories = 4;
    gcfg.n_train = 3;
    gcfg.n_test = 1;
    gcfg.workers = 1;
    const std::filesystem::path d1 = dir / "repro_data_1.ncm1";
    const std::filesystem::path d2 = dir / "repro_data_2.ncm1";
    write_ncm1(d1.string(), generate(gcfg).coarse);
    write_ncm1(d2.string(), generate(gcfg).coarse);
    pass = pass && !file_bytes(d1).empty() && file_bytes(d1) == file_bytes(d2);

    // checkpoints and CSVs from two identical training runs
    const Dataset ds = read_ncm1(d1.string());
    const CnnArchitecture arch = CnnArchitecture::small();
    for (int round = 1; round <= 2; ++round) {
        Rng rng(4242);
        CnnParams params = init_params(arch, rng);
        TrainConfig cfg;
        cfg.approach = Approach::derivative_fit;
        cfg.epochs = 25;
        cfg.batch_size = 8;
        cfg.seed = 99;
        const TrainResult tr = train_on_dataset(ds, arch, params, cfg, gcfg.nu);
        const auto ck = dir / ("repro_ck_" + std::to_string(round) + ".ncp1");
        const auto csv = dir / ("repro_loss_" + std::to_string(round) + ".csv");
        save_checkpoint(params, arch, ck.string());
        write_loss_history_csv(csv.string(), tr.history);

        const PeriodicGrid grid = ds.trajectories.at(0).grid;
        const ClosureModel model(Equation::burgers, grid, gcfg.nu, ClosureModel::Form::fvm, &arch,
                                 &params);
        SolverConfig eval;
        eval.method = Method::tsit5_adaptive;
        const MetricsReport rep = evaluate_on_split(model, ds, Split::test, eval, 0.0);
        write_metrics_csv((dir / ("repro_metrics_" + std::to_string(round) + ".csv")).string(),
                          rep);
    }
    for (const char* stem : {"repro_ck_", "repro_loss_", "repro_metrics_"}) {
        const std::string ext = stem == std::string("repro_ck_") ? ".ncp1" : ".csv";
        const auto a = file_bytes(dir / (stem + std::string("1") + ext));
        const auto b = file_bytes(dir / (stem + std::string("2") + ext));
        pass = pass && !a.empty() && a == b;
    }
    CHECK(report(10, "reproducibility", pass));
}

} // TEST_SUITE
