// Command-line front-end: dataset generation, training, evaluation, and
// error-bound verification, each emitting a JSON manifest before any
// heavy work so runs can be reproduced.
//
// Exit codes: 0 success, 1 configuration error, 2 I/O error,
// 3 numerical failure.
#include <CLI11.hpp>
#include <json.hpp>

#include <chrono>
#include <cmath>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <string>

#include "ncm/datagen.hpp"
#include "ncm/dataset_io.hpp"
#include "ncm/metrics.hpp"
#include "ncm/nn.hpp"
#include "ncm/solvers.hpp"
#include "ncm/training.hpp"

using json = nlohmann::ordered_json;
using namespace ncm;

namespace {

constexpr int kExitConfig = 1;
constexpr int kExitIo = 2;
constexpr int kExitNumerical = 3;
constexpr const char* kArtifactVersion = "1";

struct ConfigError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

std::uint64_t file_hash(const std::string& path) {
    std::ifstream f(path, std::ios::binary);
    if (!f) throw FormatError("cannot open for hashing: " + path);
    std::uint64_t h = 1469598103934665603ull;  // FNV-1a
    char buf[1 << 16];
    while (f.read(buf, sizeof buf) || f.gcount() > 0) {
        for (std::streamsize i = 0; i < f.gcount(); ++i) {
            h ^= static_cast<unsigned char>(buf[i]);
            h *= 1099511628211ull;
        }
    }
    return h;
}

std::string timestamp() {
    const auto now = std::chrono::system_clock::now();
    const std::time_t t = std::chrono::system_clock::to_time_t(now);
    char buf[32];
    std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%SZ", std::gmtime(&t));
    return buf;
}

void write_manifest(const std::filesystem::path& dir, json manifest) {
    manifest["artifact_version"] = kArtifactVersion;
    manifest["written_at"] = timestamp();
    std::filesystem::create_directories(dir);
    std::ofstream f(dir / "manifest.json");
    if (!f) throw FormatError("cannot write manifest in " + dir.string());
    f << manifest.dump(2) << "\n";
}

int workers_default() {
    if (const char* env = std::getenv("NCM_WORKERS")) {
        const int w = std::atoi(env);
        if (w >= 1) return w;
    }
    return 1;
}

Method parse_method(const std::string& name) {
    if (name == "rk4") return Method::rk4;
    if (name == "tsit5") return Method::tsit5_fixed;
    if (name == "tsit5-adaptive") return Method::tsit5_adaptive;
    if (name == "etdrk4") return Method::etdrk4;
    throw ConfigError("unknown solver: " + name);
}

const char* split_name(Split s) {
    switch (s) {
        case Split::train: return "train";
        case Split::validation: return "validation";
        default: return "test";
    }
}

// ---------------------------------------------------------------------
// gen-data

struct GenArgs {
    std::string preset;
    std::string out;
    std::uint64_t seed = 0;
    int workers = workers_default();
};

int run_gen_data(const GenArgs& a) {
    GenConfig cfg;
    if (a.preset == "burgers")
        cfg = burgers_preset(a.seed);
    else if (a.preset == "ks")
        cfg = ks_preset(a.seed);
    else if (a.preset == "ks-desk")
        cfg = ks_desk_preset(a.seed);
    else
        throw ConfigError("unknown preset: " + a.preset);
    cfg.workers = a.workers;
    cfg.validate();

    const std::filesystem::path dir = a.out;
    json m;
    m["command"] = "gen-data";
    m["preset"] = a.preset;
    m["seed"] = cfg.seed;
    m["workers"] = cfg.workers;
    m["config"] = {{"equation", cfg.equation == Equation::burgers ? "burgers" : "ks"},
                   {"fine_n_x", cfg.fine_n_x},
                   {"coarse_n_x", cfg.coarse_n_x},
                   {"nu", cfg.nu},
                   {"length", cfg.length},
                   {"t_end", cfg.t_end},
                   {"dt_snap", cfg.dt_snap},
                   {"n_trajectories", cfg.n_trajectories},
                   {"split", {cfg.n_train, cfg.n_validation, cfg.n_test}},
                   {"discard_snapshots", cfg.discard_snapshots}};
    write_manifest(dir, m);

    const GenOutput out = generate(cfg, false, &std::cerr);
    const std::string path = (dir / "dataset.ncm1").string();
    write_ncm1(path, out.coarse);
    std::cout << "wrote " << path << " (hash " << std::hex << file_hash(path) << std::dec << ")\n";
    return 0;
}

// ---------------------------------------------------------------------
// train

struct TrainArgs {
    std::string data;
    std::string out;
    std::string approach = "dto";
    std::string net;  // small | large; default picked by equation
    std::string solver;
    double dt = 0.0;
    int nt = 1;
    int epochs = 0;
    int batch = 8;
    double lr = 1e-3;
    std::optional<double> clip;
    double c_weight = 0.0;
    double nu = 5e-4;
    std::uint64_t seed = 0;
};

Approach parse_approach(const std::string& name) {
    if (name == "derivfit") return Approach::derivative_fit;
    if (name == "dto") return Approach::disc_then_opt;
    if (name == "otd") return Approach::opt_then_disc;
    throw ConfigError("unknown approach: " + name);
}

int run_train(const TrainArgs& a) {
    const Dataset ds = read_ncm1(a.data);
    ds.validate();
    const bool is_ks = ds.equation == Equation::kuramoto_sivashinsky;

    TrainConfig cfg;
    cfg.approach = parse_approach(a.approach);
    cfg.n_t = a.nt;
    cfg.epochs = a.epochs;
    cfg.batch_size = a.batch;
    cfg.learning_rate = a.lr;
    cfg.weight_exponent = a.c_weight;
    cfg.seed = a.seed;
    if (a.clip) {
        cfg.clip_enabled = true;
        cfg.clip_radius = *a.clip;
    } else if (cfg.approach == Approach::opt_then_disc) {
        cfg.clip_enabled = true;  // default on for the adjoint approach
    }
    cfg.solver.method =
        a.solver.empty() ? (is_ks ? Method::etdrk4 : Method::tsit5_fixed) : parse_method(a.solver);
    cfg.solver.dt = a.dt > 0.0 ? a.dt : ds.trajectories.at(0).dt_snap;

    const std::string net = a.net.empty() ? (is_ks ? "large" : "small") : a.net;
    const CnnArchitecture arch =
        net == "large" ? CnnArchitecture::large() : CnnArchitecture::small();
    if (net != "small" && net != "large") throw ConfigError("unknown net: " + a.net);

    const std::filesystem::path dir = a.out;
    json m;
    m["command"] = "train";
    m["data"] = a.data;
    m["data_hash"] = file_hash(a.data);
    m["dataset_seed"] = ds.seed;
    m["approach"] = a.approach;
    m["net"] = net;
    m["nt"] = cfg.n_t;
    m["epochs"] = cfg.epochs;
    m["batch"] = cfg.batch_size;
    m["lr"] = cfg.learning_rate;
    m["clip"] = cfg.clip_enabled ? json(cfg.clip_radius) : json(nullptr);
    m["c_weight"] = cfg.weight_exponent;
    m["solver"] = a.solver.empty() ? (is_ks ? "etdrk4" : "tsit5") : a.solver;
    m["dt"] = cfg.solver.dt;
    m["nu"] = a.nu;
    m["seed"] = cfg.seed;
    m["checkpoints"] = {(dir / "final.ncp1").string(), (dir / "best.ncp1").string()};
    write_manifest(dir, m);

    Rng rng(cfg.seed * 1000 + 7);
    CnnParams params = init_params(arch, rng);
    const TrainResult result = train_on_dataset(ds, arch, params, cfg, a.nu, &std::cerr);

    save_checkpoint(params, arch, (dir / "final.ncp1").string());
    if (result.has_best) save_checkpoint(result.best_params, arch, (dir / "best.ncp1").string());
    write_loss_history_csv((dir / "loss_history.csv").string(), result.history);
    std::cout << "trained " << cfg.epochs << " epochs; " << result.failed_steps
              << " failed steps; wrote " << (dir / "final.ncp1").string() << "\n";
    return 0;
}

// ---------------------------------------------------------------------
// evaluate

struct EvalArgs {
    std::string data;
    std::string checkpoint;
    std::string out;
    std::string split = "test";
    std::string form;  // fvm | spectral
    bool baseline = false;
    double nu = 5e-4;
    double dt = 0.0;
    double threshold = 0.4;
};

int run_evaluate(const EvalArgs& a) {
    const Dataset ds = read_ncm1(a.data);
    ds.validate();
    const bool is_ks = ds.equation == Equation::kuramoto_sivashinsky;
    const PeriodicGrid grid = ds.trajectories.at(0).grid;

    Split split = Split::test;
    if (a.split == "train") split = Split::train;
    else if (a.split == "validation") split = Split::validation;
    else if (a.split != "test") throw ConfigError("unknown split: " + a.split);

    CnnArchitecture arch = CnnArchitecture::small();
    CnnParams params{std::vector<double>(arch.param_count(), 0.0)};
    if (!a.baseline) {
        if (a.checkpoint.empty()) throw ConfigError("--checkpoint or --baseline is required");
        arch = CnnArchitecture::from_id(checkpoint_arch_id(a.checkpoint));
        params = load_checkpoint(a.checkpoint, arch);
    }

    ClosureModel::Form form = ClosureModel::Form::fvm;
    if (a.form == "spectral" || (a.form.empty() && is_ks && !a.baseline))
        form = ClosureModel::Form::spectral;
    else if (!a.form.empty() && a.form != "fvm")
        throw ConfigError("unknown form: " + a.form);

    const std::filesystem::path dir = a.out;
    json m;
    m["command"] = "evaluate";
    m["data"] = a.data;
    m["data_hash"] = file_hash(a.data);
    m["dataset_seed"] = ds.seed;
    m["checkpoint"] = a.baseline ? json(nullptr) : json(a.checkpoint);
    m["baseline"] = a.baseline;
    m["split"] = split_name(split);
    m["form"] = form == ClosureModel::Form::fvm ? "fvm" : "spectral";
    m["threshold"] = a.threshold;
    write_manifest(dir, m);

    const ClosureModel model(ds.equation, grid, a.nu, form, &arch, &params, !a.baseline);
    SolverConfig solver;
    if (is_ks) {
        solver.method = Method::etdrk4;
        solver.dt = a.dt > 0.0 ? a.dt : ds.trajectories.at(0).dt_snap;
    } else {
        solver.method = Method::tsit5_adaptive;
        solver.abstol = solver.reltol = 1e-8;
    }

    const double lambda = is_ks ? lyapunov(grid.length).lambda_max : 0.0;
    std::vector<Trajectory> preds;
    std::vector<const Trajectory*> pp, rp;
    std::ofstream plot(dir / "plot_error.csv");
    plot << "trajectory,time,error\n";
    for (int idx : ds.indices_of(split)) {
        const Trajectory& ref = ds.trajectories[idx];
        std::vector<double> times(ref.n_snapshots);
        for (int i = 0; i < ref.n_snapshots; ++i) times[i] = ref.time(i);
        const auto snaps = model.rollout(ref.snapshot(0), ref.t0, times, solver);
        Trajectory pred;
        pred.grid = ref.grid;
        pred.t0 = ref.t0;
        pred.dt_snap = ref.dt_snap;
        pred.n_snapshots = ref.n_snapshots;
        for (const auto& s : snaps) pred.states.insert(pred.states.end(), s.begin(), s.end());
        for (int i = 0; i < ref.n_snapshots; ++i) {
            double e2 = 0.0;
            for (int j = 0; j < grid.n_x; ++j) {
                const double d = pred.snapshot(i)[j] - ref.snapshot(i)[j];
                e2 += d * d;
            }
            plot << idx << "," << times[i] << "," << std::sqrt(e2) << "\n";
        }
        preds.push_back(std::move(pred));
        rp.push_back(&ref);
    }
    for (const Trajectory& t : preds) pp.push_back(&t);

    const MetricsReport rep = evaluate_trajectories(pp, rp, lambda, a.threshold);
    write_metrics_csv((dir / "metrics.csv").string(), rep);
    {
        std::ofstream sum(dir / "summary.csv");
        sum.precision(17);
        sum << "rmse_min,rmse_avg,rmse_max,rmse_pooled,vpt_min,vpt_avg,vpt_max\n"
            << rep.rmse_min << ',' << rep.rmse_avg << ',' << rep.rmse_max << ','
            << rep.rmse_pooled << ',' << rep.vpt_min << ',' << rep.vpt_avg << ','
            << rep.vpt_max << "\n";
    }
    if (is_ks)
        std::cout << "VPT (Lyapunov units): min " << rep.vpt_min << " avg " << rep.vpt_avg
                  << " max " << rep.vpt_max << "\n";
    else
        std::cout << "RMSE: pooled " << rep.rmse_pooled << " avg " << rep.rmse_avg << "\n";
    return 0;
}

// ---------------------------------------------------------------------
// verify-theorems

struct VerifyArgs {
    std::string out;
    int instances_continuous = 100;
    int instances_discrete = 1000;
    std::uint64_t seed = 0;
};

int run_verify(const VerifyArgs& a) {
    if (!a.out.empty()) {
        json m;
        m["command"] = "verify-theorems";
        m["instances"] = {a.instances_continuous, a.instances_discrete};
        m["seed"] = a.seed;
        write_manifest(a.out, m);
    }
    Rng rng(a.seed);
    int violations1 = 0;
    double tightest1 = 0.0;
    std::optional<json> offender;
    for (int inst = 0; inst < a.instances_continuous; ++inst) {
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
        const BoundCheck check = check_continuous_bound(g, path, eps, s, 2.0, 40);
        const int v = check.violations();
        violations1 += v;
        tightest1 = std::max(tightest1, check.tightest_ratio());
        if (v > 0 && !offender)
            offender = json{{"theorem", 1}, {"instance", inst},  {"lipschitz", s},
                            {"theta", th},  {"epsilon", eps},    {"drift", {d0, d1}},
                            {"x0", x0}};
    }

    int violations2 = 0;
    double tightest2 = 0.0;
    for (int inst = 0; inst < a.instances_discrete; ++inst) {
        const int n = 4;
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
        std::vector<double> u0(n);
        for (double& x : u0) x = rng.normal();
        ref.push_back(u0);
        for (int k = 0; k < 30; ++k) {
            std::vector<double> next = g(ref.back());
            double norm = 0.0;
            std::vector<double> noise(n);
            for (double& x : noise) {
                x = rng.normal();
                norm += x * x;
            }
            const double scale = eps * rng.uniform() / std::max(std::sqrt(norm), 1e-300);
            for (int i = 0; i < n; ++i) next[i] += scale * noise[i];
            ref.push_back(std::move(next));
        }
        const BoundCheck check = check_discrete_bound(g, ref, eps, c);
        const int v = check.violations();
        violations2 += v;
        tightest2 = std::max(tightest2, check.tightest_ratio());
        if (v > 0 && !offender)
            offender = json{{"theorem", 2}, {"instance", inst}, {"lipschitz", c},
                            {"theta", th},  {"epsilon", eps},   {"u0", u0}};
    }

    std::cout << "theorem 1 (continuous): " << violations1 << " violations over "
              << a.instances_continuous << " fixtures, tightest ratio " << tightest1 << "\n";
    std::cout << "theorem 2 (discrete):   " << violations2 << " violations over "
              << a.instances_discrete << " fixtures, tightest ratio " << tightest2 << "\n";
    if (violations1 + violations2 > 0) {
        std::cerr << "offending instance: " << offender->dump() << "\n";
        throw BlowUpError("error-bound violation detected");
    }
    return 0;
}

} // namespace

int main(int argc, char** argv) {
    CLI::App app{"coarse-grid closure-model laboratory"};
    app.require_subcommand(1);

    GenArgs gen;
    CLI::App* cmd_gen = app.add_subcommand("gen-data", "generate a dataset from a preset");
    cmd_gen->add_option("--preset", gen.preset, "burgers | ks | ks-desk")->required();
    cmd_gen->add_option("--out", gen.out, "output directory")->required();
    cmd_gen->add_option("--seed", gen.seed, "dataset seed");
    cmd_gen->add_option("--workers", gen.workers, "generation threads");

    TrainArgs tr;
    CLI::App* cmd_train = app.add_subcommand("train", "train a closure model");
    cmd_train->add_option("--data", tr.data, "dataset file (NCM1)")->required();
    cmd_train->add_option("--out", tr.out, "output directory")->required();
    cmd_train->add_option("--approach", tr.approach, "derivfit | dto | otd");
    cmd_train->add_option("--net", tr.net, "small | large (default by equation)");
    cmd_train->add_option("--nt", tr.nt, "unroll length");
    cmd_train->add_option("--epochs", tr.epochs, "training epochs");
    cmd_train->add_option("--batch", tr.batch, "batch size");
    cmd_train->add_option("--lr", tr.lr, "learning rate");
    cmd_train->add_option("--clip", tr.clip, "gradient clipping radius");
    cmd_train->add_option("--c-weight", tr.c_weight, "exponential loss-weight constant");
    cmd_train->add_option("--solver", tr.solver, "rk4 | tsit5 | tsit5-adaptive | etdrk4");
    cmd_train->add_option("--dt", tr.dt, "solver step (default: snapshot spacing)");
    cmd_train->add_option("--nu", tr.nu, "Burgers viscosity");
    cmd_train->add_option("--seed", tr.seed, "training seed");

    EvalArgs ev;
    CLI::App* cmd_eval = app.add_subcommand("evaluate", "evaluate a checkpoint or baseline");
    cmd_eval->add_option("--data", ev.data, "dataset file (NCM1)")->required();
    cmd_eval->add_option("--out", ev.out, "output directory")->required();
    cmd_eval->add_option("--checkpoint", ev.checkpoint, "checkpoint file (NCP1)");
    cmd_eval->add_flag("--baseline", ev.baseline, "evaluate the coarse ODE without closure");
    cmd_eval->add_option("--split", ev.split, "train | validation | test");
    cmd_eval->add_option("--form", ev.form, "fvm | spectral");
    cmd_eval->add_option("--nu", ev.nu, "Burgers viscosity");
    cmd_eval->add_option("--dt", ev.dt, "KS rollout step (default: snapshot spacing)");
    cmd_eval->add_option("--threshold", ev.threshold, "VPT threshold");

    VerifyArgs vf;
    CLI::App* cmd_verify = app.add_subcommand("verify-theorems", "run the error-bound suites");
    cmd_verify->add_option("--out", vf.out, "output directory for the manifest");
    cmd_verify->add_option("--seed", vf.seed, "fixture seed");
    std::optional<int> instances;
    cmd_verify->add_option("--instances", instances, "fixtures per theorem");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int rc = app.exit(e);
        return rc == 0 ? 0 : kExitConfig;
    }

    try {
        if (cmd_gen->parsed()) return run_gen_data(gen);
        if (cmd_train->parsed()) return run_train(tr);
        if (cmd_eval->parsed()) return run_evaluate(ev);
        if (instances) {
            vf.instances_continuous = *instances;
            vf.instances_discrete = *instances;
        }
        return run_verify(vf);
    } catch (const ConfigError& e) {
        std::cerr << "config error: " << e.what() << "\n";
        return kExitConfig;
    } catch (const std::invalid_argument& e) {
        std::cerr << "config error: " << e.what() << "\n";
        return kExitConfig;
    } catch (const FormatError& e) {
        std::cerr << "I/O error: " << e.what() << "\n";
        return kExitIo;
    } catch (const std::filesystem::filesystem_error& e) {
        std::cerr << "I/O error: " << e.what() << "\n";
        return kExitIo;
    } catch (const std::ios_base::failure& e) {
        std::cerr << "I/O error: " << e.what() << "\n";
        return kExitIo;
    } catch (const std::exception& e) {
        // solver blow-ups, step-budget exhaustion, failed training steps
        std::cerr << "numerical failure: " << e.what() << "\n";
        return kExitNumerical;
    }
}
