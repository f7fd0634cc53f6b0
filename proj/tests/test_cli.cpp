// End-to-end checks of the ncm binary: exit codes, manifests, and the
// cheap command paths. Heavy preset generation and long training runs
// are covered by the acceptance suite instead.
#include <doctest.h>

#include <algorithm>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>

#include "ncm/datagen.hpp"
#include "ncm/dataset_io.hpp"
#include "ncm/nn.hpp"
#include "ncm/rng.hpp"

#ifndef NCM_CLI_PATH
#error "NCM_CLI_PATH must point at the ncm binary"
#endif

namespace {

namespace fs = std::filesystem;
using namespace ncm;

int run_cli(const std::string& args, const fs::path& log) {
    const std::string cmd =
        std::string(NCM_CLI_PATH) + " " + args + " >" + log.string() + " 2>&1";
    const int status = std::system(cmd.c_str());
    REQUIRE(status != -1);
    return WEXITSTATUS(status);
}

std::string slurp(const fs::path& p) {
    std::ifstream f(p, std::ios::binary);
    REQUIRE(f.good());
    std::ostringstream ss;
    ss << f.rdbuf();
    return ss.str();
}

fs::path fresh_dir(const std::string& name) {
    const fs::path dir = fs::path("cli_scratch") / name;
    fs::remove_all(dir);
    fs::create_directories(dir);
    return dir;
}

// Small Burgers dataset at raised viscosity so the reduced fine grid
// stays resolved; mirrors the datagen test fixtures.
fs::path tiny_burgers_file(const fs::path& dir) {
    GenConfig cfg = burgers_preset(31);
    cfg.fine_n_x = 256;
    cfg.coarse_n_x = 32;
    cfg.nu = 5e-3;
    cfg.t_end = 0.125;
    cfg.n_trajectories = 3;
    cfg.n_train = 2;
    cfg.n_validation = 0;
    cfg.n_test = 1;
    const fs::path file = dir / "tiny.ncm1";
    write_ncm1(file.string(), generate(cfg).coarse);
    return file;
}

} // namespace

TEST_CASE("missing required flag exits with the config code") {
    const fs::path dir = fresh_dir("missing_flag");
    CHECK(run_cli("gen-data --preset burgers", dir / "log.txt") == 1);
    CHECK(run_cli("train --out somewhere", dir / "log.txt") == 1);
}

TEST_CASE("unknown preset and approach exit with the config code") {
    const fs::path dir = fresh_dir("bad_values");
    CHECK(run_cli("gen-data --preset navier --out " + (dir / "o").string(),
                  dir / "log.txt") == 1);
    const fs::path data = tiny_burgers_file(dir);
    CHECK(run_cli("train --data " + data.string() + " --approach nonsense --out " +
                      (dir / "t").string(),
                  dir / "log.txt") == 1);
}

TEST_CASE("missing dataset file exits with the I/O code") {
    const fs::path dir = fresh_dir("missing_data");
    CHECK(run_cli("train --data " + (dir / "nope.ncm1").string() + " --out " +
                      (dir / "t").string(),
                  dir / "log.txt") == 2);
}

TEST_CASE("verify-theorems is deterministic and honours --instances") {
    const fs::path dir = fresh_dir("verify");
    CHECK(run_cli("verify-theorems --instances 5 --seed 12", dir / "a.txt") == 0);
    CHECK(run_cli("verify-theorems --instances 5 --seed 12", dir / "b.txt") == 0);
    const std::string a = slurp(dir / "a.txt");
    CHECK(a == slurp(dir / "b.txt"));
    CHECK(a.find("over 5 fixtures") != std::string::npos);
}

TEST_CASE("zero-epoch training writes the seeded initialisation") {
    const fs::path dir = fresh_dir("train_zero");
    const fs::path data = tiny_burgers_file(dir);
    const fs::path out = dir / "run";
    REQUIRE(run_cli("train --data " + data.string() + " --epochs 0 --seed 9 --nu 5e-3 --out " +
                        out.string(),
                    dir / "log.txt") == 0);
    CHECK(fs::exists(out / "manifest.json"));
    CHECK(fs::exists(out / "loss_history.csv"));
    const CnnArchitecture arch = CnnArchitecture::small();
    const CnnParams saved = load_checkpoint((out / "final.ncp1").string(), arch);
    Rng rng(9 * 1000 + 7);
    const CnnParams init = init_params(arch, rng);
    CHECK(saved.theta == init.theta);
}

TEST_CASE("derivative fitting trains and the checkpoint evaluates") {
    const fs::path dir = fresh_dir("train_eval");
    const fs::path data = tiny_burgers_file(dir);
    const fs::path run = dir / "run";
    REQUIRE(run_cli("train --data " + data.string() +
                        " --approach derivfit --epochs 3 --batch 16 --seed 5 --nu 5e-3 --out " +
                        run.string(),
                    dir / "log.txt") == 0);
    const std::string hist = slurp(run / "loss_history.csv");
    CHECK(std::count(hist.begin(), hist.end(), '\n') == 4);  // header + 3 epochs

    const fs::path ev = dir / "eval";
    REQUIRE(run_cli("evaluate --data " + data.string() + " --checkpoint " +
                        (run / "final.ncp1").string() + " --nu 5e-3 --out " + ev.string(),
                    dir / "eval_log.txt") == 0);
    CHECK(fs::exists(ev / "metrics.csv"));
    CHECK(fs::exists(ev / "summary.csv"));
    CHECK(fs::exists(ev / "plot_error.csv"));
    CHECK(slurp(ev / "plot_error.csv").find("trajectory,time,error") == 0);
}

TEST_CASE("baseline evaluation needs no checkpoint") {
    const fs::path dir = fresh_dir("baseline");
    const fs::path data = tiny_burgers_file(dir);
    const fs::path ev = dir / "eval";
    REQUIRE(run_cli("evaluate --data " + data.string() + " --baseline --nu 5e-3 --out " +
                        ev.string(),
                    dir / "log.txt") == 0);
    const std::string sum = slurp(ev / "summary.csv");
    CHECK(sum.find("rmse_pooled") != std::string::npos);

    // no checkpoint and no --baseline is a config error
    CHECK(run_cli("evaluate --data " + data.string() + " --out " + (dir / "e2").string(),
                  dir / "log2.txt") == 1);
}

TEST_CASE("manifest is written before training starts") {
    const fs::path dir = fresh_dir("manifest_first");
    const fs::path data = tiny_burgers_file(dir);
    const fs::path out = dir / "run";
    // n_t = 0 makes train_on_dataset throw after the manifest is
    // written; the manifest must survive the failed run.
    const int rc = run_cli("train --data " + data.string() +
                               " --epochs 1 --nt 0 --nu 5e-3 --out " + out.string(),
                           dir / "log.txt");
    CHECK(rc != 0);
    CHECK(fs::exists(out / "manifest.json"));
}
