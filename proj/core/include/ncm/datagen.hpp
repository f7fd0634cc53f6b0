#pragma once

#include <cstdint>
#include <optional>
#include <ostream>

#include "ncm/grid.hpp"
#include "ncm/solvers.hpp"

namespace ncm {

struct GenConfig {
    Equation equation = Equation::burgers;
    int fine_n_x = 0;
    int coarse_n_x = 0;
    double nu = 0.0;      // Burgers viscosity
    double length = 0.0;
    double t_end = 0.0;
    double dt_snap = 0.0;
    int n_trajectories = 0;
    int n_train = 0, n_validation = 0, n_test = 0;
    int discard_snapshots = 0;  // leading transients dropped after the solve
    std::uint64_t seed = 0;
    SolverConfig fine_solver;
    int max_retries = 5;
    int workers = 1;

    void validate() const;
};

/// 128 Burgers trajectories, 4096 -> 64 cells, nu = 5e-4, t in [0, 0.5]
/// sampled every 2^-7 (65 snapshots), 96/0/32 split.
GenConfig burgers_preset(std::uint64_t seed);

/// 100 KS trajectories, 1024 -> 128 cells, L = 64, sampled every 0.5 up
/// to t = 272 with the first 32 snapshots discarded (513 stored),
/// 80/10/10 split.
GenConfig ks_preset(std::uint64_t seed);

/// Reduced KS run for quick experiments: 36 trajectories to t = 144
/// (257 stored snapshots), 24/4/8 split.
GenConfig ks_desk_preset(std::uint64_t seed);

struct GenOutput {
    Dataset coarse;
    std::optional<Dataset> fine;
};

/// Generates the dataset: per trajectory, a random initial state, a
/// fine-grid solve sampled at dt_snap, chunk-mean downsampling, and
/// reference derivatives taken as the downsampled fine-grid RHS at the
/// snapshot times. Fully determined by the seed; trajectories that blow
/// up are retried with fresh sub-seeds (bounded by max_retries).
GenOutput generate(const GenConfig& cfg, bool keep_fine = false, std::ostream* log = nullptr);

} // namespace ncm
