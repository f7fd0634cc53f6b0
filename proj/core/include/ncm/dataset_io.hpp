#pragma once

#include <string>

#include "ncm/grid.hpp"

namespace ncm {

/// Raised on malformed or truncated dataset/checkpoint files.
struct FormatError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

/// Writes the dataset in the "NCM1" binary format: magic bytes, u32
/// header fields (version, equation, n_x, N_p, N_s, has_derivatives),
/// f64 fields (L, t0, dt_snap), u64 seed, per-trajectory split byte,
/// then states (and optionally derivatives) as little-endian binary64
/// in trajectory-major, time-major, cell-minor order.
void write_ncm1(const std::string& path, const Dataset& ds);

Dataset read_ncm1(const std::string& path);

} // namespace ncm
