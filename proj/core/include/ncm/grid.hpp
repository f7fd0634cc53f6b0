#pragma once

#include <cstdint>
#include <optional>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "ncm/rng.hpp"

namespace ncm {

/// Cell-averaged state on a periodic grid.
using State = std::vector<double>;

enum class Equation : std::uint32_t { burgers = 1, kuramoto_sivashinsky = 2 };

enum class Split : std::uint8_t { train = 0, validation = 1, test = 2 };

/// Uniform 1-D periodic cell layout.
struct PeriodicGrid {
    int n_x = 0;
    double length = 0.0;

    PeriodicGrid() = default;
    PeriodicGrid(int n, double l) : n_x(n), length(l) {
        if (n_x < 8 || n_x % 2 != 0)
            throw std::invalid_argument("PeriodicGrid: n_x must be >= 8 and even, got " +
                                        std::to_string(n_x));
        if (!(length > 0.0))
            throw std::invalid_argument("PeriodicGrid: length must be positive");
    }

    double dx() const { return length / n_x; }

    bool operator==(const PeriodicGrid&) const = default;
};

/// Time-stamped snapshot sequence; row-major, time-outer storage.
struct Trajectory {
    PeriodicGrid grid;
    double t0 = 0.0;
    double dt_snap = 0.0;
    int n_snapshots = 0;
    std::vector<double> states;                      // n_snapshots * n_x
    std::optional<std::vector<double>> derivatives;  // same shape when present

    std::span<const double> snapshot(int i) const {
        return {states.data() + static_cast<std::size_t>(i) * grid.n_x,
                static_cast<std::size_t>(grid.n_x)};
    }
    std::span<double> snapshot(int i) {
        return {states.data() + static_cast<std::size_t>(i) * grid.n_x,
                static_cast<std::size_t>(grid.n_x)};
    }
    std::span<const double> derivative(int i) const {
        return {derivatives->data() + static_cast<std::size_t>(i) * grid.n_x,
                static_cast<std::size_t>(grid.n_x)};
    }
    double time(int i) const { return t0 + i * dt_snap; }

    void validate() const;
};

struct Dataset {
    std::vector<Trajectory> trajectories;
    std::vector<Split> splits;  // one label per trajectory
    Equation equation = Equation::burgers;
    std::uint64_t seed = 0;

    std::vector<int> indices_of(Split s) const;
    void validate() const;
};

/// Random band-limited initial state: wavenumbers 1..10 with complex
/// Gaussian amplitudes, rescaled so that max |u_i| = 2 exactly.
State random_initial_state(const PeriodicGrid& grid, Rng& rng);

/// Chunk-mean downsampling of states (and derivatives when present).
Trajectory downsample(const Trajectory& fine, int factor);

/// Assigns split labels in stored order: train block, then validation,
/// then test. Counts must sum to the trajectory count.
Dataset split_dataset(Dataset ds, int n_train, int n_validation, int n_test);

} // namespace ncm
