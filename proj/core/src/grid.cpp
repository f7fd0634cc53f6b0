#include "ncm/grid.hpp"

#include <cmath>
#include <complex>

namespace ncm {

void Trajectory::validate() const {
    if (n_snapshots < 1)
        throw std::invalid_argument("Trajectory: need at least one snapshot");
    if (states.size() != static_cast<std::size_t>(n_snapshots) * grid.n_x)
        throw std::invalid_argument("Trajectory: states size does not match n_snapshots * n_x");
    if (derivatives && derivatives->size() != states.size())
        throw std::invalid_argument("Trajectory: derivatives shape differs from states");
}

std::vector<int> Dataset::indices_of(Split s) const {
    std::vector<int> out;
    for (std::size_t i = 0; i < splits.size(); ++i)
        if (splits[i] == s) out.push_back(static_cast<int>(i));
    return out;
}

void Dataset::validate() const {
    if (splits.size() != trajectories.size())
        throw std::invalid_argument("Dataset: one split label per trajectory required");
    for (const auto& tr : trajectories) {
        tr.validate();
        if (tr.grid != trajectories.front().grid ||
            tr.n_snapshots != trajectories.front().n_snapshots ||
            tr.dt_snap != trajectories.front().dt_snap)
            throw std::invalid_argument("Dataset: trajectories must share grid, N_s and dt_snap");
    }
}

State random_initial_state(const PeriodicGrid& grid, Rng& rng) {
    if (grid.n_x < 32)
        throw std::invalid_argument("random_initial_state: n_x must be >= 32 to resolve wavenumber 10");

    const int n = grid.n_x;
    constexpr int k_max = 10;
    std::complex<double> amp_pos[k_max], amp_neg[k_max];
    for (int k = 0; k < k_max; ++k) amp_pos[k] = rng.complex_normal();
    for (int k = 0; k < k_max; ++k) amp_neg[k] = rng.complex_normal();

    State u(n, 0.0);
    for (int i = 0; i < n; ++i) {
        std::complex<double> acc = 0.0;
        for (int k = 1; k <= k_max; ++k) {
            double phase = 2.0 * M_PI * k * i / n;
            std::complex<double> e(std::cos(phase), std::sin(phase));
            acc += amp_pos[k - 1] * e + amp_neg[k - 1] * std::conj(e);
        }
        u[i] = acc.real();
    }
    double peak = 0.0;
    for (double v : u) peak = std::max(peak, std::abs(v));
    double scale = 2.0 / peak;
    for (double& v : u) v *= scale;
    return u;
}

namespace {
std::vector<double> downsample_block(const std::vector<double>& fine, int n_snap, int n_fine,
                                     int factor) {
    const int n_coarse = n_fine / factor;
    std::vector<double> out(static_cast<std::size_t>(n_snap) * n_coarse);
    for (int s = 0; s < n_snap; ++s) {
        const double* src = fine.data() + static_cast<std::size_t>(s) * n_fine;
        double* dst = out.data() + static_cast<std::size_t>(s) * n_coarse;
        for (int j = 0; j < n_coarse; ++j) {
            double acc = 0.0;
            for (int c = 0; c < factor; ++c) acc += src[j * factor + c];
            dst[j] = acc / factor;
        }
    }
    return out;
}
} // namespace

Trajectory downsample(const Trajectory& fine, int factor) {
    if (factor < 1 || fine.grid.n_x % factor != 0)
        throw std::invalid_argument("downsample: factor must divide n_x");
    Trajectory coarse;
    coarse.grid = PeriodicGrid(fine.grid.n_x / factor, fine.grid.length);
    coarse.t0 = fine.t0;
    coarse.dt_snap = fine.dt_snap;
    coarse.n_snapshots = fine.n_snapshots;
    coarse.states = downsample_block(fine.states, fine.n_snapshots, fine.grid.n_x, factor);
    if (fine.derivatives)
        coarse.derivatives =
            downsample_block(*fine.derivatives, fine.n_snapshots, fine.grid.n_x, factor);
    return coarse;
}

Dataset split_dataset(Dataset ds, int n_train, int n_validation, int n_test) {
    const int n = static_cast<int>(ds.trajectories.size());
    if (n_train + n_validation + n_test != n)
        throw std::invalid_argument("split_dataset: counts must sum to the trajectory count");
    ds.splits.assign(n, Split::train);
    for (int i = n_train; i < n_train + n_validation; ++i) ds.splits[i] = Split::validation;
    for (int i = n_train + n_validation; i < n; ++i) ds.splits[i] = Split::test;
    return ds;
}

} // namespace ncm
