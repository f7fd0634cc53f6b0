#pragma once

#include <cmath>
#include <functional>
#include <span>
#include <vector>

#include "ncm/grid.hpp"
#include "ncm/rng.hpp"

namespace ncm::testing {

inline std::vector<double> random_vector(std::size_t n, Rng& rng, double scale = 1.0) {
    std::vector<double> v(n);
    for (double& x : v) x = scale * rng.normal();
    return v;
}

/// Central finite-difference gradient of a scalar function.
inline std::vector<double> fd_gradient(const std::function<double(std::span<const double>)>& f,
                                       std::span<const double> x, double h = 1e-6) {
    std::vector<double> g(x.size());
    std::vector<double> xp(x.begin(), x.end());
    for (std::size_t i = 0; i < x.size(); ++i) {
        const double orig = xp[i];
        xp[i] = orig + h;
        const double fp = f(xp);
        xp[i] = orig - h;
        const double fm = f(xp);
        xp[i] = orig;
        g[i] = (fp - fm) / (2.0 * h);
    }
    return g;
}

inline double max_rel_error(std::span<const double> a, std::span<const double> b) {
    double scale = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i)
        scale = std::max({scale, std::abs(a[i]), std::abs(b[i])});
    if (scale == 0.0) return 0.0;
    double err = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) err = std::max(err, std::abs(a[i] - b[i]));
    return err / scale;
}

/// Builds a smooth band-limited trajectory-like state for fixtures.
inline std::vector<double> smooth_state(int n, double length, int seed_shift = 0) {
    std::vector<double> u(n);
    for (int i = 0; i < n; ++i) {
        const double x = length * i / n;
        u[i] = std::sin(2.0 * M_PI * x / length + 0.3 * seed_shift) +
               0.5 * std::cos(4.0 * M_PI * x / length + 0.7 * seed_shift);
    }
    return u;
}

} // namespace ncm::testing
