#include "ncm/spectral.hpp"

#include <cmath>
#include <stdexcept>

namespace ncm {

WavenumberDiag wavenumbers(const PeriodicGrid& grid) {
    const int n = grid.n_x;
    WavenumberDiag d;
    d.lambda.resize(n);
    for (int k = 0; k < n; ++k) {
        if (k < n / 2)
            d.lambda[k] = 2.0 * M_PI * k / grid.length;
        else if (k == n / 2)
            d.lambda[k] = 0.0;
        else
            d.lambda[k] = 2.0 * M_PI * (k - n) / grid.length;
    }
    return d;
}

SpectralState eval_ks_spectral(const SpectralState& u_hat, const PeriodicGrid& grid,
                               std::optional<ClosureNet> closure) {
    const int n = grid.n_x;
    if (static_cast<int>(u_hat.coeffs.size()) != n)
        throw std::invalid_argument("eval_ks_spectral: coefficient count does not match grid");

    // Conjugate symmetry check (real underlying signal).
    double scale = 0.0;
    for (const auto& c : u_hat.coeffs) scale = std::max(scale, std::abs(c));
    const double tol = 1e-8 * std::max(scale, 1.0);
    for (int k = 1; k < n / 2; ++k) {
        std::complex<double> diff = u_hat.coeffs[k] - std::conj(u_hat.coeffs[n - k]);
        if (std::abs(diff) > tol)
            throw std::invalid_argument("eval_ks_spectral: input is not conjugate-symmetric");
    }

    const WavenumberDiag d = wavenumbers(grid);
    std::vector<double> u = idft_real(u_hat.coeffs);
    std::vector<double> u2(n);
    for (int i = 0; i < n; ++i) u2[i] = u[i] * u[i];
    std::vector<std::complex<double>> u2_hat = dft(u2);

    SpectralState out;
    out.coeffs.resize(n);
    const std::complex<double> imag_half(0.0, 0.5);
    for (int k = 0; k < n; ++k) {
        const double l2 = d.lambda[k] * d.lambda[k];
        out.coeffs[k] = (l2 - l2 * l2) * u_hat.coeffs[k] - imag_half * d.lambda[k] * u2_hat[k];
    }

    if (closure) {
        std::vector<double> nn_out(n);
        nn_forward(*closure->arch, *closure->params, u, nn_out);
        std::vector<std::complex<double>> nn_hat = dft(nn_out);
        for (int k = 0; k < n; ++k) out.coeffs[k] += nn_hat[k];
    }
    return out;
}

namespace {

struct PhiValues {
    std::complex<double> q, f1, f2, f3;
};

// Mean of the phi-combination integrands over a circle of the given
// radius around z. The full circle keeps the construction valid for
// complex z; for real z the paired points cancel the imaginary parts.
PhiValues contour_means(std::complex<double> z, double h, int m, double radius) {
    PhiValues acc{0.0, 0.0, 0.0, 0.0};
    for (int j = 0; j < m; ++j) {
        const double theta = 2.0 * M_PI * (j + 0.5) / m;
        const std::complex<double> s = z + radius * std::complex<double>(std::cos(theta), std::sin(theta));
        const std::complex<double> es = std::exp(s);
        const std::complex<double> s2 = s * s;
        const std::complex<double> s3 = s2 * s;
        acc.q += (std::exp(s / 2.0) - 1.0) / s;
        acc.f1 += (-4.0 - s + es * (4.0 - 3.0 * s + s2)) / s3;
        acc.f2 += (2.0 + s + es * (-2.0 + s)) / s3;
        acc.f3 += (-4.0 - 3.0 * s - s2 + es * (4.0 - s)) / s3;
    }
    const double inv = h / m;
    return {acc.q * inv, acc.f1 * inv, acc.f2 * inv, acc.f3 * inv};
}

} // namespace

std::complex<double> contour_phi1(std::complex<double> z, int m, double radius) {
    std::complex<double> acc = 0.0;
    for (int j = 0; j < m; ++j) {
        const double theta = 2.0 * M_PI * (j + 0.5) / m;
        const std::complex<double> s = z + radius * std::complex<double>(std::cos(theta), std::sin(theta));
        acc += (std::exp(s) - 1.0) / s;
    }
    return acc / static_cast<double>(m);
}

Etdrk4Coeffs etdrk4_coeffs(std::span<const std::complex<double>> eigenvalues, double h,
                           int contour_points, double contour_radius) {
    if (!(h > 0.0)) throw std::invalid_argument("etdrk4_coeffs: step must be positive");
    const int n = static_cast<int>(eigenvalues.size());
    Etdrk4Coeffs c;
    c.h = h;
    c.e_full.resize(n);
    c.e_half.resize(n);
    c.q.resize(n);
    c.f1.resize(n);
    c.f2.resize(n);
    c.f3.resize(n);
    for (int k = 0; k < n; ++k) {
        const std::complex<double> z = eigenvalues[k] * h;
        c.e_full[k] = std::exp(z);
        c.e_half[k] = std::exp(z / 2.0);
        PhiValues p = contour_means(z, h, contour_points, contour_radius);
        c.q[k] = p.q;
        c.f1[k] = p.f1;
        c.f2[k] = p.f2;
        c.f3[k] = p.f3;
    }
    return c;
}

Etdrk4Coeffs etdrk4_coeffs(std::span<const double> eigenvalues, double h, int contour_points,
                           double contour_radius) {
    std::vector<std::complex<double>> z(eigenvalues.begin(), eigenvalues.end());
    Etdrk4Coeffs c = etdrk4_coeffs(std::span<const std::complex<double>>(z), h, contour_points,
                                   contour_radius);
    // Real eigenvalues give real coefficients; discard the roundoff
    // imaginary part so Fourier multipliers stay conjugate-symmetric.
    for (auto* v : {&c.e_full, &c.e_half, &c.q, &c.f1, &c.f2, &c.f3})
        for (auto& x : *v) x = x.real();
    return c;
}

void CirculantOperator::apply(std::span<const double> u, std::span<double> out) const {
    const int n = size();
    if (static_cast<int>(u.size()) != n || static_cast<int>(out.size()) != n)
        throw std::invalid_argument("CirculantOperator: size mismatch");
    std::vector<std::complex<double>> hat = dft(u);
    for (int k = 0; k < n; ++k) hat[k] *= mult_[k];
    std::vector<double> res = idft_real(hat);
    std::copy(res.begin(), res.end(), out.begin());
}

void SpectralDerivative::apply(std::span<const double> u, std::span<double> out) const {
    const int n = static_cast<int>(diag_.lambda.size());
    if (static_cast<int>(u.size()) != n || static_cast<int>(out.size()) != n)
        throw std::invalid_argument("SpectralDerivative: size mismatch");
    std::vector<std::complex<double>> hat = dft(u);
    for (int k = 0; k < n; ++k) hat[k] *= std::complex<double>(0.0, diag_.lambda[k]);
    std::vector<double> res = idft_real(hat);
    std::copy(res.begin(), res.end(), out.begin());
}

std::vector<double> ks_spectral_linear_eigenvalues(const PeriodicGrid& grid) {
    const WavenumberDiag d = wavenumbers(grid);
    std::vector<double> eig(d.lambda.size());
    for (std::size_t k = 0; k < eig.size(); ++k) {
        const double l2 = d.lambda[k] * d.lambda[k];
        eig[k] = l2 - l2 * l2;
    }
    return eig;
}

std::vector<double> ks_fvm_linear_eigenvalues(const PeriodicGrid& grid) {
    const int n = grid.n_x;
    const double dx = grid.dx();
    std::vector<double> eig(n);
    for (int k = 0; k < n; ++k) {
        const double theta = 2.0 * M_PI * k / n;
        const double d2 = (2.0 * std::cos(theta) - 2.0) / (dx * dx);
        const double d4 =
            (2.0 * std::cos(2.0 * theta) - 8.0 * std::cos(theta) + 6.0) / (dx * dx * dx * dx);
        eig[k] = -d2 - d4;
    }
    return eig;
}

} // namespace ncm
