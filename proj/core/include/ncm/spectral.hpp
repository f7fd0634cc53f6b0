#pragma once

#include <complex>
#include <optional>
#include <span>
#include <vector>

#include "ncm/fft.hpp"
#include "ncm/grid.hpp"
#include "ncm/nn.hpp"

namespace ncm {

struct SpectralState {
    std::vector<std::complex<double>> coeffs;
};

/// Diagonal wavenumber operator: lambda_k = 2*pi*k/L below the Nyquist
/// mode, 0 at the Nyquist mode, 2*pi*(k - n)/L above it.
struct WavenumberDiag {
    std::vector<double> lambda;
};

WavenumberDiag wavenumbers(const PeriodicGrid& grid);

struct ClosureNet {
    const CnnArchitecture* arch = nullptr;
    const CnnParams* params = nullptr;
};

/// Pseudospectral KS right-hand side
///   (Lambda^2 - Lambda^4) u_hat - (i/2) Lambda F((F^-1 u_hat)^2),
/// optionally augmented with F(closure(F^-1 u_hat)).
/// The input must be conjugate-symmetric (transform of a real signal).
SpectralState eval_ks_spectral(const SpectralState& u_hat, const PeriodicGrid& grid,
                               std::optional<ClosureNet> closure = std::nullopt);

/// Fixed-step ETDRK4 coefficients for a diagonal linear operator,
/// computed by contour averaging (Kassam-Trefethen) to avoid
/// cancellation near z = 0.
struct Etdrk4Coeffs {
    double h = 0.0;
    std::vector<std::complex<double>> e_full;  // e^{z}
    std::vector<std::complex<double>> e_half;  // e^{z/2}
    std::vector<std::complex<double>> q;       // h * phi1(z/2) / 2
    std::vector<std::complex<double>> f1, f2, f3;
};

Etdrk4Coeffs etdrk4_coeffs(std::span<const std::complex<double>> eigenvalues, double h,
                           int contour_points = 32, double contour_radius = 1.0);
Etdrk4Coeffs etdrk4_coeffs(std::span<const double> eigenvalues, double h,
                           int contour_points = 32, double contour_radius = 1.0);

/// Contour-averaged phi1(z) = (e^z - 1)/z, exposed for verification.
std::complex<double> contour_phi1(std::complex<double> z, int contour_points = 32,
                                  double contour_radius = 1.0);

/// Real circulant operator given by its (real) Fourier multipliers;
/// requires m_k = m_{n-k} so that real signals map to real signals.
/// Such an operator is a symmetric matrix, hence self-adjoint.
class CirculantOperator {
  public:
    explicit CirculantOperator(std::vector<double> multipliers)
        : mult_(std::move(multipliers)) {}

    int size() const { return static_cast<int>(mult_.size()); }
    const std::vector<double>& multipliers() const { return mult_; }

    void apply(std::span<const double> u, std::span<double> out) const;

  private:
    std::vector<double> mult_;
};

/// Real antisymmetric spectral derivative d/dx (Fourier multipliers
/// i*lambda_k); its transpose is its negation.
class SpectralDerivative {
  public:
    explicit SpectralDerivative(WavenumberDiag diag) : diag_(std::move(diag)) {}
    void apply(std::span<const double> u, std::span<double> out) const;
    const WavenumberDiag& diag() const { return diag_; }

  private:
    WavenumberDiag diag_;
};

/// Eigenvalues of the coarse pseudospectral KS linear part, lambda^2 - lambda^4.
std::vector<double> ks_spectral_linear_eigenvalues(const PeriodicGrid& grid);

/// Eigenvalues of the circulant finite-volume KS linear part,
/// -(3-point second difference)/dx^2 - (5-point fourth difference)/dx^4.
std::vector<double> ks_fvm_linear_eigenvalues(const PeriodicGrid& grid);

} // namespace ncm
