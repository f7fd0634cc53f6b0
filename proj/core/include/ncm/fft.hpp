#pragma once

#include <complex>
#include <span>
#include <vector>

namespace ncm {

/// Unnormalised forward DFT (complex-to-complex).
void fft_forward(std::span<const std::complex<double>> in, std::span<std::complex<double>> out);

/// Inverse DFT carrying the 1/n factor.
void fft_inverse(std::span<const std::complex<double>> in, std::span<std::complex<double>> out);

/// Forward DFT of a real signal: û_k = Σ_j u_j e^{-2πijk/n}.
std::vector<std::complex<double>> dft(std::span<const double> u);

/// Inverse DFT of conjugate-symmetric coefficients back to a real signal;
/// the imaginary residue is discarded.
std::vector<double> idft_real(std::span<const std::complex<double>> coeffs);

} // namespace ncm
