#include "ncm/fft.hpp"

#include <fftw3.h>

#include <map>
#include <mutex>
#include <stdexcept>

namespace ncm {

namespace {

// FFTW planning is not thread-safe; execution via fftw_execute_dft is.
// Plans are created once per size with FFTW_UNALIGNED so they can be
// executed on arbitrary caller buffers.
struct PlanPair {
    fftw_plan fwd = nullptr;
    fftw_plan bwd = nullptr;
};

PlanPair& plans_for(int n) {
    static std::mutex mtx;
    static std::map<int, PlanPair> cache;
    std::lock_guard<std::mutex> lock(mtx);
    auto it = cache.find(n);
    if (it != cache.end()) return it->second;

    std::vector<std::complex<double>> a(n), b(n);
    PlanPair p;
    p.fwd = fftw_plan_dft_1d(n, reinterpret_cast<fftw_complex*>(a.data()),
                             reinterpret_cast<fftw_complex*>(b.data()), FFTW_FORWARD,
                             FFTW_ESTIMATE | FFTW_UNALIGNED);
    p.bwd = fftw_plan_dft_1d(n, reinterpret_cast<fftw_complex*>(a.data()),
                             reinterpret_cast<fftw_complex*>(b.data()), FFTW_BACKWARD,
                             FFTW_ESTIMATE | FFTW_UNALIGNED);
    return cache.emplace(n, p).first->second;
}

} // namespace

void fft_forward(std::span<const std::complex<double>> in, std::span<std::complex<double>> out) {
    const int n = static_cast<int>(in.size());
    if (out.size() != in.size()) throw std::invalid_argument("fft_forward: size mismatch");
    auto& p = plans_for(n);
    fftw_execute_dft(p.fwd,
                     reinterpret_cast<fftw_complex*>(const_cast<std::complex<double>*>(in.data())),
                     reinterpret_cast<fftw_complex*>(out.data()));
}

void fft_inverse(std::span<const std::complex<double>> in, std::span<std::complex<double>> out) {
    const int n = static_cast<int>(in.size());
    if (out.size() != in.size()) throw std::invalid_argument("fft_inverse: size mismatch");
    auto& p = plans_for(n);
    fftw_execute_dft(p.bwd,
                     reinterpret_cast<fftw_complex*>(const_cast<std::complex<double>*>(in.data())),
                     reinterpret_cast<fftw_complex*>(out.data()));
    const double inv = 1.0 / n;
    for (auto& c : out) c *= inv;
}

std::vector<std::complex<double>> dft(std::span<const double> u) {
    const int n = static_cast<int>(u.size());
    std::vector<std::complex<double>> in(n), out(n);
    for (int i = 0; i < n; ++i) in[i] = u[i];
    fft_forward(in, out);
    return out;
}

std::vector<double> idft_real(std::span<const std::complex<double>> coeffs) {
    const int n = static_cast<int>(coeffs.size());
    std::vector<std::complex<double>> out(n);
    fft_inverse(coeffs, out);
    std::vector<double> u(n);
    for (int i = 0; i < n; ++i) u[i] = out[i].real();
    return u;
}

} // namespace ncm
