#include "ncm/rhs.hpp"

#include <cmath>
#include <stdexcept>

namespace ncm {

namespace {

inline int wrap(int i, int n) {
    if (i < 0) return i + n;
    if (i >= n) return i - n;
    return i;
}

// Subgradient choice for |.| at 0.
inline double sgn(double x) { return (x > 0.0) - (x < 0.0); }

void check_dim(std::span<const double> v, int n, const char* what) {
    if (static_cast<int>(v.size()) != n)
        throw std::invalid_argument(std::string(what) + ": size mismatch");
}

} // namespace

BurgersRhs::BurgersRhs(PeriodicGrid grid, double nu) : grid_(grid), nu_(nu) {
    if (nu < 0.0) throw std::invalid_argument("BurgersRhs: nu must be non-negative");
}

void BurgersRhs::eval(std::span<const double> u, std::span<double> out) const {
    const int n = grid_.n_x;
    check_dim(u, n, "BurgersRhs::eval(u)");
    check_dim(out, n, "BurgersRhs::eval(out)");
    const double dx = grid_.dx();
    const double diff = nu_ / (dx * dx);

    // Edge flux at i+1/2 in flux[i].
    std::vector<double> flux(n);
    for (int i = 0; i < n; ++i) {
        const double a = u[i];
        const double b = u[wrap(i + 1, n)];
        const double alpha = std::abs(a + b) / 4.0 - (b - a) / 12.0;
        flux[i] = (a * a + a * b + b * b) / 6.0 - alpha * (b - a);
    }
    for (int i = 0; i < n; ++i) {
        const double um = u[wrap(i - 1, n)];
        const double up = u[wrap(i + 1, n)];
        out[i] = diff * (um - 2.0 * u[i] + up) - (flux[i] - flux[wrap(i - 1, n)]) / dx;
    }
}

void BurgersRhs::vjp_state(std::span<const double> u, std::span<const double> w,
                           std::span<double> out) const {
    const int n = grid_.n_x;
    check_dim(u, n, "BurgersRhs::vjp_state(u)");
    check_dim(w, n, "BurgersRhs::vjp_state(w)");
    check_dim(out, n, "BurgersRhs::vjp_state(out)");
    const double dx = grid_.dx();
    const double diff = nu_ / (dx * dx);

    // Diffusion stencil is symmetric.
    for (int i = 0; i < n; ++i) {
        const double wm = w[wrap(i - 1, n)];
        const double wp = w[wrap(i + 1, n)];
        out[i] = diff * (wm - 2.0 * w[i] + wp);
    }
    // Flux at edge i+1/2 enters out[i] with -1/dx and out[i+1] with +1/dx.
    for (int i = 0; i < n; ++i) {
        const int ip = wrap(i + 1, n);
        const double a = u[i];
        const double b = u[ip];
        const double alpha = std::abs(a + b) / 4.0 - (b - a) / 12.0;
        const double dalpha_da = sgn(a + b) / 4.0 + 1.0 / 12.0;
        const double dalpha_db = sgn(a + b) / 4.0 - 1.0 / 12.0;
        const double dF_da = (2.0 * a + b) / 6.0 - dalpha_da * (b - a) + alpha;
        const double dF_db = (a + 2.0 * b) / 6.0 - dalpha_db * (b - a) - alpha;
        const double wf = (w[ip] - w[i]) / dx;
        out[i] += wf * dF_da;
        out[ip] += wf * dF_db;
    }
}

namespace {

// Shared by KsRhs and KsFvmConvection: the quadratic flux term of the
// written-out KS ODE, -(u_{i+1}^2 - u_{i-1}^2 + u_i (u_{i+1} - u_{i-1})) / (6 dx).
void ks_convection_eval(const PeriodicGrid& g, std::span<const double> u, std::span<double> out) {
    const int n = g.n_x;
    const double c = 1.0 / (6.0 * g.dx());
    for (int i = 0; i < n; ++i) {
        const double um = u[wrap(i - 1, n)];
        const double up = u[wrap(i + 1, n)];
        out[i] = -c * (up * up - um * um + u[i] * (up - um));
    }
}

void ks_convection_vjp(const PeriodicGrid& g, std::span<const double> u, std::span<const double> w,
                       std::span<double> out) {
    const int n = g.n_x;
    const double c = 1.0 / (6.0 * g.dx());
    std::fill(out.begin(), out.end(), 0.0);
    for (int i = 0; i < n; ++i) {
        const int im = wrap(i - 1, n);
        const int ip = wrap(i + 1, n);
        const double wi = w[i];
        out[ip] += -c * (2.0 * u[ip] + u[i]) * wi;
        out[im] += c * (2.0 * u[im] + u[i]) * wi;
        out[i] += -c * (u[ip] - u[im]) * wi;
    }
}

} // namespace

void KsRhs::eval(std::span<const double> u, std::span<double> out) const {
    const int n = grid_.n_x;
    check_dim(u, n, "KsRhs::eval(u)");
    check_dim(out, n, "KsRhs::eval(out)");
    const double dx = grid_.dx();
    const double c2 = 1.0 / (dx * dx);
    const double c4 = 1.0 / (dx * dx * dx * dx);

    ks_convection_eval(grid_, u, out);
    for (int i = 0; i < n; ++i) {
        const double um2 = u[wrap(i - 2, n)];
        const double um1 = u[wrap(i - 1, n)];
        const double up1 = u[wrap(i + 1, n)];
        const double up2 = u[wrap(i + 2, n)];
        out[i] -= c2 * (um1 - 2.0 * u[i] + up1);
        out[i] -= c4 * (um2 - 4.0 * um1 + 6.0 * u[i] - 4.0 * up1 + up2);
    }
}

void KsRhs::vjp_state(std::span<const double> u, std::span<const double> w,
                      std::span<double> out) const {
    const int n = grid_.n_x;
    check_dim(u, n, "KsRhs::vjp_state(u)");
    check_dim(w, n, "KsRhs::vjp_state(w)");
    check_dim(out, n, "KsRhs::vjp_state(out)");
    const double dx = grid_.dx();
    const double c2 = 1.0 / (dx * dx);
    const double c4 = 1.0 / (dx * dx * dx * dx);

    ks_convection_vjp(grid_, u, w, out);
    // Both linear stencils are symmetric.
    for (int i = 0; i < n; ++i) {
        const double wm2 = w[wrap(i - 2, n)];
        const double wm1 = w[wrap(i - 1, n)];
        const double wp1 = w[wrap(i + 1, n)];
        const double wp2 = w[wrap(i + 2, n)];
        out[i] -= c2 * (wm1 - 2.0 * w[i] + wp1);
        out[i] -= c4 * (wm2 - 4.0 * wm1 + 6.0 * w[i] - 4.0 * wp1 + wp2);
    }
}

void KsFvmConvection::eval(std::span<const double> u, std::span<double> out) const {
    check_dim(u, grid_.n_x, "KsFvmConvection::eval(u)");
    check_dim(out, grid_.n_x, "KsFvmConvection::eval(out)");
    ks_convection_eval(grid_, u, out);
}

void KsFvmConvection::vjp_state(std::span<const double> u, std::span<const double> w,
                                std::span<double> out) const {
    check_dim(u, grid_.n_x, "KsFvmConvection::vjp_state(u)");
    ks_convection_vjp(grid_, u, w, out);
}

void KsSpectralConvection::eval(std::span<const double> u, std::span<double> out) const {
    const int n = grid_.n_x;
    check_dim(u, n, "KsSpectralConvection::eval(u)");
    check_dim(out, n, "KsSpectralConvection::eval(out)");
    std::vector<double> u2(n);
    for (int i = 0; i < n; ++i) u2[i] = u[i] * u[i];
    deriv_.apply(u2, out);
    for (int i = 0; i < n; ++i) out[i] *= -0.5;
}

void KsSpectralConvection::vjp_state(std::span<const double> u, std::span<const double> w,
                                     std::span<double> out) const {
    // N(u) = -1/2 D(u^2) with D antisymmetric, so (dN/du)^T w = u .* D(w).
    const int n = grid_.n_x;
    check_dim(u, n, "KsSpectralConvection::vjp_state(u)");
    check_dim(out, n, "KsSpectralConvection::vjp_state(out)");
    deriv_.apply(w, out);
    for (int i = 0; i < n; ++i) out[i] *= u[i];
}

ClosureRhs::ClosureRhs(const OdeRhs* base, const CnnArchitecture* arch, const CnnParams* params,
                       int n_x, bool enabled)
    : base_(base), arch_(arch), params_(params), n_x_(n_x), enabled_(enabled) {
    if (base_ && base_->dim() != n_x_)
        throw std::invalid_argument("ClosureRhs: base dimension does not match grid");
    if (enabled_) {
        if (!arch_ || !params_)
            throw std::invalid_argument("ClosureRhs: enabled closure requires network and parameters");
        if (static_cast<int>(params_->theta.size()) != arch_->param_count())
            throw std::invalid_argument("ClosureRhs: parameter length does not match architecture");
        if (n_x_ < arch_->max_kernel_width())
            throw std::invalid_argument("ClosureRhs: grid narrower than the widest kernel");
    }
}

void ClosureRhs::eval(std::span<const double> u, std::span<double> out) const {
    check_dim(u, n_x_, "ClosureRhs::eval(u)");
    check_dim(out, n_x_, "ClosureRhs::eval(out)");
    if (base_)
        base_->eval(u, out);
    else
        std::fill(out.begin(), out.end(), 0.0);
    if (enabled_) {
        std::vector<double> nn_out(n_x_);
        nn_forward(*arch_, *params_, u, nn_out);
        for (int i = 0; i < n_x_; ++i) out[i] += nn_out[i];
    }
}

void ClosureRhs::vjp_state(std::span<const double> u, std::span<const double> w,
                           std::span<double> out) const {
    check_dim(u, n_x_, "ClosureRhs::vjp_state(u)");
    check_dim(out, n_x_, "ClosureRhs::vjp_state(out)");
    if (base_)
        base_->vjp_state(u, w, out);
    else
        std::fill(out.begin(), out.end(), 0.0);
    if (enabled_) {
        std::vector<double> gtheta(arch_->param_count(), 0.0);
        std::vector<double> gu(n_x_);
        nn_backward(*arch_, *params_, u, w, gtheta, gu);
        for (int i = 0; i < n_x_; ++i) out[i] += gu[i];
    }
}

void ClosureRhs::vjp_params(std::span<const double> u, std::span<const double> w,
                            std::span<double> grad) const {
    if (!enabled_) return;
    if (static_cast<int>(grad.size()) != arch_->param_count())
        throw std::invalid_argument("ClosureRhs::vjp_params: gradient size mismatch");
    std::vector<double> gu(n_x_);
    nn_backward(*arch_, *params_, u, w, grad, gu);
}

} // namespace ncm
