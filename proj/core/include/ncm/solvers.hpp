#pragma once

#include <array>
#include <complex>
#include <functional>
#include <optional>
#include <span>
#include <stdexcept>
#include <vector>

#include "ncm/rhs.hpp"
#include "ncm/spectral.hpp"

namespace ncm {

enum class Method { rk4, tsit5_fixed, tsit5_adaptive, etdrk4 };

struct SolverConfig {
    Method method = Method::tsit5_fixed;
    double dt = 0.0;          // fixed-step size (rk4, tsit5_fixed, etdrk4)
    double abstol = 1e-6;     // adaptive tolerances
    double reltol = 1e-6;
    long max_steps = 50'000'000;
};

struct BlowUpError : std::runtime_error {
    using std::runtime_error::runtime_error;
};
struct MaxStepsError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

/// Internal-step record for adjoint interpolation: times, states, and
/// RHS values at each accepted step.
struct DenseRecord {
    std::vector<double> ts;
    std::vector<std::vector<double>> states;
    std::vector<std::vector<double>> derivs;

    /// Cubic Hermite reconstruction of the state at time t.
    void interpolate(double t, std::span<double> out) const;
};

struct SolveRecord {
    std::vector<double> save_times;
    std::vector<std::vector<double>> snapshots;
    std::optional<DenseRecord> dense;
};

struct ButcherTableau {
    std::vector<double> c;
    std::vector<std::vector<double>> a;  // strictly lower triangular rows
    std::vector<double> b;
    std::vector<double> b_embedded;      // empty for non-adaptive tableaus
    int stages() const { return static_cast<int>(b.size()); }
};

const ButcherTableau& rk4_tableau();
const ButcherTableau& tsit5_tableau();

/// Integrates the ODE from u0 at t0 through the (strictly increasing)
/// save times, which must start at t0. Fixed-step methods subdivide each
/// save interval into round(interval/dt) equal steps; the adaptive
/// controller clamps steps to land on save times exactly.
SolveRecord solve(const OdeRhs& rhs, std::span<const double> u0, double t0,
                  std::span<const double> save_times, const SolverConfig& config,
                  bool keep_dense = false);

/// Stiff-linear/nonlinear split: a circulant (DFT-diagonalisable) linear
/// part given by its real eigenvalues, plus an explicit nonlinear part.
struct SplitRhs {
    std::vector<double> linear_eigenvalues;
    const OdeRhs* nonlinear = nullptr;  // may be null (pure linear problem)
};

/// Cox-Matthews ETDRK4 with Kassam-Trefethen coefficients on a circulant
/// split; dt must divide the save-interval spacing. Linear-only problems
/// are integrated exactly.
SolveRecord etdrk4_solve(const SplitRhs& rhs, std::span<const double> u0, double t0,
                         std::span<const double> save_times, double dt, bool keep_dense = false);

/// One ETDRK4 step for a diagonal complex linear operator; exposed for
/// verification against exact exponentials.
std::vector<std::complex<double>> etdrk4_step_diag(
    const Etdrk4Coeffs& coeffs, std::span<const std::complex<double>> v,
    const std::function<void(std::span<const std::complex<double>>, std::span<std::complex<double>>)>&
        nonlinear);

// ---------------------------------------------------------------------
// Differentiable fixed-step unrolls. The tape stores the states needed
// for exact reverse-mode differentiation of any function of the
// snapshots.

struct RkTape {
    // per micro-step: start state followed by the stage states
    std::vector<std::vector<std::vector<double>>> step_states;
    int substeps_per_snapshot = 1;
    double dt = 0.0;
};

struct RkUnrollResult {
    std::vector<std::vector<double>> snapshots;  // n_t + 1 entries, incl. u0
    RkTape tape;
};

RkUnrollResult unroll_rk(const OdeRhs& rhs, const ButcherTableau& tableau,
                         std::span<const double> u0, double dt_snap, int n_t, int substeps);

/// Reverse pass: snapshot_cotangents[i] is dLoss/d(snapshot i)
/// (i = 0..n_t). Accumulates into grad_params; writes grad_u0.
void unroll_rk_backward(const OdeRhs& rhs, const ButcherTableau& tableau,
                        const RkUnrollResult& fwd,
                        const std::vector<std::vector<double>>& snapshot_cotangents,
                        std::span<double> grad_u0, std::span<double> grad_params);

struct EtdTape {
    // per micro-step: v, a, b, c (physical-space states)
    std::vector<std::array<std::vector<double>, 4>> step_states;
    int substeps_per_snapshot = 1;
};

struct EtdUnrollResult {
    std::vector<std::vector<double>> snapshots;
    EtdTape tape;
};

EtdUnrollResult unroll_etdrk4(const SplitRhs& rhs, const Etdrk4Coeffs& coeffs,
                              std::span<const double> u0, int n_t, int substeps);

void unroll_etdrk4_backward(const SplitRhs& rhs, const Etdrk4Coeffs& coeffs,
                            const EtdUnrollResult& fwd,
                            const std::vector<std::vector<double>>& snapshot_cotangents,
                            std::span<double> grad_u0, std::span<double> grad_params);

/// Test/fixture adapter wrapping plain callables as an OdeRhs.
class CallableRhs final : public OdeRhs {
  public:
    using EvalFn = std::function<void(std::span<const double>, std::span<double>)>;
    using VjpFn =
        std::function<void(std::span<const double>, std::span<const double>, std::span<double>)>;

    CallableRhs(int n, EvalFn eval, VjpFn vjp = nullptr)
        : n_(n), eval_(std::move(eval)), vjp_(std::move(vjp)) {}

    int dim() const override { return n_; }
    void eval(std::span<const double> u, std::span<double> out) const override { eval_(u, out); }
    void vjp_state(std::span<const double> u, std::span<const double> w,
                   std::span<double> out) const override {
        if (!vjp_) throw std::logic_error("CallableRhs: no VJP provided");
        vjp_(u, w, out);
    }

  private:
    int n_;
    EvalFn eval_;
    VjpFn vjp_;
};

} // namespace ncm
