#pragma once

#include <span>
#include <vector>

#include "ncm/grid.hpp"
#include "ncm/nn.hpp"
#include "ncm/spectral.hpp"

namespace ncm {

/// Autonomous ODE right-hand side with vector-Jacobian products in the
/// state and (optionally) in trainable parameters. Evaluation and VJPs
/// are pure; implementations are safe for concurrent use.
class OdeRhs {
  public:
    virtual ~OdeRhs() = default;
    virtual int dim() const = 0;
    virtual int param_count() const { return 0; }
    virtual void eval(std::span<const double> u, std::span<double> out) const = 0;
    /// out = w^T (dg/du), exact to roundoff.
    virtual void vjp_state(std::span<const double> u, std::span<const double> w,
                           std::span<double> out) const = 0;
    /// grad += w^T (dg/dtheta); default: no parameters.
    virtual void vjp_params(std::span<const double> /*u*/, std::span<const double> /*w*/,
                            std::span<double> /*grad*/) const {}
};

/// First-order Jameson finite-volume discretisation of Burgers' equation
/// with artificial diffusion in the flux.
class BurgersRhs final : public OdeRhs {
  public:
    BurgersRhs(PeriodicGrid grid, double nu);

    int dim() const override { return grid_.n_x; }
    void eval(std::span<const double> u, std::span<double> out) const override;
    void vjp_state(std::span<const double> u, std::span<const double> w,
                   std::span<double> out) const override;

    const PeriodicGrid& grid() const { return grid_; }
    double nu() const { return nu_; }

  private:
    PeriodicGrid grid_;
    double nu_;
};

/// Finite-volume Kuramoto-Sivashinsky right-hand side: quadratic flux
/// without artificial diffusion, plus 3-point anti-diffusion and 5-point
/// hyper-diffusion stencils, all with periodic wrap.
class KsRhs final : public OdeRhs {
  public:
    explicit KsRhs(PeriodicGrid grid) : grid_(grid) {}

    int dim() const override { return grid_.n_x; }
    void eval(std::span<const double> u, std::span<double> out) const override;
    void vjp_state(std::span<const double> u, std::span<const double> w,
                   std::span<double> out) const override;

    const PeriodicGrid& grid() const { return grid_; }

  private:
    PeriodicGrid grid_;
};

/// Convection term of the finite-volume KS discretisation only, used as
/// the explicit part of exponential-integrator splits.
class KsFvmConvection final : public OdeRhs {
  public:
    explicit KsFvmConvection(PeriodicGrid grid) : grid_(grid) {}

    int dim() const override { return grid_.n_x; }
    void eval(std::span<const double> u, std::span<double> out) const override;
    void vjp_state(std::span<const double> u, std::span<const double> w,
                   std::span<double> out) const override;

  private:
    PeriodicGrid grid_;
};

/// Pseudospectral KS convection -(1/2) d(u^2)/dx evaluated in physical
/// space via the spectral derivative.
class KsSpectralConvection final : public OdeRhs {
  public:
    explicit KsSpectralConvection(PeriodicGrid grid)
        : grid_(grid), deriv_(wavenumbers(grid)) {}

    int dim() const override { return grid_.n_x; }
    void eval(std::span<const double> u, std::span<double> out) const override;
    void vjp_state(std::span<const double> u, std::span<const double> w,
                   std::span<double> out) const override;

  private:
    PeriodicGrid grid_;
    SpectralDerivative deriv_;
};

/// g(u; theta) = base(u) + closure network output. The base may be null
/// (pure neural ODE); the closure may be disabled, in which case the
/// evaluation equals the base exactly.
class ClosureRhs final : public OdeRhs {
  public:
    ClosureRhs(const OdeRhs* base, const CnnArchitecture* arch, const CnnParams* params,
               int n_x, bool enabled = true);

    int dim() const override { return n_x_; }
    int param_count() const override {
        return enabled_ ? arch_->param_count() : 0;
    }
    void eval(std::span<const double> u, std::span<double> out) const override;
    void vjp_state(std::span<const double> u, std::span<const double> w,
                   std::span<double> out) const override;
    void vjp_params(std::span<const double> u, std::span<const double> w,
                    std::span<double> grad) const override;

    bool enabled() const { return enabled_; }

  private:
    const OdeRhs* base_;
    const CnnArchitecture* arch_;
    const CnnParams* params_;
    int n_x_;
    bool enabled_;
};

} // namespace ncm
