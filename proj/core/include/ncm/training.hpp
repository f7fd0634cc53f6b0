#pragma once

#include <cstdint>
#include <functional>
#include <memory>
#include <optional>
#include <ostream>
#include <span>
#include <stdexcept>
#include <vector>

#include "ncm/grid.hpp"
#include "ncm/nn.hpp"
#include "ncm/rhs.hpp"
#include "ncm/solvers.hpp"

namespace ncm {

enum class Approach { derivative_fit, disc_then_opt, opt_then_disc };

struct TrainConfig {
    Approach approach = Approach::derivative_fit;
    int n_t = 1;                  // unroll length (trajectory approaches)
    int epochs = 0;
    int batch_size = 8;
    double learning_rate = 1e-3;
    double clip_radius = 1e-2;
    bool clip_enabled = false;    // on by default only for opt_then_disc
    double weight_exponent = 0.0; // c in the exponential loss weights
    double lambda_max = 0.0;      // growth rate used by the weights
    SolverConfig solver;
    std::uint64_t seed = 0;
    int validation_interval = 50;
};

/// A training step that could not produce a usable gradient (solver
/// blow-up, non-finite gradient).
struct TrainStepError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

struct BatchGrad {
    double loss = 0.0;
    std::vector<double> grad;
};

/// The coarse model g(u; theta) in the discretisation form a given
/// training approach requires, with the closure network attached to
/// every evaluation path. Owns the underlying RHS objects; keeps
/// non-owning references to the architecture and parameters, so
/// parameter updates are visible without rebuilding.
class ClosureModel {
  public:
    enum class Form { fvm, spectral };

    ClosureModel(Equation equation, PeriodicGrid grid, double nu, Form form,
                 const CnnArchitecture* arch, const CnnParams* params,
                 bool closure_enabled = true);

    Equation equation() const { return equation_; }
    const PeriodicGrid& grid() const { return grid_; }
    Form form() const { return form_; }
    int param_count() const;

    /// Full right-hand side (linear + nonlinear + closure). For the KS
    /// spectral form this is assembled from the split parts.
    const OdeRhs& full_rhs() const;

    /// Stiff split for exponential integration; only defined for KS.
    bool has_split() const { return equation_ == Equation::kuramoto_sivashinsky; }
    const SplitRhs& split() const;

    /// Integrates from u0 through save_times. KS uses ETDRK4 on the
    /// split with step solver.dt; Burgers uses the requested method.
    /// On blow-up the remaining snapshots are filled with 1e6 so that
    /// downstream metrics stay finite; *blew_up reports the event.
    std::vector<std::vector<double>> rollout(std::span<const double> u0, double t0,
                                             std::span<const double> save_times,
                                             const SolverConfig& solver,
                                             bool* blew_up = nullptr) const;

  private:
    Equation equation_;
    PeriodicGrid grid_;
    Form form_;
    std::unique_ptr<OdeRhs> base_full_;     // BurgersRhs or KsRhs
    std::unique_ptr<OdeRhs> convection_;    // KS explicit split part
    std::unique_ptr<ClosureRhs> closure_full_;
    std::unique_ptr<ClosureRhs> closure_convection_;
    std::unique_ptr<OdeRhs> assembled_full_;  // split linear + closure_convection_
    SplitRhs split_;
};

/// Model form used by each (equation, approach) pair: derivative fitting
/// and the adjoint method differentiate the finite-volume form; the KS
/// unrolled trajectory fit differentiates the pseudospectral form.
ClosureModel::Form training_form(Equation equation, Approach approach);

// ---------------------------------------------------------------------
// Losses and gradients

/// Exponential loss weights w_i = exp(-2 c lambda_max t_i) for
/// i = 1..n_t with t_i = i * dt_snap; c = 0 gives all-ones weights.
std::vector<double> loss_weights(int n_t, double dt_snap, double c, double lambda_max);

struct SnapshotRef {
    const Trajectory* trajectory = nullptr;
    int index = 0;
};

/// Mean-square error between reference derivatives and g(u_ref; theta)
/// over the given snapshots, with its parameter gradient.
BatchGrad derivative_fit_gradient(const OdeRhs& model, std::span<const SnapshotRef> batch);

/// Convenience: all snapshots of the given trajectories.
BatchGrad loss_derivative_fit(const OdeRhs& model, std::span<const Trajectory* const> trajectories);

/// Weighted trajectory-fitting loss and gradient for one batch of
/// (already split) trajectories, dispatching on the approach:
/// disc_then_opt backpropagates through the fixed-step unroll,
/// opt_then_disc solves the continuous adjoint with snapshot jumps and
/// Hermite-interpolated forward states. Throws TrainStepError on
/// forward or backward blow-up, naming the trajectory index.
BatchGrad trajectory_gradient(const ClosureModel& model, Approach approach,
                              std::span<const Trajectory* const> batch, const TrainConfig& cfg);

/// Forward-only counterpart of trajectory_gradient's loss (used for
/// validation); blow-ups are absorbed by the rollout fill policy.
double trajectory_loss(const ClosureModel& model, std::span<const Trajectory* const> batch,
                       const TrainConfig& cfg);

// ---------------------------------------------------------------------
// Optimiser

struct OptimState {
    std::vector<double> m, v;  // Adam first/second moments
    long step = 0;

    explicit OptimState(std::size_t n) : m(n, 0.0), v(n, 0.0) {}
};

/// Bias-corrected Adam update (beta1 = 0.9, beta2 = 0.999, eps = 1e-8).
/// Throws TrainStepError on a non-finite gradient; parameters are left
/// untouched in that case.
void adam_step(OptimState& optim, std::span<double> params, std::span<const double> grad,
               double learning_rate);

/// Rescales grad to Euclidean norm r when it exceeds r.
void clip_gradient(std::span<double> grad, double r);

// ---------------------------------------------------------------------
// Trajectory splitting and the epoch loop

/// Splits each trajectory into consecutive length-(n_t+1) pieces that
/// share boundary snapshots. Trailing snapshots that do not fill a
/// piece are dropped; *truncated reports whether any were.
std::vector<Trajectory> split_trajectories(const std::vector<Trajectory>& trajectories, int n_t,
                                           bool* truncated = nullptr);

struct EpochRecord {
    int epoch = 0;
    double train_loss = 0.0;
    std::optional<double> validation;
};

struct TrainResult {
    std::vector<EpochRecord> history;
    CnnParams best_params;
    double best_validation = 0.0;
    bool has_best = false;
    int failed_steps = 0;
};

using BatchGradFn = std::function<BatchGrad(std::span<const int>)>;
using ValidationFn = std::function<double(const CnnParams&)>;

/// Epoch loop: seeded shuffling, mini-batches, optional clipping, Adam.
/// Aborts (throws TrainStepError) after more than 10 consecutive step
/// failures. Deterministic for a fixed seed.
TrainResult train(CnnParams& params, int n_samples, const TrainConfig& cfg,
                  const BatchGradFn& batch_grad, const ValidationFn& validation = nullptr,
                  std::ostream* log = nullptr);

/// Full composition over a dataset: builds the dispatch-appropriate
/// model, splits training trajectories, wires the batch gradient and a
/// validation loss over the validation split, and runs the epoch loop.
/// nu is the Burgers viscosity (ignored for KS).
TrainResult train_on_dataset(const Dataset& dataset, const CnnArchitecture& arch,
                             CnnParams& params, const TrainConfig& cfg, double nu,
                             std::ostream* log = nullptr);

/// Loss-history CSV: epoch, train_loss, validation_metric (blank on
/// epochs without a validation pass).
void write_loss_history_csv(const std::string& path, const std::vector<EpochRecord>& history);

} // namespace ncm
