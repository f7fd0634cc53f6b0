#include "ncm/training.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <limits>
#include <numeric>

#include "ncm/spectral.hpp"

namespace ncm {

namespace {

/// Circulant linear part plus an explicit nonlinear part, assembled as
/// a plain RHS (used when the model is defined by its split form).
class SplitFullRhs final : public OdeRhs {
  public:
    SplitFullRhs(std::vector<double> eigenvalues, const OdeRhs* nonlinear)
        : lin_(std::move(eigenvalues)), nonlinear_(nonlinear) {}

    int dim() const override { return lin_.size(); }
    int param_count() const override { return nonlinear_ ? nonlinear_->param_count() : 0; }

    void eval(std::span<const double> u, std::span<double> out) const override {
        lin_.apply(u, out);
        if (nonlinear_) {
            std::vector<double> nl(u.size());
            nonlinear_->eval(u, nl);
            for (std::size_t i = 0; i < u.size(); ++i) out[i] += nl[i];
        }
    }
    void vjp_state(std::span<const double> u, std::span<const double> w,
                   std::span<double> out) const override {
        lin_.apply(w, out);  // symmetric multipliers: self-adjoint
        if (nonlinear_) {
            std::vector<double> nl(u.size());
            nonlinear_->vjp_state(u, w, nl);
            for (std::size_t i = 0; i < u.size(); ++i) out[i] += nl[i];
        }
    }
    void vjp_params(std::span<const double> u, std::span<const double> w,
                    std::span<double> grad) const override {
        if (nonlinear_) nonlinear_->vjp_params(u, w, grad);
    }

  private:
    CirculantOperator lin_;
    const OdeRhs* nonlinear_;
};

} // namespace

ClosureModel::ClosureModel(Equation equation, PeriodicGrid grid, double nu, Form form,
                           const CnnArchitecture* arch, const CnnParams* params,
                           bool closure_enabled)
    : equation_(equation), grid_(grid), form_(form) {
    if (equation_ == Equation::burgers) {
        base_full_ = std::make_unique<BurgersRhs>(grid_, nu);
        closure_full_ = std::make_unique<ClosureRhs>(base_full_.get(), arch, params, grid_.n_x,
                                                     closure_enabled);
        return;
    }
    if (form_ == Form::fvm) {
        base_full_ = std::make_unique<KsRhs>(grid_);
        closure_full_ = std::make_unique<ClosureRhs>(base_full_.get(), arch, params, grid_.n_x,
                                                     closure_enabled);
        convection_ = std::make_unique<KsFvmConvection>(grid_);
        split_.linear_eigenvalues = ks_fvm_linear_eigenvalues(grid_);
    } else {
        convection_ = std::make_unique<KsSpectralConvection>(grid_);
        split_.linear_eigenvalues = ks_spectral_linear_eigenvalues(grid_);
    }
    closure_convection_ = std::make_unique<ClosureRhs>(convection_.get(), arch, params,
                                                       grid_.n_x, closure_enabled);
    split_.nonlinear = closure_convection_.get();
    if (!closure_full_)
        assembled_full_ = std::make_unique<SplitFullRhs>(split_.linear_eigenvalues,
                                                         closure_convection_.get());
}

int ClosureModel::param_count() const { return full_rhs().param_count(); }

const OdeRhs& ClosureModel::full_rhs() const {
    return closure_full_ ? static_cast<const OdeRhs&>(*closure_full_) : *assembled_full_;
}

const SplitRhs& ClosureModel::split() const {
    if (!has_split()) throw std::logic_error("ClosureModel: no split form for this equation");
    return split_;
}

std::vector<std::vector<double>> ClosureModel::rollout(std::span<const double> u0, double t0,
                                                       std::span<const double> save_times,
                                                       const SolverConfig& solver,
                                                       bool* blew_up) const {
    if (blew_up) *blew_up = false;
    std::vector<std::vector<double>> out;
    out.reserve(save_times.size());
    out.push_back(std::vector<double>(u0.begin(), u0.end()));
    for (std::size_t i = 1; i < save_times.size(); ++i) {
        const double seg[2] = {save_times[i - 1], save_times[i]};
        try {
            SolveRecord rec = has_split()
                                  ? etdrk4_solve(split_, out.back(), seg[0], seg, solver.dt)
                                  : solve(full_rhs(), out.back(), seg[0], seg, solver);
            out.push_back(std::move(rec.snapshots.back()));
        } catch (const BlowUpError&) {
            if (blew_up) *blew_up = true;
            while (out.size() < save_times.size())
                out.push_back(std::vector<double>(u0.size(), 1e6));
            break;
        }
    }
    (void)t0;
    return out;
}

ClosureModel::Form training_form(Equation equation, Approach approach) {
    if (equation == Equation::kuramoto_sivashinsky && approach == Approach::disc_then_opt)
        return ClosureModel::Form::spectral;
    return ClosureModel::Form::fvm;
}

// ---------------------------------------------------------------------
// Losses

std::vector<double> loss_weights(int n_t, double dt_snap, double c, double lambda_max) {
    if (n_t < 1) throw std::invalid_argument("loss_weights: n_t must be >= 1");
    std::vector<double> w(n_t);
    for (int i = 1; i <= n_t; ++i) w[i - 1] = std::exp(-2.0 * c * lambda_max * i * dt_snap);
    return w;
}

BatchGrad derivative_fit_gradient(const OdeRhs& model, std::span<const SnapshotRef> batch) {
    if (batch.empty()) throw std::invalid_argument("derivative_fit_gradient: empty batch");
    const int n = model.dim();
    BatchGrad bg;
    bg.grad.assign(model.param_count(), 0.0);
    std::vector<double> g(n), cot(n);
    const double norm = 1.0 / (static_cast<double>(n) * static_cast<double>(batch.size()));
    for (const SnapshotRef& s : batch) {
        if (!s.trajectory->derivatives)
            throw std::invalid_argument("derivative_fit_gradient: dataset has no derivatives");
        std::span<const double> u = s.trajectory->snapshot(s.index);
        std::span<const double> dref = s.trajectory->derivative(s.index);
        model.eval(u, g);
        for (int j = 0; j < n; ++j) {
            const double r = dref[j] - g[j];
            bg.loss += norm * r * r;
            cot[j] = -2.0 * norm * r;
        }
        if (!bg.grad.empty()) model.vjp_params(u, cot, bg.grad);
    }
    return bg;
}

BatchGrad loss_derivative_fit(const OdeRhs& model,
                              std::span<const Trajectory* const> trajectories) {
    std::vector<SnapshotRef> refs;
    for (const Trajectory* t : trajectories)
        for (int i = 0; i < t->n_snapshots; ++i) refs.push_back({t, i});
    return derivative_fit_gradient(model, refs);
}

namespace {

struct WeightSetup {
    std::vector<double> w;
    double z = 0.0;
    double dt_snap = 0.0;
    int n_t = 0;
};

WeightSetup weight_setup(std::span<const Trajectory* const> batch, const TrainConfig& cfg) {
    if (batch.empty()) throw std::invalid_argument("trajectory batch is empty");
    WeightSetup ws;
    ws.n_t = batch[0]->n_snapshots - 1;
    ws.dt_snap = batch[0]->dt_snap;
    for (const Trajectory* t : batch)
        if (t->n_snapshots - 1 != ws.n_t)
            throw std::invalid_argument("trajectory batch has mixed unroll lengths");
    if (ws.n_t < 1) throw std::invalid_argument("trajectory batch needs >= 2 snapshots");
    ws.w = loss_weights(ws.n_t, ws.dt_snap, cfg.weight_exponent, cfg.lambda_max);
    ws.z = std::accumulate(ws.w.begin(), ws.w.end(), 0.0);
    return ws;
}

int substeps_for(double dt_snap, double dt) {
    if (!(dt > 0.0)) return 1;
    return std::max(1, static_cast<int>(std::llround(dt_snap / dt)));
}

// Loss contribution and snapshot cotangents for one trajectory given
// its predicted snapshots. cot[0] is zero (the initial condition is
// data, not a decision variable).
double loss_and_cotangents(const std::vector<std::vector<double>>& pred, const Trajectory& ref,
                           const WeightSetup& ws, double inv_nxnpz,
                           std::vector<std::vector<double>>* cot) {
    const int n = ref.grid.n_x;
    double loss = 0.0;
    if (cot) {
        cot->assign(pred.size(), std::vector<double>(n, 0.0));
    }
    for (int i = 1; i <= ws.n_t; ++i) {
        std::span<const double> uref = ref.snapshot(i);
        const std::vector<double>& u = pred[i];
        const double wi = ws.w[i - 1];
        for (int j = 0; j < n; ++j) {
            const double d = u[j] - uref[j];
            loss += wi * inv_nxnpz * d * d;
            if (cot) (*cot)[i][j] = 2.0 * wi * inv_nxnpz * d;
        }
    }
    return loss;
}

BatchGrad grad_disc_then_opt(const ClosureModel& model,
                             std::span<const Trajectory* const> batch, const TrainConfig& cfg) {
    const WeightSetup ws = weight_setup(batch, cfg);
    const int n = model.grid().n_x;
    const double inv = 1.0 / (n * static_cast<double>(batch.size()) * ws.z);
    const int substeps = substeps_for(ws.dt_snap, cfg.solver.dt);

    BatchGrad bg;
    bg.grad.assign(model.param_count(), 0.0);
    std::vector<double> grad_u0(n);
    std::vector<std::vector<double>> cot;

    Etdrk4Coeffs coeffs;
    if (model.has_split())
        coeffs = etdrk4_coeffs(std::span<const double>(model.split().linear_eigenvalues),
                               ws.dt_snap / substeps);
    const ButcherTableau& tab =
        cfg.solver.method == Method::rk4 ? rk4_tableau() : tsit5_tableau();

    for (std::size_t p = 0; p < batch.size(); ++p) {
        const Trajectory& ref = *batch[p];
        std::span<const double> u0 = ref.snapshot(0);
        try {
            if (model.has_split()) {
                EtdUnrollResult fwd = unroll_etdrk4(model.split(), coeffs, u0, ws.n_t, substeps);
                bg.loss += loss_and_cotangents(fwd.snapshots, ref, ws, inv, &cot);
                unroll_etdrk4_backward(model.split(), coeffs, fwd, cot, grad_u0, bg.grad);
            } else {
                RkUnrollResult fwd =
                    unroll_rk(model.full_rhs(), tab, u0, ws.dt_snap, ws.n_t, substeps);
                bg.loss += loss_and_cotangents(fwd.snapshots, ref, ws, inv, &cot);
                unroll_rk_backward(model.full_rhs(), tab, fwd, cot, grad_u0, bg.grad);
            }
        } catch (const BlowUpError& e) {
            throw TrainStepError("forward unroll blew up on batch trajectory " +
                                 std::to_string(p) + ": " + e.what());
        }
    }
    return bg;
}

BatchGrad grad_opt_then_disc(const ClosureModel& model,
                             std::span<const Trajectory* const> batch, const TrainConfig& cfg) {
    const WeightSetup ws = weight_setup(batch, cfg);
    const int n = model.grid().n_x;
    const int np = model.param_count();
    const double inv = 1.0 / (n * static_cast<double>(batch.size()) * ws.z);

    BatchGrad bg;
    bg.grad.assign(np, 0.0);
    std::vector<std::vector<double>> cot;

    // augmented backward state: [sigma(n), z(np), s(1)]
    const int naug = n + np + 1;
    std::vector<double> u_interp(n);

    for (std::size_t p = 0; p < batch.size(); ++p) {
        const Trajectory& ref = *batch[p];
        std::span<const double> u0 = ref.snapshot(0);
        std::vector<double> save_times(ws.n_t + 1);
        for (int i = 0; i <= ws.n_t; ++i) save_times[i] = ref.time(i);
        const double T = save_times.back();

        SolveRecord fwd;
        try {
            fwd = model.has_split()
                      ? etdrk4_solve(model.split(), u0, ref.t0, save_times, cfg.solver.dt, true)
                      : solve(model.full_rhs(), u0, ref.t0, save_times, cfg.solver, true);
        } catch (const BlowUpError& e) {
            throw TrainStepError("forward solve blew up on batch trajectory " +
                                 std::to_string(p) + ": " + e.what());
        }
        bg.loss += loss_and_cotangents(fwd.snapshots, ref, ws, inv, &cot);

        const DenseRecord& dense = *fwd.dense;
        const OdeRhs& vjp_rhs = model.has_split()
                                    ? *model.split().nonlinear
                                    : model.full_rhs();
        CallableRhs aug(naug, [&](std::span<const double> y, std::span<double> out) {
            const double t = std::clamp(T - y[naug - 1], save_times.front(), T);
            dense.interpolate(t, u_interp);
            vjp_rhs.vjp_state(u_interp, y.subspan(0, n), out.subspan(0, n));
            std::fill(out.begin() + n, out.begin() + n + np, 0.0);
            if (np > 0) vjp_rhs.vjp_params(u_interp, y.subspan(0, n), out.subspan(n, np));
            out[naug - 1] = 1.0;
        });

        // eigenvalues cover only the sigma block; the appended parameter
        // and clock components carry a zero linear part
        SplitRhs aug_split;
        if (model.has_split()) {
            aug_split.linear_eigenvalues = model.split().linear_eigenvalues;
            aug_split.nonlinear = &aug;
        }

        std::vector<double> y(naug, 0.0);
        try {
            for (int i = ws.n_t; i >= 1; --i) {
                for (int j = 0; j < n; ++j) y[j] += cot[i][j];
                const double seg[2] = {T - save_times[i], T - save_times[i - 1]};
                SolveRecord back;
                if (model.has_split()) {
                    back = etdrk4_solve(aug_split, y, seg[0], seg, cfg.solver.dt);
                } else {
                    SolverConfig scfg = cfg.solver;
                    scfg.method = Method::tsit5_adaptive;
                    back = solve(aug, y, seg[0], seg, scfg);
                }
                y = std::move(back.snapshots.back());
            }
        } catch (const BlowUpError& e) {
            throw TrainStepError("adjoint solve blew up on batch trajectory " +
                                 std::to_string(p) + ": " + e.what());
        }
        for (int j = 0; j < np; ++j) bg.grad[j] += y[n + j];
    }
    return bg;
}

} // namespace

BatchGrad trajectory_gradient(const ClosureModel& model, Approach approach,
                              std::span<const Trajectory* const> batch, const TrainConfig& cfg) {
    switch (approach) {
        case Approach::disc_then_opt:
            return grad_disc_then_opt(model, batch, cfg);
        case Approach::opt_then_disc:
            return grad_opt_then_disc(model, batch, cfg);
        case Approach::derivative_fit:
            break;
    }
    throw std::invalid_argument("trajectory_gradient: not a trajectory-fitting approach");
}

double trajectory_loss(const ClosureModel& model, std::span<const Trajectory* const> batch,
                       const TrainConfig& cfg) {
    const WeightSetup ws = weight_setup(batch, cfg);
    const int n = model.grid().n_x;
    const double inv = 1.0 / (n * static_cast<double>(batch.size()) * ws.z);
    double loss = 0.0;
    for (const Trajectory* t : batch) {
        std::vector<double> save_times(ws.n_t + 1);
        for (int i = 0; i <= ws.n_t; ++i) save_times[i] = t->time(i);
        auto pred = model.rollout(t->snapshot(0), t->t0, save_times, cfg.solver);
        loss += loss_and_cotangents(pred, *t, ws, inv, nullptr);
    }
    return loss;
}

// ---------------------------------------------------------------------
// Optimiser

void adam_step(OptimState& optim, std::span<double> params, std::span<const double> grad,
               double learning_rate) {
    if (params.size() != grad.size() || optim.m.size() != params.size())
        throw std::invalid_argument("adam_step: shape mismatch");
    for (double g : grad)
        if (!std::isfinite(g)) throw TrainStepError("adam_step: non-finite gradient");
    constexpr double beta1 = 0.9, beta2 = 0.999, eps = 1e-8;
    ++optim.step;
    const double bc1 = 1.0 - std::pow(beta1, static_cast<double>(optim.step));
    const double bc2 = 1.0 - std::pow(beta2, static_cast<double>(optim.step));
    for (std::size_t i = 0; i < params.size(); ++i) {
        optim.m[i] = beta1 * optim.m[i] + (1.0 - beta1) * grad[i];
        optim.v[i] = beta2 * optim.v[i] + (1.0 - beta2) * grad[i] * grad[i];
        params[i] -= learning_rate * (optim.m[i] / bc1) / (std::sqrt(optim.v[i] / bc2) + eps);
    }
}

void clip_gradient(std::span<double> grad, double r) {
    double norm2 = 0.0;
    for (double g : grad) norm2 += g * g;
    const double norm = std::sqrt(norm2);
    if (norm > r && norm > 0.0) {
        const double scale = r / norm;
        for (double& g : grad) g *= scale;
    }
}

// ---------------------------------------------------------------------
// Trajectory splitting and the epoch loop

std::vector<Trajectory> split_trajectories(const std::vector<Trajectory>& trajectories, int n_t,
                                           bool* truncated) {
    if (n_t < 1) throw std::invalid_argument("split_trajectories: n_t must be >= 1");
    if (truncated) *truncated = false;
    std::vector<Trajectory> out;
    for (const Trajectory& t : trajectories) {
        const int k = (t.n_snapshots - 1) / n_t;
        if (k * n_t != t.n_snapshots - 1 && truncated) *truncated = true;
        for (int piece = 0; piece < k; ++piece) {
            Trajectory s;
            s.grid = t.grid;
            s.dt_snap = t.dt_snap;
            s.t0 = t.time(piece * n_t);
            s.n_snapshots = n_t + 1;
            const std::size_t off = static_cast<std::size_t>(piece) * n_t * t.grid.n_x;
            const std::size_t len = static_cast<std::size_t>(n_t + 1) * t.grid.n_x;
            s.states.assign(t.states.begin() + off, t.states.begin() + off + len);
            if (t.derivatives)
                s.derivatives.emplace(t.derivatives->begin() + off,
                                      t.derivatives->begin() + off + len);
            out.push_back(std::move(s));
        }
    }
    return out;
}

TrainResult train(CnnParams& params, int n_samples, const TrainConfig& cfg,
                  const BatchGradFn& batch_grad, const ValidationFn& validation,
                  std::ostream* log) {
    if (n_samples < 1) throw std::invalid_argument("train: no samples");
    if (cfg.batch_size < 1) throw std::invalid_argument("train: batch_size must be >= 1");

    TrainResult res;
    OptimState optim(params.theta.size());
    Rng rng(cfg.seed);
    std::vector<int> order(n_samples);
    std::iota(order.begin(), order.end(), 0);
    int consecutive_failures = 0;

    for (int epoch = 1; epoch <= cfg.epochs; ++epoch) {
        for (int i = n_samples - 1; i > 0; --i) {
            const int j = static_cast<int>(rng.uniform() * (i + 1));
            std::swap(order[i], order[std::min(j, i)]);
        }
        double loss_sum = 0.0;
        int n_batches = 0;
        for (int start = 0; start < n_samples; start += cfg.batch_size) {
            const int count = std::min(cfg.batch_size, n_samples - start);
            std::span<const int> idx(order.data() + start, static_cast<std::size_t>(count));
            try {
                BatchGrad bg = batch_grad(idx);
                if (cfg.clip_enabled) clip_gradient(bg.grad, cfg.clip_radius);
                adam_step(optim, params.theta, bg.grad, cfg.learning_rate);
                loss_sum += bg.loss;
                ++n_batches;
                consecutive_failures = 0;
            } catch (const TrainStepError& e) {
                ++res.failed_steps;
                if (log) *log << "step failure (epoch " << epoch << "): " << e.what() << "\n";
                if (++consecutive_failures > 10)
                    throw TrainStepError("training aborted after " +
                                         std::to_string(consecutive_failures) +
                                         " consecutive step failures; last: " + e.what());
            }
        }
        EpochRecord rec;
        rec.epoch = epoch;
        rec.train_loss = n_batches > 0 ? loss_sum / n_batches
                                       : std::numeric_limits<double>::quiet_NaN();
        if (validation &&
            (epoch % cfg.validation_interval == 0 || epoch == cfg.epochs)) {
            const double v = validation(params);
            rec.validation = v;
            if (!res.has_best || v < res.best_validation) {
                res.has_best = true;
                res.best_validation = v;
                res.best_params = params;
            }
        }
        res.history.push_back(rec);
    }
    if (!res.has_best) {
        res.best_params = params;
        res.best_validation = std::numeric_limits<double>::quiet_NaN();
    }
    return res;
}

TrainResult train_on_dataset(const Dataset& dataset, const CnnArchitecture& arch,
                             CnnParams& params, const TrainConfig& cfg, double nu,
                             std::ostream* log) {
    dataset.validate();
    const PeriodicGrid grid = dataset.trajectories.front().grid;
    TrainConfig local = cfg;
    if (dataset.equation == Equation::kuramoto_sivashinsky && local.weight_exponent != 0.0 &&
        local.lambda_max == 0.0)
        local.lambda_max = 0.093 - 0.57 / grid.length;

    const ClosureModel model(dataset.equation, grid, nu,
                             training_form(dataset.equation, cfg.approach), &arch, &params);

    std::vector<const Trajectory*> train_trajs, val_trajs;
    for (int i : dataset.indices_of(Split::train)) train_trajs.push_back(&dataset.trajectories[i]);
    for (int i : dataset.indices_of(Split::validation))
        val_trajs.push_back(&dataset.trajectories[i]);
    if (train_trajs.empty()) throw std::invalid_argument("train_on_dataset: empty training split");

    if (cfg.approach == Approach::derivative_fit) {
        std::vector<SnapshotRef> samples;
        for (const Trajectory* t : train_trajs)
            for (int i = 0; i < t->n_snapshots; ++i) samples.push_back({t, i});
        auto batch_fn = [&](std::span<const int> idx) {
            std::vector<SnapshotRef> batch;
            batch.reserve(idx.size());
            for (int i : idx) batch.push_back(samples[i]);
            return derivative_fit_gradient(model.full_rhs(), batch);
        };
        ValidationFn val_fn;
        if (!val_trajs.empty())
            val_fn = [&](const CnnParams&) {
                return loss_derivative_fit(model.full_rhs(), val_trajs).loss;
            };
        return train(params, static_cast<int>(samples.size()), local, batch_fn, val_fn, log);
    }

    // trajectory fitting: split sources into unroll-length pieces
    std::vector<Trajectory> train_src;
    for (const Trajectory* t : train_trajs) train_src.push_back(*t);
    bool truncated = false;
    std::vector<Trajectory> pieces = split_trajectories(train_src, local.n_t, &truncated);
    if (truncated && log)
        *log << "warning: unroll length " << local.n_t
             << " does not divide the snapshot count; trailing snapshots dropped\n";
    if (pieces.empty()) throw std::invalid_argument("train_on_dataset: trajectories shorter than n_t");

    std::vector<Trajectory> val_src;
    for (const Trajectory* t : val_trajs) val_src.push_back(*t);
    std::vector<Trajectory> val_pieces = split_trajectories(val_src, local.n_t);
    std::vector<const Trajectory*> val_batch;
    for (const Trajectory& t : val_pieces) val_batch.push_back(&t);

    auto batch_fn = [&](std::span<const int> idx) {
        std::vector<const Trajectory*> batch;
        batch.reserve(idx.size());
        for (int i : idx) batch.push_back(&pieces[i]);
        return trajectory_gradient(model, local.approach, batch, local);
    };
    ValidationFn val_fn;
    if (!val_batch.empty())
        val_fn = [&](const CnnParams&) { return trajectory_loss(model, val_batch, local); };
    return train(params, static_cast<int>(pieces.size()), local, batch_fn, val_fn, log);
}

void write_loss_history_csv(const std::string& path, const std::vector<EpochRecord>& history) {
    std::ofstream out(path);
    if (!out) throw std::runtime_error("cannot open " + path + " for writing");
    out << "epoch,train_loss,validation_metric\n";
    out.precision(17);
    for (const EpochRecord& r : history) {
        out << r.epoch << ',' << r.train_loss << ',';
        if (r.validation) out << *r.validation;
        out << '\n';
    }
}

} // namespace ncm
