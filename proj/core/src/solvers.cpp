#include "ncm/solvers.hpp"

#include <algorithm>
#include <cmath>

#include "ncm/fft.hpp"

namespace ncm {

namespace {

bool all_finite(std::span<const double> v) {
    for (double x : v)
        if (!std::isfinite(x)) return false;
    return true;
}

void check_save_times(double t0, std::span<const double> save_times) {
    if (save_times.empty()) throw std::invalid_argument("solve: save_times is empty");
    if (std::abs(save_times[0] - t0) > 1e-12 * std::max(1.0, std::abs(t0)))
        throw std::invalid_argument("solve: save_times must start at t0");
    for (std::size_t i = 1; i < save_times.size(); ++i)
        if (!(save_times[i] > save_times[i - 1]))
            throw std::invalid_argument("solve: save_times must be strictly increasing");
}

} // namespace

void DenseRecord::interpolate(double t, std::span<double> out) const {
    if (ts.size() < 2) {
        std::copy(states[0].begin(), states[0].end(), out.begin());
        return;
    }
    auto it = std::upper_bound(ts.begin(), ts.end(), t);
    std::size_t hi = std::clamp<std::size_t>(static_cast<std::size_t>(it - ts.begin()), 1,
                                             ts.size() - 1);
    std::size_t lo = hi - 1;
    const double h = ts[hi] - ts[lo];
    const double s = std::clamp((t - ts[lo]) / h, 0.0, 1.0);
    const double s2 = s * s;
    const double s3 = s2 * s;
    const double h00 = 2.0 * s3 - 3.0 * s2 + 1.0;
    const double h10 = s3 - 2.0 * s2 + s;
    const double h01 = -2.0 * s3 + 3.0 * s2;
    const double h11 = s3 - s2;
    const auto& u0 = states[lo];
    const auto& u1 = states[hi];
    const auto& f0 = derivs[lo];
    const auto& f1 = derivs[hi];
    for (std::size_t i = 0; i < out.size(); ++i)
        out[i] = h00 * u0[i] + h10 * h * f0[i] + h01 * u1[i] + h11 * h * f1[i];
}

const ButcherTableau& rk4_tableau() {
    static const ButcherTableau tab{
        {0.0, 0.5, 0.5, 1.0},
        {{}, {0.5}, {0.0, 0.5}, {0.0, 0.0, 1.0}},
        {1.0 / 6.0, 1.0 / 3.0, 1.0 / 3.0, 1.0 / 6.0},
        {},
    };
    return tab;
}

const ButcherTableau& tsit5_tableau() {
    // Tsitouras (2011) 5(4) pair.
    static const ButcherTableau tab{
        {0.0, 0.161, 0.327, 0.9, 0.9800255409045097, 1.0, 1.0},
        {{},
         {0.161},
         {-0.008480655492356992, 0.3354806554923570},
         {2.897153057105495, -6.359448489975075, 4.362295432869581},
         {5.32586482843926, -11.74888356406283, 7.495539342889836, -0.09249506636175525},
         {5.86145544294642, -12.92096931784711, 8.159367898576159, -0.07158497328140100,
          -0.02826905039406838},
         {0.09646076681806523, 0.01, 0.4798896504144996, 1.379008574103742, -3.290069515436081,
          2.324710524099774}},
        {0.09646076681806523, 0.01, 0.4798896504144996, 1.379008574103742, -3.290069515436081,
         2.324710524099774, 0.0},
        {0.09824077787029123, 0.010816434459657, 0.4720087724042376, 1.5237195812770048,
         -3.872426680888636, 2.7827926300289607, -1.0 / 66.0},
    };
    return tab;
}

namespace {

// One explicit RK step u += dt * sum b_i k_i; stage states are written
// to stage_states when provided (for tapes). Returns the embedded error
// estimate when the tableau has one, else 0.
double rk_step(const OdeRhs& rhs, const ButcherTableau& tab, std::span<const double> u, double dt,
               std::span<double> u_next, std::vector<std::vector<double>>* stage_states,
               bool want_error) {
    const int n = rhs.dim();
    const int s = tab.stages();
    std::vector<std::vector<double>> k(s, std::vector<double>(n));
    std::vector<double> y(n);
    for (int i = 0; i < s; ++i) {
        for (int j = 0; j < n; ++j) {
            double acc = u[j];
            for (int l = 0; l < i; ++l) acc += dt * tab.a[i][l] * k[l][j];
            y[j] = acc;
        }
        if (stage_states) (*stage_states).push_back(y);
        rhs.eval(y, k[i]);
    }
    for (int j = 0; j < n; ++j) {
        double acc = u[j];
        for (int i = 0; i < s; ++i)
            if (tab.b[i] != 0.0) acc += dt * tab.b[i] * k[i][j];
        u_next[j] = acc;
    }
    if (!want_error || tab.b_embedded.empty()) return 0.0;
    double err = 0.0;
    for (int j = 0; j < n; ++j) {
        double e = 0.0;
        for (int i = 0; i < s; ++i) e += dt * (tab.b[i] - tab.b_embedded[i]) * k[i][j];
        err += e * e;
    }
    return std::sqrt(err / n);
}

SolveRecord solve_fixed(const OdeRhs& rhs, const ButcherTableau& tab,
                        std::span<const double> u0, double t0,
                        std::span<const double> save_times, double dt, long max_steps,
                        bool keep_dense) {
    const int n = rhs.dim();
    SolveRecord rec;
    rec.save_times.assign(save_times.begin(), save_times.end());
    rec.snapshots.push_back(std::vector<double>(u0.begin(), u0.end()));
    if (keep_dense) rec.dense.emplace();

    auto record_dense = [&](double t, const std::vector<double>& u) {
        if (!rec.dense) return;
        rec.dense->ts.push_back(t);
        rec.dense->states.push_back(u);
        std::vector<double> f(n);
        rhs.eval(u, f);
        rec.dense->derivs.push_back(std::move(f));
    };

    std::vector<double> u(u0.begin(), u0.end());
    record_dense(t0, u);
    long steps = 0;
    for (std::size_t si = 1; si < save_times.size(); ++si) {
        const double interval = save_times[si] - save_times[si - 1];
        const int nsub = std::max(1, static_cast<int>(std::llround(interval / dt)));
        const double h = interval / nsub;
        std::vector<double> u_next(n);
        for (int sub = 0; sub < nsub; ++sub) {
            if (++steps > max_steps) throw MaxStepsError("solve: max_steps exceeded");
            rk_step(rhs, tab, u, h, u_next, nullptr, false);
            u.swap(u_next);
            if (!all_finite(u))
                throw BlowUpError("solve: non-finite state at t = " +
                                  std::to_string(save_times[si - 1] + (sub + 1) * h));
            record_dense(save_times[si - 1] + (sub + 1) * h, u);
        }
        rec.snapshots.push_back(u);
    }
    return rec;
}

SolveRecord solve_adaptive(const OdeRhs& rhs, std::span<const double> u0, double t0,
                           std::span<const double> save_times, const SolverConfig& cfg,
                           bool keep_dense) {
    const ButcherTableau& tab = tsit5_tableau();
    const int n = rhs.dim();
    SolveRecord rec;
    rec.save_times.assign(save_times.begin(), save_times.end());
    rec.snapshots.push_back(std::vector<double>(u0.begin(), u0.end()));
    if (keep_dense) rec.dense.emplace();

    auto record_dense = [&](double t, const std::vector<double>& u) {
        if (!rec.dense) return;
        rec.dense->ts.push_back(t);
        rec.dense->states.push_back(u);
        std::vector<double> f(n);
        rhs.eval(u, f);
        rec.dense->derivs.push_back(std::move(f));
    };

    std::vector<double> u(u0.begin(), u0.end());
    record_dense(t0, u);
    double t = t0;
    double dt = (save_times.back() - t0) / 100.0;  // initial guess, controller adapts
    long steps = 0;
    std::vector<double> u_next(n);
    for (std::size_t si = 1; si < save_times.size(); ++si) {
        const double t_target = save_times[si];
        while (t < t_target - 1e-14 * std::max(1.0, std::abs(t_target))) {
            if (++steps > cfg.max_steps) throw MaxStepsError("solve: max_steps exceeded");
            bool clamped = false;
            double h = dt;
            if (t + h >= t_target) {
                h = t_target - t;
                clamped = true;
            }
            const double err = rk_step(rhs, tab, u, h, u_next, nullptr, true);
            double scale = cfg.abstol;
            for (int j = 0; j < n; ++j)
                scale = std::max(scale, cfg.reltol * std::max(std::abs(u[j]), std::abs(u_next[j])));
            const bool accepted = err <= scale || h < 1e-14 * std::max(1.0, std::abs(t));
            if (accepted) {
                t += h;
                u.swap(u_next);
                if (!all_finite(u))
                    throw BlowUpError("solve: non-finite state at t = " + std::to_string(t));
                record_dense(t, u);
            }
            const double ratio = err > 0.0 ? std::pow(scale / err, 0.2) : 5.0;
            const double grow = std::clamp(0.9 * ratio, 0.2, 5.0);
            // a step shortened only to land on a save time must not drag
            // dt down on acceptance; a rejection always shrinks it
            dt = (clamped && accepted) ? std::max(dt, h * grow) : h * grow;
        }
        t = t_target;
        rec.snapshots.push_back(u);
    }
    return rec;
}

} // namespace

SolveRecord solve(const OdeRhs& rhs, std::span<const double> u0, double t0,
                  std::span<const double> save_times, const SolverConfig& config,
                  bool keep_dense) {
    check_save_times(t0, save_times);
    if (static_cast<int>(u0.size()) != rhs.dim())
        throw std::invalid_argument("solve: initial state size mismatch");
    switch (config.method) {
        case Method::rk4:
            if (!(config.dt > 0.0)) throw std::invalid_argument("solve: rk4 requires dt > 0");
            return solve_fixed(rhs, rk4_tableau(), u0, t0, save_times, config.dt,
                               config.max_steps, keep_dense);
        case Method::tsit5_fixed:
            if (!(config.dt > 0.0)) throw std::invalid_argument("solve: tsit5_fixed requires dt > 0");
            return solve_fixed(rhs, tsit5_tableau(), u0, t0, save_times, config.dt,
                               config.max_steps, keep_dense);
        case Method::tsit5_adaptive:
            if (!(config.abstol > 0.0) || !(config.reltol > 0.0))
                throw std::invalid_argument("solve: adaptive tolerances must be positive");
            return solve_adaptive(rhs, u0, t0, save_times, config, keep_dense);
        case Method::etdrk4:
            throw std::invalid_argument("solve: etdrk4 requires a split RHS; use etdrk4_solve");
    }
    throw std::logic_error("solve: unknown method");
}

// ---------------------------------------------------------------------
// ETDRK4

namespace {

// Applies a Fourier-multiplier circulant (real multipliers, conjugate-
// symmetric) to the leading block of a real vector. Components past the
// multiplier length carry a zero eigenvalue and are scaled by `tail`,
// the coefficient's z = 0 value; this gives a block-diagonal operator
// for augmented states that append non-spatial components.
void apply_mult(const std::vector<std::complex<double>>& mult, double tail,
                std::span<const double> in, std::span<double> out) {
    const std::size_t n = mult.size();
    std::vector<std::complex<double>> hat = dft(in.subspan(0, n));
    for (std::size_t k = 0; k < n; ++k) hat[k] *= mult[k].real();
    std::vector<double> res = idft_real(hat);
    std::copy(res.begin(), res.end(), out.begin());
    for (std::size_t i = n; i < in.size(); ++i) out[i] = tail * in[i];
}

struct EtdWork {
    std::vector<double> nv, na, nb, nc, a, b, c, t1, t2;
    explicit EtdWork(int n)
        : nv(n), na(n), nb(n), nc(n), a(n), b(n), c(n), t1(n), t2(n) {}
};

void eval_nonlinear(const SplitRhs& rhs, std::span<const double> u, std::span<double> out) {
    if (rhs.nonlinear)
        rhs.nonlinear->eval(u, out);
    else
        std::fill(out.begin(), out.end(), 0.0);
}

// One Cox-Matthews ETDRK4 step in physical space; optionally exports the
// internal stage states for the tape.
void etd_step(const SplitRhs& rhs, const Etdrk4Coeffs& co, std::span<const double> v,
              std::span<double> v_next, EtdWork& w,
              std::array<std::vector<double>, 4>* tape_entry) {
    const int n = static_cast<int>(v.size());
    const double te = 1.0;         // z = 0 limits of the coefficients
    const double tq = co.h / 2.0;
    const double tf = co.h / 6.0;
    eval_nonlinear(rhs, v, w.nv);

    // a = E2 v + Q Nv
    apply_mult(co.e_half, te, v, w.t1);
    apply_mult(co.q, tq, w.nv, w.t2);
    for (int i = 0; i < n; ++i) w.a[i] = w.t1[i] + w.t2[i];
    eval_nonlinear(rhs, w.a, w.na);

    // b = E2 v + Q Na
    apply_mult(co.q, tq, w.na, w.t2);
    for (int i = 0; i < n; ++i) w.b[i] = w.t1[i] + w.t2[i];
    eval_nonlinear(rhs, w.b, w.nb);

    // c = E2 a + Q (2 Nb - Nv)
    apply_mult(co.e_half, te, w.a, w.t1);
    for (int i = 0; i < n; ++i) w.t2[i] = 2.0 * w.nb[i] - w.nv[i];
    apply_mult(co.q, tq, w.t2, w.c);
    for (int i = 0; i < n; ++i) w.c[i] += w.t1[i];
    eval_nonlinear(rhs, w.c, w.nc);

    // v' = E v + f1 Nv + 2 f2 (Na + Nb) + f3 Nc
    apply_mult(co.e_full, te, v, v_next);
    apply_mult(co.f1, tf, w.nv, w.t1);
    for (int i = 0; i < n; ++i) v_next[i] += w.t1[i];
    for (int i = 0; i < n; ++i) w.t2[i] = w.na[i] + w.nb[i];
    apply_mult(co.f2, tf, w.t2, w.t1);
    for (int i = 0; i < n; ++i) v_next[i] += 2.0 * w.t1[i];
    apply_mult(co.f3, tf, w.nc, w.t1);
    for (int i = 0; i < n; ++i) v_next[i] += w.t1[i];

    if (tape_entry) {
        (*tape_entry)[0].assign(v.begin(), v.end());
        (*tape_entry)[1] = w.a;
        (*tape_entry)[2] = w.b;
        (*tape_entry)[3] = w.c;
    }
}

} // namespace

std::vector<std::complex<double>> etdrk4_step_diag(
    const Etdrk4Coeffs& co, std::span<const std::complex<double>> v,
    const std::function<void(std::span<const std::complex<double>>, std::span<std::complex<double>>)>&
        nonlinear) {
    const int n = static_cast<int>(v.size());
    using cvec = std::vector<std::complex<double>>;
    auto N = [&](const cvec& x) {
        cvec out(n, 0.0);
        if (nonlinear) nonlinear(x, out);
        return out;
    };
    cvec vv(v.begin(), v.end());
    cvec nv = N(vv), a(n), b(n), c(n);
    for (int i = 0; i < n; ++i) a[i] = co.e_half[i] * vv[i] + co.q[i] * nv[i];
    cvec na = N(a);
    for (int i = 0; i < n; ++i) b[i] = co.e_half[i] * vv[i] + co.q[i] * na[i];
    cvec nb = N(b);
    for (int i = 0; i < n; ++i) c[i] = co.e_half[i] * a[i] + co.q[i] * (2.0 * nb[i] - nv[i]);
    cvec nc = N(c);
    cvec out(n);
    for (int i = 0; i < n; ++i)
        out[i] = co.e_full[i] * vv[i] + co.f1[i] * nv[i] + 2.0 * co.f2[i] * (na[i] + nb[i]) +
                 co.f3[i] * nc[i];
    return out;
}

SolveRecord etdrk4_solve(const SplitRhs& rhs, std::span<const double> u0, double t0,
                         std::span<const double> save_times, double dt, bool keep_dense) {
    check_save_times(t0, save_times);
    // states may append extra components past the eigenvalue block; those
    // carry a zero linear eigenvalue
    const int n = static_cast<int>(rhs.linear_eigenvalues.size());
    const int m = static_cast<int>(u0.size());
    if (m < n) throw std::invalid_argument("etdrk4_solve: initial state size mismatch");
    if (rhs.nonlinear && rhs.nonlinear->dim() != m)
        throw std::invalid_argument("etdrk4_solve: nonlinear part dimension mismatch");
    if (!(dt > 0.0)) throw std::invalid_argument("etdrk4_solve: dt must be positive");
    if (keep_dense && m != n)
        throw std::invalid_argument("etdrk4_solve: dense output needs a plain spatial state");

    SolveRecord rec;
    rec.save_times.assign(save_times.begin(), save_times.end());
    rec.snapshots.push_back(std::vector<double>(u0.begin(), u0.end()));
    if (keep_dense) rec.dense.emplace();

    auto full_rhs = [&](const std::vector<double>& u, std::vector<double>& out) {
        CirculantOperator lin(std::vector<double>(rhs.linear_eigenvalues));
        lin.apply(u, out);
        if (rhs.nonlinear) {
            std::vector<double> nl(m);
            rhs.nonlinear->eval(u, nl);
            for (int i = 0; i < m; ++i) out[i] += nl[i];
        }
    };
    auto record_dense = [&](double t, const std::vector<double>& u) {
        if (!rec.dense) return;
        rec.dense->ts.push_back(t);
        rec.dense->states.push_back(u);
        std::vector<double> f(n);
        full_rhs(u, f);
        rec.dense->derivs.push_back(std::move(f));
    };

    std::vector<double> u(u0.begin(), u0.end());
    record_dense(t0, u);
    EtdWork work(m);
    std::vector<double> u_next(m);
    Etdrk4Coeffs co;
    double co_dt = -1.0;
    for (std::size_t si = 1; si < save_times.size(); ++si) {
        const double interval = save_times[si] - save_times[si - 1];
        const int nsub = std::max(1, static_cast<int>(std::llround(interval / dt)));
        const double h = interval / nsub;
        if (std::abs(h - co_dt) > 1e-15) {
            co = etdrk4_coeffs(std::span<const double>(rhs.linear_eigenvalues), h);
            co_dt = h;
        }
        for (int sub = 0; sub < nsub; ++sub) {
            etd_step(rhs, co, u, u_next, work, nullptr);
            u.swap(u_next);
            if (!all_finite(u))
                throw BlowUpError("etdrk4_solve: non-finite state at t = " +
                                  std::to_string(save_times[si - 1] + (sub + 1) * h));
            record_dense(save_times[si - 1] + (sub + 1) * h, u);
        }
        rec.snapshots.push_back(u);
    }
    return rec;
}

// ---------------------------------------------------------------------
// Differentiable unrolls

RkUnrollResult unroll_rk(const OdeRhs& rhs, const ButcherTableau& tab, std::span<const double> u0,
                         double dt_snap, int n_t, int substeps) {
    if (n_t < 1) throw std::invalid_argument("unroll_rk: n_t must be >= 1");
    if (substeps < 1) throw std::invalid_argument("unroll_rk: substeps must be >= 1");
    const int n = rhs.dim();
    const double h = dt_snap / substeps;

    RkUnrollResult res;
    res.tape.substeps_per_snapshot = substeps;
    res.tape.dt = h;
    res.snapshots.push_back(std::vector<double>(u0.begin(), u0.end()));
    std::vector<double> u(u0.begin(), u0.end());
    std::vector<double> u_next(n);
    for (int step = 0; step < n_t; ++step) {
        for (int sub = 0; sub < substeps; ++sub) {
            std::vector<std::vector<double>> stages;
            stages.reserve(tab.stages() + 1);
            stages.push_back(u);
            rk_step(rhs, tab, u, h, u_next, &stages, false);
            res.tape.step_states.push_back(std::move(stages));
            u.swap(u_next);
            if (!all_finite(u))
                throw BlowUpError("unroll_rk: non-finite state at snapshot " +
                                  std::to_string(step + 1));
        }
        res.snapshots.push_back(u);
    }
    return res;
}

void unroll_rk_backward(const OdeRhs& rhs, const ButcherTableau& tab, const RkUnrollResult& fwd,
                        const std::vector<std::vector<double>>& snapshot_cotangents,
                        std::span<double> grad_u0, std::span<double> grad_params) {
    const int n = rhs.dim();
    const int s = tab.stages();
    const int substeps = fwd.tape.substeps_per_snapshot;
    const double h = fwd.tape.dt;
    const int n_t = static_cast<int>(fwd.snapshots.size()) - 1;
    if (static_cast<int>(snapshot_cotangents.size()) != n_t + 1)
        throw std::invalid_argument("unroll_rk_backward: need one cotangent per snapshot");

    std::vector<double> ubar(snapshot_cotangents[n_t]);
    std::vector<double> ybar(n), tmp(n);
    std::vector<std::vector<double>> kbar(s, std::vector<double>(n));

    int micro = static_cast<int>(fwd.tape.step_states.size()) - 1;
    for (int step = n_t - 1; step >= 0; --step) {
        for (int sub = substeps - 1; sub >= 0; --sub, --micro) {
            const auto& stages = fwd.tape.step_states[micro];  // [u_start, y_0..y_{s-1}]
            for (int i = 0; i < s; ++i)
                for (int j = 0; j < n; ++j) kbar[i][j] = h * tab.b[i] * ubar[j];
            for (int i = s - 1; i >= 0; --i) {
                const std::vector<double>& y = stages[i + 1];
                rhs.vjp_state(y, kbar[i], ybar);
                if (!grad_params.empty()) rhs.vjp_params(y, kbar[i], grad_params);
                for (int j = 0; j < n; ++j) ubar[j] += ybar[j];
                for (int l = 0; l < i; ++l) {
                    const double alh = tab.a[i][l] * h;
                    if (alh != 0.0)
                        for (int j = 0; j < n; ++j) kbar[l][j] += alh * ybar[j];
                }
            }
        }
        for (int j = 0; j < n; ++j) ubar[j] += snapshot_cotangents[step][j];
    }
    std::copy(ubar.begin(), ubar.end(), grad_u0.begin());
}

EtdUnrollResult unroll_etdrk4(const SplitRhs& rhs, const Etdrk4Coeffs& coeffs,
                              std::span<const double> u0, int n_t, int substeps) {
    if (n_t < 1) throw std::invalid_argument("unroll_etdrk4: n_t must be >= 1");
    const int n = static_cast<int>(rhs.linear_eigenvalues.size());
    if (static_cast<int>(u0.size()) != n)
        throw std::invalid_argument("unroll_etdrk4: initial state size mismatch");

    EtdUnrollResult res;
    res.tape.substeps_per_snapshot = substeps;
    res.snapshots.push_back(std::vector<double>(u0.begin(), u0.end()));
    std::vector<double> u(u0.begin(), u0.end());
    std::vector<double> u_next(n);
    EtdWork work(n);
    for (int step = 0; step < n_t; ++step) {
        for (int sub = 0; sub < substeps; ++sub) {
            res.tape.step_states.emplace_back();
            etd_step(rhs, coeffs, u, u_next, work, &res.tape.step_states.back());
            u.swap(u_next);
            if (!all_finite(u))
                throw BlowUpError("unroll_etdrk4: non-finite state at snapshot " +
                                  std::to_string(step + 1));
        }
        res.snapshots.push_back(u);
    }
    return res;
}

void unroll_etdrk4_backward(const SplitRhs& rhs, const Etdrk4Coeffs& co,
                            const EtdUnrollResult& fwd,
                            const std::vector<std::vector<double>>& snapshot_cotangents,
                            std::span<double> grad_u0, std::span<double> grad_params) {
    const int n = static_cast<int>(rhs.linear_eigenvalues.size());
    const int substeps = fwd.tape.substeps_per_snapshot;
    const int n_t = static_cast<int>(fwd.snapshots.size()) - 1;
    if (static_cast<int>(snapshot_cotangents.size()) != n_t + 1)
        throw std::invalid_argument("unroll_etdrk4_backward: need one cotangent per snapshot");

    auto vjp_n_state = [&](std::span<const double> u, std::span<const double> w,
                           std::span<double> out) {
        if (rhs.nonlinear)
            rhs.nonlinear->vjp_state(u, w, out);
        else
            std::fill(out.begin(), out.end(), 0.0);
    };
    auto vjp_n_params = [&](std::span<const double> u, std::span<const double> w) {
        if (rhs.nonlinear && !grad_params.empty()) rhs.nonlinear->vjp_params(u, w, grad_params);
    };

    std::vector<double> ubar(snapshot_cotangents[n_t]);
    std::vector<double> nvbar(n), nabar(n), nbbar(n), ncbar(n);
    std::vector<double> abar(n), bbar(n), cbar(n), t1(n), t2(n), vnew(n);

    int micro = static_cast<int>(fwd.tape.step_states.size()) - 1;
    for (int step = n_t - 1; step >= 0; --step) {
        for (int sub = substeps - 1; sub >= 0; --sub, --micro) {
            const auto& st = fwd.tape.step_states[micro];
            const std::vector<double>& v = st[0];
            const std::vector<double>& a = st[1];
            const std::vector<double>& b = st[2];
            const std::vector<double>& c = st[3];
            // All coefficient circulants have real symmetric multipliers,
            // hence are self-adjoint.
            const std::vector<double>& w = ubar;

            // contributions of v' = E v + f1 Nv + 2 f2 (Na+Nb) + f3 Nc
            apply_mult(co.f1, co.h / 6.0, w, nvbar);
            apply_mult(co.f2, co.h / 6.0, w, t1);
            for (int i = 0; i < n; ++i) nabar[i] = 2.0 * t1[i];
            nbbar = nabar;
            apply_mult(co.f3, co.h / 6.0, w, ncbar);
            apply_mult(co.e_full, 1.0, w, vnew);  // direct E^T w term of vbar

            // c = E2 a + Q (2 Nb - Nv); Nc = N(c)
            vjp_n_state(c, ncbar, cbar);
            vjp_n_params(c, ncbar);
            apply_mult(co.q, co.h / 2.0, cbar, t1);
            for (int i = 0; i < n; ++i) {
                nbbar[i] += 2.0 * t1[i];
                nvbar[i] -= t1[i];
            }
            apply_mult(co.e_half, 1.0, cbar, t2);  // -> abar (delayed)

            // b = E2 v + Q Na; Nb = N(b)
            vjp_n_state(b, nbbar, bbar);
            vjp_n_params(b, nbbar);
            apply_mult(co.q, co.h / 2.0, bbar, t1);
            for (int i = 0; i < n; ++i) nabar[i] += t1[i];

            // a = E2 v + Q Nv; Na = N(a)
            vjp_n_state(a, nabar, abar);
            vjp_n_params(a, nabar);
            for (int i = 0; i < n; ++i) abar[i] += t2[i];
            apply_mult(co.q, co.h / 2.0, abar, t1);
            for (int i = 0; i < n; ++i) nvbar[i] += t1[i];

            // v appears through E (already in vnew), both E2 paths, and Nv
            apply_mult(co.e_half, 1.0, bbar, t1);
            for (int i = 0; i < n; ++i) vnew[i] += t1[i];
            apply_mult(co.e_half, 1.0, abar, t1);
            for (int i = 0; i < n; ++i) vnew[i] += t1[i];
            vjp_n_state(v, nvbar, t1);
            vjp_n_params(v, nvbar);
            for (int i = 0; i < n; ++i) vnew[i] += t1[i];

            ubar = vnew;
        }
        for (int i = 0; i < n; ++i) ubar[i] += snapshot_cotangents[step][i];
    }
    std::copy(ubar.begin(), ubar.end(), grad_u0.begin());
}

} // namespace ncm
