#include "ncm/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <stdexcept>

#include "ncm/solvers.hpp"

namespace ncm {

namespace {

void check_shapes(const Trajectory& a, const Trajectory& b) {
    if (a.grid.n_x != b.grid.n_x || a.n_snapshots != b.n_snapshots)
        throw std::invalid_argument("trajectory shape mismatch");
}

} // namespace

double rmse(const Trajectory& pred, const Trajectory& ref, bool skip_initial) {
    check_shapes(pred, ref);
    const int first = skip_initial ? 1 : 0;
    if (ref.n_snapshots <= first) throw std::invalid_argument("rmse: no snapshots to compare");
    double sum = 0.0;
    std::size_t count = 0;
    for (int i = first; i < ref.n_snapshots; ++i) {
        std::span<const double> p = pred.snapshot(i);
        std::span<const double> r = ref.snapshot(i);
        for (int j = 0; j < ref.grid.n_x; ++j) {
            const double d = p[j] - r[j];
            sum += d * d;
        }
        count += ref.grid.n_x;
    }
    return std::sqrt(sum / static_cast<double>(count));
}

double rmse_pooled(std::span<const Trajectory* const> pred,
                   std::span<const Trajectory* const> ref, bool skip_initial) {
    if (pred.size() != ref.size() || pred.empty())
        throw std::invalid_argument("rmse_pooled: trajectory count mismatch");
    const int first = skip_initial ? 1 : 0;
    double sum = 0.0;
    std::size_t count = 0;
    for (std::size_t t = 0; t < pred.size(); ++t) {
        check_shapes(*pred[t], *ref[t]);
        for (int i = first; i < ref[t]->n_snapshots; ++i) {
            std::span<const double> p = pred[t]->snapshot(i);
            std::span<const double> r = ref[t]->snapshot(i);
            for (int j = 0; j < ref[t]->grid.n_x; ++j) {
                const double d = p[j] - r[j];
                sum += d * d;
            }
            count += ref[t]->grid.n_x;
        }
    }
    return std::sqrt(sum / static_cast<double>(count));
}

double vpt(const Trajectory& ref, const Trajectory& pred, double threshold) {
    check_shapes(pred, ref);
    const int n_t = ref.n_snapshots - 1;
    if (n_t < 1) throw std::invalid_argument("vpt: need at least two snapshots");
    double energy2 = 0.0;
    for (int i = 1; i <= n_t; ++i) {
        std::span<const double> r = ref.snapshot(i);
        for (double x : r) energy2 += x * x;
    }
    energy2 /= n_t;
    if (energy2 == 0.0) throw std::invalid_argument("vpt: reference trajectory has zero energy");
    const double limit2 = threshold * threshold * energy2;
    for (int i = 1; i <= n_t; ++i) {
        std::span<const double> r = ref.snapshot(i);
        std::span<const double> p = pred.snapshot(i);
        double err2 = 0.0;
        for (int j = 0; j < ref.grid.n_x; ++j) {
            const double d = p[j] - r[j];
            err2 += d * d;
        }
        if (err2 >= limit2) return ref.time(i) - ref.t0;
    }
    return ref.time(n_t) - ref.t0;
}

LyapunovInfo lyapunov(double length) {
    const double lambda = 0.093 - 0.57 / length;
    if (!(length > 0.0) || !(lambda > 0.0))
        throw std::domain_error("lyapunov: fit is non-positive for L = " +
                                std::to_string(length));
    return {lambda, 1.0 / lambda};
}

MetricsReport evaluate_trajectories(std::span<const Trajectory* const> pred,
                                    std::span<const Trajectory* const> ref, double lambda_max,
                                    double threshold) {
    if (pred.size() != ref.size() || pred.empty())
        throw std::invalid_argument("evaluate_trajectories: trajectory count mismatch");
    MetricsReport rep;
    for (std::size_t t = 0; t < pred.size(); ++t) {
        TrajectoryMetrics m;
        m.trajectory_id = static_cast<int>(t);
        m.rmse = rmse(*pred[t], *ref[t]);
        m.vpt_time = vpt(*ref[t], *pred[t], threshold);
        m.vpt_lyapunov = lambda_max * m.vpt_time;
        rep.per_trajectory.push_back(m);
    }
    auto summarise = [&](auto field, double& mn, double& avg, double& mx) {
        mn = mx = field(rep.per_trajectory[0]);
        double sum = 0.0;
        for (const TrajectoryMetrics& m : rep.per_trajectory) {
            const double v = field(m);
            mn = std::min(mn, v);
            mx = std::max(mx, v);
            sum += v;
        }
        avg = sum / static_cast<double>(rep.per_trajectory.size());
    };
    summarise([](const TrajectoryMetrics& m) { return m.rmse; }, rep.rmse_min, rep.rmse_avg,
              rep.rmse_max);
    summarise([](const TrajectoryMetrics& m) { return m.vpt_lyapunov; }, rep.vpt_min,
              rep.vpt_avg, rep.vpt_max);
    rep.rmse_pooled = rmse_pooled(pred, ref);
    return rep;
}

void write_metrics_csv(const std::string& path, const MetricsReport& report) {
    std::ofstream out(path);
    if (!out) throw std::runtime_error("cannot open " + path + " for writing");
    out.precision(17);
    out << "trajectory_id,rmse,vpt_time,vpt_lyapunov\n";
    for (const TrajectoryMetrics& m : report.per_trajectory)
        out << m.trajectory_id << ',' << m.rmse << ',' << m.vpt_time << ',' << m.vpt_lyapunov
            << '\n';
}

// ---------------------------------------------------------------------
// Error-growth envelopes

int BoundCheck::violations(double slack) const {
    int count = 0;
    for (std::size_t i = 0; i < observed.size(); ++i)
        if (observed[i] > envelope[i] + slack * (1.0 + envelope[i])) ++count;
    return count;
}

double BoundCheck::tightest_ratio() const {
    double ratio = 0.0;
    for (std::size_t i = 0; i < observed.size(); ++i)
        if (envelope[i] > 0.0) ratio = std::max(ratio, observed[i] / envelope[i]);
    return ratio;
}

BoundCheck check_discrete_bound(const StepMap& g, const std::vector<std::vector<double>>& u_ref,
                                double eps, double c) {
    if (u_ref.empty()) throw std::invalid_argument("check_discrete_bound: empty reference");
    BoundCheck bc;
    bc.epsilon = eps;
    bc.lipschitz = c;
    std::vector<double> u = u_ref[0];
    for (std::size_t k = 0; k < u_ref.size(); ++k) {
        double err2 = 0.0;
        for (std::size_t j = 0; j < u.size(); ++j) {
            const double d = u[j] - u_ref[k][j];
            err2 += d * d;
        }
        bc.ts.push_back(static_cast<double>(k));
        bc.observed.push_back(std::sqrt(err2));
        const double kk = static_cast<double>(k);
        bc.envelope.push_back(c == 1.0 ? eps * kk
                                       : eps * (std::pow(c, kk) - 1.0) / (c - 1.0));
        if (k + 1 < u_ref.size()) u = g(u);
    }
    return bc;
}

BoundCheck check_continuous_bound(const OdeRhs& g, const ReferencePath& u_ref, double eps,
                                  double c, double t_end, int n_check) {
    if (n_check < 1) throw std::invalid_argument("check_continuous_bound: n_check must be >= 1");
    BoundCheck bc;
    bc.epsilon = eps;
    bc.lipschitz = c;
    std::vector<double> save_times(n_check + 1);
    for (int i = 0; i <= n_check; ++i) save_times[i] = t_end * i / n_check;
    SolverConfig cfg;
    cfg.method = Method::tsit5_adaptive;
    cfg.abstol = 1e-12;
    cfg.reltol = 1e-12;
    const std::vector<double> u0 = u_ref(0.0);
    SolveRecord rec = solve(g, u0, 0.0, save_times, cfg);
    for (int i = 0; i <= n_check; ++i) {
        const std::vector<double> r = u_ref(save_times[i]);
        double err2 = 0.0;
        for (std::size_t j = 0; j < r.size(); ++j) {
            const double d = rec.snapshots[i][j] - r[j];
            err2 += d * d;
        }
        bc.ts.push_back(save_times[i]);
        bc.observed.push_back(std::sqrt(err2));
        bc.envelope.push_back(eps / c * (std::exp(c * save_times[i]) - 1.0));
    }
    return bc;
}

} // namespace ncm
