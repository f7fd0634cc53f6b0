#pragma once

#include <functional>
#include <span>
#include <string>
#include <vector>

#include "ncm/grid.hpp"
#include "ncm/rhs.hpp"

namespace ncm {

struct TrajectoryMetrics {
    int trajectory_id = 0;
    double rmse = 0.0;
    double vpt_time = 0.0;      // absolute time units
    double vpt_lyapunov = 0.0;  // vpt_time * lambda_max
};

struct MetricsReport {
    std::vector<TrajectoryMetrics> per_trajectory;
    double rmse_min = 0.0, rmse_avg = 0.0, rmse_max = 0.0;
    double vpt_min = 0.0, vpt_avg = 0.0, vpt_max = 0.0;  // Lyapunov units
    double rmse_pooled = 0.0;  // single RMSE over all trajectories
};

/// Root-mean-square error over all cells and snapshots; skip_initial
/// excludes the t0 snapshot from the mean.
double rmse(const Trajectory& pred, const Trajectory& ref, bool skip_initial = true);

/// Pooled RMSE over several predicted/reference trajectory pairs.
double rmse_pooled(std::span<const Trajectory* const> pred,
                   std::span<const Trajectory* const> ref, bool skip_initial = true);

/// Valid prediction time: the first snapshot time at which the
/// Euclidean error reaches threshold times the reference trajectory's
/// average energy sqrt((1/N_t) sum_i ||u_ref(t_i)||^2) (i >= 1); the
/// horizon time if the threshold is never reached.
double vpt(const Trajectory& ref, const Trajectory& pred, double threshold = 0.4);

struct LyapunovInfo {
    double lambda_max = 0.0;
    double t_lyap = 0.0;  // 1 / lambda_max
};

/// Edson's fit lambda_max(L) = 0.093 - 0.57/L for the KS equation;
/// throws std::domain_error when the fit is non-positive.
LyapunovInfo lyapunov(double length);

/// Per-trajectory metrics plus min/avg/max summaries. lambda_max scales
/// VPT into Lyapunov units; pass 0 to leave vpt_lyapunov at 0.
MetricsReport evaluate_trajectories(std::span<const Trajectory* const> pred,
                                    std::span<const Trajectory* const> ref, double lambda_max,
                                    double threshold = 0.4);

void write_metrics_csv(const std::string& path, const MetricsReport& report);

// ---------------------------------------------------------------------
// Error-growth envelopes

struct BoundCheck {
    double epsilon = 0.0;
    double lipschitz = 0.0;
    std::vector<double> ts;        // step index or time
    std::vector<double> observed;  // ||u - u_ref||
    std::vector<double> envelope;  // theoretical bound

    int violations(double slack = 1e-9) const;
    double tightest_ratio() const;  // max observed/envelope over positive envelopes
};

using StepMap = std::function<std::vector<double>(const std::vector<double>&)>;

/// Iterates u_{k+1} = G(u_k) from u_ref[0] and compares the per-step
/// error to eps*(C^k - 1)/(C - 1), or eps*k when C = 1.
BoundCheck check_discrete_bound(const StepMap& g, const std::vector<std::vector<double>>& u_ref,
                                double eps, double c);

using ReferencePath = std::function<std::vector<double>(double)>;

/// Solves du/dt = g(u) from u_ref(0) at tight tolerance and compares
/// ||u(t) - u_ref(t)|| to (eps/C)(e^{Ct} - 1) at n_check sample times.
BoundCheck check_continuous_bound(const OdeRhs& g, const ReferencePath& u_ref, double eps,
                                  double c, double t_end, int n_check = 50);

} // namespace ncm
