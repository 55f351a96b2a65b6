#pragma once

#include <cstdint>
#include <functional>
#include <vector>

#include "clab/lanczos.hpp"
#include "clab/mlp.hpp"
#include "clab/quadratic.hpp"
#include "clab/runlog.hpp"
#include "clab/tasks.hpp"

namespace clab {

// Forgetting metrics derived from a run's accuracy/loss matrices.
// E_o(theta_t) = L_o(theta_t) - L_o(theta_o)        (loss based, lower better)
// Eacc_o(theta_t) = ACC_o(theta_o) - ACC_o(theta_t) (accuracy based)
// Matrices are indexed [checkpoint t][task o-1] and defined for t >= o.
struct ForgettingReport {
    std::vector<std::vector<double>> loss_forgetting;
    std::vector<std::vector<double>> acc_forgetting;
    std::vector<double> average_forgetting;      // E(t)  over o <= t, t = 1..T
    std::vector<double> average_acc_forgetting;  // Eacc(t)
    std::vector<double> average_accuracy;        // ACC(t)
};

ForgettingReport compute_forgetting(const RunLog& log);

// Exact quadratic forgetting of one task at theta_t, expanded around the
// task's anchor: (theta_t - anchor)^T g + 1/2 (theta_t - anchor)^T H (...).
double quad_forget_direct(const Vec& theta_t, const QuadraticTaskSpec& spec);

// A sequence of quadratic tasks with the achieved solutions; specs[o] must
// be anchored at thetas[o] (use QuadraticTaskSpec::rebased_at).
struct QuadHistory {
    std::vector<QuadraticTaskSpec> specs;
    std::vector<Vec> thetas;  // theta_1..theta_T

    void validate() const;
    Vec delta(int t) const;  // theta_t - theta_{t-1}, t >= 2
    // Cross term v = sum_{o <= t-2} H_o (theta_{t-1} - theta_o).
    Vec cross_term_v(int t) const;
};

// Average forgetting E(t) via the recursion
//   E(t) = (t-1)/t E(t-1) + 1/t Delta^T sum grad + 1/(2t) Delta^T sum H Delta
//          + 1/t v^T Delta,   E(1) = 0.
double quad_forget_recursive(const QuadHistory& history, int t);

// Average forgetting E(t) as (1/t) sum_{o<t} quad_forget_direct.
double quad_forget_average_direct(const QuadHistory& history, int t);

// 1/2 Delta^T Hbar Delta for the averaged Hessian operator.
double predicted_quadratic_forgetting(const Vec& delta_t, const SymOp& avg_hessian_apply);

// Count of eigenvalues strictly above threshold * lambda_max (negatives
// clamped to zero with a stderr warning).
int effective_rank(const std::vector<double>& eigenvalues_desc, double threshold);

struct PerturbationSample {
    double score = 0.0;     // mean over draws of |num / den|
    double std_error = 0.0; // empirical standard error of that mean
    int n_used = 0;
    int n_skipped = 0;
    double loss_at_radius = 0.0;  // loss at theta* + r v
};

// Perturbation score s(r): loss change along direction v at radius r,
// normalized by the mean loss change along random unit Gaussian directions.
// Near-zero denominators are resampled up to 8 times, then the draw is
// skipped; an error is raised if every draw is skipped.
PerturbationSample perturbation_score_fn(const std::function<double(const Vec&)>& loss_fn,
                                         const Vec& theta_star, const Vec& v, double r,
                                         int n_random, std::uint64_t seed);

// Task wrapper: the loss is the task's train loss through the model.
PerturbationSample perturbation_score(const MlpModel& model, const Vec& theta_star,
                                      const TaskDataset& task, const Vec& v, double r,
                                      int n_random, std::uint64_t seed);

// 25 log-spaced radii spanning [1e-3, 1e6].
std::vector<double> default_radius_grid();

struct DistanceSeries {
    std::vector<double> from_init;       // ||theta_t - theta_0|| per task
    std::vector<double> per_task_delta;  // ||theta_t - theta_{t-1}||
};

DistanceSeries param_distance(const RunLog& log);

}  // namespace clab
