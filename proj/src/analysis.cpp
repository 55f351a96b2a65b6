#include "clab/analysis.hpp"

#include <cmath>
#include <iostream>
#include <stdexcept>
#include <string>

#include "clab/rng.hpp"

namespace clab {

ForgettingReport compute_forgetting(const RunLog& log) {
    const int T = log.T;
    if (static_cast<int>(log.loss.size()) != T + 1 ||
        static_cast<int>(log.acc.size()) != T + 1)
        throw std::invalid_argument("compute_forgetting: expected " + std::to_string(T + 1) +
                                    " checkpoint rows");
    for (int t = 0; t <= T; ++t)
        for (int o = 1; o <= T; ++o) {
            if (static_cast<int>(log.loss[t].size()) < T ||
                static_cast<int>(log.acc[t].size()) < T ||
                !std::isfinite(log.loss[t][o - 1]) || !std::isfinite(log.acc[t][o - 1]))
                throw std::invalid_argument("compute_forgetting: missing checkpoint (o=" +
                                            std::to_string(o) + ", t=" + std::to_string(t) +
                                            ")");
        }

    ForgettingReport r;
    r.loss_forgetting.assign(T + 1, std::vector<double>(T, 0.0));
    r.acc_forgetting.assign(T + 1, std::vector<double>(T, 0.0));
    for (int t = 0; t <= T; ++t)
        for (int o = 1; o <= std::min(t, T); ++o) {
            r.loss_forgetting[t][o - 1] = log.loss[t][o - 1] - log.loss[o][o - 1];
            r.acc_forgetting[t][o - 1] = log.acc[o][o - 1] - log.acc[t][o - 1];
        }
    for (int t = 1; t <= T; ++t) {
        double e = 0.0, ea = 0.0, acc = 0.0;
        for (int o = 1; o <= t; ++o) {
            e += r.loss_forgetting[t][o - 1];
            ea += r.acc_forgetting[t][o - 1];
            acc += log.acc[t][o - 1];
        }
        r.average_forgetting.push_back(e / t);
        r.average_acc_forgetting.push_back(ea / t);
        r.average_accuracy.push_back(acc / t);
    }
    return r;
}

double quad_forget_direct(const Vec& theta_t, const QuadraticTaskSpec& spec) {
    vec::check_length(theta_t, spec.dim(), "quad_forget_direct theta");
    Vec d = vec::sub(theta_t, spec.theta_star);
    Vec hd = spec.hess_vec(d);
    return vec::dot(d, spec.grad_at_min) + 0.5 * vec::dot(d, hd);
}

void QuadHistory::validate() const {
    if (specs.size() != thetas.size())
        throw std::invalid_argument("QuadHistory: specs/thetas length mismatch");
    for (std::size_t o = 0; o < specs.size(); ++o) {
        Vec diff = vec::sub(specs[o].theta_star, thetas[o]);
        if (vec::nrm2(diff) > 1e-12 * (1.0 + vec::nrm2(thetas[o])))
            throw std::invalid_argument("QuadHistory: spec " + std::to_string(o + 1) +
                                        " is not anchored at its achieved solution");
    }
}

Vec QuadHistory::delta(int t) const {
    if (t < 2 || t > static_cast<int>(thetas.size()))
        throw std::invalid_argument("QuadHistory::delta: t out of range");
    return vec::sub(thetas[t - 1], thetas[t - 2]);
}

Vec QuadHistory::cross_term_v(int t) const {
    const std::size_t p = thetas.front().size();
    Vec v(p, 0.0);
    for (int o = 1; o <= t - 2; ++o) {
        Vec d = vec::sub(thetas[t - 2], thetas[o - 1]);
        vec::axpy(1.0, specs[o - 1].hess_vec(d), v);
    }
    return v;
}

double quad_forget_recursive(const QuadHistory& history, int t) {
    if (t < 1 || t > static_cast<int>(history.thetas.size()))
        throw std::invalid_argument("quad_forget_recursive: history incomplete for t=" +
                                    std::to_string(t));
    double e = 0.0;  // E(1) = 0
    for (int tau = 2; tau <= t; ++tau) {
        Vec d = history.delta(tau);
        Vec sum_grad(d.size(), 0.0);
        Vec sum_hd(d.size(), 0.0);
        for (int o = 1; o <= tau - 1; ++o) {
            vec::axpy(1.0, history.specs[o - 1].grad_at_min, sum_grad);
            vec::axpy(1.0, history.specs[o - 1].hess_vec(d), sum_hd);
        }
        Vec v = history.cross_term_v(tau);
        double inv = 1.0 / static_cast<double>(tau);
        e = (tau - 1) * inv * e + inv * vec::dot(d, sum_grad) +
            0.5 * inv * vec::dot(d, sum_hd) + inv * vec::dot(v, d);
    }
    return e;
}

double quad_forget_average_direct(const QuadHistory& history, int t) {
    if (t < 1 || t > static_cast<int>(history.thetas.size()))
        throw std::invalid_argument("quad_forget_average_direct: t out of range");
    double sum = 0.0;
    for (int o = 1; o <= t - 1; ++o)
        sum += quad_forget_direct(history.thetas[t - 1], history.specs[o - 1]);
    return sum / static_cast<double>(t);
}

double predicted_quadratic_forgetting(const Vec& delta_t, const SymOp& avg_hessian_apply) {
    Vec hd = avg_hessian_apply(delta_t);
    return 0.5 * vec::dot(delta_t, hd);
}

int effective_rank(const std::vector<double>& eigenvalues_desc, double threshold) {
    if (eigenvalues_desc.empty())
        throw std::invalid_argument("effective_rank: empty eigenvalue list");
    std::vector<double> ev = eigenvalues_desc;
    bool warned = false;
    for (auto& v : ev)
        if (v < 0.0) {
            if (!warned)
                std::cerr << "effective_rank: clamping negative eigenvalue " << v << " to 0\n";
            warned = true;
            v = 0.0;
        }
    double lmax = ev.front();
    double thr = threshold * lmax;
    int count = 0;
    for (double v : ev)
        if (v > thr) ++count;
    return count;
}

PerturbationSample perturbation_score_fn(const std::function<double(const Vec&)>& loss_fn,
                                         const Vec& theta_star, const Vec& v, double r,
                                         int n_random, std::uint64_t seed) {
    if (!(r > 0.0)) throw std::invalid_argument("perturbation_score: r must be > 0");
    if (std::abs(vec::nrm2(v) - 1.0) > 1e-10)
        throw std::invalid_argument("perturbation_score: direction must be unit norm");

    const double l_star = loss_fn(theta_star);
    Vec probe = theta_star;
    vec::axpy(r, v, probe);
    const double l_dir = loss_fn(probe);
    const double num = std::abs(l_dir - l_star);
    const double den_floor = 1e-12 * std::abs(l_star) + 1e-300;

    Rng rng(seed);
    PerturbationSample out;
    out.loss_at_radius = l_dir;
    double sum = 0.0, sum_sq = 0.0;
    for (int draw = 0; draw < n_random; ++draw) {
        bool ok = false;
        for (int attempt = 0; attempt < 8 && !ok; ++attempt) {
            Vec mu = rng.normal_vec(theta_star.size());
            vec::scal(1.0 / vec::nrm2(mu), mu);
            Vec pt = theta_star;
            vec::axpy(r, mu, pt);
            double den = loss_fn(pt) - l_star;
            if (std::abs(den) < den_floor) continue;
            double ratio = std::abs(num / den);
            sum += ratio;
            sum_sq += ratio * ratio;
            ok = true;
        }
        if (!ok) ++out.n_skipped;
    }
    out.n_used = n_random - out.n_skipped;
    if (out.n_used == 0)
        throw std::runtime_error("perturbation_score: all random draws degenerate at r=" +
                                 std::to_string(r));
    out.score = sum / out.n_used;
    if (out.n_used > 1) {
        double var = (sum_sq - sum * sum / out.n_used) / (out.n_used - 1);
        out.std_error = std::sqrt(std::max(var, 0.0) / out.n_used);
    }
    return out;
}

PerturbationSample perturbation_score(const MlpModel& model, const Vec& theta_star,
                                      const TaskDataset& task, const Vec& v, double r,
                                      int n_random, std::uint64_t seed) {
    auto loss_fn = [&](const Vec& theta) { return evaluate(model, theta, task.train).loss; };
    return perturbation_score_fn(loss_fn, theta_star, v, r, n_random, seed);
}

std::vector<double> default_radius_grid() {
    std::vector<double> radii;
    const double lo = std::log10(1e-3), hi = std::log10(1e6);
    for (int i = 0; i < 25; ++i)
        radii.push_back(std::pow(10.0, lo + (hi - lo) * i / 24.0));
    return radii;
}

DistanceSeries param_distance(const RunLog& log) {
    if (log.checkpoints.empty())
        throw std::invalid_argument("param_distance: missing initialization checkpoint");
    DistanceSeries out;
    for (std::size_t t = 1; t < log.checkpoints.size(); ++t) {
        out.from_init.push_back(vec::nrm2(vec::sub(log.checkpoints[t], log.checkpoints[0])));
        out.per_task_delta.push_back(
            vec::nrm2(vec::sub(log.checkpoints[t], log.checkpoints[t - 1])));
    }
    return out;
}

}  // namespace clab
