#include "clab/quadratic.hpp"

#include <cmath>
#include <stdexcept>
#include <string>

#include "clab/rng.hpp"

namespace clab {

double QuadraticTaskSpec::loss(const Vec& theta) const {
    Vec d = vec::sub(theta, theta_star);
    Vec hd = dense::matvec(hessian, dim(), d);
    return offset + vec::dot(grad_at_min, d) + 0.5 * vec::dot(d, hd);
}

Vec QuadraticTaskSpec::grad(const Vec& theta) const {
    Vec d = vec::sub(theta, theta_star);
    Vec g = dense::matvec(hessian, dim(), d);
    vec::axpy(1.0, grad_at_min, g);
    return g;
}

Vec QuadraticTaskSpec::hess_vec(const Vec& v) const { return dense::matvec(hessian, dim(), v); }

void QuadraticTaskSpec::validate(bool expect_local_minimum) const {
    const std::size_t p = dim();
    if (grad_at_min.size() != p || hessian.size() != p * p)
        throw std::invalid_argument("QuadraticTaskSpec: inconsistent dimensions");
    double asym = dense::max_asymmetry(hessian, p);
    if (asym > 1e-12)
        throw std::invalid_argument("QuadraticTaskSpec: hessian asymmetry " +
                                    std::to_string(asym));
    auto eig = dense::sym_eigen(hessian, p);
    double scale = std::max(1.0, std::abs(eig.values.front()));
    if (eig.values.back() < -1e-10 * scale)
        throw std::invalid_argument("QuadraticTaskSpec: hessian has eigenvalue " +
                                    std::to_string(eig.values.back()));
    if (expect_local_minimum)
        for (double g : grad_at_min)
            if (g != 0.0)
                throw std::invalid_argument(
                    "QuadraticTaskSpec: local-minimum task with nonzero gradient");
}

QuadraticTaskSpec QuadraticTaskSpec::rebased_at(const Vec& theta) const {
    QuadraticTaskSpec out;
    out.theta_star = theta;
    out.grad_at_min = grad(theta);
    out.hessian = hessian;
    out.offset = loss(theta);
    return out;
}

std::vector<QuadraticTaskSpec> make_quadratic_sequence(std::size_t p, int T, int rank,
                                                       double spread, std::uint64_t seed) {
    if (rank < 0 || static_cast<std::size_t>(rank) > p)
        throw std::invalid_argument("make_quadratic_sequence: need 0 <= rank <= p");
    std::vector<QuadraticTaskSpec> specs;
    for (int t = 0; t < T; ++t) {
        Rng rng(mix_seed(seed, static_cast<std::uint64_t>(t)));
        std::vector<Vec> b(rank);
        for (int r = 0; r < rank; ++r) b[r] = rng.normal_vec(p);
        QuadraticTaskSpec spec;
        spec.hessian.assign(p * p, 0.0);
        for (std::size_t i = 0; i < p; ++i)
            for (std::size_t j = i; j < p; ++j) {
                double s = 0.0;
                for (int r = 0; r < rank; ++r) s += b[r][i] * b[r][j];
                spec.hessian[i * p + j] = s;
                spec.hessian[j * p + i] = s;
            }
        spec.theta_star = rng.normal_vec(p);
        vec::scal(spread, spec.theta_star);
        spec.grad_at_min.assign(p, 0.0);
        spec.offset = 0.0;
        spec.validate(true);
        specs.push_back(std::move(spec));
    }
    return specs;
}

namespace {

// Pseudo-inverse solve H x = -g restricted to the numerically nonzero
// spectrum.
Vec pinv_step(const dense::SymEigen& eig, const Vec& g) {
    const std::size_t p = g.size();
    double lmax = eig.values.empty() ? 0.0 : std::abs(eig.values.front());
    double cutoff = 1e-12 * std::max(lmax, 1.0);
    Vec step(p, 0.0);
    for (std::size_t i = 0; i < eig.values.size(); ++i) {
        if (std::abs(eig.values[i]) <= cutoff) continue;
        double coeff = -vec::dot(eig.vectors[i], g) / eig.values[i];
        vec::axpy(coeff, eig.vectors[i], step);
    }
    return step;
}

}  // namespace

Vec exact_minimize(const QuadraticTaskSpec& spec, const Vec& from) {
    vec::check_length(from, spec.dim(), "exact_minimize start");
    auto eig = dense::sym_eigen(spec.hessian, spec.dim());
    Vec step = pinv_step(eig, spec.grad(from));
    return vec::add(from, step);
}

Vec exact_minimize_in_subspace(const QuadraticTaskSpec& spec, const Vec& from,
                               const std::vector<Vec>& basis) {
    vec::check_length(from, spec.dim(), "exact_minimize start");
    if (basis.empty()) return from;
    const std::size_t m = basis.size();
    // Reduced problem: minimize over z of 1/2 z^T (N^T H N) z + (N^T g)^T z.
    std::vector<double> reduced(m * m, 0.0);
    std::vector<Vec> hn(m);
    for (std::size_t j = 0; j < m; ++j) hn[j] = spec.hess_vec(basis[j]);
    for (std::size_t i = 0; i < m; ++i)
        for (std::size_t j = i; j < m; ++j) {
            double v = vec::dot(basis[i], hn[j]);
            reduced[i * m + j] = v;
            reduced[j * m + i] = v;
        }
    Vec g = spec.grad(from);
    Vec gr(m);
    for (std::size_t i = 0; i < m; ++i) gr[i] = vec::dot(basis[i], g);
    auto eig = dense::sym_eigen(reduced, m);
    Vec z = pinv_step(eig, gr);
    Vec out = from;
    for (std::size_t i = 0; i < m; ++i) vec::axpy(z[i], basis[i], out);
    return out;
}

std::vector<Vec> null_basis(const dense::SymEigen& eig, double tol) {
    double lmax = eig.values.empty() ? 0.0 : std::abs(eig.values.front());
    double thr = tol * std::max(lmax, 0.0);
    std::vector<Vec> basis;
    for (std::size_t i = 0; i < eig.values.size(); ++i)
        if (eig.values[i] <= thr) basis.push_back(eig.vectors[i]);
    return basis;
}

}  // namespace clab
