#pragma once

#include <cstdint>
#include <vector>

#include "clab/dense.hpp"
#include "clab/lanczos.hpp"
#include "clab/vec.hpp"

namespace clab {

// An explicit quadratic task around an anchor point:
//   L(theta) = offset + g^T (theta - anchor) + 1/2 (theta - anchor)^T H (theta - anchor)
// For tasks anchored at a local minimum, grad_at_min is zero and H is PSD.
struct QuadraticTaskSpec {
    Vec theta_star;
    Vec grad_at_min;
    std::vector<double> hessian;  // p x p row-major, symmetric
    double offset = 0.0;

    std::size_t dim() const { return theta_star.size(); }
    double loss(const Vec& theta) const;
    Vec grad(const Vec& theta) const;
    Vec hess_vec(const Vec& v) const;

    // Symmetry to 1e-12, eigenvalues >= -1e-10, and if expect_local_minimum
    // the gradient must be zero.
    void validate(bool expect_local_minimum) const;

    // Same quadratic re-anchored at a different point (exact rewrite).
    QuadraticTaskSpec rebased_at(const Vec& theta) const;
};

// T random PSD quadratic tasks: H_o = B_o B_o^T with a seeded p x rank
// Gaussian factor B_o; minimizers drawn Gaussian and scaled by `spread`
// (spread controls the pairwise distances, i.e. the locality regime).
std::vector<QuadraticTaskSpec> make_quadratic_sequence(std::size_t p, int T, int rank,
                                                       double spread, std::uint64_t seed);

// Exact unconstrained minimizer reached from `from` by the minimum-norm step
// (pseudo-inverse of H on the gradient).
Vec exact_minimize(const QuadraticTaskSpec& spec, const Vec& from);

// Exact minimizer over the affine subspace from + span(basis).
Vec exact_minimize_in_subspace(const QuadraticTaskSpec& spec, const Vec& from,
                               const std::vector<Vec>& basis);

// Basis of the (numerical) null space: eigenvectors with eigenvalue
// <= tol * lambda_max.
std::vector<Vec> null_basis(const dense::SymEigen& eig, double tol);

}  // namespace clab
