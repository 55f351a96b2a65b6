#pragma once

#include <cstdint>
#include <functional>

#include "clab/vec.hpp"

namespace clab {

// Top eigenpairs of a symmetric operator. Eigenvalues sorted descending by
// algebraic value; eigenvectors unit norm and pairwise orthogonal.
struct EigenPairs {
    std::vector<double> eigenvalues;
    std::vector<Vec> eigenvectors;
    bool breakdown = false;  // invariant subspace exhausted before k pairs
};

using SymOp = std::function<Vec(const Vec&)>;

// Lanczos with full reorthogonalization and a seeded Gaussian start vector.
// The operator must be symmetric (caller's contract). Deterministic given
// the seed. On breakdown before k pairs converged, returns the pairs found
// in the invariant subspace with the breakdown flag set.
EigenPairs lanczos_topk(const SymOp& op, std::size_t p, int k, int max_iter, std::uint64_t seed);

}  // namespace clab
