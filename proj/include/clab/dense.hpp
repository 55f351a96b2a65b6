#pragma once

#include <cstddef>
#include <vector>

#include "clab/vec.hpp"

namespace clab::dense {

// Small dense symmetric-matrix helpers for the explicit quadratic task
// machinery. Matrices are row-major n x n in a flat vector.

Vec matvec(const std::vector<double>& a, std::size_t n, const Vec& x);

struct SymEigen {
    std::vector<double> values;   // descending
    std::vector<Vec> vectors;     // unit columns matching values
};

// Full eigendecomposition by cyclic Jacobi rotations. Intended for n up to
// a few hundred.
SymEigen sym_eigen(const std::vector<double>& a, std::size_t n);

double max_asymmetry(const std::vector<double>& a, std::size_t n);

}  // namespace clab::dense
