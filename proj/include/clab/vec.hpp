#pragma once

#include <cmath>
#include <cstddef>
#include <stdexcept>
#include <string>
#include <vector>

namespace clab {

// Flattened parameter vector. Layout convention (fixed project-wide):
// per layer, weights row-major, then biases.
using Vec = std::vector<double>;

namespace vec {

inline double dot(const Vec& a, const Vec& b) {
    double s = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) s += a[i] * b[i];
    return s;
}

inline double nrm2(const Vec& a) { return std::sqrt(dot(a, a)); }

// y += alpha * x
inline void axpy(double alpha, const Vec& x, Vec& y) {
    for (std::size_t i = 0; i < x.size(); ++i) y[i] += alpha * x[i];
}

inline void scal(double alpha, Vec& x) {
    for (auto& v : x) v *= alpha;
}

inline Vec sub(const Vec& a, const Vec& b) {
    Vec r(a.size());
    for (std::size_t i = 0; i < a.size(); ++i) r[i] = a[i] - b[i];
    return r;
}

inline Vec add(const Vec& a, const Vec& b) {
    Vec r(a.size());
    for (std::size_t i = 0; i < a.size(); ++i) r[i] = a[i] + b[i];
    return r;
}

inline Vec scaled(const Vec& a, double alpha) {
    Vec r(a);
    scal(alpha, r);
    return r;
}

inline bool all_finite(const Vec& a) {
    for (double v : a)
        if (!std::isfinite(v)) return false;
    return true;
}

inline void check_length(const Vec& v, std::size_t expected, const char* what) {
    if (v.size() != expected)
        throw std::invalid_argument(std::string(what) + ": expected length " +
                                    std::to_string(expected) + ", got " +
                                    std::to_string(v.size()));
}

}  // namespace vec
}  // namespace clab
