#include "clab/dense.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <stdexcept>

namespace clab::dense {

Vec matvec(const std::vector<double>& a, std::size_t n, const Vec& x) {
    vec::check_length(x, n, "matvec input");
    Vec y(n, 0.0);
    for (std::size_t i = 0; i < n; ++i) {
        double s = 0.0;
        const double* row = a.data() + i * n;
        for (std::size_t j = 0; j < n; ++j) s += row[j] * x[j];
        y[i] = s;
    }
    return y;
}

double max_asymmetry(const std::vector<double>& a, std::size_t n) {
    double worst = 0.0;
    for (std::size_t i = 0; i < n; ++i)
        for (std::size_t j = i + 1; j < n; ++j)
            worst = std::max(worst, std::abs(a[i * n + j] - a[j * n + i]));
    return worst;
}

SymEigen sym_eigen(const std::vector<double>& a_in, std::size_t n) {
    if (a_in.size() != n * n) throw std::invalid_argument("sym_eigen: bad matrix size");
    std::vector<double> a = a_in;
    std::vector<double> v(n * n, 0.0);
    for (std::size_t i = 0; i < n; ++i) v[i * n + i] = 1.0;

    auto off_norm = [&]() {
        double s = 0.0;
        for (std::size_t i = 0; i < n; ++i)
            for (std::size_t j = i + 1; j < n; ++j) s += a[i * n + j] * a[i * n + j];
        return std::sqrt(2.0 * s);
    };
    double fro = 0.0;
    for (double x : a) fro += x * x;
    fro = std::sqrt(fro);
    const double tol = std::max(1e-300, 1e-15 * fro);

    for (int sweep = 0; sweep < 100 && off_norm() > tol; ++sweep) {
        for (std::size_t p = 0; p < n; ++p) {
            for (std::size_t q = p + 1; q < n; ++q) {
                double apq = a[p * n + q];
                if (std::abs(apq) <= 1e-300) continue;
                double app = a[p * n + p], aqq = a[q * n + q];
                double theta = (aqq - app) / (2.0 * apq);
                double t = (theta >= 0.0 ? 1.0 : -1.0) /
                           (std::abs(theta) + std::sqrt(theta * theta + 1.0));
                double c = 1.0 / std::sqrt(t * t + 1.0);
                double s = t * c;
                for (std::size_t k = 0; k < n; ++k) {
                    double akp = a[k * n + p], akq = a[k * n + q];
                    a[k * n + p] = c * akp - s * akq;
                    a[k * n + q] = s * akp + c * akq;
                }
                for (std::size_t k = 0; k < n; ++k) {
                    double apk = a[p * n + k], aqk = a[q * n + k];
                    a[p * n + k] = c * apk - s * aqk;
                    a[q * n + k] = s * apk + c * aqk;
                }
                for (std::size_t k = 0; k < n; ++k) {
                    double vkp = v[k * n + p], vkq = v[k * n + q];
                    v[k * n + p] = c * vkp - s * vkq;
                    v[k * n + q] = s * vkp + c * vkq;
                }
            }
        }
    }

    std::vector<int> order(n);
    std::iota(order.begin(), order.end(), 0);
    std::stable_sort(order.begin(), order.end(),
                     [&](int x, int y) { return a[static_cast<std::size_t>(x) * n + x] >
                                                a[static_cast<std::size_t>(y) * n + y]; });

    SymEigen out;
    out.values.reserve(n);
    out.vectors.reserve(n);
    for (std::size_t i = 0; i < n; ++i) {
        std::size_t col = static_cast<std::size_t>(order[i]);
        out.values.push_back(a[col * n + col]);
        Vec ev(n);
        for (std::size_t k = 0; k < n; ++k) ev[k] = v[k * n + col];
        double nv = vec::nrm2(ev);
        if (nv > 0.0) vec::scal(1.0 / nv, ev);
        out.vectors.push_back(std::move(ev));
    }
    return out;
}

}  // namespace clab::dense
