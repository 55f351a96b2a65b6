#include "clab/lanczos.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <stdexcept>

#include "clab/rng.hpp"

namespace clab {

namespace {

// Implicit QL with shifts on a symmetric tridiagonal matrix (EISPACK tql2
// lineage). d holds the diagonal, e the subdiagonal (e[0..n-2]); zmat is the
// n x n eigenvector accumulator, row-major, initialized to identity. On
// return d holds eigenvalues and column i of zmat the matching eigenvector.
void tridiag_ql(std::vector<double>& d, std::vector<double>& e, std::vector<double>& zmat,
                int n) {
    if (n == 1) return;
    e.resize(n, 0.0);
    e[n - 1] = 0.0;
    for (int l = 0; l < n; ++l) {
        int iter = 0;
        int m;
        do {
            for (m = l; m < n - 1; ++m) {
                double dd = std::abs(d[m]) + std::abs(d[m + 1]);
                if (std::abs(e[m]) <= 2.22e-16 * dd || std::abs(e[m]) <= 1e-300) break;
            }
            if (m != l) {
                if (iter++ == 50) throw std::runtime_error("tridiagonal QL failed to converge");
                double g = (d[l + 1] - d[l]) / (2.0 * e[l]);
                double r = std::hypot(g, 1.0);
                g = d[m] - d[l] + e[l] / (g + (g >= 0.0 ? std::abs(r) : -std::abs(r)));
                double s = 1.0, c = 1.0, p = 0.0;
                int i = m - 1;
                bool underflow = false;
                for (; i >= l; --i) {
                    double f = s * e[i];
                    double b = c * e[i];
                    r = std::hypot(f, g);
                    e[i + 1] = r;
                    if (r == 0.0) {
                        d[i + 1] -= p;
                        e[m] = 0.0;
                        underflow = true;
                        break;
                    }
                    s = f / r;
                    c = g / r;
                    g = d[i + 1] - p;
                    r = (d[i] - g) * s + 2.0 * c * b;
                    p = s * r;
                    d[i + 1] = g + p;
                    g = c * r - b;
                    for (int k = 0; k < n; ++k) {
                        f = zmat[static_cast<std::size_t>(k) * n + i + 1];
                        zmat[static_cast<std::size_t>(k) * n + i + 1] =
                            s * zmat[static_cast<std::size_t>(k) * n + i] + c * f;
                        zmat[static_cast<std::size_t>(k) * n + i] =
                            c * zmat[static_cast<std::size_t>(k) * n + i] - s * f;
                    }
                }
                if (underflow && i >= l) continue;
                d[l] -= p;
                e[l] = g;
                e[m] = 0.0;
            }
        } while (m != l);
    }
}

}  // namespace

EigenPairs lanczos_topk(const SymOp& op, std::size_t p, int k, int max_iter,
                        std::uint64_t seed) {
    if (k < 1 || static_cast<std::size_t>(k) > p || k > max_iter)
        throw std::invalid_argument("lanczos_topk: need 1 <= k <= min(p, max_iter)");

    const int m_max = static_cast<int>(std::min<std::size_t>(p, max_iter));
    std::vector<Vec> basis;
    basis.reserve(m_max);
    std::vector<double> alpha, beta;

    Rng rng(seed);
    Vec v = rng.normal_vec(p);
    double nv = vec::nrm2(v);
    vec::scal(1.0 / nv, v);
    basis.push_back(v);

    bool breakdown = false;
    double scale = 1.0;
    for (int j = 0; j < m_max; ++j) {
        Vec w = op(basis[j]);
        vec::check_length(w, p, "lanczos operator result");
        double a = vec::dot(basis[j], w);
        alpha.push_back(a);
        scale = std::max(scale, std::abs(a));
        vec::axpy(-a, basis[j], w);
        if (j > 0) vec::axpy(-beta[j - 1], basis[j - 1], w);
        // Full reorthogonalization, two passes.
        for (int pass = 0; pass < 2; ++pass)
            for (const auto& q : basis) vec::axpy(-vec::dot(q, w), q, w);
        double b = vec::nrm2(w);
        if (b <= 1e-12 * scale || j + 1 == m_max) {
            if (b <= 1e-12 * scale && j + 1 < k) breakdown = true;
            break;
        }
        beta.push_back(b);
        vec::scal(1.0 / b, w);
        basis.push_back(std::move(w));
    }

    const int m = static_cast<int>(basis.size());
    std::vector<double> d = alpha;
    std::vector<double> e(m, 0.0);
    for (int i = 0; i + 1 < m; ++i) e[i] = beta[i];
    std::vector<double> zmat(static_cast<std::size_t>(m) * m, 0.0);
    for (int i = 0; i < m; ++i) zmat[static_cast<std::size_t>(i) * m + i] = 1.0;
    tridiag_ql(d, e, zmat, m);

    std::vector<int> order(m);
    std::iota(order.begin(), order.end(), 0);
    std::stable_sort(order.begin(), order.end(), [&](int x, int y) { return d[x] > d[y]; });

    EigenPairs out;
    out.breakdown = breakdown;
    const int take = std::min(k, m);
    for (int i = 0; i < take; ++i) {
        int col = order[i];
        out.eigenvalues.push_back(d[col]);
        Vec ritz(p, 0.0);
        for (int j = 0; j < m; ++j)
            vec::axpy(zmat[static_cast<std::size_t>(j) * m + col], basis[j], ritz);
        double nr = vec::nrm2(ritz);
        if (nr > 0.0) vec::scal(1.0 / nr, ritz);
        out.eigenvectors.push_back(std::move(ritz));
    }
    return out;
}

}  // namespace clab
