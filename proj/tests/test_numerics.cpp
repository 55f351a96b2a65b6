#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>

#include "clab/dense.hpp"
#include "clab/lanczos.hpp"
#include "clab/mlp.hpp"
#include "clab/rng.hpp"
#include "oracles.hpp"

using namespace clab;

namespace {

MlpModel small_tanh_ce() {
    MlpModel m;
    m.layer_sizes = {3, 6, 4};
    m.activation = Activation::tanh;
    m.loss_kind = LossKind::cross_entropy;
    return m;
}

Batch random_ce_batch(const MlpModel& m, std::size_t n, std::uint64_t seed) {
    Rng rng(seed);
    Batch b;
    for (std::size_t i = 0; i < n; ++i) {
        b.inputs.push_back(rng.normal_vec(m.input_dim()));
        b.labels.push_back(static_cast<int>(rng.uniform_index(m.output_dim())));
    }
    return b;
}

Batch random_mse_batch(const MlpModel& m, std::size_t n, std::uint64_t seed) {
    Rng rng(seed);
    Batch b;
    for (std::size_t i = 0; i < n; ++i) {
        b.inputs.push_back(rng.normal_vec(m.input_dim()));
        b.targets.push_back(rng.normal_vec(m.output_dim()));
    }
    return b;
}

}  // namespace

TEST_CASE("forward: all-zero params give all-zero logits") {
    MlpModel m = small_tanh_ce();
    Vec params(m.param_count(), 0.0);
    Vec out = mlp_forward(m, params, {0.5, -1.0, 2.0});
    for (double v : out) CHECK(v == 0.0);
}

TEST_CASE("forward: single linear layer picks weight column plus bias") {
    MlpModel m;
    m.layer_sizes = {3, 2};
    m.loss_kind = LossKind::mse;
    Vec params = {1.0, 2.0, 3.0,   // row 0
                  4.0, 5.0, 6.0,   // row 1
                  0.5, -0.5};      // biases
    Vec out = mlp_forward(m, params, {1.0, 0.0, 0.0});
    CHECK(out[0] == doctest::Approx(1.5).epsilon(1e-15));
    CHECK(out[1] == doctest::Approx(3.5).epsilon(1e-15));
}

TEST_CASE("forward: matches naive loop oracle") {
    for (auto act : {Activation::relu, Activation::tanh}) {
        MlpModel m;
        m.layer_sizes = {4, 7, 5, 3};
        m.activation = act;
        Vec params = init_params(m, 99);
        Rng rng(7);
        Vec x = rng.normal_vec(4);
        Vec got = mlp_forward(m, params, x);
        Vec want = oracle::naive_forward(m, params, x);
        CHECK(oracle::max_rel_err(got, want) <= 1e-12);
    }
}

TEST_CASE("forward: dimension mismatch is a structured error") {
    MlpModel m = small_tanh_ce();
    Vec params(m.param_count(), 0.0);
    CHECK_THROWS_WITH_AS(mlp_forward(m, params, {1.0}),
                         doctest::Contains("expected length 3"), std::invalid_argument);
    CHECK_THROWS_AS(mlp_forward(m, Vec(3, 0.0), {1.0, 2.0, 3.0}), std::invalid_argument);
}

TEST_CASE("loss: cross-entropy at zero logits is ln 2 for K=2") {
    MlpModel m;
    m.layer_sizes = {2, 3, 2};
    m.loss_kind = LossKind::cross_entropy;
    Vec params(m.param_count(), 0.0);
    Batch b;
    b.inputs = {{1.0, 2.0}, {0.0, -1.0}};
    b.labels = {0, 1};
    auto lg = loss_and_grad(m, params, b);
    CHECK(lg.loss == doctest::Approx(std::log(2.0)).epsilon(1e-14));
}

TEST_CASE("loss: mse with targets equal to outputs is zero with zero grad") {
    MlpModel m;
    m.layer_sizes = {2, 4, 3};
    m.activation = Activation::tanh;
    m.loss_kind = LossKind::mse;
    Vec params = init_params(m, 3);
    Batch b;
    b.inputs = {{0.3, -0.7}};
    b.targets = {mlp_forward(m, params, b.inputs[0])};
    auto lg = loss_and_grad(m, params, b);
    CHECK(lg.loss == doctest::Approx(0.0).epsilon(1e-20));
    for (double g : lg.grad) CHECK(std::abs(g) <= 1e-16);
}

TEST_CASE("loss: gradient matches central finite differences") {
    MlpModel m = small_tanh_ce();
    Vec params = init_params(m, 11);
    Batch b = random_ce_batch(m, 5, 12);
    auto lg = loss_and_grad(m, params, b);
    Vec fd = oracle::fd_gradient(
        [&](const Vec& p) { return loss_and_grad(m, p, b).loss; }, params);
    CHECK(oracle::max_rel_err(lg.grad, fd) <= 1e-5);

    m.loss_kind = LossKind::mse;
    Batch bm = random_mse_batch(m, 5, 13);
    auto lgm = loss_and_grad(m, params, bm);
    Vec fdm = oracle::fd_gradient(
        [&](const Vec& p) { return loss_and_grad(m, p, bm).loss; }, params);
    CHECK(oracle::max_rel_err(lgm.grad, fdm) <= 1e-5);
}

TEST_CASE("loss: overflow carries the offending sample index") {
    MlpModel m;
    m.layer_sizes = {1, 2};
    m.loss_kind = LossKind::mse;
    Vec params = {1e200, 1e200, 0.0, 0.0};
    Batch b;
    b.inputs = {{0.0}, {1e200}};
    b.targets = {{0.0, 0.0}, {0.0, 0.0}};
    try {
        loss_and_grad(m, params, b);
        FAIL("expected NonFiniteLossError");
    } catch (const NonFiniteLossError& e) {
        CHECK(e.sample_index == 1);
    }
}

// Batch constructed so the bias row of the Hessian decouples: loss is the
// quadratic (1/2) theta^T diag(2,3,1) theta in (w1, w2, b).
TEST_CASE("hvp: constant-Hessian quadratic surrogate diag(2,3)") {
    MlpModel m;
    m.layer_sizes = {2, 1};
    m.loss_kind = LossKind::mse;
    Vec params = {0.4, -0.2, 0.1};
    Batch b;
    double s6 = std::sqrt(6.0);
    b.inputs = {{2.0, 0.0}, {-2.0, 0.0}, {0.0, s6}, {0.0, -s6}};
    b.targets = {{0.0}, {0.0}, {0.0}, {0.0}};
    Vec hv = hvp(m, params, b, {1.0, 1.0, 0.0});
    CHECK(hv[0] == doctest::Approx(2.0).epsilon(1e-12));
    CHECK(hv[1] == doctest::Approx(3.0).epsilon(1e-12));
    CHECK(hv[2] == doctest::Approx(0.0).epsilon(1e-12));
}

TEST_CASE("hvp: zero direction maps to zero") {
    MlpModel m = small_tanh_ce();
    Vec params = init_params(m, 21);
    Batch b = random_ce_batch(m, 3, 22);
    Vec hv = hvp(m, params, b, Vec(params.size(), 0.0));
    for (double v : hv) CHECK(v == 0.0);
}

TEST_CASE("hvp: matches finite differences of the gradient") {
    MlpModel m = small_tanh_ce();
    Vec params = init_params(m, 31);
    Batch b = random_ce_batch(m, 6, 32);
    Rng rng(33);
    for (int rep = 0; rep < 3; ++rep) {
        Vec d = rng.normal_vec(params.size());
        vec::scal(1.0 / vec::nrm2(d), d);
        Vec got = hvp(m, params, b, d);
        Vec fd = oracle::fd_directional(
            [&](const Vec& p) { return loss_and_grad(m, p, b).grad; }, params, d);
        CHECK(oracle::max_rel_err(got, fd) <= 1e-4);
    }
}

TEST_CASE("hvp: symmetric as a bilinear form") {
    MlpModel m = small_tanh_ce();
    Vec params = init_params(m, 41);
    Batch b = random_ce_batch(m, 4, 42);
    Rng rng(43);
    for (int rep = 0; rep < 5; ++rep) {
        Vec a = rng.normal_vec(params.size());
        Vec c = rng.normal_vec(params.size());
        Vec ha = hvp(m, params, b, a);
        Vec hc = hvp(m, params, b, c);
        double h_scale = vec::nrm2(ha) / vec::nrm2(a);
        double lhs = std::abs(vec::dot(a, hc) - vec::dot(c, ha));
        CHECK(lhs <= 1e-8 * vec::nrm2(a) * vec::nrm2(c) * std::max(h_scale, 1e-30));
    }
}

TEST_CASE("gauss_newton_vp: equals hvp exactly for a linear model with mse") {
    MlpModel m;
    m.layer_sizes = {3, 2};
    m.loss_kind = LossKind::mse;
    Rng rng(51);
    Vec params = rng.normal_vec(m.param_count());
    Batch b = random_mse_batch(m, 5, 52);
    Vec d = rng.normal_vec(params.size());
    Vec g = gauss_newton_vp(m, params, b, d);
    Vec h = hvp(m, params, b, d);
    CHECK(oracle::max_rel_err(g, h) <= 1e-14);

    Vec z = gauss_newton_vp(m, params, b, Vec(params.size(), 0.0));
    for (double v : z) CHECK(v == 0.0);
}

TEST_CASE("gauss_newton_vp: PSD-consistent quadratic form") {
    MlpModel m = small_tanh_ce();
    Vec params = init_params(m, 61);
    Batch b = random_ce_batch(m, 4, 62);
    Rng rng(63);
    for (int rep = 0; rep < 5; ++rep) {
        Vec d = rng.normal_vec(params.size());
        Vec g = gauss_newton_vp(m, params, b, d);
        CHECK(vec::dot(d, g) >= -1e-12 * vec::nrm2(d) * vec::nrm2(g));
    }
}

// Hessian decomposition: hvp minus the outer-product part must equal the
// functional part, assembled here from per-output second derivatives of the
// naive forward oracle.
TEST_CASE("hessian decomposition: hvp = gauss_newton_vp + functional part") {
    MlpModel m;
    m.layer_sizes = {3, 6, 2};
    m.activation = Activation::tanh;
    m.loss_kind = LossKind::cross_entropy;
    REQUIRE(m.param_count() <= 200);
    Vec params = init_params(m, 71);
    Batch b = random_ce_batch(m, 3, 72);
    Rng rng(73);
    Vec d = rng.normal_vec(params.size());
    vec::scal(1.0 / vec::nrm2(d), d);

    const int K = m.output_dim();
    Vec functional(params.size(), 0.0);
    for (std::size_t i = 0; i < b.size(); ++i) {
        Vec logits = oracle::naive_forward(m, params, b.inputs[i]);
        Vec p = softmax(logits);
        Vec dl(p);
        dl[b.labels[i]] -= 1.0;  // d loss / d f for cross-entropy
        for (int k = 0; k < K; ++k) {
            // (d^2 f^k / d theta^2) d via outer finite difference of the
            // inner finite-difference gradient of f^k.
            auto grad_fk = [&](const Vec& th) {
                return oracle::fd_gradient(
                    [&](const Vec& t2) { return oracle::naive_forward(m, t2, b.inputs[i])[k]; },
                    th, 1e-5);
            };
            Vec hd = oracle::fd_directional(grad_fk, params, d, 1e-4);
            vec::axpy(dl[k] / static_cast<double>(b.size()), hd, functional);
        }
    }

    Vec h = hvp(m, params, b, d);
    Vec g = gauss_newton_vp(m, params, b, d);
    Vec diff = vec::sub(h, g);
    CHECK(oracle::max_rel_err(diff, functional) <= 1e-4);
}

TEST_CASE("output_jacobian: linear model column k holds x in row-block k") {
    MlpModel m;
    m.layer_sizes = {3, 2};
    m.loss_kind = LossKind::mse;
    Rng rng(81);
    Vec params = rng.normal_vec(m.param_count());
    Vec x = {0.5, -1.5, 2.5};
    auto cols = output_jacobian(m, params, x);
    REQUIRE(cols.size() == 2);
    // Column 0: d f^0 / d W row 0 = x, zeros on row 1, bias block e_0.
    CHECK(cols[0][0] == doctest::Approx(0.5));
    CHECK(cols[0][1] == doctest::Approx(-1.5));
    CHECK(cols[0][2] == doctest::Approx(2.5));
    CHECK(cols[0][3] == 0.0);
    CHECK(cols[0][4] == 0.0);
    CHECK(cols[0][5] == 0.0);
    CHECK(cols[0][6] == 1.0);
    CHECK(cols[0][7] == 0.0);
    CHECK(cols[1][3] == doctest::Approx(0.5));
    CHECK(cols[1][7] == 1.0);
}

TEST_CASE("output_jacobian: zero input with zero biases zeroes the first-layer block") {
    MlpModel m = small_tanh_ce();
    Vec params = init_params(m, 91);  // biases are zero at init
    auto cols = output_jacobian(m, params, Vec(3, 0.0));
    // First-layer weight block is rows 0..17 (6x3 weights).
    for (const auto& col : cols)
        for (int i = 0; i < 18; ++i) CHECK(col[i] == 0.0);
}

TEST_CASE("output_jacobian: columns match finite differences of each logit") {
    MlpModel m = small_tanh_ce();
    Vec params = init_params(m, 101);
    Rng rng(102);
    Vec x = rng.normal_vec(3);
    auto cols = output_jacobian(m, params, x);
    for (int k = 0; k < m.output_dim(); ++k) {
        Vec fd = oracle::fd_gradient(
            [&](const Vec& p) { return mlp_forward(m, p, x)[k]; }, params);
        CHECK(oracle::max_rel_err(cols[k], fd) <= 1e-5);
    }
}

TEST_CASE("GTL dominance: ground-truth diagonal dominates the loss output Hessian") {
    const int K = 100;
    const double p_gtl = 0.99;
    Vec p(K, (1.0 - p_gtl) / (K - 1));
    p[0] = p_gtl;
    Vec logits(K);
    for (int k = 0; k < K; ++k) logits[k] = std::log(p[k]);

    auto h = ce_output_hessian(logits);
    // Oracle: assemble diag(p) - p p^T directly.
    for (int i = 0; i < K; ++i)
        for (int j = 0; j < K; ++j) {
            double want = (i == j ? p[i] : 0.0) - p[i] * p[j];
            CHECK(std::abs(h[static_cast<std::size_t>(i) * K + j] - want) <= 1e-14);
        }
    double gtl_entry = h[0];
    double max_other = 0.0;
    for (int i = 0; i < K; ++i)
        for (int j = 0; j < K; ++j)
            if (i != 0 || j != 0)
                max_other = std::max(max_other, std::abs(h[static_cast<std::size_t>(i) * K + j]));
    CHECK(gtl_entry / max_other >= (K - 1) / 2.0);
}

TEST_CASE("purity: identical inputs give bit-identical outputs") {
    MlpModel m = small_tanh_ce();
    Vec params = init_params(m, 111);
    Batch b = random_ce_batch(m, 4, 112);
    auto a1 = loss_and_grad(m, params, b);
    auto a2 = loss_and_grad(m, params, b);
    CHECK(a1.loss == a2.loss);
    CHECK(a1.grad == a2.grad);
    Rng rng(113);
    Vec d = rng.normal_vec(params.size());
    CHECK(hvp(m, params, b, d) == hvp(m, params, b, d));
}

// ---------------------------------------------------------------------------
// Lanczos and dense eigensolver
// ---------------------------------------------------------------------------

TEST_CASE("lanczos: diagonal operator top-2") {
    SymOp op = [](const Vec& x) { return Vec{3.0 * x[0], 2.0 * x[1], 1.0 * x[2]}; };
    auto pairs = lanczos_topk(op, 3, 2, 3, 5);
    REQUIRE(pairs.eigenvalues.size() == 2);
    CHECK(pairs.eigenvalues[0] == doctest::Approx(3.0).epsilon(1e-10));
    CHECK(pairs.eigenvalues[1] == doctest::Approx(2.0).epsilon(1e-10));
    CHECK(!pairs.breakdown);
}

TEST_CASE("lanczos: identity operator") {
    SymOp op = [](const Vec& x) { return x; };
    auto pairs = lanczos_topk(op, 10, 1, 10, 7);
    REQUIRE(pairs.eigenvalues.size() == 1);
    CHECK(pairs.eigenvalues[0] == doctest::Approx(1.0).epsilon(1e-12));
}

TEST_CASE("lanczos: breakdown before k converged is flagged") {
    SymOp op = [](const Vec& x) { return x; };  // Krylov space is 1-dimensional
    auto pairs = lanczos_topk(op, 10, 3, 10, 9);
    CHECK(pairs.breakdown);
    CHECK(pairs.eigenvalues.size() == 1);
    CHECK(pairs.eigenvalues[0] == doctest::Approx(1.0).epsilon(1e-12));
}

TEST_CASE("lanczos: top-5 of a 50x50 matrix with a known spectrum") {
    const std::size_t n = 50;
    auto q = oracle::random_orthonormal(n, 123);
    std::vector<double> lambda(n);
    for (std::size_t i = 0; i < n; ++i) lambda[i] = 50.0 - static_cast<double>(i);
    auto a = oracle::matrix_with_spectrum(q, lambda);

    SymOp op = [&](const Vec& x) { return dense::matvec(a, n, x); };
    auto pairs = lanczos_topk(op, n, 5, 50, 321);
    REQUIRE(pairs.eigenvalues.size() == 5);
    for (int i = 0; i < 5; ++i) {
        CHECK(oracle::rel_err(pairs.eigenvalues[i], lambda[i]) <= 1e-8);
        // Residual check: ||A v - lambda v|| small relative to lambda_max.
        Vec av = dense::matvec(a, n, pairs.eigenvectors[i]);
        vec::axpy(-pairs.eigenvalues[i], pairs.eigenvectors[i], av);
        CHECK(vec::nrm2(av) <= 1e-7 * lambda[0]);
    }
}

TEST_CASE("lanczos: eigenpair invariants and determinism") {
    const std::size_t n = 30;
    auto q = oracle::random_orthonormal(n, 17);
    std::vector<double> lambda(n);
    for (std::size_t i = 0; i < n; ++i) lambda[i] = std::exp(-0.3 * static_cast<double>(i));
    auto a = oracle::matrix_with_spectrum(q, lambda);
    SymOp op = [&](const Vec& x) { return dense::matvec(a, n, x); };

    auto p1 = lanczos_topk(op, n, 4, 30, 55);
    auto p2 = lanczos_topk(op, n, 4, 30, 55);
    CHECK(p1.eigenvalues == p2.eigenvalues);
    for (int i = 0; i < 4; ++i) CHECK(p1.eigenvectors[i] == p2.eigenvectors[i]);

    for (int i = 0; i < 4; ++i) {
        CHECK(std::abs(vec::nrm2(p1.eigenvectors[i]) - 1.0) <= 1e-10);
        for (int j = i + 1; j < 4; ++j)
            CHECK(std::abs(vec::dot(p1.eigenvectors[i], p1.eigenvectors[j])) <= 1e-8);
    }
    for (int i = 0; i + 1 < 4; ++i) CHECK(p1.eigenvalues[i] >= p1.eigenvalues[i + 1]);
}

TEST_CASE("dense sym_eigen: recovers a constructed spectrum") {
    const std::size_t n = 20;
    auto q = oracle::random_orthonormal(n, 77);
    std::vector<double> lambda(n);
    for (std::size_t i = 0; i < n; ++i) lambda[i] = 10.0 - static_cast<double>(i) * 0.7;
    auto a = oracle::matrix_with_spectrum(q, lambda);
    auto eig = dense::sym_eigen(a, n);
    for (std::size_t i = 0; i < n; ++i) {
        CHECK(std::abs(eig.values[i] - lambda[i]) <= 1e-10 * 10.0);
        Vec av = dense::matvec(a, n, eig.vectors[i]);
        vec::axpy(-eig.values[i], eig.vectors[i], av);
        CHECK(vec::nrm2(av) <= 1e-9 * 10.0);
    }
}
