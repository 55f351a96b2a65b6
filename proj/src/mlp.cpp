#include "clab/mlp.hpp"

#include <algorithm>
#include <cmath>

namespace clab {

namespace {

struct LayerRef {
    int rows = 0;  // n_l
    int cols = 0;  // n_{l-1}
    std::size_t w_off = 0;
    std::size_t b_off = 0;
};

std::vector<LayerRef> layer_refs(const MlpModel& m) {
    std::vector<LayerRef> refs(m.num_layers());
    std::size_t off = 0;
    for (int l = 0; l < m.num_layers(); ++l) {
        refs[l].rows = m.layer_sizes[l + 1];
        refs[l].cols = m.layer_sizes[l];
        refs[l].w_off = off;
        off += static_cast<std::size_t>(refs[l].rows) * refs[l].cols;
        refs[l].b_off = off;
        off += refs[l].rows;
    }
    return refs;
}

inline double act(Activation a, double z) {
    return a == Activation::relu ? (z > 0.0 ? z : 0.0) : std::tanh(z);
}

// First derivative; for tanh uses the already-computed activation value.
inline double act_d(Activation a, double z, double av) {
    return a == Activation::relu ? (z > 0.0 ? 1.0 : 0.0) : 1.0 - av * av;
}

// Second derivative. ReLU contributes 0 everywhere, including at z = 0.
inline double act_dd(Activation a, double /*z*/, double av) {
    return a == Activation::relu ? 0.0 : -2.0 * av * (1.0 - av * av);
}

// z_out = W x + b for one layer.
void affine(const Vec& params, const LayerRef& r, const double* x, double* z_out) {
    for (int i = 0; i < r.rows; ++i) {
        double s = params[r.b_off + i];
        const double* wrow = params.data() + r.w_off + static_cast<std::size_t>(i) * r.cols;
        for (int j = 0; j < r.cols; ++j) s += wrow[j] * x[j];
        z_out[i] = s;
    }
}

// x_out += W^T d (accumulates).
void affine_transpose(const Vec& params, const LayerRef& r, const double* d, double* x_out) {
    for (int i = 0; i < r.rows; ++i) {
        const double* wrow = params.data() + r.w_off + static_cast<std::size_t>(i) * r.cols;
        for (int j = 0; j < r.cols; ++j) x_out[j] += wrow[j] * d[i];
    }
}

// grad_W += d a^T, grad_b += d.
void accumulate_layer_grad(Vec& grad, const LayerRef& r, const double* d, const double* a) {
    for (int i = 0; i < r.rows; ++i) {
        double* grow = grad.data() + r.w_off + static_cast<std::size_t>(i) * r.cols;
        for (int j = 0; j < r.cols; ++j) grow[j] += d[i] * a[j];
        grad[r.b_off + i] += d[i];
    }
}

// Forward pass for one sample; stores pre-activations z[l] and
// activations a[l] (a[0] is the input, a[L] holds the raw logits).
void forward_sample(const MlpModel& m, const Vec& params, const std::vector<LayerRef>& refs,
                    const Vec& x, std::vector<Vec>& z, std::vector<Vec>& a,
                    const std::vector<Vec>* dropout_masks = nullptr) {
    const int L = m.num_layers();
    z.assign(L, {});
    a.assign(L + 1, {});
    a[0] = x;
    for (int l = 0; l < L; ++l) {
        z[l].resize(refs[l].rows);
        affine(params, refs[l], a[l].data(), z[l].data());
        a[l + 1].resize(refs[l].rows);
        if (l + 1 < static_cast<int>(m.layer_sizes.size()) - 1) {
            for (int i = 0; i < refs[l].rows; ++i) a[l + 1][i] = act(m.activation, z[l][i]);
            if (dropout_masks)
                for (int i = 0; i < refs[l].rows; ++i) a[l + 1][i] *= (*dropout_masks)[l][i];
        } else {
            a[l + 1] = z[l];  // logits
        }
    }
}

// Per-sample loss and logit-space delta. Returns the sample loss.
double loss_and_output_delta(const MlpModel& m, const Vec& logits, const Batch& batch,
                             std::size_t i, Vec& delta) {
    const int K = m.output_dim();
    delta.assign(K, 0.0);
    if (m.loss_kind == LossKind::cross_entropy) {
        int y = batch.labels[i];
        if (y < 0 || y >= K)
            throw std::invalid_argument("label " + std::to_string(y) +
                                        " out of range [0, " + std::to_string(K) + ")");
        double mx = *std::max_element(logits.begin(), logits.end());
        double sum = 0.0;
        for (int k = 0; k < K; ++k) sum += std::exp(logits[k] - mx);
        double loss = std::log(sum) - (logits[y] - mx);
        for (int k = 0; k < K; ++k) delta[k] = std::exp(logits[k] - mx) / sum;
        delta[y] -= 1.0;
        return loss;
    }
    const Vec& t = batch.targets[i];
    vec::check_length(t, static_cast<std::size_t>(K), "mse target");
    double loss = 0.0;
    for (int k = 0; k < K; ++k) {
        delta[k] = logits[k] - t[k];
        loss += 0.5 * delta[k] * delta[k];
    }
    return loss;
}

void check_batch(const MlpModel& m, const Batch& batch) {
    if (batch.size() == 0) throw std::invalid_argument("empty batch");
    if (m.loss_kind == LossKind::cross_entropy && batch.labels.size() != batch.size())
        throw std::invalid_argument("cross_entropy batch: labels size " +
                                    std::to_string(batch.labels.size()) + " != inputs size " +
                                    std::to_string(batch.size()));
    if (m.loss_kind == LossKind::mse && batch.targets.size() != batch.size())
        throw std::invalid_argument("mse batch: targets size " +
                                    std::to_string(batch.targets.size()) + " != inputs size " +
                                    std::to_string(batch.size()));
}

void check_params(const MlpModel& m, const Vec& params) {
    m.validate();
    vec::check_length(params, m.param_count(), "params");
}

}  // namespace

std::size_t MlpModel::param_count() const {
    std::size_t p = 0;
    for (std::size_t l = 1; l < layer_sizes.size(); ++l)
        p += static_cast<std::size_t>(layer_sizes[l]) * (layer_sizes[l - 1] + 1);
    return p;
}

void MlpModel::validate() const {
    if (layer_sizes.size() < 2) throw std::invalid_argument("model needs at least one layer");
    for (int s : layer_sizes)
        if (s <= 0) throw std::invalid_argument("layer sizes must be positive");
    if (loss_kind == LossKind::cross_entropy && output_dim() < 2)
        throw std::invalid_argument("cross_entropy needs at least 2 outputs");
}

Vec init_params(const MlpModel& model, std::uint64_t seed) {
    model.validate();
    Rng rng(seed);
    auto refs = layer_refs(model);
    Vec params(model.param_count(), 0.0);
    for (const auto& r : refs) {
        double scale = 1.0 / std::sqrt(static_cast<double>(r.cols));
        for (std::size_t i = 0; i < static_cast<std::size_t>(r.rows) * r.cols; ++i)
            params[r.w_off + i] = scale * rng.normal();
    }
    return params;
}

Vec mlp_forward(const MlpModel& model, const Vec& params, const Vec& input) {
    check_params(model, params);
    vec::check_length(input, static_cast<std::size_t>(model.input_dim()), "input");
    auto refs = layer_refs(model);
    std::vector<Vec> z, a;
    forward_sample(model, params, refs, input, z, a);
    return a.back();
}

namespace {

LossGrad loss_and_grad_impl(const MlpModel& model, const Vec& params, const Batch& batch,
                            const std::vector<std::vector<Vec>>* masks_per_sample) {
    check_params(model, params);
    check_batch(model, batch);
    auto refs = layer_refs(model);
    const int L = model.num_layers();
    const std::size_t n = batch.size();

    LossGrad out;
    out.grad.assign(params.size(), 0.0);
    std::vector<Vec> z, a;
    Vec delta, next_delta;
    for (std::size_t i = 0; i < n; ++i) {
        vec::check_length(batch.inputs[i], static_cast<std::size_t>(model.input_dim()), "input");
        const std::vector<Vec>* masks = masks_per_sample ? &(*masks_per_sample)[i] : nullptr;
        forward_sample(model, params, refs, batch.inputs[i], z, a, masks);
        double li = loss_and_output_delta(model, a.back(), batch, i, delta);
        if (!std::isfinite(li))
            throw NonFiniteLossError(i, "non-finite loss at sample " + std::to_string(i));
        out.loss += li;
        for (int l = L - 1; l >= 0; --l) {
            accumulate_layer_grad(out.grad, refs[l], delta.data(), a[l].data());
            if (l > 0) {
                next_delta.assign(refs[l].cols, 0.0);
                affine_transpose(params, refs[l], delta.data(), next_delta.data());
                for (int j = 0; j < refs[l].cols; ++j) {
                    // With dropout the stored activation is masked; the
                    // derivative needs the unmasked value times the mask.
                    double av = masks ? act(model.activation, z[l - 1][j]) : a[l][j];
                    double dj = act_d(model.activation, z[l - 1][j], av);
                    if (masks) dj *= (*masks)[l - 1][j];
                    next_delta[j] *= dj;
                }
                delta = next_delta;
            }
        }
    }
    out.loss /= static_cast<double>(n);
    vec::scal(1.0 / static_cast<double>(n), out.grad);
    return out;
}

}  // namespace

LossGrad loss_and_grad(const MlpModel& model, const Vec& params, const Batch& batch) {
    return loss_and_grad_impl(model, params, batch, nullptr);
}

LossGrad loss_and_grad_dropout(const MlpModel& model, const Vec& params, const Batch& batch,
                               double dropout_prob, Rng& rng) {
    if (dropout_prob <= 0.0) return loss_and_grad(model, params, batch);
    if (dropout_prob >= 1.0) throw std::invalid_argument("dropout_prob must be < 1");
    const int L = model.num_layers();
    const double keep = 1.0 - dropout_prob;
    std::vector<std::vector<Vec>> masks(batch.size());
    for (auto& sample_masks : masks) {
        sample_masks.resize(L - 1);
        for (int l = 0; l + 1 < L; ++l) {
            sample_masks[l].resize(model.layer_sizes[l + 1]);
            for (auto& mval : sample_masks[l])
                mval = rng.uniform() < keep ? 1.0 / keep : 0.0;
        }
    }
    return loss_and_grad_impl(model, params, batch, &masks);
}

namespace {

// R-forward pass: directional derivatives of pre-activations (Rz) and
// activations (Ra) along the parameter direction dir.
void r_forward(const MlpModel& m, const Vec& params, const Vec& dir,
               const std::vector<LayerRef>& refs, const std::vector<Vec>& z,
               const std::vector<Vec>& a, std::vector<Vec>& rz, std::vector<Vec>& ra) {
    const int L = m.num_layers();
    rz.assign(L, {});
    ra.assign(L + 1, {});
    ra[0].assign(a[0].size(), 0.0);  // input is fixed
    for (int l = 0; l < L; ++l) {
        const auto& r = refs[l];
        rz[l].assign(r.rows, 0.0);
        affine(dir, r, a[l].data(), rz[l].data());  // V a + vb
        for (int i = 0; i < r.rows; ++i) {
            const double* wrow = params.data() + r.w_off + static_cast<std::size_t>(i) * r.cols;
            double s = 0.0;
            for (int j = 0; j < r.cols; ++j) s += wrow[j] * ra[l][j];
            rz[l][i] += s;
        }
        ra[l + 1].resize(r.rows);
        if (l < L - 1) {
            for (int i = 0; i < r.rows; ++i)
                ra[l + 1][i] = act_d(m.activation, z[l][i], a[l + 1][i]) * rz[l][i];
        } else {
            ra[l + 1] = rz[l];
        }
    }
}

// Action of the logit-space loss Hessian on v.
void loss_output_hessian_apply(const MlpModel& m, const Vec& logits, const Vec& v, Vec& out) {
    const int K = static_cast<int>(logits.size());
    out.assign(K, 0.0);
    if (m.loss_kind == LossKind::mse) {
        out = v;
        return;
    }
    Vec p = softmax(logits);
    double pv = 0.0;
    for (int k = 0; k < K; ++k) pv += p[k] * v[k];
    for (int k = 0; k < K; ++k) out[k] = p[k] * v[k] - p[k] * pv;
}

}  // namespace

Vec hvp(const MlpModel& model, const Vec& params, const Batch& batch, const Vec& dir) {
    check_params(model, params);
    check_batch(model, batch);
    vec::check_length(dir, params.size(), "hvp direction");
    auto refs = layer_refs(model);
    const int L = model.num_layers();
    const std::size_t n = batch.size();

    Vec result(params.size(), 0.0);
    std::vector<Vec> z, a, rz, ra;
    Vec delta, rdelta, s, rs, next_delta, next_rdelta;
    for (std::size_t i = 0; i < n; ++i) {
        forward_sample(model, params, refs, batch.inputs[i], z, a);
        r_forward(model, params, dir, refs, z, a, rz, ra);
        double li = loss_and_output_delta(model, a.back(), batch, i, delta);
        if (!std::isfinite(li))
            throw NonFiniteLossError(i, "non-finite loss at sample " + std::to_string(i));
        loss_output_hessian_apply(model, a.back(), rz[L - 1], rdelta);

        for (int l = L - 1; l >= 0; --l) {
            const auto& r = refs[l];
            // R(grad_W) = Rdelta a^T + delta Ra^T ; R(grad_b) = Rdelta
            for (int ii = 0; ii < r.rows; ++ii) {
                double* grow = result.data() + r.w_off + static_cast<std::size_t>(ii) * r.cols;
                for (int j = 0; j < r.cols; ++j)
                    grow[j] += rdelta[ii] * a[l][j] + delta[ii] * ra[l][j];
                result[r.b_off + ii] += rdelta[ii];
            }
            if (l > 0) {
                s.assign(r.cols, 0.0);
                rs.assign(r.cols, 0.0);
                affine_transpose(params, r, delta.data(), s.data());
                affine_transpose(dir, r, delta.data(), rs.data());
                affine_transpose(params, r, rdelta.data(), rs.data());
                next_delta.assign(r.cols, 0.0);
                next_rdelta.assign(r.cols, 0.0);
                for (int j = 0; j < r.cols; ++j) {
                    double d1 = act_d(model.activation, z[l - 1][j], a[l][j]);
                    double d2 = act_dd(model.activation, z[l - 1][j], a[l][j]);
                    next_delta[j] = d1 * s[j];
                    next_rdelta[j] = d2 * rz[l - 1][j] * s[j] + d1 * rs[j];
                }
                delta = next_delta;
                rdelta = next_rdelta;
            }
        }
    }
    vec::scal(1.0 / static_cast<double>(n), result);
    return result;
}

Vec gauss_newton_vp(const MlpModel& model, const Vec& params, const Batch& batch,
                    const Vec& dir) {
    check_params(model, params);
    check_batch(model, batch);
    vec::check_length(dir, params.size(), "gauss_newton_vp direction");
    auto refs = layer_refs(model);
    const int L = model.num_layers();
    const std::size_t n = batch.size();

    Vec result(params.size(), 0.0);
    std::vector<Vec> z, a, rz, ra;
    Vec delta, next_delta;
    for (std::size_t i = 0; i < n; ++i) {
        forward_sample(model, params, refs, batch.inputs[i], z, a);
        r_forward(model, params, dir, refs, z, a, rz, ra);
        // b = [d2 loss/d f^2] (J^T dir); push back through the linearized net.
        loss_output_hessian_apply(model, a.back(), rz[L - 1], delta);
        for (int l = L - 1; l >= 0; --l) {
            accumulate_layer_grad(result, refs[l], delta.data(), a[l].data());
            if (l > 0) {
                next_delta.assign(refs[l].cols, 0.0);
                affine_transpose(params, refs[l], delta.data(), next_delta.data());
                for (int j = 0; j < refs[l].cols; ++j)
                    next_delta[j] *= act_d(model.activation, z[l - 1][j], a[l][j]);
                delta = next_delta;
            }
        }
    }
    vec::scal(1.0 / static_cast<double>(n), result);
    return result;
}

std::vector<Vec> output_jacobian(const MlpModel& model, const Vec& params, const Vec& input) {
    check_params(model, params);
    vec::check_length(input, static_cast<std::size_t>(model.input_dim()), "input");
    auto refs = layer_refs(model);
    const int L = model.num_layers();
    const int K = model.output_dim();
    std::vector<Vec> z, a;
    forward_sample(model, params, refs, input, z, a);

    std::vector<Vec> columns(K);
    Vec delta, next_delta;
    for (int k = 0; k < K; ++k) {
        columns[k].assign(params.size(), 0.0);
        delta.assign(K, 0.0);
        delta[k] = 1.0;
        for (int l = L - 1; l >= 0; --l) {
            accumulate_layer_grad(columns[k], refs[l], delta.data(), a[l].data());
            if (l > 0) {
                next_delta.assign(refs[l].cols, 0.0);
                affine_transpose(params, refs[l], delta.data(), next_delta.data());
                for (int j = 0; j < refs[l].cols; ++j)
                    next_delta[j] *= act_d(model.activation, z[l - 1][j], a[l][j]);
                delta = next_delta;
            }
        }
    }
    return columns;
}

Vec last_hidden_features(const MlpModel& model, const Vec& params, const Vec& input) {
    check_params(model, params);
    vec::check_length(input, static_cast<std::size_t>(model.input_dim()), "input");
    if (model.num_layers() < 2)
        return input;  // no hidden layer: inputs are the features
    auto refs = layer_refs(model);
    std::vector<Vec> z, a;
    forward_sample(model, params, refs, input, z, a);
    return a[model.num_layers() - 1];
}

std::vector<double> ce_output_hessian(const Vec& logits) {
    Vec p = softmax(logits);
    const std::size_t K = p.size();
    std::vector<double> h(K * K);
    for (std::size_t i = 0; i < K; ++i)
        for (std::size_t j = 0; j < K; ++j)
            h[i * K + j] = (i == j ? p[i] : 0.0) - p[i] * p[j];
    return h;
}

Vec softmax(const Vec& logits) {
    Vec p(logits.size());
    double mx = *std::max_element(logits.begin(), logits.end());
    double sum = 0.0;
    for (std::size_t k = 0; k < p.size(); ++k) {
        p[k] = std::exp(logits[k] - mx);
        sum += p[k];
    }
    for (auto& v : p) v /= sum;
    return p;
}

EvalMetrics evaluate(const MlpModel& model, const Vec& params, const Batch& batch) {
    check_params(model, params);
    check_batch(model, batch);
    auto refs = layer_refs(model);
    EvalMetrics m;
    std::vector<Vec> z, a;
    Vec delta;
    std::size_t correct = 0;
    for (std::size_t i = 0; i < batch.size(); ++i) {
        forward_sample(model, params, refs, batch.inputs[i], z, a);
        m.loss += loss_and_output_delta(model, a.back(), batch, i, delta);
        if (!batch.labels.empty()) {
            const Vec& logits = a.back();
            std::size_t arg = 0;
            for (std::size_t k = 1; k < logits.size(); ++k)
                if (logits[k] > logits[arg]) arg = k;
            if (static_cast<int>(arg) == batch.labels[i]) ++correct;
        }
    }
    m.loss /= static_cast<double>(batch.size());
    m.accuracy = batch.labels.empty()
                     ? 0.0
                     : static_cast<double>(correct) / static_cast<double>(batch.size());
    return m;
}

}  // namespace clab
