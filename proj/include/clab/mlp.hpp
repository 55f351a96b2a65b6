#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>
#include <vector>

#include "clab/rng.hpp"
#include "clab/vec.hpp"

namespace clab {

enum class Activation { relu, tanh };
enum class LossKind { cross_entropy, mse };

// Fixed dense MLP family: affine layers with an elementwise activation
// between them, raw logits at the output. All math is double precision.
struct MlpModel {
    std::vector<int> layer_sizes;  // input dim, hidden widths..., output dim
    Activation activation = Activation::tanh;
    LossKind loss_kind = LossKind::cross_entropy;

    int input_dim() const { return layer_sizes.front(); }
    int output_dim() const { return layer_sizes.back(); }
    int num_layers() const { return static_cast<int>(layer_sizes.size()) - 1; }

    std::size_t param_count() const;
    void validate() const;
};

// A labeled batch. `labels` holds class ids for cross_entropy; `targets`
// holds K-dim target vectors for mse. Exactly one of the two is used.
struct Batch {
    std::vector<Vec> inputs;
    std::vector<int> labels;
    std::vector<Vec> targets;

    std::size_t size() const { return inputs.size(); }
};

// Raised when a batch loss overflows; carries the offending sample.
struct NonFiniteLossError : std::runtime_error {
    NonFiniteLossError(std::size_t sample, const std::string& what)
        : std::runtime_error(what), sample_index(sample) {}
    std::size_t sample_index;
};

struct LossGrad {
    double loss = 0.0;
    Vec grad;
};

struct EvalMetrics {
    double loss = 0.0;
    double accuracy = 0.0;
};

// Gaussian init scaled by 1/sqrt(fan_in); biases zero.
Vec init_params(const MlpModel& model, std::uint64_t seed);

Vec mlp_forward(const MlpModel& model, const Vec& params, const Vec& input);

LossGrad loss_and_grad(const MlpModel& model, const Vec& params, const Batch& batch);

// Variant with inverted dropout on hidden activations (training-time only;
// masks are drawn per sample per step from `rng`).
LossGrad loss_and_grad_dropout(const MlpModel& model, const Vec& params, const Batch& batch,
                               double dropout_prob, Rng& rng);

// Exact Hessian-vector product for the batch-mean loss, computed with the
// R-operator (forward-over-reverse). ReLU second derivative is taken as 0
// everywhere, including at the kink.
Vec hvp(const MlpModel& model, const Vec& params, const Batch& batch, const Vec& dir);

// Outer-product (Gauss-Newton) part of the Hessian times dir:
// (1/n) sum_i J_i [d2 loss/d f^2] J_i^T dir.
Vec gauss_newton_vp(const MlpModel& model, const Vec& params, const Batch& batch, const Vec& dir);

// P x K Jacobian of the network output w.r.t. the parameters; column k is
// the gradient of logit k.
std::vector<Vec> output_jacobian(const MlpModel& model, const Vec& params, const Vec& input);

// Activations of the last hidden layer (feature map for NCM classifiers).
Vec last_hidden_features(const MlpModel& model, const Vec& params, const Vec& input);

// K x K Hessian of the softmax cross-entropy loss w.r.t. the logits:
// diag(p) - p p^T, row-major.
std::vector<double> ce_output_hessian(const Vec& logits);

Vec softmax(const Vec& logits);

// Mean loss and argmax accuracy over the batch (accuracy is 0 for mse
// batches without labels).
EvalMetrics evaluate(const MlpModel& model, const Vec& params, const Batch& batch);

}  // namespace clab
