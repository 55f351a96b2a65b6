#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "clab/lanczos.hpp"
#include "clab/mlp.hpp"
#include "clab/tasks.hpp"

namespace clab {

enum class Algorithm { sgd, er, agem, ewc, si, ogd, ogd_gtl, icarl_lite, nullspace_gd };
enum class Locality { local_approx, global_approx };
enum class BufferSelection { herding, random };
enum class OgdVariant { full, gtl };

// Which side of the task-loss-approximation taxonomy each algorithm sits on;
// decided by whether its external memory depends on the parameters reached
// at the end of each task.
Locality locality_tag(Algorithm a);

std::string to_string(Algorithm a);
Algorithm algorithm_from_string(const std::string& s);

// The seeds and learning-rate grid used by the sweep harness.
inline constexpr std::uint64_t kSweepSeeds[] = {11, 13, 33, 21, 55};
inline constexpr double kDefaultLrGrid[] = {1e-4, 1e-3, 5e-3, 1e-2, 5e-2, 1e-1};

struct LearnerConfig {
    Algorithm algorithm = Algorithm::sgd;
    double lr = 0.01;
    int epochs = 5;
    int batch_size = 128;
    std::size_t buffer_size = 500;
    double ewc_lambda = 0.7;
    double ewc_gamma = 1.0;
    double si_c = 1.0;
    double si_xi = 1.0;
    int ogd_samples_per_task = 200;
    BufferSelection buffer_selection = BufferSelection::herding;  // icarl_lite ablation switch
    int nullspace_topk = 10;
    double nullspace_tol = 1e-6;
    double dropout_prob = 0.0;       // stable preset only
    double lr_decay_per_task = 1.0;  // stable preset only
    std::uint64_t seed = 0;

    void validate() const;
};

// Stable/plastic SGD preset pair; the two differ only in batch_size,
// dropout_prob and lr_decay_per_task.
struct SgdPresetPair {
    LearnerConfig plastic;
    LearnerConfig stable;
};
SgdPresetPair make_sgd_presets(double lr, int epochs, std::uint64_t seed);

// ---------------------------------------------------------------------------
// Learner memories
// ---------------------------------------------------------------------------

struct BufferItem {
    Vec input;
    int label = 0;
    int task_id = 0;
};

struct ReplayBuffer {
    std::size_t capacity = 0;
    std::vector<BufferItem> items;
    std::size_t seen_count = 0;
};

// Classic reservoir sampling: by induction every item seen so far is
// resident with probability capacity / seen_count.
void reservoir_insert(ReplayBuffer& buffer, BufferItem item, Rng& rng);

// A-GEM projection: leave g unchanged when it does not conflict with the
// reference gradient, otherwise remove the conflicting component.
Vec agem_project(const Vec& g, const Vec& g_ref);

struct FisherState {
    Vec fisher_diag;
    Vec anchor;
    bool consolidated = false;
};

// Online EWC consolidation: decay the running Fisher diagonal by gamma and
// add the task's empirical Fisher (mean squared per-sample gradient).
FisherState ewc_consolidate(const FisherState& state, const MlpModel& model, const Vec& params,
                            const Batch& train, double gamma);

Vec ewc_penalty_grad(const FisherState& state, const Vec& params, double lambda);

struct SiState {
    Vec path_integral_w;
    Vec omega;
    Vec anchor;
    Vec task_start;
};
SiState make_si_state(const Vec& theta0);
void si_accumulate(SiState& state, const Vec& grad, const Vec& delta_step);
void si_consolidate(SiState& state, const Vec& params, double xi);

struct OgdBasis {
    std::vector<Vec> vectors;  // orthonormal
    std::vector<int> per_task_counts;
    bool saturated = false;
};

// Gram-Schmidt extension with the output-gradient columns at the end-of-task
// parameters; near-dependent candidates are dropped.
void ogd_extend_basis(OgdBasis& basis, const MlpModel& model, const Vec& params_at_task_end,
                      const Batch& samples, OgdVariant variant);

Vec ogd_project(const Vec& g, const OgdBasis& basis);

// Greedy herding order: each pick minimizes the distance between the
// selected set's feature mean and the full class mean. Ties break to the
// lowest index.
std::vector<std::size_t> herding_select(const std::vector<Vec>& features, std::size_t m);

// Nearest-class-mean classification; ties break to the lowest class index.
std::size_t ncm_classify(const Vec& feature, const std::vector<Vec>& class_means);

struct NullspaceStep {
    Vec direction;
    bool no_admissible_direction = false;
};

// Project g off the eigen-directions with eigenvalue > tol * lambda_max.
NullspaceStep nullspace_gd_step(const Vec& g, const EigenPairs& avg_hessian_eigenpairs,
                                double tol);

// ---------------------------------------------------------------------------
// State and training loop
// ---------------------------------------------------------------------------

struct IcarlMemory {
    // Exemplar groups keyed by (task id, class id), each in selection order.
    // Keying by task keeps old-task exemplars alive in domain-incremental
    // streams where the same classes recur; for class-incremental splits it
    // reduces to one group per class.
    std::map<std::pair<int, int>, std::vector<BufferItem>> exemplars;

    bool empty() const { return exemplars.empty(); }
};

struct NullspaceTaskRecord {
    Batch samples;
    Vec params;  // parameters at that task's end
};

struct NullspaceMemory {
    std::vector<NullspaceTaskRecord> records;
    EigenPairs cached;
    bool cache_valid = false;
};

struct LearnerState {
    Algorithm algorithm = Algorithm::sgd;
    int tasks_seen = 0;
    ReplayBuffer buffer;
    FisherState fisher;
    SiState si;
    OgdBasis ogd;
    IcarlMemory icarl;
    NullspaceMemory nullspace;
};

LearnerState make_learner_state(const LearnerConfig& config, const Vec& theta0);

struct StepRecord {
    double loss = 0.0;
    double step_norm = 0.0;
};

struct TrainResult {
    Vec params;
    std::vector<StepRecord> steps;
    bool aborted = false;
    std::size_t abort_step = 0;
};

// One task of plain SGD (no momentum, no decay) with the learner's gradient
// hook applied per step; the learner memory is updated at task end.
// Deterministic given the config seed.
TrainResult train_task(LearnerState& state, const LearnerConfig& config, const TaskDataset& task,
                       const MlpModel& model, const Vec& params_in);

// Evaluation through the learner's classifier: nearest-class-mean on the
// last-hidden-layer features for icarl_lite (falling back to logits while no
// exemplars exist), argmax logits otherwise. restrict_classes, when nonempty,
// confines the prediction to those classes (task-incremental scoring).
EvalMetrics evaluate_learner(const LearnerState& state, const MlpModel& model, const Vec& params,
                             const Batch& eval, const std::vector<int>& restrict_classes = {});

}  // namespace clab
