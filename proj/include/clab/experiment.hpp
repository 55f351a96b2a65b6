#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "clab/analysis.hpp"
#include "clab/learners.hpp"
#include "clab/mlp.hpp"
#include "clab/runlog.hpp"
#include "clab/tasks.hpp"

namespace clab {

// Environment variable holding the default output root used when a config
// leaves output_dir empty.
inline constexpr const char* kOutputRootEnv = "CLAB_OUTPUT_ROOT";

struct SequenceSpec {
    std::string generator = "rotated_blobs";  // rotated_blobs | split_blobs
    int n_per_class = 20;
    int classes = 5;
    int dim = 8;
    double separation = 4.0;
    int T = 10;
    int plane_a = 0;
    int plane_b = 1;
    double max_angle = 3.14159265358979323846;
    int classes_per_task = 1;
    bool task_il_eval = false;  // split sequences: score within each task's classes
    std::uint64_t data_seed = 1;
};

struct AnalysisToggles {
    bool spectrum = false;
    bool perturbation = false;
    bool distances = true;
    bool theorem_checks = false;
};

struct ExperimentConfig {
    int schema_version = 1;
    SequenceSpec sequence;
    MlpModel model;
    LearnerConfig learner;  // lr and seed are overridden per sweep cell
    std::vector<double> lr_grid;
    std::vector<std::uint64_t> seeds;
    std::string output_dir;
    AnalysisToggles analysis;

    void validate() const;
};

ExperimentConfig config_from_json(const std::string& text);
std::string config_to_json(const ExperimentConfig& config);
ExperimentConfig load_config(const std::string& path);

// FNV-1a over the canonical config serialization plus the cell's lr/seed.
std::string config_hash(const ExperimentConfig& config, double lr, std::uint64_t seed);
std::string cell_stem(const ExperimentConfig& config, double lr, std::uint64_t seed);

// output_dir, or the environment root (falling back to "runs") when unset.
std::string resolve_output_dir(const ExperimentConfig& config);

// The task stream for one sweep cell (data and rotations depend on the seed).
TaskSequence build_sequence(const ExperimentConfig& config, std::uint64_t seed);

// Train the sequence, evaluating every task's test set at every checkpoint.
RunLog run_experiment(const ExperimentConfig& config, double lr, std::uint64_t seed);

// run_experiment plus persistence into the output directory.
RunLog run_and_persist(const ExperimentConfig& config, double lr, std::uint64_t seed);

struct SweepSummary {
    int total = 0;
    int computed = 0;
    int cached = 0;
    int failed = 0;
    std::string dir;
};

// Every (lr, seed) cell; cells already on disk with a matching config hash
// are not recomputed. Cells run in parallel on up to `jobs` threads and the
// manifest is written once at the end.
SweepSummary sweep(const ExperimentConfig& config, int jobs = 1);

// Writes analysis_<kind>_<stem>.csv next to the run.
// kind: spectrum | perturbation | theorem_checks | distances.
void analyze_run(const ExperimentConfig& config, const RunLog& log, const std::string& kind,
                 const std::string& dir, const std::string& stem);

// Aggregated CSV + plain-text table + plot-data CSVs for a sweep directory.
void write_report(const std::string& run_dir);

}  // namespace clab
