#pragma once

#include <cstdint>
#include <utility>
#include <vector>

#include "clab/mlp.hpp"

namespace clab {

enum class Setting { domain_il, task_il, class_il };

struct TaskDataset {
    int task_id = 0;  // 1-based position in the sequence
    Batch train;
    Batch test;
    std::vector<int> classes;  // global class ids present in this task
    Setting setting = Setting::domain_il;
};

struct TaskSequence {
    std::vector<TaskDataset> tasks;
    // For class_il sequences: evaluate with the prediction restricted to each
    // task's own classes (task-incremental scoring) instead of all classes.
    bool task_il_eval = false;

    int T() const { return static_cast<int>(tasks.size()); }
};

// Gaussian clusters with unit covariance centered at seeded random unit
// directions scaled by `separation`. Samples are class-major.
Batch synth_blobs(int n_per_class, int classes, int dim, double separation, std::uint64_t seed);

// Rotation by `angle` in the (axis_a, axis_b) input plane; labels unchanged.
Batch rotate_batch_plane(const Batch& base, int axis_a, int axis_b, double angle);

// Rotation of rows x cols image inputs about the image center, bilinear
// resampling with zero padding.
Batch rotate_batch_image(const Batch& base, int rows, int cols, double angle);

// Domain-incremental stream: task t applies one fixed rotation with an angle
// drawn i.i.d. uniform from [0, max_angle). The train/test split (5:1) is
// drawn once from the seed and shared across tasks so label marginals match
// exactly.
TaskSequence make_rotated_sequence(const Batch& base, int T, double max_angle,
                                   std::pair<int, int> plane, std::uint64_t seed);

// Image-plane variant of the rotated stream.
TaskSequence make_rotated_image_sequence(const Batch& base, int T, int rows, int cols,
                                         double max_angle, std::uint64_t seed);

// Class-incremental stream: task t holds the t-th block of classes_per_task
// classes (ascending class ids). Deterministic round-robin 5:1 train/test
// split within each class.
TaskSequence make_split_sequence(const Batch& base, int T, int classes_per_task);

}  // namespace clab
