#include "clab/tasks.hpp"

#include <algorithm>
#include <cmath>
#include <functional>
#include <map>
#include <numeric>
#include <set>
#include <stdexcept>

#include "clab/rng.hpp"

namespace clab {

namespace {

std::vector<int> sorted_classes(const Batch& b) {
    std::set<int> s(b.labels.begin(), b.labels.end());
    return {s.begin(), s.end()};
}

// 5:1 split over a fixed index permutation.
void split_indices(std::size_t n, Rng& rng, std::vector<std::size_t>& train,
                   std::vector<std::size_t>& test) {
    if (n < 2) throw std::invalid_argument("need at least 2 samples to split train/test");
    std::vector<std::size_t> idx(n);
    std::iota(idx.begin(), idx.end(), 0);
    rng.shuffle(idx);
    std::size_t n_test = std::max<std::size_t>(1, n / 6);
    test.assign(idx.begin(), idx.begin() + n_test);
    train.assign(idx.begin() + n_test, idx.end());
    std::sort(train.begin(), train.end());
    std::sort(test.begin(), test.end());
}

Batch take(const Batch& b, const std::vector<std::size_t>& idx) {
    Batch out;
    for (std::size_t i : idx) {
        out.inputs.push_back(b.inputs[i]);
        if (!b.labels.empty()) out.labels.push_back(b.labels[i]);
        if (!b.targets.empty()) out.targets.push_back(b.targets[i]);
    }
    return out;
}

TaskSequence rotated_sequence_impl(const Batch& base, int T, double max_angle,
                                   std::uint64_t seed,
                                   const std::function<Batch(const Batch&, double)>& rotate) {
    if (T < 1) throw std::invalid_argument("T must be >= 1");
    if (max_angle < 0.0) throw std::invalid_argument("max_angle must be >= 0");

    Rng angle_rng(mix_seed(seed, 1));
    Rng split_rng(mix_seed(seed, 2));
    std::vector<std::size_t> train_idx, test_idx;
    split_indices(base.size(), split_rng, train_idx, test_idx);

    TaskSequence seq;
    auto classes = sorted_classes(base);
    for (int t = 1; t <= T; ++t) {
        double angle = max_angle > 0.0 ? angle_rng.uniform(0.0, max_angle) : 0.0;
        Batch rotated = rotate(base, angle);
        TaskDataset task;
        task.task_id = t;
        task.train = take(rotated, train_idx);
        task.test = take(rotated, test_idx);
        task.classes = classes;
        task.setting = Setting::domain_il;
        seq.tasks.push_back(std::move(task));
    }
    return seq;
}

}  // namespace

Batch synth_blobs(int n_per_class, int classes, int dim, double separation,
                  std::uint64_t seed) {
    if (classes < 2) throw std::invalid_argument("synth_blobs: classes must be >= 2");
    if (dim < 2) throw std::invalid_argument("synth_blobs: dim must be >= 2");
    if (n_per_class < 1) throw std::invalid_argument("synth_blobs: n_per_class must be >= 1");

    Rng rng(seed);
    std::vector<Vec> centers(classes);
    for (int c = 0; c < classes; ++c) {
        Vec u = rng.normal_vec(dim);
        double n = vec::nrm2(u);
        vec::scal(separation / (n > 0.0 ? n : 1.0), u);
        centers[c] = u;
    }
    Batch b;
    for (int c = 0; c < classes; ++c)
        for (int i = 0; i < n_per_class; ++i) {
            Vec x = rng.normal_vec(dim);
            vec::axpy(1.0, centers[c], x);
            b.inputs.push_back(std::move(x));
            b.labels.push_back(c);
        }
    return b;
}

Batch rotate_batch_plane(const Batch& base, int axis_a, int axis_b, double angle) {
    if (base.size() == 0) throw std::invalid_argument("empty batch");
    int dim = static_cast<int>(base.inputs[0].size());
    if (axis_a < 0 || axis_b < 0 || axis_a >= dim || axis_b >= dim || axis_a == axis_b)
        throw std::invalid_argument("rotation plane indices out of range");
    double c = std::cos(angle), s = std::sin(angle);
    Batch out = base;
    for (auto& x : out.inputs) {
        double xa = x[axis_a], xb = x[axis_b];
        x[axis_a] = c * xa - s * xb;
        x[axis_b] = s * xa + c * xb;
    }
    return out;
}

Batch rotate_batch_image(const Batch& base, int rows, int cols, double angle) {
    if (base.size() == 0) throw std::invalid_argument("empty batch");
    if (rows * cols != static_cast<int>(base.inputs[0].size()))
        throw std::invalid_argument("image dims do not match input length");
    double c = std::cos(angle), s = std::sin(angle);
    double cy = (rows - 1) / 2.0, cx = (cols - 1) / 2.0;
    Batch out = base;
    for (std::size_t n = 0; n < base.size(); ++n) {
        const Vec& src = base.inputs[n];
        Vec& dst = out.inputs[n];
        for (int r = 0; r < rows; ++r)
            for (int q = 0; q < cols; ++q) {
                // Inverse-map the output pixel into the source image.
                double dy = r - cy, dx = q - cx;
                double sy = c * dy + s * dx + cy;
                double sx = -s * dy + c * dx + cx;
                int y0 = static_cast<int>(std::floor(sy));
                int x0 = static_cast<int>(std::floor(sx));
                double fy = sy - y0, fx = sx - x0;
                auto at = [&](int y, int x) -> double {
                    if (y < 0 || y >= rows || x < 0 || x >= cols) return 0.0;
                    return src[static_cast<std::size_t>(y) * cols + x];
                };
                dst[static_cast<std::size_t>(r) * cols + q] =
                    (1 - fy) * ((1 - fx) * at(y0, x0) + fx * at(y0, x0 + 1)) +
                    fy * ((1 - fx) * at(y0 + 1, x0) + fx * at(y0 + 1, x0 + 1));
            }
    }
    return out;
}

TaskSequence make_rotated_sequence(const Batch& base, int T, double max_angle,
                                   std::pair<int, int> plane, std::uint64_t seed) {
    return rotated_sequence_impl(base, T, max_angle, seed, [&](const Batch& b, double angle) {
        return rotate_batch_plane(b, plane.first, plane.second, angle);
    });
}

TaskSequence make_rotated_image_sequence(const Batch& base, int T, int rows, int cols,
                                         double max_angle, std::uint64_t seed) {
    return rotated_sequence_impl(base, T, max_angle, seed, [&](const Batch& b, double angle) {
        return rotate_batch_image(b, rows, cols, angle);
    });
}

TaskSequence make_split_sequence(const Batch& base, int T, int classes_per_task) {
    auto classes = sorted_classes(base);
    if (static_cast<std::size_t>(T) * classes_per_task > classes.size())
        throw std::invalid_argument("make_split_sequence: not enough classes (" +
                                    std::to_string(classes.size()) + ") for " +
                                    std::to_string(T) + " x " +
                                    std::to_string(classes_per_task));

    TaskSequence seq;
    for (int t = 1; t <= T; ++t) {
        TaskDataset task;
        task.task_id = t;
        task.setting = Setting::class_il;
        task.classes.assign(classes.begin() + static_cast<std::size_t>(t - 1) * classes_per_task,
                            classes.begin() + static_cast<std::size_t>(t) * classes_per_task);
        std::set<int> cls(task.classes.begin(), task.classes.end());
        std::map<int, int> within_class;
        for (std::size_t i = 0; i < base.size(); ++i) {
            if (!cls.count(base.labels[i])) continue;
            int& count = within_class[base.labels[i]];
            Batch& dest = (count % 6 == 5) ? task.test : task.train;
            dest.inputs.push_back(base.inputs[i]);
            dest.labels.push_back(base.labels[i]);
            ++count;
        }
        if (task.train.size() == 0 || task.test.size() == 0)
            throw std::invalid_argument("make_split_sequence: task " + std::to_string(t) +
                                        " has an empty split");
        seq.tasks.push_back(std::move(task));
    }
    return seq;
}

}  // namespace clab
