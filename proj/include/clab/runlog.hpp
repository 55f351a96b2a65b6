#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "clab/vec.hpp"

namespace clab {

// Everything recorded while running one sweep cell. acc/loss have one row
// per checkpoint (0..T, row 0 is the untrained network) and one column per
// task (evaluated on that task's test set).
struct RunLog {
    std::string config_hash;
    std::string algorithm;
    double lr = 0.0;
    std::uint64_t seed = 0;
    int T = 0;
    std::size_t P = 0;
    std::vector<Vec> checkpoints;  // theta_0..theta_T
    std::vector<std::vector<double>> acc;
    std::vector<std::vector<double>> loss;
    std::vector<double> delta_norms;       // per task
    std::vector<double> dist_from_init;    // per task
    std::vector<double> final_train_loss;  // per task
    std::vector<std::size_t> memory_counts;
    std::vector<double> memory_norms;  // scale of the consolidated memory, per task
    std::vector<double> wall_ms;  // per task; persisted in the timing sidecar
    bool aborted = false;
    int aborted_task = 0;  // 1-based, 0 when clean
};

// Binary checkpoint: "CLAB" magic, u32 version, u64 length, then raw
// little-endian 64-bit reals. Round-trips every bit.
void save_checkpoint(const std::string& path, const Vec& params);
Vec load_checkpoint(const std::string& path);

// A run cell on disk is <stem>.csv (deterministic results), <stem>_timing.csv
// (wall-clock sidecar) and <stem>_t<k>.clab checkpoints under dir.
void save_runlog(const std::string& dir, const std::string& stem, const RunLog& log);
RunLog load_runlog(const std::string& dir, const std::string& stem);

// Exact decimal form: shortest text that parses back to the same double.
std::string format_double(double v);

}  // namespace clab
