#include "clab/runlog.hpp"

#include <cstdio>
#include <cstring>
#include <fstream>
#include <sstream>
#include <stdexcept>

namespace clab {

std::string format_double(double v) {
    char buf[40];
    for (int prec = 15; prec <= 17; ++prec) {
        std::snprintf(buf, sizeof buf, "%.*g", prec, v);
        if (std::strtod(buf, nullptr) == v) return buf;
    }
    return buf;
}

namespace {

void put_u32_le(std::ostream& os, std::uint32_t v) {
    unsigned char b[4] = {static_cast<unsigned char>(v), static_cast<unsigned char>(v >> 8),
                          static_cast<unsigned char>(v >> 16),
                          static_cast<unsigned char>(v >> 24)};
    os.write(reinterpret_cast<const char*>(b), 4);
}

void put_u64_le(std::ostream& os, std::uint64_t v) {
    unsigned char b[8];
    for (int i = 0; i < 8; ++i) b[i] = static_cast<unsigned char>(v >> (8 * i));
    os.write(reinterpret_cast<const char*>(b), 8);
}

std::uint32_t get_u32_le(std::istream& is) {
    unsigned char b[4];
    is.read(reinterpret_cast<char*>(b), 4);
    if (!is) throw std::runtime_error("checkpoint: truncated header");
    return static_cast<std::uint32_t>(b[0]) | (static_cast<std::uint32_t>(b[1]) << 8) |
           (static_cast<std::uint32_t>(b[2]) << 16) | (static_cast<std::uint32_t>(b[3]) << 24);
}

std::uint64_t get_u64_le(std::istream& is) {
    unsigned char b[8];
    is.read(reinterpret_cast<char*>(b), 8);
    if (!is) throw std::runtime_error("checkpoint: truncated header");
    std::uint64_t v = 0;
    for (int i = 0; i < 8; ++i) v |= static_cast<std::uint64_t>(b[i]) << (8 * i);
    return v;
}

constexpr std::uint32_t kCheckpointVersion = 1;

}  // namespace

void save_checkpoint(const std::string& path, const Vec& params) {
    std::ofstream f(path, std::ios::binary | std::ios::trunc);
    if (!f) throw std::runtime_error("cannot write checkpoint " + path);
    f.write("CLAB", 4);
    put_u32_le(f, kCheckpointVersion);
    put_u64_le(f, params.size());
    for (double x : params) {
        std::uint64_t bits;
        std::memcpy(&bits, &x, 8);
        put_u64_le(f, bits);
    }
    if (!f) throw std::runtime_error("short write on checkpoint " + path);
}

Vec load_checkpoint(const std::string& path) {
    std::ifstream f(path, std::ios::binary);
    if (!f) throw std::runtime_error("cannot read checkpoint " + path);
    char magic[4];
    f.read(magic, 4);
    if (!f || std::memcmp(magic, "CLAB", 4) != 0)
        throw std::runtime_error("bad checkpoint magic in " + path);
    std::uint32_t version = get_u32_le(f);
    if (version != kCheckpointVersion)
        throw std::runtime_error("unsupported checkpoint version " + std::to_string(version));
    std::uint64_t n = get_u64_le(f);
    Vec params(n);
    for (std::uint64_t i = 0; i < n; ++i) {
        std::uint64_t bits = get_u64_le(f);
        double x;
        std::memcpy(&x, &bits, 8);
        params[i] = x;
    }
    return params;
}

namespace {

struct CsvRow {
    std::string kind, i, j, value;
};

std::vector<CsvRow> read_csv(const std::string& path) {
    std::ifstream f(path);
    if (!f) throw std::runtime_error("cannot read " + path);
    std::vector<CsvRow> rows;
    std::string line;
    bool header = true;
    while (std::getline(f, line)) {
        if (header) {
            header = false;
            continue;
        }
        if (line.empty()) continue;
        CsvRow row;
        std::string* fields[4] = {&row.kind, &row.i, &row.j, &row.value};
        std::size_t start = 0;
        for (int c = 0; c < 4; ++c) {
            std::size_t comma = c < 3 ? line.find(',', start) : std::string::npos;
            *fields[c] = line.substr(start, comma == std::string::npos ? std::string::npos
                                                                       : comma - start);
            if (comma == std::string::npos) break;
            start = comma + 1;
        }
        rows.push_back(std::move(row));
    }
    return rows;
}

}  // namespace

void save_runlog(const std::string& dir, const std::string& stem, const RunLog& log) {
    const std::string base = dir + "/" + stem;
    std::ofstream f(base + ".csv", std::ios::trunc);
    if (!f) throw std::runtime_error("cannot write " + base + ".csv");
    f << "kind,i,j,value\n";
    f << "meta,config_hash,," << log.config_hash << "\n";
    f << "meta,algorithm,," << log.algorithm << "\n";
    f << "meta,lr,," << format_double(log.lr) << "\n";
    f << "meta,seed,," << log.seed << "\n";
    f << "meta,T,," << log.T << "\n";
    f << "meta,P,," << log.P << "\n";
    f << "meta,aborted,," << (log.aborted ? 1 : 0) << "\n";
    f << "meta,aborted_task,," << log.aborted_task << "\n";
    for (std::size_t t = 0; t < log.acc.size(); ++t)
        for (std::size_t o = 0; o < log.acc[t].size(); ++o)
            f << "acc," << t << "," << (o + 1) << "," << format_double(log.acc[t][o]) << "\n";
    for (std::size_t t = 0; t < log.loss.size(); ++t)
        for (std::size_t o = 0; o < log.loss[t].size(); ++o)
            f << "loss," << t << "," << (o + 1) << "," << format_double(log.loss[t][o]) << "\n";
    for (std::size_t t = 0; t < log.delta_norms.size(); ++t)
        f << "delta_norm," << (t + 1) << ",," << format_double(log.delta_norms[t]) << "\n";
    for (std::size_t t = 0; t < log.dist_from_init.size(); ++t)
        f << "dist_init," << (t + 1) << ",," << format_double(log.dist_from_init[t]) << "\n";
    for (std::size_t t = 0; t < log.final_train_loss.size(); ++t)
        f << "train_loss," << (t + 1) << ",," << format_double(log.final_train_loss[t]) << "\n";
    for (std::size_t t = 0; t < log.memory_counts.size(); ++t)
        f << "memory_count," << (t + 1) << ",," << log.memory_counts[t] << "\n";
    for (std::size_t t = 0; t < log.memory_norms.size(); ++t)
        f << "memory_norm," << (t + 1) << ",," << format_double(log.memory_norms[t]) << "\n";
    if (!f) throw std::runtime_error("short write on " + base + ".csv");
    f.close();

    // Wall-clock lives in a sidecar so the results file stays byte-identical
    // across reruns of the same cell.
    std::ofstream ft(base + "_timing.csv", std::ios::trunc);
    ft << "kind,i,j,value\n";
    for (std::size_t t = 0; t < log.wall_ms.size(); ++t)
        ft << "wall_ms," << (t + 1) << ",," << format_double(log.wall_ms[t]) << "\n";
    ft.close();

    for (std::size_t k = 0; k < log.checkpoints.size(); ++k)
        save_checkpoint(base + "_t" + std::to_string(k) + ".clab", log.checkpoints[k]);
}

RunLog load_runlog(const std::string& dir, const std::string& stem) {
    const std::string base = dir + "/" + stem;
    RunLog log;
    auto rows = read_csv(base + ".csv");
    auto matrix_set = [](std::vector<std::vector<double>>& m, std::size_t t, std::size_t o,
                         double v) {
        if (m.size() <= t) m.resize(t + 1);
        if (m[t].size() <= o) m[t].resize(o + 1, 0.0);
        m[t][o] = v;
    };
    auto vector_set = [](std::vector<double>& m, std::size_t t, double v) {
        if (m.size() <= t) m.resize(t + 1, 0.0);
        m[t] = v;
    };
    for (const auto& r : rows) {
        if (r.kind == "meta") {
            if (r.i == "config_hash") log.config_hash = r.value;
            else if (r.i == "algorithm") log.algorithm = r.value;
            else if (r.i == "lr") log.lr = std::strtod(r.value.c_str(), nullptr);
            else if (r.i == "seed") log.seed = std::strtoull(r.value.c_str(), nullptr, 10);
            else if (r.i == "T") log.T = std::atoi(r.value.c_str());
            else if (r.i == "P") log.P = std::strtoull(r.value.c_str(), nullptr, 10);
            else if (r.i == "aborted") log.aborted = r.value == "1";
            else if (r.i == "aborted_task") log.aborted_task = std::atoi(r.value.c_str());
        } else if (r.kind == "acc" || r.kind == "loss") {
            std::size_t t = std::strtoull(r.i.c_str(), nullptr, 10);
            std::size_t o = std::strtoull(r.j.c_str(), nullptr, 10) - 1;
            matrix_set(r.kind == "acc" ? log.acc : log.loss, t, o,
                       std::strtod(r.value.c_str(), nullptr));
        } else if (r.kind == "delta_norm" || r.kind == "dist_init" || r.kind == "train_loss") {
            std::size_t t = std::strtoull(r.i.c_str(), nullptr, 10) - 1;
            double v = std::strtod(r.value.c_str(), nullptr);
            if (r.kind == "delta_norm") vector_set(log.delta_norms, t, v);
            else if (r.kind == "dist_init") vector_set(log.dist_from_init, t, v);
            else vector_set(log.final_train_loss, t, v);
        } else if (r.kind == "memory_count") {
            std::size_t t = std::strtoull(r.i.c_str(), nullptr, 10) - 1;
            if (log.memory_counts.size() <= t) log.memory_counts.resize(t + 1, 0);
            log.memory_counts[t] = std::strtoull(r.value.c_str(), nullptr, 10);
        } else if (r.kind == "memory_norm") {
            std::size_t t = std::strtoull(r.i.c_str(), nullptr, 10) - 1;
            vector_set(log.memory_norms, t, std::strtod(r.value.c_str(), nullptr));
        }
    }
    std::ifstream timing(base + "_timing.csv");
    if (timing) {
        timing.close();
        for (const auto& r : read_csv(base + "_timing.csv")) {
            if (r.kind != "wall_ms") continue;
            std::size_t t = std::strtoull(r.i.c_str(), nullptr, 10) - 1;
            vector_set(log.wall_ms, t, std::strtod(r.value.c_str(), nullptr));
        }
    }
    for (int k = 0; k <= log.T; ++k) {
        std::string path = base + "_t" + std::to_string(k) + ".clab";
        std::ifstream probe(path, std::ios::binary);
        if (!probe) break;
        probe.close();
        log.checkpoints.push_back(load_checkpoint(path));
    }
    return log;
}

}  // namespace clab
