#include "clab/experiment.hpp"

#include <algorithm>
#include <atomic>
#include <chrono>
#include <cmath>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <map>
#include <mutex>
#include <set>
#include <sstream>
#include <stdexcept>
#include <thread>

#include <json.hpp>

#include "clab/rng.hpp"

namespace clab {

namespace fs = std::filesystem;
using nlohmann::json;

void ExperimentConfig::validate() const {
    if (schema_version != 1)
        throw std::invalid_argument("unsupported schema_version " +
                                    std::to_string(schema_version));
    if (lr_grid.empty()) throw std::invalid_argument("lr_grid must be nonempty");
    if (seeds.empty()) throw std::invalid_argument("seeds must be nonempty");
    std::set<std::uint64_t> distinct(seeds.begin(), seeds.end());
    if (distinct.size() != seeds.size()) throw std::invalid_argument("seeds must be distinct");
    if (sequence.generator != "rotated_blobs" && sequence.generator != "split_blobs")
        throw std::invalid_argument("unknown sequence generator: " + sequence.generator);
    model.validate();
    if (model.input_dim() != sequence.dim)
        throw std::invalid_argument("model input dim " + std::to_string(model.input_dim()) +
                                    " != sequence dim " + std::to_string(sequence.dim));
    if (model.output_dim() != sequence.classes)
        throw std::invalid_argument("model output dim != sequence classes");
    LearnerConfig probe = learner;
    probe.lr = lr_grid.front();
    probe.validate();
}

namespace {

json sequence_to_json(const SequenceSpec& s) {
    return json{{"generator", s.generator},
                {"n_per_class", s.n_per_class},
                {"classes", s.classes},
                {"dim", s.dim},
                {"separation", s.separation},
                {"T", s.T},
                {"plane", {s.plane_a, s.plane_b}},
                {"max_angle", s.max_angle},
                {"classes_per_task", s.classes_per_task},
                {"task_il_eval", s.task_il_eval},
                {"data_seed", s.data_seed}};
}

SequenceSpec sequence_from_json(const json& j) {
    SequenceSpec s;
    s.generator = j.value("generator", s.generator);
    s.n_per_class = j.value("n_per_class", s.n_per_class);
    s.classes = j.value("classes", s.classes);
    s.dim = j.value("dim", s.dim);
    s.separation = j.value("separation", s.separation);
    s.T = j.value("T", s.T);
    if (j.contains("plane")) {
        s.plane_a = j["plane"].at(0).get<int>();
        s.plane_b = j["plane"].at(1).get<int>();
    }
    s.max_angle = j.value("max_angle", s.max_angle);
    s.classes_per_task = j.value("classes_per_task", s.classes_per_task);
    s.task_il_eval = j.value("task_il_eval", s.task_il_eval);
    s.data_seed = j.value("data_seed", s.data_seed);
    return s;
}

json model_to_json(const MlpModel& m) {
    return json{{"layers", m.layer_sizes},
                {"activation", m.activation == Activation::relu ? "relu" : "tanh"},
                {"loss", m.loss_kind == LossKind::cross_entropy ? "cross_entropy" : "mse"}};
}

MlpModel model_from_json(const json& j) {
    MlpModel m;
    m.layer_sizes = j.at("layers").get<std::vector<int>>();
    std::string act = j.value("activation", "tanh");
    if (act == "relu") m.activation = Activation::relu;
    else if (act == "tanh") m.activation = Activation::tanh;
    else throw std::invalid_argument("unknown activation: " + act);
    std::string loss = j.value("loss", "cross_entropy");
    if (loss == "cross_entropy") m.loss_kind = LossKind::cross_entropy;
    else if (loss == "mse") m.loss_kind = LossKind::mse;
    else throw std::invalid_argument("unknown loss: " + loss);
    return m;
}

json learner_to_json(const LearnerConfig& c) {
    return json{{"algorithm", to_string(c.algorithm)},
                {"epochs", c.epochs},
                {"batch_size", c.batch_size},
                {"buffer_size", c.buffer_size},
                {"ewc_lambda", c.ewc_lambda},
                {"ewc_gamma", c.ewc_gamma},
                {"si_c", c.si_c},
                {"si_xi", c.si_xi},
                {"ogd_samples_per_task", c.ogd_samples_per_task},
                {"buffer_selection",
                 c.buffer_selection == BufferSelection::herding ? "herding" : "random"},
                {"nullspace_topk", c.nullspace_topk},
                {"nullspace_tol", c.nullspace_tol},
                {"dropout_prob", c.dropout_prob},
                {"lr_decay_per_task", c.lr_decay_per_task}};
}

LearnerConfig learner_from_json(const json& j) {
    LearnerConfig c;
    c.algorithm = algorithm_from_string(j.at("algorithm").get<std::string>());
    // Optional preset applied first; explicit fields below override it.
    if (j.contains("sgd_preset")) {
        std::string preset = j["sgd_preset"].get<std::string>();
        if (preset != "none") {
            if (c.algorithm != Algorithm::sgd)
                throw std::invalid_argument("sgd_preset requires algorithm sgd");
            SgdPresetPair pair = make_sgd_presets(c.lr, c.epochs, c.seed);
            if (preset == "plastic") c = pair.plastic;
            else if (preset == "stable") c = pair.stable;
            else throw std::invalid_argument("unknown sgd_preset: " + preset);
        }
    }
    c.epochs = j.value("epochs", c.epochs);
    c.batch_size = j.value("batch_size", c.batch_size);
    c.buffer_size = j.value("buffer_size", c.buffer_size);
    c.ewc_lambda = j.value("ewc_lambda", c.ewc_lambda);
    c.ewc_gamma = j.value("ewc_gamma", c.ewc_gamma);
    c.si_c = j.value("si_c", c.si_c);
    c.si_xi = j.value("si_xi", c.si_xi);
    c.ogd_samples_per_task = j.value("ogd_samples_per_task", c.ogd_samples_per_task);
    std::string sel = j.value("buffer_selection", "herding");
    if (sel == "herding") c.buffer_selection = BufferSelection::herding;
    else if (sel == "random") c.buffer_selection = BufferSelection::random;
    else throw std::invalid_argument("unknown buffer_selection: " + sel);
    c.nullspace_topk = j.value("nullspace_topk", c.nullspace_topk);
    c.nullspace_tol = j.value("nullspace_tol", c.nullspace_tol);
    c.dropout_prob = j.value("dropout_prob", c.dropout_prob);
    c.lr_decay_per_task = j.value("lr_decay_per_task", c.lr_decay_per_task);
    return c;
}

}  // namespace

ExperimentConfig config_from_json(const std::string& text) {
    json j = json::parse(text);
    ExperimentConfig c;
    c.schema_version = j.value("schema_version", 1);
    c.sequence = sequence_from_json(j.at("sequence"));
    c.model = model_from_json(j.at("model"));
    c.learner = learner_from_json(j.at("learner"));
    c.lr_grid = j.value("lr_grid", std::vector<double>(std::begin(kDefaultLrGrid),
                                                       std::end(kDefaultLrGrid)));
    c.seeds = j.value("seeds", std::vector<std::uint64_t>(std::begin(kSweepSeeds),
                                                          std::end(kSweepSeeds)));
    c.output_dir = j.value("output_dir", std::string());
    if (j.contains("analysis")) {
        const json& a = j["analysis"];
        c.analysis.spectrum = a.value("spectrum", false);
        c.analysis.perturbation = a.value("perturbation", false);
        c.analysis.distances = a.value("distances", true);
        c.analysis.theorem_checks = a.value("theorem_checks", false);
    }
    c.validate();
    return c;
}

std::string config_to_json(const ExperimentConfig& c) {
    json j{{"schema_version", c.schema_version},
           {"sequence", sequence_to_json(c.sequence)},
           {"model", model_to_json(c.model)},
           {"learner", learner_to_json(c.learner)},
           {"lr_grid", c.lr_grid},
           {"seeds", c.seeds},
           {"output_dir", c.output_dir},
           {"analysis",
            json{{"spectrum", c.analysis.spectrum},
                 {"perturbation", c.analysis.perturbation},
                 {"distances", c.analysis.distances},
                 {"theorem_checks", c.analysis.theorem_checks}}}};
    return j.dump(2);
}

ExperimentConfig load_config(const std::string& path) {
    std::ifstream f(path);
    if (!f) throw std::invalid_argument("cannot open config " + path);
    std::stringstream ss;
    ss << f.rdbuf();
    return config_from_json(ss.str());
}

std::string config_hash(const ExperimentConfig& config, double lr, std::uint64_t seed) {
    // Only what determines the cell's result: where the output lands, the
    // sweep grid, and the analysis toggles do not affect the RunLog.
    json semantic{{"sequence", sequence_to_json(config.sequence)},
                  {"model", model_to_json(config.model)},
                  {"learner", learner_to_json(config.learner)}};
    std::string canon =
        semantic.dump() + "|lr=" + format_double(lr) + "|seed=" + std::to_string(seed);
    std::uint64_t h = 0xcbf29ce484222325ULL;
    for (unsigned char ch : canon) {
        h ^= ch;
        h *= 0x100000001b3ULL;
    }
    char buf[17];
    std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(h));
    return buf;
}

std::string cell_stem(const ExperimentConfig& config, double lr, std::uint64_t seed) {
    return "run_" + to_string(config.learner.algorithm) + "_lr" + format_double(lr) + "_seed" +
           std::to_string(seed);
}

std::string resolve_output_dir(const ExperimentConfig& config) {
    if (!config.output_dir.empty()) return config.output_dir;
    if (const char* root = std::getenv(kOutputRootEnv)) return root;
    return "runs";
}

TaskSequence build_sequence(const ExperimentConfig& config, std::uint64_t seed) {
    const SequenceSpec& s = config.sequence;
    Batch base = synth_blobs(s.n_per_class, s.classes, s.dim, s.separation,
                             mix_seed(s.data_seed, seed));
    if (s.generator == "rotated_blobs")
        return make_rotated_sequence(base, s.T, s.max_angle, {s.plane_a, s.plane_b},
                                     mix_seed(seed, 0x0707));
    TaskSequence seq = make_split_sequence(base, s.T, s.classes_per_task);
    seq.task_il_eval = s.task_il_eval;
    return seq;
}

RunLog run_experiment(const ExperimentConfig& config, double lr, std::uint64_t seed) {
    config.validate();
    TaskSequence seq = build_sequence(config, seed);
    const int T = seq.T();

    LearnerConfig lc = config.learner;
    lc.lr = lr;
    lc.seed = seed;

    Vec params = init_params(config.model, mix_seed(seed, 0xC0FFEE));
    LearnerState state = make_learner_state(lc, params);

    RunLog log;
    log.config_hash = config_hash(config, lr, seed);
    log.algorithm = to_string(lc.algorithm);
    log.lr = lr;
    log.seed = seed;
    log.T = T;
    log.P = params.size();

    auto eval_all = [&]() {
        std::vector<double> acc_row, loss_row;
        for (const auto& task : seq.tasks) {
            std::vector<int> restrict_classes;
            if (seq.task_il_eval) restrict_classes = task.classes;
            EvalMetrics m = evaluate_learner(state, config.model, params, task.test,
                                             restrict_classes);
            acc_row.push_back(m.accuracy);
            loss_row.push_back(m.loss);
        }
        log.acc.push_back(std::move(acc_row));
        log.loss.push_back(std::move(loss_row));
    };

    log.checkpoints.push_back(params);
    eval_all();

    for (const auto& task : seq.tasks) {
        auto start = std::chrono::steady_clock::now();
        TrainResult res = train_task(state, lc, task, config.model, params);
        auto stop = std::chrono::steady_clock::now();

        log.wall_ms.push_back(
            std::chrono::duration_cast<std::chrono::duration<double, std::milli>>(stop - start)
                .count());
        log.delta_norms.push_back(vec::nrm2(vec::sub(res.params, params)));
        params = res.params;
        log.dist_from_init.push_back(vec::nrm2(vec::sub(params, log.checkpoints.front())));
        log.final_train_loss.push_back(res.steps.empty() ? 0.0 : res.steps.back().loss);

        std::size_t mem = state.buffer.items.size() + state.ogd.vectors.size() +
                          state.nullspace.records.size();
        for (const auto& [key, items] : state.icarl.exemplars) mem += items.size();
        if (state.fisher.consolidated) mem += 1;
        log.memory_counts.push_back(mem);
        double mem_norm = 0.0;
        if (state.fisher.consolidated) mem_norm = vec::nrm2(state.fisher.fisher_diag);
        else if (lc.algorithm == Algorithm::si) mem_norm = vec::nrm2(state.si.omega);
        log.memory_norms.push_back(mem_norm);

        log.checkpoints.push_back(params);
        eval_all();

        if (res.aborted) {
            log.aborted = true;
            log.aborted_task = task.task_id;
            break;
        }
    }
    return log;
}

RunLog run_and_persist(const ExperimentConfig& config, double lr, std::uint64_t seed) {
    std::string dir = resolve_output_dir(config);
    fs::create_directories(dir);
    RunLog log = run_experiment(config, lr, seed);
    save_runlog(dir, cell_stem(config, lr, seed), log);

    std::string stem = cell_stem(config, lr, seed);
    if (config.analysis.distances) analyze_run(config, log, "distances", dir, stem);
    if (config.analysis.spectrum) analyze_run(config, log, "spectrum", dir, stem);
    if (config.analysis.perturbation) analyze_run(config, log, "perturbation", dir, stem);
    if (config.analysis.theorem_checks) analyze_run(config, log, "theorem_checks", dir, stem);
    return log;
}

SweepSummary sweep(const ExperimentConfig& config, int jobs) {
    config.validate();
    std::string dir = resolve_output_dir(config);
    fs::create_directories(dir);
    {
        std::ofstream cf(dir + "/config.json", std::ios::trunc);
        cf << config_to_json(config) << "\n";
    }

    struct Cell {
        double lr;
        std::uint64_t seed;
        std::string stem;
        std::string status;
    };
    std::vector<Cell> cells;
    for (double lr : config.lr_grid)
        for (std::uint64_t seed : config.seeds)
            cells.push_back({lr, seed, cell_stem(config, lr, seed), ""});

    SweepSummary summary;
    summary.total = static_cast<int>(cells.size());
    summary.dir = dir;

    std::atomic<std::size_t> next{0};
    std::mutex mtx;
    auto worker = [&]() {
        for (;;) {
            std::size_t i = next.fetch_add(1);
            if (i >= cells.size()) return;
            Cell& cell = cells[i];
            std::string want_hash = config_hash(config, cell.lr, cell.seed);
            try {
                RunLog existing = load_runlog(dir, cell.stem);
                if (existing.config_hash == want_hash && !existing.aborted) {
                    std::lock_guard<std::mutex> lk(mtx);
                    cell.status = "ok";
                    ++summary.cached;
                    continue;
                }
            } catch (const std::exception&) {
                // not cached; fall through and compute
            }
            try {
                RunLog log = run_and_persist(config, cell.lr, cell.seed);
                std::lock_guard<std::mutex> lk(mtx);
                cell.status = log.aborted ? "aborted" : "ok";
                ++summary.computed;
                if (log.aborted) ++summary.failed;
            } catch (const std::exception& e) {
                std::lock_guard<std::mutex> lk(mtx);
                cell.status = std::string("failed: ") + e.what();
                ++summary.failed;
            }
        }
    };

    int nthreads = std::max(1, jobs);
    std::vector<std::thread> pool;
    for (int t = 0; t < nthreads; ++t) pool.emplace_back(worker);
    for (auto& t : pool) t.join();

    std::ofstream mf(dir + "/manifest.csv", std::ios::trunc);
    mf << "algorithm,lr,seed,stem,status\n";
    for (const auto& cell : cells)
        mf << to_string(config.learner.algorithm) << "," << format_double(cell.lr) << ","
           << cell.seed << "," << cell.stem << "," << cell.status << "\n";
    return summary;
}

// ---------------------------------------------------------------------------
// Analysis records
// ---------------------------------------------------------------------------

namespace {

Batch hessian_subsample(const Batch& train, std::uint64_t seed, std::size_t cap = 2000) {
    if (train.size() <= cap) return train;
    // Sample without replacement via a seeded shuffle.
    std::vector<std::size_t> idx(train.size());
    for (std::size_t i = 0; i < idx.size(); ++i) idx[i] = i;
    Rng rng(seed);
    rng.shuffle(idx);
    Batch out;
    for (std::size_t i = 0; i < cap; ++i) {
        out.inputs.push_back(train.inputs[idx[i]]);
        if (!train.labels.empty()) out.labels.push_back(train.labels[idx[i]]);
        if (!train.targets.empty()) out.targets.push_back(train.targets[idx[i]]);
    }
    return out;
}

}  // namespace

void analyze_run(const ExperimentConfig& config, const RunLog& log, const std::string& kind,
                 const std::string& dir, const std::string& stem) {
    fs::create_directories(dir);
    std::ofstream f(dir + "/analysis_" + kind + "_" + stem + ".csv", std::ios::trunc);
    if (!f) throw std::runtime_error("cannot write analysis file");

    if (kind == "distances") {
        DistanceSeries ds = param_distance(log);
        f << "task,dist_from_init,delta_norm\n";
        for (std::size_t t = 0; t < ds.from_init.size(); ++t)
            f << (t + 1) << "," << format_double(ds.from_init[t]) << ","
              << format_double(ds.per_task_delta[t]) << "\n";
        return;
    }

    TaskSequence seq = build_sequence(config, log.seed);
    if (static_cast<std::size_t>(log.T) + 1 != log.checkpoints.size())
        throw std::invalid_argument("analyze_run: missing checkpoints (have " +
                                    std::to_string(log.checkpoints.size()) + ", need " +
                                    std::to_string(log.T + 1) + ")");

    if (kind == "spectrum") {
        f << "task,index,eigenvalue\n";
        for (int t = 1; t <= log.T; ++t) {
            const TaskDataset& task = seq.tasks[t - 1];
            Batch sub = hessian_subsample(task.train, mix_seed(log.seed, 0x5000 + t));
            const Vec& theta = log.checkpoints[t];
            SymOp op = [&](const Vec& v) { return hvp(config.model, theta, sub, v); };
            int k = std::min<std::size_t>(10, log.P);
            auto pairs = lanczos_topk(op, log.P, k, std::max(30, 3 * k),
                                      mix_seed(log.seed, 0x6000 + t));
            for (std::size_t i = 0; i < pairs.eigenvalues.size(); ++i)
                f << t << "," << i << "," << format_double(pairs.eigenvalues[i]) << "\n";
        }
        return;
    }

    if (kind == "perturbation") {
        f << "task,direction,radius,score,std_error,n_used,n_skipped,loss_at_radius\n";
        auto radii = default_radius_grid();
        for (int t = 1; t <= log.T; ++t) {
            const TaskDataset& task = seq.tasks[t - 1];
            Batch sub = hessian_subsample(task.train, mix_seed(log.seed, 0x5000 + t));
            const Vec& theta = log.checkpoints[t];
            SymOp op = [&](const Vec& v) { return hvp(config.model, theta, sub, v); };
            int k = std::min<std::size_t>(10, log.P);
            auto pairs = lanczos_topk(op, log.P, k, std::max(30, 3 * k),
                                      mix_seed(log.seed, 0x6000 + t));
            for (std::size_t d = 0; d < pairs.eigenvectors.size(); ++d) {
                for (std::size_t ri = 0; ri < radii.size(); ++ri) {
                    auto s = perturbation_score(config.model, theta, task,
                                                pairs.eigenvectors[d], radii[ri], 16,
                                                mix_seed(log.seed, 0x7000 + t * 100 + d));
                    f << t << "," << d << "," << format_double(radii[ri]) << ","
                      << format_double(s.score) << "," << format_double(s.std_error) << ","
                      << s.n_used << "," << s.n_skipped << ","
                      << format_double(s.loss_at_radius) << "\n";
                }
            }
        }
        return;
    }

    if (kind == "theorem_checks") {
        // OGD-style constraint residual: the update across task t against the
        // outer-product Hessian of each earlier task at its solution.
        f << "t,o,residual,lambda_max\n";
        for (int t = 2; t <= log.T; ++t) {
            Vec delta = vec::sub(log.checkpoints[t], log.checkpoints[t - 1]);
            double d2 = vec::dot(delta, delta);
            if (d2 == 0.0) continue;
            for (int o = 1; o < t; ++o) {
                const TaskDataset& old_task = seq.tasks[o - 1];
                Batch sub = hessian_subsample(old_task.train, mix_seed(log.seed, 0x5000 + o));
                const Vec& theta_o = log.checkpoints[o];
                SymOp gn = [&](const Vec& v) {
                    return gauss_newton_vp(config.model, theta_o, sub, v);
                };
                auto top = lanczos_topk(gn, log.P, 1, 30, mix_seed(log.seed, 0x8000 + o));
                double lmax = top.eigenvalues.empty() ? 0.0 : top.eigenvalues.front();
                double quad = vec::dot(delta, gn(delta));
                double residual = lmax > 0.0 ? quad / (d2 * lmax) : 0.0;
                f << t << "," << o << "," << format_double(residual) << ","
                  << format_double(lmax) << "\n";
            }
        }
        return;
    }

    throw std::invalid_argument("unknown analysis kind: " + kind);
}

// ---------------------------------------------------------------------------
// Report
// ---------------------------------------------------------------------------

namespace {

struct CellRef {
    std::string algorithm;
    double lr = 0.0;
    std::uint64_t seed = 0;
    std::string stem;
    std::string status;
};

std::vector<CellRef> read_manifest(const std::string& dir) {
    std::ifstream f(dir + "/manifest.csv");
    if (!f) throw std::runtime_error("no manifest.csv in " + dir);
    std::vector<CellRef> cells;
    std::string line;
    bool header = true;
    while (std::getline(f, line)) {
        if (header) {
            header = false;
            continue;
        }
        if (line.empty()) continue;
        CellRef c;
        std::stringstream ss(line);
        std::string lr_s, seed_s;
        std::getline(ss, c.algorithm, ',');
        std::getline(ss, lr_s, ',');
        std::getline(ss, seed_s, ',');
        std::getline(ss, c.stem, ',');
        std::getline(ss, c.status);
        c.lr = std::strtod(lr_s.c_str(), nullptr);
        c.seed = std::strtoull(seed_s.c_str(), nullptr, 10);
        cells.push_back(std::move(c));
    }
    return cells;
}

struct Moments {
    double mean = 0.0;
    double std_dev = 0.0;  // sample std, 0 for n = 1
    int n = 0;
};

Moments moments(const std::vector<double>& xs) {
    Moments m;
    m.n = static_cast<int>(xs.size());
    if (m.n == 0) return m;
    for (double x : xs) m.mean += x;
    m.mean /= m.n;
    if (m.n > 1) {
        double ss = 0.0;
        for (double x : xs) ss += (x - m.mean) * (x - m.mean);
        m.std_dev = std::sqrt(ss / (m.n - 1));
    }
    return m;
}

}  // namespace

void write_report(const std::string& run_dir) {
    auto cells = read_manifest(run_dir);
    if (cells.empty()) throw std::runtime_error("empty manifest in " + run_dir);

    struct Group {
        std::vector<double> acc, fgt_acc, fgt_loss;
    };
    std::map<std::pair<std::string, double>, Group> groups;
    std::vector<std::string> dist_rows;

    for (const auto& cell : cells) {
        if (cell.status != "ok") continue;
        RunLog log = load_runlog(run_dir, cell.stem);
        ForgettingReport rep = compute_forgetting(log);
        Group& g = groups[{cell.algorithm, cell.lr}];
        g.acc.push_back(rep.average_accuracy.back());
        g.fgt_acc.push_back(rep.average_acc_forgetting.back());
        g.fgt_loss.push_back(rep.average_forgetting.back());
        for (std::size_t t = 0; t < log.dist_from_init.size(); ++t)
            dist_rows.push_back(cell.algorithm + "," + format_double(cell.lr) + "," +
                                std::to_string(cell.seed) + "," + std::to_string(t + 1) + "," +
                                format_double(log.dist_from_init[t]) + "," +
                                format_double(log.delta_norms[t]));
    }
    if (groups.empty()) throw std::runtime_error("no complete runs in " + run_dir);

    std::ofstream sf(run_dir + "/report_summary.csv", std::ios::trunc);
    sf << "algorithm,lr,n_seeds,acc_mean,acc_std,fgt_acc_mean,fgt_acc_std,fgt_loss_mean,"
          "fgt_loss_std\n";
    for (const auto& [key, g] : groups) {
        Moments acc = moments(g.acc), fa = moments(g.fgt_acc), fl = moments(g.fgt_loss);
        sf << key.first << "," << format_double(key.second) << "," << acc.n << ","
           << format_double(acc.mean) << "," << format_double(acc.std_dev) << ","
           << format_double(fa.mean) << "," << format_double(fa.std_dev) << ","
           << format_double(fl.mean) << "," << format_double(fl.std_dev) << "\n";
    }
    sf.close();

    // Trend: forgetting averaged over the lowest lrs minus the highest lrs.
    std::map<std::string, std::map<double, Moments>> per_algo;
    for (const auto& [key, g] : groups) per_algo[key.first][key.second] = moments(g.fgt_acc);

    std::ofstream tf(run_dir + "/report_trend.csv", std::ios::trunc);
    tf << "algorithm,locality,low_lr_fgt,high_lr_fgt,low_minus_high\n";
    for (const auto& [algo, by_lr] : per_algo) {
        std::vector<std::pair<double, double>> seq(by_lr.size());
        std::size_t i = 0;
        for (const auto& [lr, m] : by_lr) seq[i++] = {lr, m.mean};
        std::size_t k = std::max<std::size_t>(1, std::min<std::size_t>(2, seq.size() / 2));
        double low = 0.0, high = 0.0;
        for (std::size_t j = 0; j < k; ++j) {
            low += seq[j].second;
            high += seq[seq.size() - 1 - j].second;
        }
        low /= k;
        high /= k;
        std::string loc = locality_tag(algorithm_from_string(algo)) == Locality::local_approx
                              ? "local"
                              : "global";
        tf << algo << "," << loc << "," << format_double(low) << "," << format_double(high)
           << "," << format_double(low - high) << "\n";
    }
    tf.close();

    std::ofstream df(run_dir + "/report_distances.csv", std::ios::trunc);
    df << "algorithm,lr,seed,task,dist_from_init,delta_norm\n";
    for (const auto& row : dist_rows) df << row << "\n";
    df.close();

    // Concatenate any per-cell perturbation analyses into one plot file.
    std::vector<std::string> pert_files;
    for (const auto& entry : fs::directory_iterator(run_dir)) {
        std::string name = entry.path().filename().string();
        if (name.rfind("analysis_perturbation_", 0) == 0) pert_files.push_back(name);
    }
    std::sort(pert_files.begin(), pert_files.end());
    if (!pert_files.empty()) {
        std::ofstream pf(run_dir + "/report_perturbation.csv", std::ios::trunc);
        pf << "source,task,direction,radius,score,std_error,n_used,n_skipped,loss_at_radius\n";
        for (const auto& name : pert_files) {
            std::ifstream in(run_dir + "/" + name);
            std::string line;
            bool header = true;
            while (std::getline(in, line)) {
                if (header) {
                    header = false;
                    continue;
                }
                if (!line.empty()) pf << name << "," << line << "\n";
            }
        }
    }

    std::ofstream table(run_dir + "/report_table.txt", std::ios::trunc);
    table << "algorithm        lr        ACC (up)             FGT-acc (down)\n";
    table << "--------------------------------------------------------------\n";
    char buf[160];
    for (const auto& [key, g] : groups) {
        Moments acc = moments(g.acc), fa = moments(g.fgt_acc);
        std::snprintf(buf, sizeof buf, "%-16s %-9g %8.4f +/- %-8.4f %8.4f +/- %-8.4f\n",
                      key.first.c_str(), key.second, acc.mean, acc.std_dev, fa.mean,
                      fa.std_dev);
        table << buf;
    }
}

}  // namespace clab
