#include "clab/learners.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <set>
#include <stdexcept>

namespace clab {

Locality locality_tag(Algorithm a) {
    switch (a) {
        case Algorithm::ewc:
        case Algorithm::ogd:
        case Algorithm::ogd_gtl:
        case Algorithm::icarl_lite:
        case Algorithm::nullspace_gd:
            return Locality::local_approx;
        case Algorithm::sgd:
        case Algorithm::er:
        case Algorithm::agem:
        case Algorithm::si:
            return Locality::global_approx;
    }
    throw std::logic_error("unknown algorithm");
}

std::string to_string(Algorithm a) {
    switch (a) {
        case Algorithm::sgd: return "sgd";
        case Algorithm::er: return "er";
        case Algorithm::agem: return "agem";
        case Algorithm::ewc: return "ewc";
        case Algorithm::si: return "si";
        case Algorithm::ogd: return "ogd";
        case Algorithm::ogd_gtl: return "ogd_gtl";
        case Algorithm::icarl_lite: return "icarl_lite";
        case Algorithm::nullspace_gd: return "nullspace_gd";
    }
    throw std::logic_error("unknown algorithm");
}

Algorithm algorithm_from_string(const std::string& s) {
    for (Algorithm a : {Algorithm::sgd, Algorithm::er, Algorithm::agem, Algorithm::ewc,
                        Algorithm::si, Algorithm::ogd, Algorithm::ogd_gtl,
                        Algorithm::icarl_lite, Algorithm::nullspace_gd})
        if (to_string(a) == s) return a;
    throw std::invalid_argument("unknown algorithm: " + s);
}

void LearnerConfig::validate() const {
    if (!(lr > 0.0)) throw std::invalid_argument("lr must be > 0");
    if (epochs < 0) throw std::invalid_argument("epochs must be >= 0");
    if (batch_size < 1) throw std::invalid_argument("batch_size must be >= 1");
    if (!(si_xi > 0.0)) throw std::invalid_argument("si_xi must be > 0");
    if (ogd_samples_per_task < 0) throw std::invalid_argument("ogd_samples_per_task >= 0");
    if (dropout_prob < 0.0 || dropout_prob >= 1.0)
        throw std::invalid_argument("dropout_prob must be in [0, 1)");
    if (!(lr_decay_per_task > 0.0)) throw std::invalid_argument("lr_decay_per_task must be > 0");
    if (nullspace_topk < 1) throw std::invalid_argument("nullspace_topk must be >= 1");
}

SgdPresetPair make_sgd_presets(double lr, int epochs, std::uint64_t seed) {
    LearnerConfig base;
    base.algorithm = Algorithm::sgd;
    base.lr = lr;
    base.epochs = epochs;
    base.seed = seed;

    SgdPresetPair pair{base, base};
    pair.plastic.batch_size = 128;
    pair.plastic.dropout_prob = 0.0;
    pair.plastic.lr_decay_per_task = 1.0;
    pair.stable.batch_size = 16;
    pair.stable.dropout_prob = 0.25;
    pair.stable.lr_decay_per_task = 0.6;
    return pair;
}

// ---------------------------------------------------------------------------
// Memories
// ---------------------------------------------------------------------------

void reservoir_insert(ReplayBuffer& buffer, BufferItem item, Rng& rng) {
    ++buffer.seen_count;
    if (buffer.capacity == 0) return;
    if (buffer.items.size() < buffer.capacity) {
        buffer.items.push_back(std::move(item));
        return;
    }
    std::uint64_t j = rng.uniform_index(buffer.seen_count);
    if (j < buffer.capacity) buffer.items[j] = std::move(item);
}

Vec agem_project(const Vec& g, const Vec& g_ref) {
    vec::check_length(g_ref, g.size(), "agem reference gradient");
    double dot = vec::dot(g, g_ref);
    if (dot >= 0.0) return g;
    double ref2 = vec::dot(g_ref, g_ref);
    Vec out = g;
    vec::axpy(-dot / ref2, g_ref, out);
    return out;
}

FisherState ewc_consolidate(const FisherState& state, const MlpModel& model, const Vec& params,
                            const Batch& train, double gamma) {
    const std::size_t P = params.size();
    FisherState out;
    out.anchor = params;
    out.consolidated = true;
    out.fisher_diag.assign(P, 0.0);
    Batch one;
    for (std::size_t i = 0; i < train.size(); ++i) {
        one.inputs = {train.inputs[i]};
        one.labels.clear();
        one.targets.clear();
        if (!train.labels.empty()) one.labels = {train.labels[i]};
        if (!train.targets.empty()) one.targets = {train.targets[i]};
        Vec g = loss_and_grad(model, params, one).grad;
        for (std::size_t k = 0; k < P; ++k) out.fisher_diag[k] += g[k] * g[k];
    }
    vec::scal(1.0 / static_cast<double>(train.size()), out.fisher_diag);
    if (state.consolidated)
        for (std::size_t k = 0; k < P; ++k) out.fisher_diag[k] += gamma * state.fisher_diag[k];
    return out;
}

Vec ewc_penalty_grad(const FisherState& state, const Vec& params, double lambda) {
    if (!state.consolidated) return Vec(params.size(), 0.0);
    Vec out(params.size());
    for (std::size_t k = 0; k < params.size(); ++k)
        out[k] = lambda * state.fisher_diag[k] * (params[k] - state.anchor[k]);
    return out;
}

SiState make_si_state(const Vec& theta0) {
    SiState s;
    s.path_integral_w.assign(theta0.size(), 0.0);
    s.omega.assign(theta0.size(), 0.0);
    s.anchor = theta0;
    s.task_start = theta0;
    return s;
}

void si_accumulate(SiState& state, const Vec& grad, const Vec& delta_step) {
    for (std::size_t k = 0; k < state.path_integral_w.size(); ++k)
        state.path_integral_w[k] -= grad[k] * delta_step[k];
}

void si_consolidate(SiState& state, const Vec& params, double xi) {
    if (!(xi > 0.0)) throw std::invalid_argument("si_consolidate: xi must be > 0");
    for (std::size_t k = 0; k < state.omega.size(); ++k) {
        double w = std::max(state.path_integral_w[k], 0.0);
        double disp = params[k] - state.task_start[k];
        state.omega[k] += w / (disp * disp + xi);
        state.path_integral_w[k] = 0.0;
    }
    state.anchor = params;
    state.task_start = params;
}

void ogd_extend_basis(OgdBasis& basis, const MlpModel& model, const Vec& params_at_task_end,
                      const Batch& samples, OgdVariant variant) {
    const std::size_t P = params_at_task_end.size();
    int added = 0;
    for (std::size_t i = 0; i < samples.size(); ++i) {
        auto cols = output_jacobian(model, params_at_task_end, samples.inputs[i]);
        std::vector<int> which;
        if (variant == OgdVariant::gtl) {
            which = {samples.labels.at(i)};
        } else {
            which.resize(cols.size());
            std::iota(which.begin(), which.end(), 0);
        }
        for (int k : which) {
            if (basis.vectors.size() >= P) {
                basis.saturated = true;
                basis.per_task_counts.push_back(added);
                return;
            }
            Vec v = cols[static_cast<std::size_t>(k)];
            double orig = vec::nrm2(v);
            if (orig == 0.0) continue;
            for (int pass = 0; pass < 2; ++pass)
                for (const auto& q : basis.vectors) vec::axpy(-vec::dot(q, v), q, v);
            double res = vec::nrm2(v);
            if (res < 1e-10 * orig) continue;  // dependent, drop
            vec::scal(1.0 / res, v);
            basis.vectors.push_back(std::move(v));
            ++added;
        }
    }
    basis.per_task_counts.push_back(added);
}

Vec ogd_project(const Vec& g, const OgdBasis& basis) {
    Vec out = g;
    for (const auto& v : basis.vectors) vec::axpy(-vec::dot(v, out), v, out);
    return out;
}

std::vector<std::size_t> herding_select(const std::vector<Vec>& features, std::size_t m) {
    const std::size_t n = features.size();
    if (m > n) throw std::invalid_argument("herding_select: m > n");
    if (n == 0) return {};
    const std::size_t F = features[0].size();
    Vec mu(F, 0.0);
    for (const auto& f : features) vec::axpy(1.0, f, mu);
    vec::scal(1.0 / static_cast<double>(n), mu);

    std::vector<std::size_t> chosen;
    std::vector<bool> used(n, false);
    Vec sum(F, 0.0);
    while (chosen.size() < m) {
        std::size_t best = n;
        double best_d = 0.0;
        for (std::size_t i = 0; i < n; ++i) {
            if (used[i]) continue;
            double d = 0.0;
            double inv = 1.0 / static_cast<double>(chosen.size() + 1);
            for (std::size_t k = 0; k < F; ++k) {
                double diff = mu[k] - (sum[k] + features[i][k]) * inv;
                d += diff * diff;
            }
            if (best == n || d < best_d) {
                best = i;
                best_d = d;
            }
        }
        used[best] = true;
        vec::axpy(1.0, features[best], sum);
        chosen.push_back(best);
    }
    return chosen;
}

std::size_t ncm_classify(const Vec& feature, const std::vector<Vec>& class_means) {
    if (class_means.empty()) throw std::invalid_argument("ncm_classify: no class means");
    std::size_t best = 0;
    double best_d = 0.0;
    for (std::size_t c = 0; c < class_means.size(); ++c) {
        Vec diff = vec::sub(feature, class_means[c]);
        double d = vec::dot(diff, diff);
        if (c == 0 || d < best_d) {
            best = c;
            best_d = d;
        }
    }
    return best;
}

NullspaceStep nullspace_gd_step(const Vec& g, const EigenPairs& eig, double tol) {
    NullspaceStep out;
    out.direction = g;
    if (eig.eigenvalues.empty()) return out;
    double lmax = std::max(eig.eigenvalues.front(), 0.0);
    double thr = tol * lmax;
    std::size_t removed = 0;
    for (std::size_t i = 0; i < eig.eigenvalues.size(); ++i) {
        if (eig.eigenvalues[i] <= thr) continue;
        vec::axpy(-vec::dot(eig.eigenvectors[i], out.direction), eig.eigenvectors[i],
                  out.direction);
        ++removed;
    }
    if (removed == g.size()) {
        out.direction.assign(g.size(), 0.0);
        out.no_admissible_direction = true;
    }
    return out;
}

// ---------------------------------------------------------------------------
// Training loop
// ---------------------------------------------------------------------------

LearnerState make_learner_state(const LearnerConfig& config, const Vec& theta0) {
    LearnerState s;
    s.algorithm = config.algorithm;
    s.buffer.capacity = config.buffer_size;
    s.si = make_si_state(theta0);
    return s;
}

namespace {

Batch batch_from_items(const std::vector<BufferItem>& items, std::size_t count, Rng& rng) {
    Batch b;
    for (std::size_t i = 0; i < count; ++i) {
        const BufferItem& it = items[rng.uniform_index(items.size())];
        b.inputs.push_back(it.input);
        b.labels.push_back(it.label);
    }
    return b;
}

std::vector<BufferItem> flatten_exemplars(const IcarlMemory& mem) {
    std::vector<BufferItem> all;
    for (const auto& [key, items] : mem.exemplars)
        all.insert(all.end(), items.begin(), items.end());
    return all;
}

void refresh_nullspace_cache(LearnerState& state, const LearnerConfig& config,
                             const MlpModel& model, std::size_t P) {
    if (state.nullspace.cache_valid || state.nullspace.records.empty()) return;
    const auto& records = state.nullspace.records;
    double inv_t = 1.0 / static_cast<double>(records.size() + 1);
    SymOp op = [&](const Vec& v) {
        Vec acc(P, 0.0);
        for (const auto& rec : records) {
            Vec hv = hvp(model, rec.params, rec.samples, v);
            vec::axpy(inv_t, hv, acc);
        }
        return acc;
    };
    int k = std::min<int>(config.nullspace_topk, static_cast<int>(P));
    int iters = std::min<int>(static_cast<int>(P), std::max(30, 3 * k));
    state.nullspace.cached =
        lanczos_topk(op, P, k, iters, mix_seed(config.seed, 0x9000 + records.size()));
    state.nullspace.cache_valid = true;
}

Batch subsample_train(const TaskDataset& task, int count, Rng& rng) {
    std::vector<std::size_t> idx(task.train.size());
    std::iota(idx.begin(), idx.end(), 0);
    rng.shuffle(idx);
    std::size_t take = std::min<std::size_t>(static_cast<std::size_t>(count), idx.size());
    Batch b;
    for (std::size_t i = 0; i < take; ++i) {
        b.inputs.push_back(task.train.inputs[idx[i]]);
        b.labels.push_back(task.train.labels[idx[i]]);
    }
    return b;
}

void icarl_update_exemplars(LearnerState& state, const LearnerConfig& config,
                            const MlpModel& model, const Vec& params, const TaskDataset& task,
                            Rng& rng) {
    // Select exemplars per (task, class) group, then rebalance the budget
    // over all groups seen. Both herding and random orders have the prefix
    // property, so trimming is exact re-selection at the smaller m.
    std::set<int> task_classes(task.train.labels.begin(), task.train.labels.end());
    for (int cls : task_classes) {
        std::vector<BufferItem> items;
        std::vector<Vec> feats;
        for (std::size_t i = 0; i < task.train.size(); ++i) {
            if (task.train.labels[i] != cls) continue;
            items.push_back({task.train.inputs[i], cls, task.task_id});
            feats.push_back(last_hidden_features(model, params, task.train.inputs[i]));
        }
        std::vector<std::size_t> order;
        if (config.buffer_selection == BufferSelection::herding) {
            order = herding_select(feats, feats.size());
        } else {
            order.resize(items.size());
            std::iota(order.begin(), order.end(), 0);
            rng.shuffle(order);
        }
        std::vector<BufferItem> ordered;
        for (std::size_t i : order) ordered.push_back(items[i]);
        state.icarl.exemplars[{task.task_id, cls}] = std::move(ordered);
    }
    std::size_t groups = state.icarl.exemplars.size();
    std::size_t m =
        std::max<std::size_t>(1, config.buffer_size / std::max<std::size_t>(1, groups));
    for (auto& [key, items] : state.icarl.exemplars)
        if (items.size() > m) items.resize(m);
}

}  // namespace

TrainResult train_task(LearnerState& state, const LearnerConfig& config, const TaskDataset& task,
                       const MlpModel& model, const Vec& params_in) {
    config.validate();
    model.validate();
    vec::check_length(params_in, model.param_count(), "params_in");
    if (task.train.size() == 0) throw std::invalid_argument("task has no training data");
    if (task.train.labels.empty() &&
        (state.algorithm == Algorithm::er || state.algorithm == Algorithm::agem ||
         state.algorithm == Algorithm::icarl_lite || state.algorithm == Algorithm::ogd_gtl))
        throw std::invalid_argument(to_string(state.algorithm) + " needs labeled tasks");

    TrainResult res;
    res.params = params_in;

    Rng shuffle_rng(mix_seed(config.seed, 0x100 + static_cast<std::uint64_t>(task.task_id)));
    Rng replay_rng(mix_seed(config.seed, 0x200 + static_cast<std::uint64_t>(task.task_id)));
    Rng dropout_rng(mix_seed(config.seed, 0x300 + static_cast<std::uint64_t>(task.task_id)));
    Rng memory_rng(mix_seed(config.seed, 0x400 + static_cast<std::uint64_t>(task.task_id)));

    const double lr =
        config.lr * std::pow(config.lr_decay_per_task, static_cast<double>(state.tasks_seen));

    if (state.algorithm == Algorithm::nullspace_gd)
        refresh_nullspace_cache(state, config, model, params_in.size());

    const std::size_t n = task.train.size();
    std::vector<std::size_t> idx(n);
    std::iota(idx.begin(), idx.end(), 0);
    std::size_t step_index = 0;

    for (int epoch = 0; epoch < config.epochs && !res.aborted; ++epoch) {
        shuffle_rng.shuffle(idx);
        for (std::size_t start = 0; start < n && !res.aborted;
             start += static_cast<std::size_t>(config.batch_size)) {
            std::size_t stop = std::min(n, start + static_cast<std::size_t>(config.batch_size));
            Batch batch;
            for (std::size_t i = start; i < stop; ++i) {
                batch.inputs.push_back(task.train.inputs[idx[i]]);
                if (!task.train.labels.empty()) batch.labels.push_back(task.train.labels[idx[i]]);
                if (!task.train.targets.empty())
                    batch.targets.push_back(task.train.targets[idx[i]]);
            }

            try {
                LossGrad lg = config.dropout_prob > 0.0
                                  ? loss_and_grad_dropout(model, res.params, batch,
                                                          config.dropout_prob, dropout_rng)
                                  : loss_and_grad(model, res.params, batch);

                Vec d = lg.grad;
                switch (state.algorithm) {
                    case Algorithm::sgd:
                        break;
                    case Algorithm::er: {
                        if (!state.buffer.items.empty()) {
                            Batch rb = batch_from_items(
                                state.buffer.items,
                                static_cast<std::size_t>(config.batch_size), replay_rng);
                            vec::axpy(1.0, loss_and_grad(model, res.params, rb).grad, d);
                        }
                        break;
                    }
                    case Algorithm::agem: {
                        if (!state.buffer.items.empty()) {
                            Batch rb = batch_from_items(
                                state.buffer.items,
                                static_cast<std::size_t>(config.batch_size), replay_rng);
                            Vec g_ref = loss_and_grad(model, res.params, rb).grad;
                            d = agem_project(d, g_ref);
                        }
                        break;
                    }
                    case Algorithm::ewc:
                        vec::axpy(1.0, ewc_penalty_grad(state.fisher, res.params,
                                                        config.ewc_lambda),
                                  d);
                        break;
                    case Algorithm::si: {
                        for (std::size_t k = 0; k < d.size(); ++k)
                            d[k] += config.si_c * state.si.omega[k] *
                                    (res.params[k] - state.si.anchor[k]);
                        break;
                    }
                    case Algorithm::ogd:
                    case Algorithm::ogd_gtl:
                        d = ogd_project(d, state.ogd);
                        break;
                    case Algorithm::icarl_lite: {
                        auto items = flatten_exemplars(state.icarl);
                        if (!items.empty()) {
                            Batch rb = batch_from_items(
                                items, static_cast<std::size_t>(config.batch_size), replay_rng);
                            vec::axpy(1.0, loss_and_grad(model, res.params, rb).grad, d);
                        }
                        break;
                    }
                    case Algorithm::nullspace_gd: {
                        if (state.nullspace.cache_valid)
                            d = nullspace_gd_step(d, state.nullspace.cached,
                                                  config.nullspace_tol)
                                    .direction;
                        break;
                    }
                }

                Vec delta = vec::scaled(d, -lr);
                vec::axpy(1.0, delta, res.params);
                if (state.algorithm == Algorithm::si) si_accumulate(state.si, lg.grad, delta);
                res.steps.push_back({lg.loss, vec::nrm2(delta)});
            } catch (const NonFiniteLossError&) {
                res.aborted = true;
                res.abort_step = step_index;
            }
            ++step_index;
        }
    }

    if (!res.aborted) {
        switch (state.algorithm) {
            case Algorithm::sgd:
                break;
            case Algorithm::er:
            case Algorithm::agem: {
                for (std::size_t i = 0; i < task.train.size(); ++i)
                    reservoir_insert(state.buffer,
                                     {task.train.inputs[i], task.train.labels[i], task.task_id},
                                     memory_rng);
                break;
            }
            case Algorithm::ewc:
                state.fisher = ewc_consolidate(state.fisher, model, res.params, task.train,
                                               config.ewc_gamma);
                break;
            case Algorithm::si:
                si_consolidate(state.si, res.params, config.si_xi);
                break;
            case Algorithm::ogd:
            case Algorithm::ogd_gtl: {
                Batch samples = subsample_train(task, config.ogd_samples_per_task, memory_rng);
                ogd_extend_basis(state.ogd, model, res.params, samples,
                                 state.algorithm == Algorithm::ogd ? OgdVariant::full
                                                                   : OgdVariant::gtl);
                break;
            }
            case Algorithm::icarl_lite:
                icarl_update_exemplars(state, config, model, res.params, task, memory_rng);
                break;
            case Algorithm::nullspace_gd: {
                NullspaceTaskRecord rec;
                rec.samples = subsample_train(task, config.ogd_samples_per_task, memory_rng);
                rec.params = res.params;
                state.nullspace.records.push_back(std::move(rec));
                state.nullspace.cache_valid = false;
                break;
            }
        }
        ++state.tasks_seen;
    }
    return res;
}

EvalMetrics evaluate_learner(const LearnerState& state, const MlpModel& model, const Vec& params,
                             const Batch& eval, const std::vector<int>& restrict_classes) {
    EvalMetrics base = evaluate(model, params, eval);
    const bool ncm = state.algorithm == Algorithm::icarl_lite && !state.icarl.exemplars.empty();
    std::set<int> allowed(restrict_classes.begin(), restrict_classes.end());

    if (!ncm && restrict_classes.empty()) return base;

    std::size_t correct = 0;
    if (ncm) {
        // Class means over all exemplars of the class, across tasks, through
        // the current feature map.
        std::map<int, std::pair<Vec, std::size_t>> per_class;
        for (const auto& [key, items] : state.icarl.exemplars) {
            int cls = key.second;
            if (!allowed.empty() && !allowed.count(cls)) continue;
            auto& [sum, count] = per_class[cls];
            for (const auto& item : items) {
                Vec f = last_hidden_features(model, params, item.input);
                if (sum.empty()) sum.assign(f.size(), 0.0);
                vec::axpy(1.0, f, sum);
                ++count;
            }
        }
        std::vector<int> ids;
        std::vector<Vec> means;
        for (auto& [cls, acc] : per_class) {
            vec::scal(1.0 / static_cast<double>(acc.second), acc.first);
            ids.push_back(cls);
            means.push_back(std::move(acc.first));
        }
        if (means.empty()) return base;
        for (std::size_t i = 0; i < eval.size(); ++i) {
            Vec f = last_hidden_features(model, params, eval.inputs[i]);
            if (ids[ncm_classify(f, means)] == eval.labels[i]) ++correct;
        }
    } else {
        for (std::size_t i = 0; i < eval.size(); ++i) {
            Vec logits = mlp_forward(model, params, eval.inputs[i]);
            int best = -1;
            for (int k = 0; k < static_cast<int>(logits.size()); ++k) {
                if (!allowed.empty() && !allowed.count(k)) continue;
                if (best < 0 || logits[k] > logits[best]) best = k;
            }
            if (best == eval.labels[i]) ++correct;
        }
    }
    EvalMetrics out = base;
    out.accuracy = static_cast<double>(correct) / static_cast<double>(eval.size());
    return out;
}

}  // namespace clab
