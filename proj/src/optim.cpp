// SPDX-License-Identifier: Apache-2.0
#include "rnnlab/optim.hpp"

#include <cmath>
#include <numbers>
#include <stdexcept>

namespace rnnlab {

void TrainConfig::validate() const {
    if (lr <= 0.0) throw std::invalid_argument("lr must be positive");
    if (batch < 1) throw std::invalid_argument("batch must be >= 1");
    if (epochs < 1) throw std::invalid_argument("epochs must be >= 1");
    if (bptt_len < 1) throw std::invalid_argument("bptt_len must be >= 1");
}

AdamState make_adam_state(const ModelConfig& cfg) {
    AdamState s;
    s.m = zeros_like(cfg);
    s.v = zeros_like(cfg);
    return s;
}

namespace {

// Walks two ParamSets of identical shape in lockstep.
template <typename Fn>
void zip_tensors(ParamSet& a, const ParamSet& b, Fn&& fn) {
    std::vector<std::pair<const double*, Eigen::Index>> rhs;
    for_each_tensor(b, [&](const std::string&, const double* data, Eigen::Index size) {
        rhs.push_back({data, size});
    });
    std::size_t k = 0;
    for_each_tensor(a, [&](const std::string& name, double* data, Eigen::Index size) {
        if (k >= rhs.size() || rhs[k].second != size) {
            throw std::invalid_argument("parameter/gradient shape mismatch at tensor " + name);
        }
        fn(data, rhs[k].first, size);
        ++k;
    });
}

}  // namespace

void sgd_step(ParamSet& params, const Gradients& grads, double lr) {
    zip_tensors(params, grads, [&](double* p, const double* g, Eigen::Index n) {
        for (Eigen::Index i = 0; i < n; ++i) p[i] -= lr * g[i];
    });
}

void adam_step(ParamSet& params, const Gradients& grads, AdamState& state, double lr) {
    state.step += 1;
    const double bc1 = 1.0 - std::pow(state.beta1, static_cast<double>(state.step));
    const double bc2 = 1.0 - std::pow(state.beta2, static_cast<double>(state.step));

    std::vector<std::pair<double*, Eigen::Index>> ms, vs;
    for_each_tensor(state.m, [&](const std::string&, double* d, Eigen::Index n) { ms.push_back({d, n}); });
    for_each_tensor(state.v, [&](const std::string&, double* d, Eigen::Index n) { vs.push_back({d, n}); });

    std::size_t k = 0;
    zip_tensors(params, grads, [&](double* p, const double* g, Eigen::Index n) {
        double* m = ms[k].first;
        double* v = vs[k].first;
        if (ms[k].second != n || vs[k].second != n) {
            throw std::invalid_argument("adam state shape mismatch");
        }
        for (Eigen::Index i = 0; i < n; ++i) {
            m[i] = state.beta1 * m[i] + (1.0 - state.beta1) * g[i];
            v[i] = state.beta2 * v[i] + (1.0 - state.beta2) * g[i] * g[i];
            const double mhat = m[i] / bc1;
            const double vhat = v[i] / bc2;
            p[i] -= lr * mhat / (std::sqrt(vhat) + state.eps);
        }
        ++k;
    });
}

double schedule(DecayRule rule, int epoch, const std::vector<double>& val_history, double lr) {
    if (epoch < 1) throw std::invalid_argument("epochs are 1-based");
    switch (rule) {
        case DecayRule::none:
            return lr;
        case DecayRule::plateau_div_1_5: {
            const std::size_t n = val_history.size();
            if (n >= 2 && !(val_history[n - 1] < val_history[n - 2])) return lr / 1.5;
            return lr;
        }
        case DecayRule::exp_0_97_after_epoch_10:
            return epoch >= 10 ? lr * 0.97 : lr;
    }
    return lr;
}

double metrics(std::span<const double> nll_per_position, Metric kind) {
    if (nll_per_position.empty()) throw std::invalid_argument("metrics: empty evaluation set");
    double sum = 0.0;
    for (double v : nll_per_position) sum += v;
    const double mean = sum / static_cast<double>(nll_per_position.size());
    switch (kind) {
        case Metric::perplexity: return std::exp(mean);
        case Metric::bpc: return mean / std::numbers::ln2;
        case Metric::accuracy:
            throw std::invalid_argument("accuracy is computed from predictions, not losses");
    }
    return mean;
}

double accuracy_metric(long correct, long total) {
    if (total < 1) throw std::invalid_argument("accuracy over an empty set");
    return static_cast<double>(correct) / static_cast<double>(total);
}

std::string metric_name(Metric m) {
    switch (m) {
        case Metric::perplexity: return "perplexity";
        case Metric::bpc: return "bpc";
        case Metric::accuracy: return "accuracy";
    }
    return "?";
}

Metric task_metric(TaskKind kind) {
    switch (kind) {
        case TaskKind::temporal_order: return Metric::accuracy;
        case TaskKind::lm_char: return Metric::bpc;
        case TaskKind::lm_word: return Metric::perplexity;
    }
    return Metric::accuracy;
}

TaskKind parse_task_kind(const std::string& s) {
    if (s == "temporal-order") return TaskKind::temporal_order;
    if (s == "lm-char") return TaskKind::lm_char;
    if (s == "lm-word") return TaskKind::lm_word;
    throw std::invalid_argument("unknown task: " + s);
}

std::string task_kind_name(TaskKind kind) {
    switch (kind) {
        case TaskKind::temporal_order: return "temporal-order";
        case TaskKind::lm_char: return "lm-char";
        case TaskKind::lm_word: return "lm-word";
    }
    return "?";
}

EvalResult evaluate_classification(const Model& m, const SequenceBatch& data,
                                   const DropoutConfig& drop, Phase phase, Rng* rng, int chunk) {
    EvalResult res;
    for (int start = 0; start < data.batch; start += chunk) {
        const int rows = std::min(chunk, data.batch - start);
        SequenceBatch piece;
        piece.batch = rows;
        piece.time = data.time;
        piece.vocab_size = data.vocab_size;
        piece.tokens.assign(data.tokens.begin() + static_cast<std::size_t>(start) * data.time,
                            data.tokens.begin() + static_cast<std::size_t>(start + rows) * data.time);
        piece.labels.assign(data.labels.begin() + start, data.labels.begin() + start + rows);
        InferenceResult r = run_sequence(m, piece, drop, rng, phase);
        res.mean_nll = (res.mean_nll * res.positions + r.loss * r.positions) /
                       static_cast<double>(res.positions + r.positions);
        res.positions += r.positions;
        res.correct += r.correct;
        res.sequences += rows;
    }
    return res;
}

EvalResult evaluate_lm(const Model& m, std::span<const int> split, const DropoutConfig& drop,
                       int batch, int seq_len) {
    const auto windows = batch_lm(split, batch, seq_len, m.cfg.vocab);
    EvalResult res;
    StateBatch state = zero_state_batch(m.cfg, batch);
    double nll_sum = 0.0;
    for (const auto& w : windows) {
        InferenceResult r = run_sequence(m, w, drop, nullptr, Phase::infer, &state);
        nll_sum += r.loss * static_cast<double>(r.positions);
        res.positions += r.positions;
        state = r.final_state;
    }
    if (res.positions == 0) throw std::invalid_argument("evaluation split is empty");
    res.mean_nll = nll_sum / static_cast<double>(res.positions);
    return res;
}

const RunLogRow* RunLog::last(const std::string& split) const {
    for (auto it = rows.rbegin(); it != rows.rend(); ++it) {
        if (it->split == split) return &*it;
    }
    return nullptr;
}

namespace {

SequenceBatch slice_rows(const SequenceBatch& data, const std::vector<int>& idx, int start,
                         int count) {
    SequenceBatch out;
    out.batch = count;
    out.time = data.time;
    out.vocab_size = data.vocab_size;
    out.tokens.resize(static_cast<std::size_t>(count) * data.time);
    out.labels.resize(count);
    for (int i = 0; i < count; ++i) {
        const int row = idx[start + i];
        std::copy_n(data.tokens.begin() + static_cast<std::size_t>(row) * data.time, data.time,
                    out.tokens.begin() + static_cast<std::size_t>(i) * data.time);
        out.labels[i] = data.labels[row];
    }
    return out;
}

double metric_of(TaskKind kind, const EvalResult& ev) {
    if (task_metric(kind) == Metric::accuracy) return ev.accuracy();
    const double nll[1] = {ev.mean_nll};
    return metrics(nll, task_metric(kind));
}

}  // namespace

RunLog train(Model& m, const TaskData& data, const TrainConfig& cfg, const DropoutConfig& drop) {
    cfg.validate();
    drop.recurrent.validate();
    drop.input.validate();
    drop.output.validate();

    const bool classification = data.kind == TaskKind::temporal_order;
    if (classification) {
        data.train_cls.validate();
        if (data.train_cls.batch < cfg.batch) {
            throw std::invalid_argument("training set smaller than one minibatch");
        }
        if (data.train_cls.vocab_size > m.cfg.vocab) {
            throw std::invalid_argument("data vocabulary exceeds model vocabulary");
        }
    } else {
        if (m.cfg.vocab != static_cast<int>(data.corpus.vocab.size())) {
            throw std::invalid_argument("model vocabulary does not match corpus");
        }
        if (data.corpus.train().size() < static_cast<std::size_t>(cfg.batch) * (cfg.bptt_len + 1)) {
            throw std::invalid_argument("training split smaller than one window");
        }
    }

    Rng root(cfg.seed);
    Rng init_rng = root.split();
    Rng mask_rng = root.split();
    Rng order_rng = root.split();

    init_uniform(m, cfg.init_range, cfg.forget_bias, init_rng);

    AdamState adam = cfg.optimizer == Optimizer::adam ? make_adam_state(m.cfg) : AdamState{};

    RunLog log;
    double lr = cfg.lr;
    std::vector<double> val_history;
    int finished_epoch = 0;

    for (int epoch = 1; epoch <= cfg.epochs; ++epoch) {
        finished_epoch = epoch;
        double train_loss_sum = 0.0;
        long updates = 0;

        auto do_update = [&](const SequenceBatch& mb, const StateBatch* init,
                             StateBatch* carry) {
            try {
                ForwardResult fr = forward_sequence(m, mb, drop, mask_rng, Phase::train, init);
                Gradients grads = backward_sequence(fr.tape, m);
                if (cfg.clip > 0.0) clip_gradients(grads, cfg.clip);
                if (cfg.optimizer == Optimizer::adam) {
                    adam_step(m.params, grads, adam, lr);
                } else {
                    sgd_step(m.params, grads, lr);
                }
                train_loss_sum += fr.loss;
                ++updates;
                if (carry) *carry = fr.final_state;
            } catch (const std::runtime_error& e) {
                throw std::runtime_error("training diverged at epoch " + std::to_string(epoch) +
                                         ", update " + std::to_string(updates + 1) + ": " +
                                         e.what());
            }
        };

        if (classification) {
            std::vector<int> idx(data.train_cls.batch);
            for (std::size_t i = 0; i < idx.size(); ++i) idx[i] = static_cast<int>(i);
            order_rng.shuffle(idx);
            const int n_batches = data.train_cls.batch / cfg.batch;
            for (int b = 0; b < n_batches; ++b) {
                SequenceBatch mb = slice_rows(data.train_cls, idx, b * cfg.batch, cfg.batch);
                do_update(mb, nullptr, nullptr);
            }
        } else {
            auto windows = batch_lm(data.corpus.train(), cfg.batch, cfg.bptt_len, m.cfg.vocab);
            StateBatch state = zero_state_batch(m.cfg, cfg.batch);
            for (const auto& w : windows) {
                do_update(w, &state, &state);
            }
        }

        const double train_loss = train_loss_sum / static_cast<double>(updates);

        // Per-epoch validation (falls back to the test split, then to
        // the train split, when no validation data is provided).
        EvalResult val;
        bool have_val = false;
        if (classification) {
            const SequenceBatch* vs = data.valid_cls.batch ? &data.valid_cls
                                      : data.test_cls.batch ? &data.test_cls
                                                            : nullptr;
            if (vs) {
                val = evaluate_classification(m, *vs, drop, Phase::infer);
                have_val = true;
            }
        } else if (!data.corpus.valid().empty()) {
            val = evaluate_lm(m, data.corpus.valid(), drop, cfg.batch, cfg.bptt_len);
            have_val = true;
        }

        // Train metric only where it derives from the loss (ppl / bpc);
        // classification accuracy on the train split is not tracked.
        const double train_metric =
            task_metric(data.kind) == Metric::accuracy
                ? std::nan("")
                : metrics(std::vector<double>{train_loss}, task_metric(data.kind));
        log.rows.push_back({epoch, "train", train_loss, train_metric, lr});
        if (have_val) {
            log.rows.push_back({epoch, "valid", val.mean_nll, metric_of(data.kind, val), lr});
            val_history.push_back(val.mean_nll);
            lr = schedule(cfg.decay_rule, epoch, val_history, lr);
            if (classification && cfg.stop_accuracy > 0.0 && val.accuracy() >= cfg.stop_accuracy) {
                break;
            }
        }
    }

    // Final test evaluation.
    if (classification && data.test_cls.batch) {
        EvalResult test = evaluate_classification(m, data.test_cls, drop, Phase::infer);
        log.rows.push_back({finished_epoch, "test", test.mean_nll, metric_of(data.kind, test), lr});
    } else if (!classification && !data.corpus.test().empty()) {
        EvalResult test = evaluate_lm(m, data.corpus.test(), drop, cfg.batch, cfg.bptt_len);
        log.rows.push_back({finished_epoch, "test", test.mean_nll, metric_of(data.kind, test), lr});
    }

    return log;
}

}  // namespace rnnlab
