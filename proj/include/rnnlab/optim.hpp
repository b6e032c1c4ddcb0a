// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "rnnlab/bptt.hpp"

namespace rnnlab {

enum class Optimizer { sgd, adam };
enum class DecayRule { none, plateau_div_1_5, exp_0_97_after_epoch_10 };

struct TrainConfig {
    Optimizer optimizer = Optimizer::sgd;
    double lr = 0.1;
    double clip = 10.0;  // max-norm threshold; <= 0 disables clipping
    int batch = 32;
    int bptt_len = 35;   // LM window length
    int epochs = 1;
    DecayRule decay_rule = DecayRule::none;
    std::uint64_t seed = 1;
    double init_range = 0.05;
    double forget_bias = 0.0;
    // Stop once validation accuracy reaches this (classification tasks;
    // negative disables).
    double stop_accuracy = -1.0;

    void validate() const;
};

// Adam moments; constants are the usual defaults.
struct AdamState {
    ParamSet m, v;
    long step = 0;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double eps = 1e-8;
};

AdamState make_adam_state(const ModelConfig& cfg);

// theta <- theta - lr * g
void sgd_step(ParamSet& params, const Gradients& grads, double lr);

// Bias-corrected Adam update.
void adam_step(ParamSet& params, const Gradients& grads, AdamState& state, double lr);

// Applied after each epoch's validation pass. plateau: divide by 1.5
// whenever the latest validation loss did not strictly decrease.
// exp: multiply by 0.97 from epoch 10 on (epochs are 1-based).
double schedule(DecayRule rule, int epoch, const std::vector<double>& val_history, double lr);

enum class Metric { perplexity, bpc, accuracy };

// perplexity = exp(mean NLL in nats); bpc = mean NLL / ln 2.
double metrics(std::span<const double> nll_per_position, Metric kind);
double accuracy_metric(long correct, long total);
std::string metric_name(Metric m);

// --- Training driver --------------------------------------------------------

enum class TaskKind { temporal_order, lm_char, lm_word };

Metric task_metric(TaskKind kind);
TaskKind parse_task_kind(const std::string& s);
std::string task_kind_name(TaskKind kind);

struct TaskData {
    TaskKind kind = TaskKind::temporal_order;
    // classification splits; an empty batch means the split is absent
    SequenceBatch train_cls, valid_cls, test_cls;
    // LM corpus with its own split boundaries
    Corpus corpus;
};

struct EvalResult {
    double mean_nll = 0.0;
    long positions = 0;
    long correct = 0;
    long sequences = 0;

    double accuracy() const { return sequences ? double(correct) / double(sequences) : 0.0; }
};

EvalResult evaluate_classification(const Model& m, const SequenceBatch& data,
                                   const DropoutConfig& drop, Phase phase, Rng* rng = nullptr,
                                   int chunk = 512);
EvalResult evaluate_lm(const Model& m, std::span<const int> split, const DropoutConfig& drop,
                       int batch, int seq_len);

struct RunLogRow {
    int epoch;
    std::string split;  // train | valid | test
    double loss;        // mean NLL in nats
    double metric;
    double lr;
};

struct RunLog {
    std::vector<RunLogRow> rows;
    const RunLogRow* last(const std::string& split) const;
};

// Initializes the model (uniform [-init_range, init_range], forget bias
// offset), runs epochs of minibatch updates, evaluates each epoch and
// applies the schedule. Appends train and valid rows per epoch and a
// final test row when test data is present. Non-finite loss aborts with
// a diagnostic naming the epoch and update.
RunLog train(Model& m, const TaskData& data, const TrainConfig& cfg, const DropoutConfig& drop);

}  // namespace rnnlab
