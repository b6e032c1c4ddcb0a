// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "rnnlab/model.hpp"
#include "rnnlab/tasks.hpp"

namespace rnnlab {

// Batched hidden state: one row per sequence in the batch.
struct StateBatch {
    Matrix h;  // [batch x hidden]
    Matrix c;  // [batch x hidden] for LSTM, empty otherwise
};

StateBatch zero_state_batch(const ModelConfig& cfg, int batch);

// Recurrent dropout plus the conventional forward dropout on the
// input-to-hidden and hidden-to-output connections.
struct DropoutConfig {
    DropoutSpec recurrent;
    DropoutSpec input;   // variant forward
    DropoutSpec output;  // variant forward

    static DropoutConfig recurrent_only(const DropoutSpec& spec) {
        DropoutConfig d;
        d.recurrent = spec;
        return d;
    }
    static DropoutConfig with_forward(const DropoutSpec& spec, double input_rate,
                                      double output_rate);
};

// Effective multiplier matrices (mask times keep-scale) for every
// dropout site of an unrolled pass. Dropout enters the computation only
// through these, so the backward pass treats masks as constants by
// construction. Empty vectors mean the site is inactive on this pass.
struct ScalePlan {
    std::vector<std::vector<Matrix>> rec;  // [T][slot], each [B x H]
    std::vector<Matrix> in;                // [T], each [B x E]
    std::vector<Matrix> out;               // [T], each [B x H]
};

// Forward intermediates for one step. Gate fields are filled per
// architecture: LSTM uses i/f/o/g, GRU uses z/r/g, vanilla RNN needs
// only the states already stored on the tape.
struct StepTape {
    Matrix x;              // [B x E] embedded input after input dropout
    Matrix i, f, o, z, r;  // gate activations
    Matrix g;              // cell update / candidate
    Matrix probs;          // [B x V] softmax at predicted steps, else empty
};

struct Tape {
    ModelConfig cfg;
    DropoutConfig drop;
    Phase phase = Phase::train;
    SequenceBatch batch;
    ScalePlan scales;
    std::vector<Matrix> h;  // h[0] = initial state, h[t+1] = state after step t
    std::vector<Matrix> c;  // LSTM only, same indexing
    std::vector<StepTape> steps;
    double loss = 0.0;
    bool consumed = false;

    // Recomputes the loss from the recorded inputs and masks; bit-equal
    // to the recorded value for an unchanged model.
    double replay_loss(const Model& m) const;
};

struct ForwardResult {
    double loss = 0.0;
    Tape tape;
    StateBatch final_state;
};

// Mean cross-entropy over predicted positions: every step for LM
// batches, the final step for classification batches. Masks are drawn
// from `rng` according to `drop` and recorded on the tape. `init`
// carries state across truncation windows (gradients never flow through
// the boundary).
ForwardResult forward_sequence(const Model& m, const SequenceBatch& batch,
                               const DropoutConfig& drop, Rng& rng, Phase phase,
                               const StateBatch* init = nullptr);

// Tape-free pass for evaluation and for the finite-difference oracle.
// `rng` may be null in the infer phase, where no masks are drawn.
struct InferenceResult {
    double loss = 0.0;  // mean NLL in nats over predicted positions
    long positions = 0;
    long correct = 0;   // final-step argmax hits (classification only)
    StateBatch final_state;
};

InferenceResult run_sequence(const Model& m, const SequenceBatch& batch,
                             const DropoutConfig& drop, Rng* rng, Phase phase,
                             const StateBatch* init = nullptr);

// Exact adjoint of the recorded forward pass. Consumes the tape: a
// second call on the same tape is rejected. Scaling the loss by
// loss_scale scales every gradient entry.
Gradients backward_sequence(Tape& tape, const Model& m, double loss_scale = 1.0);

// If the global L2 norm exceeds the threshold, scale every entry by
// threshold / norm.
void clip_gradients(Gradients& g, double threshold);
double global_norm(const Gradients& g);

// --- Finite-difference oracle ------------------------------------------------

struct GradCheckRow {
    std::string tensor;
    Eigen::Index index;  // flat index within the tensor
    double analytic = 0.0;
    double numeric = 0.0;
    double rel_err = 0.0;
};

struct GradCheckReport {
    std::vector<GradCheckRow> rows;
    double max_rel_err = 0.0;
};

// Central differences (L(th+eps) - L(th-eps)) / (2 eps) on a random
// subsample of parameter coordinates, against the analytic gradient.
// The seed fixes the dropout masks, so the loss is a deterministic
// function of the parameters. rel_err = |a-n| / max(|a|, |n|, 1e-8).
GradCheckReport grad_check(Model& m, const SequenceBatch& batch, const DropoutConfig& drop,
                           std::uint64_t seed, double eps = 1e-5, int n_coords = 200);

}  // namespace rnnlab
