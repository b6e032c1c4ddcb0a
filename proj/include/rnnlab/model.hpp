// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <functional>
#include <string>
#include <variant>

#include "rnnlab/cells.hpp"
#include "rnnlab/rng.hpp"

namespace rnnlab {

enum class Arch { rnn, lstm, gru };

Arch parse_arch(const std::string& name);
std::string arch_name(Arch a);

struct ModelConfig {
    Arch arch = Arch::lstm;
    Activation act = Activation::tanh;
    int vocab = 0;    // input vocabulary (embedding rows)
    int emb_dim = 0;
    int hidden = 0;
    int out_dim = 0;  // output vocabulary or class count
};

using CellParams = std::variant<RnnParams, LstmParams, GruParams>;

// One tensor container shared by parameters and their gradients; the
// shapes always mirror each other.
struct ParamSet {
    Matrix embedding;  // vocab x emb_dim
    CellParams cell;
    Matrix w_out;      // out_dim x hidden
    Vector b_out;
};

using Gradients = ParamSet;

struct Model {
    ModelConfig cfg;
    ParamSet params;
    // Token strings for LM models (id -> token); empty for synthetic
    // tasks. When present its length equals cfg.vocab.
    std::vector<std::string> vocab;
};

// Zero-initialized model of the given shape.
Model make_model(const ModelConfig& cfg);

Gradients zeros_like(const ModelConfig& cfg);

// Uniform [-range, range] init for every tensor; the forget-gate bias
// (LSTM only) is then offset by forget_bias.
void init_uniform(Model& m, double range, double forget_bias, Rng& rng);

// Visits every tensor as a flat double span, in a fixed documented
// order: embedding, cell matrices/biases (declaration order), w_out,
// b_out. The same order is used by checkpoints and the optimizers.
using TensorVisitor = std::function<void(const std::string& name, double* data, Eigen::Index size)>;
using ConstTensorVisitor =
    std::function<void(const std::string& name, const double* data, Eigen::Index size)>;

void for_each_tensor(ParamSet& p, const TensorVisitor& fn);
void for_each_tensor(const ParamSet& p, const ConstTensorVisitor& fn);

Eigen::Index param_count(const ParamSet& p);

// Versioned JSON checkpoint: architecture tag, sizes, activation and all
// tensors (row-major flat arrays). Writes are atomic.
void save_checkpoint(const Model& m, const std::string& path);
Model load_checkpoint(const std::string& path);

}  // namespace rnnlab
