// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "rnnlab/optim.hpp"

namespace rnnlab {

// Bad arguments / bad config; maps to exit code 1. Runtime failures
// (I/O, divergence) surface as other exceptions and map to exit code 2.
struct UsageError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

// Parsed from a line-oriented key=value file with [section] headers and
// '#' comments, then optionally overridden with section.key=value pairs.
// Unknown keys are rejected before any compute happens.
struct RunConfig {
    // [model]
    Arch arch = Arch::lstm;
    int hidden = 64;
    int emb_dim = 16;
    Activation act = Activation::tanh;
    // [dropout]
    DropoutSpec recurrent;             // variant/rate/mode/scaling/gal_tied
    double input_rate = 0.0;           // forward dropout on the input connection
    double output_rate = 0.0;          // forward dropout on the output connection
    // [train]
    TrainConfig train;
    // [task]
    TaskKind task = TaskKind::temporal_order;
    std::string train_path, val_path, test_path;  // temporal-order datasets
    std::string data_path;                        // LM corpus
    int vocab_cap = 10000;
    double train_frac = 0.9;
    double valid_frac = 0.05;
    // [output]
    std::string out_dir = "out";

    DropoutConfig dropout_config() const;
};

RunConfig parse_run_config(const std::string& text);
RunConfig load_run_config(const std::string& path);
void apply_override(RunConfig& cfg, const std::string& dotted_key, const std::string& value);

// --- Commands ----------------------------------------------------------------
// Each command validates its inputs up front, writes outputs atomically
// and is deterministic given its seed.

// Temporal Order dataset in the line-oriented text format.
void cmd_gen_data(const std::string& mode, int n, std::uint64_t seed, const std::string& out_path);

// Trains per the config; writes <out>/run_log.csv and <out>/checkpoint.json.
RunLog cmd_train(const RunConfig& cfg);

// Deterministic inference-phase metrics; writes metrics.csv.
void cmd_eval(const std::string& checkpoint_path, const std::string& data_path,
              const std::string& task, const std::string& out_path, int batch = 16,
              int seq_len = 100);

// Decay-analysis CSV over the given keep probabilities.
void cmd_decay(const std::vector<double>& p_values, int t_max, const std::string& out_path);

struct GradCheckSummaryRow {
    std::string arch, variant, mode, scaling;
    double max_rel_err;
    bool pass;
};

// Finite-difference gradient verification; writes a per-coordinate
// report CSV (single combination) or a summary CSV (sweep). Returns
// true iff every max relative error stayed below 1e-4.
bool cmd_gradcheck(const std::string& arch, const std::string& variant, const std::string& mode,
                   std::uint64_t seed, const std::string& out_path);
bool cmd_gradcheck_sweep(std::uint64_t seed, const std::string& out_path,
                         std::vector<GradCheckSummaryRow>* rows = nullptr);

inline constexpr double kGradCheckTolerance = 1e-4;

// Shared by cmd_gradcheck and the acceptance suite: a small random LM
// batch plus a matching model for the given combination.
GradCheckReport run_grad_check_combo(Arch arch, Variant variant, MaskMode mode, Scaling scaling,
                                     std::uint64_t seed);

// Run-log CSV (epoch,split,loss,metric,lr).
std::string run_log_csv(const RunLog& log);

}  // namespace rnnlab
