// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <span>
#include <string>
#include <vector>

#include "rnnlab/rng.hpp"

namespace rnnlab {

// Rectangular [batch x time] token ids. `labels` (one class id per
// sequence) marks a classification batch; `targets` ([batch x time],
// next-token ids) marks a language-modeling batch. Exactly one of the
// two is populated.
struct SequenceBatch {
    int batch = 0;
    int time = 0;
    std::vector<int> tokens;   // row-major [batch x time]
    std::vector<int> targets;  // row-major [batch x time]; empty for classification
    std::vector<int> labels;   // [batch]; empty for LM
    int vocab_size = 0;

    int token(int b, int t) const { return tokens[static_cast<std::size_t>(b) * time + t]; }
    int target(int b, int t) const { return targets[static_cast<std::size_t>(b) * time + t]; }
    bool is_classification() const { return !labels.empty(); }
    void validate() const;
};

// --- Temporal Order task ---------------------------------------------------
//
// Sequences over {A, B, C, D}: split into three equal parts, exactly one
// symbol from {A, B} placed uniformly at random within part 1 and one
// within part 2, everything else uniform over {C, D}. The label is the
// ordered pair: AA, AB, BA, BB.

enum class TemporalOrderMode { kShort, kMedium };  // length 15 / 30

inline constexpr int kSymbolA = 0, kSymbolB = 1, kSymbolC = 2, kSymbolD = 3;
inline constexpr int kTemporalOrderVocab = 4;
inline constexpr int kTemporalOrderClasses = 4;

int temporal_order_length(TemporalOrderMode mode);

// One rectangular dataset: tokens [n x len], labels [n].
SequenceBatch gen_temporal_order(TemporalOrderMode mode, int n, Rng& rng);

// Line-oriented text form: sequence string, tab, label string ("AB").
std::string temporal_order_to_text(const SequenceBatch& data);
SequenceBatch temporal_order_from_text(const std::string& text);

// --- Text corpora ------------------------------------------------------------

enum class Unit { character, word };

struct Corpus {
    std::vector<int> stream;
    std::vector<std::string> vocab;  // id -> token string
    std::size_t train_end = 0;       // stream[0, train_end) is train
    std::size_t valid_end = 0;       // stream[train_end, valid_end) is valid, rest test

    std::span<const int> train() const { return {stream.data(), train_end}; }
    std::span<const int> valid() const { return {stream.data() + train_end, valid_end - train_end}; }
    std::span<const int> test() const { return {stream.data() + valid_end, stream.size() - valid_end}; }
};

// char unit: one id per character. word unit: whitespace tokenization,
// most frequent vocab_cap words kept, the rest mapped to <unk>. Ids are
// assigned by descending frequency, ties broken lexicographically, so
// loading the same file twice gives identical corpora.
Corpus load_text_corpus(const std::string& path, Unit unit, int vocab_cap,
                        double train_frac = 0.9, double valid_frac = 0.05);

Corpus corpus_from_text(const std::string& text, Unit unit, int vocab_cap,
                        double train_frac = 0.9, double valid_frac = 0.05);

// Non-overlapping next-token windows. The split is laid out as `batch`
// contiguous rows; each window advances every row by seq_len. The number
// of windows is floor((row_len - 1) / seq_len); the trailing remainder
// is dropped, and the final token of a row only ever appears as a
// target.
std::vector<SequenceBatch> batch_lm(std::span<const int> split, int batch, int seq_len,
                                    int vocab_size);

Unit parse_unit(const std::string& s);

}  // namespace rnnlab
