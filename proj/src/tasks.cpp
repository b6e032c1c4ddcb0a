// SPDX-License-Identifier: Apache-2.0
#include "rnnlab/tasks.hpp"

#include <algorithm>
#include <cstring>
#include <map>
#include <sstream>
#include <stdexcept>

#include "rnnlab/io.hpp"

namespace rnnlab {

void SequenceBatch::validate() const {
    if (batch < 1 || time < 1) throw std::invalid_argument("batch must be non-empty");
    if (tokens.size() != static_cast<std::size_t>(batch) * time) {
        throw std::invalid_argument("tokens are not rectangular [batch x time]");
    }
    if (!targets.empty() && targets.size() != tokens.size()) {
        throw std::invalid_argument("targets must match tokens shape");
    }
    if (!labels.empty() && labels.size() != static_cast<std::size_t>(batch)) {
        throw std::invalid_argument("labels must have one entry per sequence");
    }
    if (labels.empty() == targets.empty()) {
        throw std::invalid_argument("exactly one of labels/targets must be set");
    }
    for (int id : tokens) {
        if (id < 0 || id >= vocab_size) throw std::invalid_argument("token id outside vocabulary");
    }
}

int temporal_order_length(TemporalOrderMode mode) {
    return mode == TemporalOrderMode::kShort ? 15 : 30;
}

SequenceBatch gen_temporal_order(TemporalOrderMode mode, int n, Rng& rng) {
    if (n < 1) throw std::invalid_argument("gen_temporal_order: n must be >= 1");
    const int len = temporal_order_length(mode);
    const int part = len / 3;

    SequenceBatch out;
    out.batch = n;
    out.time = len;
    out.vocab_size = kTemporalOrderVocab;
    out.tokens.resize(static_cast<std::size_t>(n) * len);
    out.labels.resize(n);

    for (int s = 0; s < n; ++s) {
        int* row = out.tokens.data() + static_cast<std::size_t>(s) * len;
        for (int t = 0; t < len; ++t) {
            row[t] = rng.keep(0.5) ? kSymbolC : kSymbolD;
        }
        const int pos1 = static_cast<int>(rng.below(part));
        const int pos2 = part + static_cast<int>(rng.below(part));
        const int sym1 = rng.keep(0.5) ? kSymbolA : kSymbolB;
        const int sym2 = rng.keep(0.5) ? kSymbolA : kSymbolB;
        row[pos1] = sym1;
        row[pos2] = sym2;
        out.labels[s] = sym1 * 2 + sym2;  // AA=0, AB=1, BA=2, BB=3
    }
    return out;
}

namespace {

constexpr const char* kSymbols = "ABCD";
constexpr const char* kLabels[] = {"AA", "AB", "BA", "BB"};

}  // namespace

std::string temporal_order_to_text(const SequenceBatch& data) {
    std::string out;
    for (int s = 0; s < data.batch; ++s) {
        for (int t = 0; t < data.time; ++t) out += kSymbols[data.token(s, t)];
        out += '\t';
        out += kLabels[data.labels[s]];
        out += '\n';
    }
    return out;
}

SequenceBatch temporal_order_from_text(const std::string& text) {
    SequenceBatch out;
    out.vocab_size = kTemporalOrderVocab;
    std::istringstream in(text);
    std::string line;
    int len = -1;
    while (std::getline(in, line)) {
        if (line.empty()) continue;
        const auto tab = line.find('\t');
        if (tab == std::string::npos) throw std::runtime_error("dataset line missing tab separator");
        const std::string seq = line.substr(0, tab);
        const std::string label = line.substr(tab + 1);
        if (len == -1) {
            len = static_cast<int>(seq.size());
            out.time = len;
        } else if (static_cast<int>(seq.size()) != len) {
            throw std::runtime_error("dataset sequences have mixed lengths");
        }
        for (char c : seq) {
            const char* p = std::strchr(kSymbols, c);
            if (!p || !c) throw std::runtime_error("unknown symbol in dataset: " + std::string(1, c));
            out.tokens.push_back(static_cast<int>(p - kSymbols));
        }
        int lab = -1;
        for (int i = 0; i < 4; ++i) {
            if (label == kLabels[i]) lab = i;
        }
        if (lab < 0) throw std::runtime_error("unknown label in dataset: " + label);
        out.labels.push_back(lab);
        ++out.batch;
    }
    if (out.batch == 0) throw std::runtime_error("dataset file is empty");
    return out;
}

Corpus corpus_from_text(const std::string& text, Unit unit, int vocab_cap, double train_frac,
                        double valid_frac) {
    if (text.empty()) throw std::runtime_error("corpus text is empty");
    if (train_frac <= 0 || valid_frac < 0 || train_frac + valid_frac > 1.0) {
        throw std::invalid_argument("corpus split fractions must be positive and sum below 1");
    }

    std::vector<std::string> units;
    if (unit == Unit::character) {
        units.reserve(text.size());
        for (char c : text) units.emplace_back(1, c);
    } else {
        std::istringstream in(text);
        std::string w;
        while (in >> w) units.push_back(w);
        if (units.empty()) throw std::runtime_error("corpus has no words");
    }

    // Frequency count with deterministic ordering: by count descending,
    // ties lexicographic.
    std::map<std::string, long> counts;
    for (const auto& u : units) ++counts[u];
    std::vector<std::pair<std::string, long>> ranked(counts.begin(), counts.end());
    std::stable_sort(ranked.begin(), ranked.end(), [](const auto& a, const auto& b) {
        if (a.second != b.second) return a.second > b.second;
        return a.first < b.first;
    });

    Corpus corpus;
    std::map<std::string, int> ids;
    const bool capped = unit == Unit::word && vocab_cap > 0 &&
                        static_cast<std::size_t>(vocab_cap) < ranked.size();
    const std::size_t keep = capped ? static_cast<std::size_t>(vocab_cap) : ranked.size();
    for (std::size_t i = 0; i < keep; ++i) {
        ids[ranked[i].first] = static_cast<int>(corpus.vocab.size());
        corpus.vocab.push_back(ranked[i].first);
    }
    int unk = -1;
    if (capped) {
        unk = static_cast<int>(corpus.vocab.size());
        corpus.vocab.push_back("<unk>");
    }

    corpus.stream.reserve(units.size());
    for (const auto& u : units) {
        auto it = ids.find(u);
        corpus.stream.push_back(it != ids.end() ? it->second : unk);
    }

    corpus.train_end = static_cast<std::size_t>(train_frac * corpus.stream.size());
    corpus.valid_end = corpus.train_end +
                       static_cast<std::size_t>(valid_frac * corpus.stream.size());
    corpus.valid_end = std::min(corpus.valid_end, corpus.stream.size());
    return corpus;
}

Corpus load_text_corpus(const std::string& path, Unit unit, int vocab_cap, double train_frac,
                        double valid_frac) {
    return corpus_from_text(read_file(path), unit, vocab_cap, train_frac, valid_frac);
}

std::vector<SequenceBatch> batch_lm(std::span<const int> split, int batch, int seq_len,
                                    int vocab_size) {
    if (batch < 1 || seq_len < 1) throw std::invalid_argument("batch_lm: batch and seq_len must be >= 1");
    if (split.size() < static_cast<std::size_t>(batch) * (seq_len + 1)) {
        throw std::invalid_argument("batch_lm: split of " + std::to_string(split.size()) +
                                    " tokens is too small for batch " + std::to_string(batch) +
                                    " x (seq_len+1) " + std::to_string(seq_len + 1));
    }
    const std::size_t row_len = split.size() / batch;
    const int n_windows = static_cast<int>((row_len - 1) / seq_len);

    std::vector<SequenceBatch> out;
    out.reserve(n_windows);
    for (int w = 0; w < n_windows; ++w) {
        SequenceBatch sb;
        sb.batch = batch;
        sb.time = seq_len;
        sb.vocab_size = vocab_size;
        sb.tokens.resize(static_cast<std::size_t>(batch) * seq_len);
        sb.targets.resize(sb.tokens.size());
        for (int b = 0; b < batch; ++b) {
            const int* row = split.data() + static_cast<std::size_t>(b) * row_len;
            for (int t = 0; t < seq_len; ++t) {
                sb.tokens[static_cast<std::size_t>(b) * seq_len + t] = row[w * seq_len + t];
                sb.targets[static_cast<std::size_t>(b) * seq_len + t] = row[w * seq_len + t + 1];
            }
        }
        out.push_back(std::move(sb));
    }
    return out;
}

Unit parse_unit(const std::string& s) {
    if (s == "char") return Unit::character;
    if (s == "word") return Unit::word;
    throw std::invalid_argument("unknown corpus unit: " + s);
}

}  // namespace rnnlab
