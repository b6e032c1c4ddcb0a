// SPDX-License-Identifier: Apache-2.0
#include <doctest.h>

#include <sstream>

#include "rnnlab/tasks.hpp"

using namespace rnnlab;

TEST_CASE("temporal order: structure of generated sequences") {
    Rng rng(1);
    for (auto mode : {TemporalOrderMode::kShort, TemporalOrderMode::kMedium}) {
        const int len = temporal_order_length(mode);
        const int part = len / 3;
        SequenceBatch d = gen_temporal_order(mode, 2000, rng);
        CHECK(d.time == len);
        for (int s = 0; s < d.batch; ++s) {
            int in_first = 0, in_second = 0, in_third = 0;
            int first_sym = -1, second_sym = -1;
            for (int t = 0; t < len; ++t) {
                const int tok = d.token(s, t);
                if (tok == kSymbolA || tok == kSymbolB) {
                    if (t < part) {
                        ++in_first;
                        first_sym = tok;
                    } else if (t < 2 * part) {
                        ++in_second;
                        second_sym = tok;
                    } else {
                        ++in_third;
                    }
                }
            }
            REQUIRE(in_first == 1);
            REQUIRE(in_second == 1);
            REQUIRE(in_third == 0);
            // label encodes the ordered pair
            CHECK(d.labels[s] == first_sym * 2 + second_sym);
        }
    }
}

TEST_CASE("temporal order: A then B gives label AB") {
    Rng rng(7);
    SequenceBatch d = gen_temporal_order(TemporalOrderMode::kShort, 500, rng);
    std::string text = temporal_order_to_text(d);
    std::istringstream in(text);
    std::string line;
    while (std::getline(in, line)) {
        const auto tab = line.find('\t');
        const std::string seq = line.substr(0, tab), label = line.substr(tab + 1);
        std::string meaningful;
        for (char c : seq) {
            if (c == 'A' || c == 'B') meaningful += c;
        }
        CHECK(meaningful == label);
    }
}

TEST_CASE("temporal order: labels are near-uniform") {
    Rng rng(3);
    SequenceBatch d = gen_temporal_order(TemporalOrderMode::kShort, 100000, rng);
    long counts[4] = {0, 0, 0, 0};
    for (int lab : d.labels) ++counts[lab];
    for (long c : counts) {
        const double freq = static_cast<double>(c) / d.batch;
        CHECK(freq == doctest::Approx(0.25).epsilon(0.04));  // 0.25 +- 0.01
        CHECK(std::abs(freq - 0.25) <= 0.01);
    }
}

TEST_CASE("temporal order: text round trip and determinism") {
    Rng a(5), b(5);
    SequenceBatch d1 = gen_temporal_order(TemporalOrderMode::kMedium, 64, a);
    SequenceBatch d2 = gen_temporal_order(TemporalOrderMode::kMedium, 64, b);
    CHECK(temporal_order_to_text(d1) == temporal_order_to_text(d2));

    SequenceBatch back = temporal_order_from_text(temporal_order_to_text(d1));
    CHECK(back.tokens == d1.tokens);
    CHECK(back.labels == d1.labels);
    CHECK(back.time == d1.time);

    CHECK_THROWS(temporal_order_from_text(""));
    CHECK_THROWS(temporal_order_from_text("ABCD"));         // missing tab
    CHECK_THROWS(temporal_order_from_text("AXCD\tAB"));     // unknown symbol
    CHECK_THROWS(temporal_order_from_text("ACDB\tXY"));     // unknown label
}

TEST_CASE("corpus: character unit") {
    Corpus c = corpus_from_text("abab", Unit::character, 0, 0.5, 0.25);
    CHECK(c.vocab.size() == 2);
    CHECK(c.stream.size() == 4);
    // 'a' and 'b' both occur twice; lexicographic tie-break puts 'a' first
    CHECK(c.vocab[0] == "a");
    CHECK(c.stream == std::vector<int>{0, 1, 0, 1});
}

TEST_CASE("corpus: word unit with cap") {
    Corpus c = corpus_from_text("a b a", Unit::word, 10, 0.5, 0.25);
    CHECK(c.vocab.size() == 2);
    CHECK(c.stream == std::vector<int>{0, 1, 0});

    Corpus capped = corpus_from_text("a a a b b c", Unit::word, 2, 0.5, 0.25);
    REQUIRE(capped.vocab.size() == 3);  // a, b, <unk>
    CHECK(capped.vocab[2] == "<unk>");
    CHECK(capped.stream == std::vector<int>{0, 0, 0, 1, 1, 2});
}

TEST_CASE("corpus: deterministic and validates input") {
    const std::string text = "the quick brown fox jumps over the lazy dog the end";
    Corpus c1 = corpus_from_text(text, Unit::word, 100);
    Corpus c2 = corpus_from_text(text, Unit::word, 100);
    CHECK(c1.stream == c2.stream);
    CHECK(c1.vocab == c2.vocab);
    CHECK(c1.train_end == c2.train_end);

    CHECK_THROWS(corpus_from_text("", Unit::character, 0));
    CHECK_THROWS(corpus_from_text("abc", Unit::character, 0, 0.9, 0.9));
}

TEST_CASE("batch_lm: window arithmetic") {
    std::vector<int> stream(401);
    for (std::size_t i = 0; i < stream.size(); ++i) stream[i] = static_cast<int>(i % 7);

    auto windows = batch_lm(stream, 1, 100, 7);
    CHECK(windows.size() == 4);  // 400 input positions; one token is only ever a target

    // windows are disjoint and reassemble a prefix of the stream
    std::vector<int> seen;
    for (const auto& w : windows) {
        CHECK(w.batch == 1);
        CHECK(w.time == 100);
        for (int t = 0; t < w.time; ++t) seen.push_back(w.token(0, t));
    }
    CHECK(seen.size() == 400);
    for (std::size_t i = 0; i < seen.size(); ++i) CHECK(seen[i] == stream[i]);

    // next-token alignment
    for (const auto& w : windows) {
        for (int t = 0; t + 1 < w.time; ++t) CHECK(w.target(0, t) == w.token(0, t + 1));
    }
    CHECK(windows[0].target(0, 99) == windows[1].token(0, 0));
}

TEST_CASE("batch_lm: multi-row layout keeps rows contiguous") {
    std::vector<int> stream(250);
    for (std::size_t i = 0; i < stream.size(); ++i) stream[i] = static_cast<int>(i % 11);
    auto windows = batch_lm(stream, 2, 10, 11);
    const std::size_t row_len = 125;
    CHECK(windows.size() == (row_len - 1) / 10);
    CHECK(windows[0].token(0, 0) == stream[0]);
    CHECK(windows[0].token(1, 0) == stream[row_len]);
    CHECK(windows[1].token(1, 0) == stream[row_len + 10]);
}

TEST_CASE("batch_lm rejects undersized splits") {
    std::vector<int> tiny(50, 1);
    CHECK_THROWS_AS(batch_lm(tiny, 1, 50, 2), std::invalid_argument);
    CHECK_THROWS_AS(batch_lm(tiny, 4, 20, 2), std::invalid_argument);
}

TEST_CASE("SequenceBatch validation") {
    SequenceBatch b;
    b.batch = 2;
    b.time = 3;
    b.vocab_size = 4;
    b.tokens = {0, 1, 2, 3, 0, 1};
    b.labels = {0, 1};
    CHECK_NOTHROW(b.validate());

    SequenceBatch both = b;
    both.targets = both.tokens;
    CHECK_THROWS(both.validate());

    SequenceBatch oov = b;
    oov.tokens[0] = 9;
    CHECK_THROWS(oov.validate());

    SequenceBatch empty;
    CHECK_THROWS(empty.validate());
}
