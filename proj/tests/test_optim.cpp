// SPDX-License-Identifier: Apache-2.0
#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <numeric>

#include "rnnlab/optim.hpp"
#include "support/textgen.hpp"

using namespace rnnlab;
using rnnlab::testsupport::generate_corpus;

namespace {

ModelConfig tiny_cfg() { return {Arch::rnn, Activation::tanh, 4, 2, 3, 4}; }

void fill(ParamSet& p, double v) {
    for_each_tensor(p, [&](const std::string&, double* d, Eigen::Index n) {
        for (Eigen::Index i = 0; i < n; ++i) d[i] = v;
    });
}

std::vector<double> flat(const ParamSet& p) {
    std::vector<double> out;
    for_each_tensor(p, [&](const std::string&, const double* d, Eigen::Index n) {
        out.insert(out.end(), d, d + n);
    });
    return out;
}

// Spearman rank correlation, computed the long way.
double spearman(const std::vector<double>& xs, const std::vector<double>& ys) {
    auto ranks = [](const std::vector<double>& v) {
        std::vector<int> idx(v.size());
        std::iota(idx.begin(), idx.end(), 0);
        std::sort(idx.begin(), idx.end(), [&](int a, int b) { return v[a] < v[b]; });
        std::vector<double> r(v.size());
        for (std::size_t i = 0; i < idx.size(); ++i) r[idx[i]] = static_cast<double>(i);
        return r;
    };
    auto rx = ranks(xs), ry = ranks(ys);
    const double n = static_cast<double>(xs.size());
    double mx = (n - 1) / 2, sxy = 0, sxx = 0, syy = 0;
    for (std::size_t i = 0; i < xs.size(); ++i) {
        sxy += (rx[i] - mx) * (ry[i] - mx);
        sxx += (rx[i] - mx) * (rx[i] - mx);
        syy += (ry[i] - mx) * (ry[i] - mx);
    }
    return sxy / std::sqrt(sxx * syy);
}

TaskData tiny_temporal_data(int n_train, int n_val, int n_test, TemporalOrderMode mode,
                            std::uint64_t seed) {
    Rng gen(seed);
    TaskData data;
    data.kind = TaskKind::temporal_order;
    data.train_cls = gen_temporal_order(mode, n_train, gen);
    if (n_val) data.valid_cls = gen_temporal_order(mode, n_val, gen);
    if (n_test) data.test_cls = gen_temporal_order(mode, n_test, gen);
    return data;
}

}  // namespace

TEST_CASE("sgd_step") {
    ModelConfig cfg = tiny_cfg();
    ParamSet p = zeros_like(cfg);
    Gradients g = zeros_like(cfg);
    fill(p, 1.0);
    fill(g, 0.5);
    sgd_step(p, g, 1.0);
    for (double v : flat(p)) CHECK(v == doctest::Approx(0.5));

    fill(g, 0.0);
    ParamSet before = p;
    sgd_step(p, g, 1.0);
    CHECK(flat(p) == flat(before));

    // two half-lr steps equal one full-lr step under a constant gradient
    ParamSet a = zeros_like(cfg), b = zeros_like(cfg);
    fill(a, 1.0);
    fill(b, 1.0);
    fill(g, 0.3);
    sgd_step(a, g, 0.05);
    sgd_step(a, g, 0.05);
    sgd_step(b, g, 0.1);
    auto fa = flat(a), fb = flat(b);
    for (std::size_t i = 0; i < fa.size(); ++i) CHECK(fa[i] == doctest::Approx(fb[i]).epsilon(1e-15));
}

TEST_CASE("adam_step") {
    ModelConfig cfg = tiny_cfg();
    ParamSet p = zeros_like(cfg);
    Gradients g = zeros_like(cfg);
    AdamState st = make_adam_state(cfg);

    SUBCASE("first step has magnitude lr/(1+eps)") {
        fill(g, 1.0);
        adam_step(p, g, st, 0.001);
        for (double v : flat(p)) CHECK(v == doctest::Approx(-0.001 / (1 + 1e-8)).epsilon(1e-9));
    }

    SUBCASE("zero gradient from a zero state does not move") {
        adam_step(p, g, st, 0.001);
        for (double v : flat(p)) CHECK(v == 0.0);
    }

    SUBCASE("first-step update opposes the gradient sign") {
        fill(g, -2.5);
        adam_step(p, g, st, 0.001);
        for (double v : flat(p)) CHECK(v > 0.0);
    }
}

TEST_CASE("schedule rules") {
    SUBCASE("plateau divides by 1.5 when validation does not decrease") {
        CHECK(schedule(DecayRule::plateau_div_1_5, 2, {130.0, 131.0}, 1.0) ==
              doctest::Approx(2.0 / 3.0));
        CHECK(schedule(DecayRule::plateau_div_1_5, 2, {130.0, 130.0}, 1.0) ==
              doctest::Approx(2.0 / 3.0));
        CHECK(schedule(DecayRule::plateau_div_1_5, 2, {131.0, 130.0}, 1.0) == 1.0);
        CHECK(schedule(DecayRule::plateau_div_1_5, 1, {130.0}, 1.0) == 1.0);
    }

    SUBCASE("exponential decay starts at epoch 10") {
        CHECK(schedule(DecayRule::exp_0_97_after_epoch_10, 9, {}, 1.0) == 1.0);
        CHECK(schedule(DecayRule::exp_0_97_after_epoch_10, 10, {}, 1.0) == doctest::Approx(0.97));
        CHECK(schedule(DecayRule::exp_0_97_after_epoch_10, 11, {}, 0.97) ==
              doctest::Approx(0.97 * 0.97));
    }

    SUBCASE("none is the identity") {
        CHECK(schedule(DecayRule::none, 5, {1.0, 2.0}, 0.42) == 0.42);
    }

    SUBCASE("lr is non-increasing under both rules") {
        Rng rng(1);
        for (DecayRule rule : {DecayRule::plateau_div_1_5, DecayRule::exp_0_97_after_epoch_10}) {
            double lr = 1.0;
            std::vector<double> hist;
            for (int epoch = 1; epoch <= 50; ++epoch) {
                hist.push_back(rng.uniform(0.5, 2.0));
                double next = schedule(rule, epoch, hist, lr);
                CHECK(next <= lr);
                lr = next;
            }
        }
    }

    CHECK_THROWS(schedule(DecayRule::none, 0, {}, 1.0));
}

TEST_CASE("metrics") {
    std::vector<double> uniform10(100, std::log(10.0));
    CHECK(metrics(uniform10, Metric::perplexity) == doctest::Approx(10.0).epsilon(1e-12));

    std::vector<double> uniform2(64, std::log(2.0));
    CHECK(metrics(uniform2, Metric::bpc) == doctest::Approx(1.0).epsilon(1e-12));

    CHECK(accuracy_metric(10, 10) == 1.0);
    CHECK(accuracy_metric(1, 4) == 0.25);

    CHECK_THROWS(metrics(std::vector<double>{}, Metric::perplexity));
    CHECK_THROWS(accuracy_metric(0, 0));
}

TEST_CASE("train rejects data smaller than one minibatch") {
    TaskData data = tiny_temporal_data(10, 0, 0, TemporalOrderMode::kShort, 1);
    ModelConfig mc{Arch::lstm, Activation::tanh, 4, 4, 8, 4};
    Model m = make_model(mc);
    TrainConfig tc;
    tc.batch = 32;
    tc.epochs = 1;
    CHECK_THROWS(train(m, data, tc, DropoutConfig{}));
}

TEST_CASE("training is deterministic given the seed") {
    TaskData data = tiny_temporal_data(128, 64, 64, TemporalOrderMode::kShort, 3);
    ModelConfig mc{Arch::gru, Activation::tanh, 4, 4, 8, 4};
    TrainConfig tc;
    tc.batch = 32;
    tc.epochs = 3;
    tc.lr = 0.1;
    tc.seed = 7;
    DropoutConfig drop = DropoutConfig::recurrent_only([] {
        DropoutSpec s;
        s.variant = Variant::update_drop;
        s.rate = 0.25;
        return s;
    }());

    Model m1 = make_model(mc), m2 = make_model(mc);
    RunLog l1 = train(m1, data, tc, drop);
    RunLog l2 = train(m2, data, tc, drop);
    REQUIRE(l1.rows.size() == l2.rows.size());
    for (std::size_t i = 0; i < l1.rows.size(); ++i) {
        CHECK(l1.rows[i].epoch == l2.rows[i].epoch);
        CHECK(l1.rows[i].split == l2.rows[i].split);
        CHECK((l1.rows[i].loss == l2.rows[i].loss ||
               (std::isnan(l1.rows[i].loss) && std::isnan(l2.rows[i].loss))));
        CHECK((l1.rows[i].metric == l2.rows[i].metric ||
               (std::isnan(l1.rows[i].metric) && std::isnan(l2.rows[i].metric))));
        CHECK(l1.rows[i].lr == l2.rows[i].lr);
    }
}

TEST_CASE("training loss trends down (Spearman < 0)") {
    TaskData data = tiny_temporal_data(640, 128, 0, TemporalOrderMode::kShort, 5);
    ModelConfig mc{Arch::lstm, Activation::tanh, 4, 8, 24, 4};
    TrainConfig tc;
    tc.batch = 32;
    tc.epochs = 12;
    tc.lr = 0.1;
    tc.clip = 10;
    tc.seed = 1;
    tc.forget_bias = 1.0;
    DropoutSpec spec;
    spec.variant = Variant::update_drop;
    spec.rate = 0.25;
    Model m = make_model(mc);
    RunLog log = train(m, data, tc, DropoutConfig::recurrent_only(spec));

    std::vector<double> epochs, losses;
    for (const auto& r : log.rows) {
        if (r.split == "train") {
            epochs.push_back(r.epoch);
            losses.push_back(r.loss);
        }
    }
    REQUIRE(epochs.size() == 12);
    CHECK(spearman(epochs, losses) < 0.0);
}

TEST_CASE("divergence aborts with a diagnostic naming the step") {
    TaskData data = tiny_temporal_data(64, 0, 0, TemporalOrderMode::kShort, 8);
    ModelConfig mc{Arch::rnn, Activation::relu, 4, 4, 8, 4};
    TrainConfig tc;
    tc.batch = 32;
    tc.epochs = 3;
    tc.lr = 1e300;  // parameters overflow, the next pass goes non-finite
    tc.clip = 0.0;
    Model m = make_model(mc);
    try {
        train(m, data, tc, DropoutConfig{});
        FAIL("expected divergence");
    } catch (const std::runtime_error& e) {
        CHECK(std::string(e.what()).find("epoch") != std::string::npos);
        CHECK(std::string(e.what()).find("update") != std::string::npos);
    }
}

TEST_CASE("word-level LM trains with SGD, clipping and the plateau schedule") {
    const std::string text = generate_corpus(40 * 1024, 777);
    TaskData data;
    data.kind = TaskKind::lm_word;
    data.corpus = corpus_from_text(text, Unit::word, 50, 0.8, 0.1);
    REQUIRE(data.corpus.vocab.back() == "<unk>");

    ModelConfig mc{Arch::lstm, Activation::tanh, static_cast<int>(data.corpus.vocab.size()), 8,
                   16, static_cast<int>(data.corpus.vocab.size())};
    Model m = make_model(mc);
    TrainConfig tc;
    tc.optimizer = Optimizer::sgd;
    tc.lr = 1.0;
    tc.clip = 10.0;
    tc.batch = 8;
    tc.bptt_len = 35;
    tc.epochs = 4;
    tc.seed = 2;
    tc.init_range = 0.05;
    tc.decay_rule = DecayRule::plateau_div_1_5;
    RunLog log = train(m, data, tc, DropoutConfig{});

    double prev_lr = tc.lr;
    int valid_rows = 0;
    for (const auto& r : log.rows) {
        if (r.split == "valid") {
            ++valid_rows;
            CHECK(r.lr <= prev_lr);
            prev_lr = r.lr;
            CHECK(std::isfinite(r.metric));  // perplexity
            CHECK(r.metric > 1.0);
        }
    }
    CHECK(valid_rows == 4);
    const RunLogRow* test = log.last("test");
    REQUIRE(test != nullptr);
    CHECK(test->metric == doctest::Approx(std::exp(test->loss)).epsilon(1e-12));
}

TEST_CASE("evaluate_lm averages over carried-state windows") {
    ModelConfig mc{Arch::lstm, Activation::tanh, 5, 3, 6, 5};
    Model m = make_model(mc);
    Rng rng(9);
    init_uniform(m, 0.2, 0.0, rng);
    std::vector<int> stream(963);
    for (std::size_t i = 0; i < stream.size(); ++i) {
        stream[i] = static_cast<int>(rng.below(5));
    }
    EvalResult ev = evaluate_lm(m, stream, DropoutConfig{}, 2, 10);
    CHECK(ev.positions > 0);
    CHECK(std::isfinite(ev.mean_nll));
    // zero-parameter model scores exactly ln V per position
    Model zero = make_model(mc);
    EvalResult ez = evaluate_lm(zero, stream, DropoutConfig{}, 2, 10);
    CHECK(ez.mean_nll == doctest::Approx(std::log(5.0)).epsilon(1e-12));
}
