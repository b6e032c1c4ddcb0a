// SPDX-License-Identifier: Apache-2.0
#include <doctest.h>

#include <cmath>

#include "rnnlab/bptt.hpp"
#include "rnnlab/cells.hpp"
#include "rnnlab/cli.hpp"

using namespace rnnlab;

namespace {

Model small_model(Arch arch, int vocab, int emb, int hidden, int out, double init,
                  std::uint64_t seed) {
    ModelConfig mc;
    mc.arch = arch;
    mc.act = Activation::tanh;
    mc.vocab = vocab;
    mc.emb_dim = emb;
    mc.hidden = hidden;
    mc.out_dim = out;
    Model m = make_model(mc);
    Rng rng(seed);
    init_uniform(m, init, 0.0, rng);
    return m;
}

SequenceBatch lm_batch(int batch, int time, int vocab, std::uint64_t seed) {
    SequenceBatch b;
    b.batch = batch;
    b.time = time;
    b.vocab_size = vocab;
    b.tokens.resize(static_cast<std::size_t>(batch) * time);
    b.targets.resize(b.tokens.size());
    Rng rng(seed);
    for (auto& t : b.tokens) t = static_cast<int>(rng.below(vocab));
    for (auto& t : b.targets) t = static_cast<int>(rng.below(vocab));
    return b;
}

SequenceBatch cls_batch(int batch, int time, int vocab, int classes, std::uint64_t seed) {
    SequenceBatch b;
    b.batch = batch;
    b.time = time;
    b.vocab_size = vocab;
    b.tokens.resize(static_cast<std::size_t>(batch) * time);
    b.labels.resize(batch);
    Rng rng(seed);
    for (auto& t : b.tokens) t = static_cast<int>(rng.below(vocab));
    for (auto& l : b.labels) l = static_cast<int>(rng.below(classes));
    return b;
}

DropoutSpec spec_of(Variant v, double rate, MaskMode mode = MaskMode::per_step,
                    Scaling s = Scaling::test_scale) {
    DropoutSpec d;
    d.variant = v;
    d.rate = rate;
    d.mode = mode;
    d.scaling = s;
    return d;
}

bool params_equal(const ParamSet& a, const ParamSet& b) {
    bool eq = true;
    std::vector<std::pair<const double*, Eigen::Index>> bs;
    for_each_tensor(b, [&](const std::string&, const double* d, Eigen::Index n) {
        bs.push_back({d, n});
    });
    std::size_t k = 0;
    for_each_tensor(a, [&](const std::string&, const double* d, Eigen::Index n) {
        for (Eigen::Index i = 0; i < n; ++i) eq = eq && d[i] == bs[k].first[i];
        ++k;
    });
    return eq;
}

}  // namespace

TEST_CASE("uniform logits give loss = ln V") {
    for (Arch arch : {Arch::rnn, Arch::lstm, Arch::gru}) {
        ModelConfig mc{arch, Activation::tanh, 12, 4, 6, 12};
        Model m = make_model(mc);  // all-zero parameters
        SequenceBatch b = lm_batch(3, 7, 12, 1);
        Rng rng(2);
        double loss = run_sequence(m, b, DropoutConfig{}, &rng, Phase::train).loss;
        CHECK(loss == doctest::Approx(std::log(12.0)).epsilon(1e-12));
    }
}

TEST_CASE("single-step loss matches a hand-computed cross entropy") {
    // One RNN step, one predicted position, weights chosen by hand.
    ModelConfig mc{Arch::rnn, Activation::tanh, 3, 2, 2, 3};
    Model m = make_model(mc);
    m.params.embedding << 1.0, 0.0, 0.0, 1.0, 0.5, 0.5;
    auto& cell = std::get<RnnParams>(m.params.cell);
    cell.w_h << 0.3, -0.2, 0.0, 0.0, 0.1, 0.4, 0.0, 0.0;
    cell.b_h << 0.05, -0.05;
    m.params.w_out << 1.0, 0.0, 0.0, 1.0, -1.0, 0.5;
    m.params.b_out << 0.0, 0.1, -0.1;

    SequenceBatch b;
    b.batch = 1;
    b.time = 1;
    b.vocab_size = 3;
    b.tokens = {1};
    b.targets = {2};

    // oracle: plain double arithmetic, scalar ops
    const double x0 = 0.0, x1 = 1.0;  // embedding row 1
    const double h0 = std::tanh(0.3 * x0 - 0.2 * x1 + 0.05);
    const double h1 = std::tanh(0.1 * x0 + 0.4 * x1 - 0.05);
    const double l0 = h0, l1 = h1 + 0.1, l2 = -h0 + 0.5 * h1 - 0.1;
    const double mx = std::max({l0, l1, l2});
    const double Z = std::exp(l0 - mx) + std::exp(l1 - mx) + std::exp(l2 - mx);
    const double want = std::log(Z) + mx - l2;

    Rng rng(3);
    double got = run_sequence(m, b, DropoutConfig{}, &rng, Phase::train).loss;
    CHECK(got == doctest::Approx(want).epsilon(1e-12));
}

TEST_CASE("inference is deterministic bit for bit") {
    Model m = small_model(Arch::lstm, 10, 4, 8, 10, 0.3, 4);
    SequenceBatch b = lm_batch(2, 9, 10, 5);
    DropoutConfig drop = DropoutConfig::with_forward(spec_of(Variant::update_drop, 0.5), 0.2, 0.5);
    InferenceResult r1 = run_sequence(m, b, drop, nullptr, Phase::infer);
    InferenceResult r2 = run_sequence(m, b, drop, nullptr, Phase::infer);
    CHECK(r1.loss == r2.loss);
}

TEST_CASE("forward rejects bad batches") {
    Model m = small_model(Arch::gru, 10, 4, 8, 10, 0.3, 4);
    SequenceBatch empty;
    Rng rng(1);
    CHECK_THROWS(run_sequence(m, empty, DropoutConfig{}, &rng, Phase::train));

    SequenceBatch oov = lm_batch(2, 4, 10, 6);
    oov.vocab_size = 99;
    oov.tokens[0] = 42;
    CHECK_THROWS(run_sequence(m, oov, DropoutConfig{}, &rng, Phase::train));
}

TEST_CASE("embedding gradients of unused tokens are exactly zero") {
    Model m = small_model(Arch::lstm, 10, 4, 8, 10, 0.4, 7);
    SequenceBatch b = lm_batch(2, 6, 10, 8);
    for (auto& t : b.tokens) t %= 3;  // only tokens 0..2 appear
    Rng rng(9);
    ForwardResult fr = forward_sequence(m, b, DropoutConfig{}, rng, Phase::train);
    Gradients g = backward_sequence(fr.tape, m);
    for (int row = 3; row < 10; ++row) {
        CHECK(g.embedding.row(row).cwiseAbs().maxCoeff() == 0.0);
    }
    // used tokens received gradient
    CHECK(g.embedding.topRows(3).cwiseAbs().maxCoeff() > 0.0);
}

TEST_CASE("scaling the loss scales every gradient") {
    Model m = small_model(Arch::gru, 8, 3, 6, 8, 0.4, 11);
    SequenceBatch b = lm_batch(2, 5, 8, 12);
    DropoutConfig drop = DropoutConfig::recurrent_only(spec_of(Variant::update_drop, 0.5));

    Rng r1(13), r2(13);
    ForwardResult f1 = forward_sequence(m, b, drop, r1, Phase::train);
    ForwardResult f2 = forward_sequence(m, b, drop, r2, Phase::train);
    Gradients g1 = backward_sequence(f1.tape, m, 1.0);
    Gradients g2 = backward_sequence(f2.tape, m, 2.0);

    std::vector<std::pair<const double*, Eigen::Index>> g2v;
    for_each_tensor(static_cast<const ParamSet&>(g2),
                    [&](const std::string&, const double* d, Eigen::Index n) {
                        g2v.push_back({d, n});
                    });
    std::size_t k = 0;
    for_each_tensor(static_cast<const ParamSet&>(g1),
                    [&](const std::string&, const double* d, Eigen::Index n) {
                        for (Eigen::Index i = 0; i < n; ++i) {
                            CHECK(g2v[k].first[i] == doctest::Approx(2.0 * d[i]).epsilon(1e-14));
                        }
                        ++k;
                    });
}

TEST_CASE("a tape can only be consumed once") {
    Model m = small_model(Arch::rnn, 6, 3, 4, 6, 0.3, 14);
    SequenceBatch b = lm_batch(1, 4, 6, 15);
    Rng rng(16);
    ForwardResult fr = forward_sequence(m, b, DropoutConfig{}, rng, Phase::train);
    Gradients g = backward_sequence(fr.tape, m);
    (void)g;
    CHECK_THROWS_AS(backward_sequence(fr.tape, m), std::invalid_argument);
}

TEST_CASE("replaying the tape reproduces the loss bit-exactly") {
    for (Arch arch : {Arch::rnn, Arch::lstm, Arch::gru}) {
        Model m = small_model(arch, 10, 4, 8, 10, 0.4, 17);
        SequenceBatch lm = lm_batch(3, 6, 10, 18);
        SequenceBatch cls = cls_batch(3, 6, 10, 10, 18);
        DropoutConfig drop =
            DropoutConfig::with_forward(spec_of(Variant::update_drop, 0.5), 0.2, 0.5);
        for (const SequenceBatch* b : {&lm, &cls}) {
            Rng rng(19);
            ForwardResult fr = forward_sequence(m, *b, drop, rng, Phase::train);
            CHECK(fr.tape.replay_loss(m) == fr.loss);
        }
        // infer-phase tape replays too
        Rng rng(20);
        ForwardResult fr = forward_sequence(m, lm, drop, rng, Phase::infer);
        CHECK(fr.tape.replay_loss(m) == fr.loss);
    }
}

TEST_CASE("masks as constants: same seed, bit-identical gradients") {
    Model m = small_model(Arch::lstm, 10, 4, 8, 10, 0.4, 21);
    SequenceBatch b = lm_batch(2, 8, 10, 22);
    DropoutConfig drop = DropoutConfig::recurrent_only(
        spec_of(Variant::gal, 0.5, MaskMode::per_sequence));
    Rng r1(23), r2(23);
    ForwardResult f1 = forward_sequence(m, b, drop, r1, Phase::train);
    ForwardResult f2 = forward_sequence(m, b, drop, r2, Phase::train);
    CHECK(f1.loss == f2.loss);
    Gradients g1 = backward_sequence(f1.tape, m);
    Gradients g2 = backward_sequence(f2.tape, m);
    CHECK(params_equal(g1, g2));
}

TEST_CASE("state carry across windows reproduces the full-unroll loss without dropout") {
    Model m = small_model(Arch::lstm, 10, 4, 8, 10, 0.4, 24);
    SequenceBatch full = lm_batch(2, 10, 10, 25);
    Rng rng(26);
    double whole = run_sequence(m, full, DropoutConfig{}, &rng, Phase::infer).loss;

    // split into two windows of 5 and carry the state
    SequenceBatch w1 = full, w2 = full;
    w1.time = w2.time = 5;
    w1.tokens.clear();
    w1.targets.clear();
    w2.tokens.clear();
    w2.targets.clear();
    for (int bi = 0; bi < 2; ++bi) {
        for (int t = 0; t < 5; ++t) {
            w1.tokens.push_back(full.token(bi, t));
            w1.targets.push_back(full.target(bi, t));
            w2.tokens.push_back(full.token(bi, 5 + t));
            w2.targets.push_back(full.target(bi, 5 + t));
        }
    }
    InferenceResult r1 = run_sequence(m, w1, DropoutConfig{}, nullptr, Phase::infer);
    InferenceResult r2 =
        run_sequence(m, w2, DropoutConfig{}, nullptr, Phase::infer, &r1.final_state);
    CHECK(0.5 * (r1.loss + r2.loss) == doctest::Approx(whole).epsilon(1e-12));
}

TEST_CASE("window equal to the full length is the full unroll") {
    Model m = small_model(Arch::gru, 10, 4, 8, 10, 0.4, 27);
    SequenceBatch b = lm_batch(2, 7, 10, 28);
    Rng r1(29), r2(29);
    ForwardResult f1 = forward_sequence(m, b, DropoutConfig{}, r1, Phase::train);
    ForwardResult f2 = forward_sequence(m, b, DropoutConfig{}, r2, Phase::train, nullptr);
    Gradients g1 = backward_sequence(f1.tape, m);
    Gradients g2 = backward_sequence(f2.tape, m);
    CHECK(params_equal(g1, g2));
}

TEST_CASE("central differences self-test: f(x) = x^2") {
    auto f = [](double x) { return x * x; };
    const double eps = 1e-5, x = 3.0;
    const double numeric = (f(x + eps) - f(x - eps)) / (2 * eps);
    CHECK(numeric == doctest::Approx(6.0).epsilon(1e-8));
}

TEST_CASE("gradients agree with central differences (spot checks)") {
    struct Combo {
        Arch arch;
        Variant v;
        MaskMode mode;
        Scaling sc;
    };
    const Combo combos[] = {
        {Arch::lstm, Variant::update_drop, MaskMode::per_step, Scaling::test_scale},
        {Arch::gru, Variant::gal, MaskMode::per_sequence, Scaling::test_scale},
        {Arch::rnn, Variant::moon, MaskMode::per_step, Scaling::train_scale},
        {Arch::lstm, Variant::moon, MaskMode::per_sequence, Scaling::train_scale},
        {Arch::gru, Variant::update_drop, MaskMode::per_step, Scaling::train_scale},
        {Arch::lstm, Variant::none, MaskMode::per_step, Scaling::test_scale},
    };
    for (const auto& c : combos) {
        GradCheckReport rep = run_grad_check_combo(c.arch, c.v, c.mode, c.sc, 99);
        CAPTURE(static_cast<int>(c.arch));
        CAPTURE(variant_name(c.v));
        CHECK(rep.max_rel_err < 1e-4);
        CHECK(rep.rows.size() >= 200);
    }
}

TEST_CASE("gradcheck covers classification losses and forward dropout too") {
    Model m = small_model(Arch::lstm, 8, 4, 8, 4, 0.5, 31);
    SequenceBatch b = cls_batch(4, 6, 8, 4, 32);
    DropoutConfig drop = DropoutConfig::with_forward(spec_of(Variant::update_drop, 0.5), 0.2, 0.5);
    GradCheckReport rep = grad_check(m, b, drop, 33, 1e-5, 150);
    CHECK(rep.max_rel_err < 1e-4);
}

TEST_CASE("untied gal masks check out against the oracle") {
    Model m = small_model(Arch::lstm, 8, 4, 8, 8, 0.5, 34);
    SequenceBatch b = lm_batch(3, 6, 8, 35);
    DropoutSpec spec = spec_of(Variant::gal, 0.5);
    spec.gal_tied = false;
    GradCheckReport rep = grad_check(m, b, DropoutConfig::recurrent_only(spec), 36, 1e-5, 150);
    CHECK(rep.max_rel_err < 1e-4);
}

TEST_CASE("clip_gradients enforces the max norm") {
    ModelConfig mc{Arch::rnn, Activation::tanh, 4, 2, 3, 4};
    Gradients g = zeros_like(mc);

    SUBCASE("norm above the threshold rescales everything") {
        // fill with a known norm of 20
        Eigen::Index total = param_count(g);
        const double v = 20.0 / std::sqrt(static_cast<double>(total));
        for_each_tensor(g, [&](const std::string&, double* d, Eigen::Index n) {
            for (Eigen::Index i = 0; i < n; ++i) d[i] = v;
        });
        CHECK(global_norm(g) == doctest::Approx(20.0).epsilon(1e-12));
        clip_gradients(g, 10.0);
        CHECK(global_norm(g) == doctest::Approx(10.0).epsilon(1e-12));
        for_each_tensor(static_cast<const ParamSet&>(g),
                        [&](const std::string&, const double* d, Eigen::Index n) {
                            for (Eigen::Index i = 0; i < n; ++i) {
                                CHECK(d[i] == doctest::Approx(v / 2).epsilon(1e-12));
                            }
                        });
    }

    SUBCASE("norm below the threshold is untouched") {
        Eigen::Index total = param_count(g);
        const double v = 5.0 / std::sqrt(static_cast<double>(total));
        for_each_tensor(g, [&](const std::string&, double* d, Eigen::Index n) {
            for (Eigen::Index i = 0; i < n; ++i) d[i] = v;
        });
        Gradients before = g;
        clip_gradients(g, 10.0);
        CHECK(params_equal(g, before));
        CHECK(global_norm(g) == doctest::Approx(std::min(5.0, 10.0)).epsilon(1e-12));
    }

    SUBCASE("invalid threshold is rejected") {
        CHECK_THROWS(clip_gradients(g, 0.0));
    }
}

TEST_CASE("batched steps agree with the single-sequence cell steps") {
    // batch of one, five steps, per-step update-drop: drive cells:: steps
    // with the same mask stream the sequence runner samples.
    ModelConfig mc{Arch::lstm, Activation::tanh, 6, 3, 5, 6};
    Model m = make_model(mc);
    Rng init(40);
    init_uniform(m, 0.5, 0.0, init);
    SequenceBatch b = lm_batch(1, 5, 6, 41);
    DropoutSpec spec = spec_of(Variant::update_drop, 0.5);
    DropoutConfig drop = DropoutConfig::recurrent_only(spec);

    Rng fwd_rng(42);
    ForwardResult fr = forward_sequence(m, b, drop, fwd_rng, Phase::train);

    Rng mask_rng(42);
    auto plan = mask_plan(spec, 5, 5, mask_rng);
    CellState st = zero_state(5, true);
    const auto& cell = std::get<LstmParams>(m.params.cell);
    for (int t = 0; t < 5; ++t) {
        Vector x = m.params.embedding.row(b.token(0, t)).transpose();
        st = lstm_step(cell, x, st, spec, {&plan[t], 1}, Phase::train);
        for (int j = 0; j < 5; ++j) {
            CHECK(fr.tape.h[t + 1](0, j) == doctest::Approx(st.h[j]).epsilon(1e-12));
            CHECK(fr.tape.c[t + 1](0, j) == doctest::Approx(st.c[j]).epsilon(1e-12));
        }
    }
}
