// SPDX-License-Identifier: Apache-2.0
#include "rnnlab/bptt.hpp"

#include <cmath>
#include <set>
#include <stdexcept>

namespace rnnlab {

namespace {

Matrix sigmoid_m(const Matrix& a) { return (1.0 / (1.0 + (-a.array()).exp())).matrix(); }

Matrix act_m(Activation k, const Matrix& a) {
    switch (k) {
        case Activation::sigmoid: return sigmoid_m(a);
        case Activation::tanh: return a.array().tanh().matrix();
        case Activation::relu: return a.cwiseMax(0.0);
    }
    return a;
}

// Derivative through the activation value y = f(a).
Matrix act_grad_value_m(Activation k, const Matrix& y) {
    switch (k) {
        case Activation::sigmoid: return (y.array() * (1.0 - y.array())).matrix();
        case Activation::tanh: return (1.0 - y.array().square()).matrix();
        case Activation::relu: return (y.array() > 0.0).cast<double>().matrix();
    }
    return y;
}

int gate_count(Arch a) { return a == Arch::lstm ? 4 : (a == Arch::gru ? 3 : 1); }

std::vector<Matrix> forward_site_scales(const DropoutSpec& spec, int batch, int time, int width,
                                        Rng& rng) {
    const double ks = train_keep_scale(spec.rate, spec.scaling);
    std::vector<Matrix> scales(time, Matrix(batch, width));
    for (int b = 0; b < batch; ++b) {
        auto plan = mask_plan(spec, time, width, rng);
        for (int t = 0; t < time; ++t) scales[t].row(b) = ks * plan[t].values.transpose();
    }
    return scales;
}

// Mask sampling order is fixed: recurrent site first (batch row major,
// then mask slot), then the input site, then the output site.
ScalePlan sample_scales(const DropoutConfig& drop, Arch arch, int batch, int time, int emb_dim,
                        int hidden, Rng* rng) {
    ScalePlan plan;
    auto need_rng = [&]() -> Rng& {
        if (!rng) throw std::invalid_argument("train-phase dropout needs an rng");
        return *rng;
    };
    if (drop.recurrent.enabled()) {
        const int slots =
            masks_per_step(drop.recurrent.variant, gate_count(arch), drop.recurrent.gal_tied);
        const double ks = train_keep_scale(drop.recurrent.rate, drop.recurrent.scaling);
        std::vector<std::vector<std::vector<Mask>>> per_row(batch);
        for (int b = 0; b < batch; ++b) {
            per_row[b].reserve(slots);
            for (int s = 0; s < slots; ++s) {
                per_row[b].push_back(mask_plan(drop.recurrent, time, hidden, need_rng()));
            }
        }
        plan.rec.assign(time, std::vector<Matrix>(slots, Matrix(batch, hidden)));
        for (int t = 0; t < time; ++t) {
            for (int s = 0; s < slots; ++s) {
                for (int b = 0; b < batch; ++b) {
                    plan.rec[t][s].row(b) = ks * per_row[b][s][t].values.transpose();
                }
            }
        }
    }
    if (drop.input.enabled()) {
        plan.in = forward_site_scales(drop.input, batch, time, emb_dim, need_rng());
    }
    if (drop.output.enabled()) {
        plan.out = forward_site_scales(drop.output, batch, time, hidden, need_rng());
    }
    return plan;
}

// Constant multiplier matrices for an inference pass, used only when a
// tape is being recorded so replay and backward see the same plan shape
// in both phases.
ScalePlan infer_scales(const DropoutConfig& drop, Arch arch, int batch, int time, int emb_dim,
                       int hidden) {
    ScalePlan plan;
    if (drop.recurrent.enabled()) {
        const int slots =
            masks_per_step(drop.recurrent.variant, gate_count(arch), drop.recurrent.gal_tied);
        const double s = infer_scale(drop.recurrent.rate, drop.recurrent.scaling);
        plan.rec.assign(time, std::vector<Matrix>(slots, Matrix::Constant(batch, hidden, s)));
    }
    if (drop.input.enabled()) {
        plan.in.assign(time, Matrix::Constant(batch, emb_dim,
                                              infer_scale(drop.input.rate, drop.input.scaling)));
    }
    if (drop.output.enabled()) {
        plan.out.assign(time, Matrix::Constant(batch, hidden,
                                               infer_scale(drop.output.rate, drop.output.scaling)));
    }
    return plan;
}

// Independent scalar-loop forward in extended precision. This is the
// loss the finite-difference oracle perturbs: it shares nothing with the
// batched Eigen path above except the sampled scale plan, and the lower
// round-off floor keeps central differences meaningful at eps = 1e-5
// even for coordinates with very small couplings.
long double loss_scalar_ld(const Model& m, const SequenceBatch& batch, const DropoutConfig& drop,
                           const ScalePlan& plan) {
    using ld = long double;
    const ModelConfig& cfg = m.cfg;
    const int B = batch.batch, T = batch.time, E = cfg.emb_dim, H = cfg.hidden, V = cfg.out_dim;
    const bool lm = !batch.is_classification();
    const Variant variant =
        drop.recurrent.enabled() ? drop.recurrent.variant : Variant::none;
    const bool gal = variant == Variant::gal;

    const RnnParams* rnn = std::get_if<RnnParams>(&m.params.cell);
    const LstmParams* lstm_p = std::get_if<LstmParams>(&m.params.cell);
    const GruParams* gru_p = std::get_if<GruParams>(&m.params.cell);

    auto act = [](Activation k, ld x) -> ld {
        switch (k) {
            case Activation::sigmoid: return 1.0L / (1.0L + std::exp(-x));
            case Activation::tanh: return std::tanh(x);
            case Activation::relu: return x > 0.0L ? x : 0.0L;
        }
        return x;
    };

    ld loss_sum = 0.0L;
    std::vector<ld> h(H), c(H), xe(E), hu(H), gate_i(H), gate_f(H), gate_o(H), gate_g(H);
    std::vector<ld> logits(V);

    for (int b = 0; b < B; ++b) {
        std::fill(h.begin(), h.end(), 0.0L);
        std::fill(c.begin(), c.end(), 0.0L);
        for (int t = 0; t < T; ++t) {
            const int tok = batch.token(b, t);
            for (int e = 0; e < E; ++e) {
                xe[e] = static_cast<ld>(m.params.embedding(tok, e));
                if (!plan.in.empty()) xe[e] *= static_cast<ld>(plan.in[t](b, e));
            }
            auto h_used = [&](int slot, std::vector<ld>& out) {
                if (variant == Variant::none || plan.rec.empty()) {
                    out = h;
                    return;
                }
                const auto& slots = plan.rec[t];
                const Matrix& s = slots[slot < static_cast<int>(slots.size()) ? slot : 0];
                for (int j = 0; j < H; ++j) out[j] = h[j] * static_cast<ld>(s(b, j));
            };
            auto pre = [&](const Matrix& w, const Vector& bias, const std::vector<ld>& hin,
                           int row) -> ld {
                ld acc = static_cast<ld>(bias[row]);
                for (int e = 0; e < E; ++e) acc += static_cast<ld>(w(row, e)) * xe[e];
                for (int j = 0; j < H; ++j) acc += static_cast<ld>(w(row, E + j)) * hin[j];
                return acc;
            };
            auto site_scale = [&](int j) -> ld {
                return plan.rec.empty() ? 1.0L : static_cast<ld>(plan.rec[t][0](b, j));
            };

            if (rnn) {
                h_used(0, hu);
                for (int j = 0; j < H; ++j) gate_g[j] = act(rnn->act, pre(rnn->w_h, rnn->b_h, hu, j));
                h = gate_g;
            } else if (lstm_p) {
                std::vector<ld> hu_i(H), hu_f(H), hu_o(H), hu_g(H);
                if (gal) {
                    h_used(0, hu_i);
                    h_used(1, hu_f);
                    h_used(2, hu_o);
                    h_used(3, hu_g);
                } else {
                    hu_i = hu_f = hu_o = hu_g = h;
                }
                for (int j = 0; j < H; ++j) {
                    gate_i[j] = act(Activation::sigmoid, pre(lstm_p->w_i, lstm_p->b_i, hu_i, j));
                    gate_f[j] = act(Activation::sigmoid, pre(lstm_p->w_f, lstm_p->b_f, hu_f, j));
                    gate_o[j] = act(Activation::sigmoid, pre(lstm_p->w_o, lstm_p->b_o, hu_o, j));
                    gate_g[j] = act(lstm_p->act, pre(lstm_p->w_g, lstm_p->b_g, hu_g, j));
                }
                for (int j = 0; j < H; ++j) {
                    ld cj;
                    switch (variant) {
                        case Variant::moon:
                            cj = (gate_f[j] * c[j] + gate_i[j] * gate_g[j]) * site_scale(j);
                            break;
                        case Variant::update_drop:
                            cj = gate_f[j] * c[j] + gate_i[j] * (gate_g[j] * site_scale(j));
                            break;
                        default:
                            cj = gate_f[j] * c[j] + gate_i[j] * gate_g[j];
                            break;
                    }
                    c[j] = cj;
                    h[j] = gate_o[j] * act(lstm_p->act, cj);
                }
            } else {
                std::vector<ld> hu_z(H), hu_r(H), hu_g(H), rh(H);
                if (gal) {
                    h_used(0, hu_z);
                    h_used(1, hu_r);
                    h_used(2, hu_g);
                } else {
                    hu_z = hu_r = hu_g = h;
                }
                for (int j = 0; j < H; ++j) {
                    gate_i[j] = act(Activation::sigmoid, pre(gru_p->w_z, gru_p->b_z, hu_z, j));  // z
                    gate_f[j] = act(Activation::sigmoid, pre(gru_p->w_r, gru_p->b_r, hu_r, j));  // r
                }
                for (int j = 0; j < H; ++j) rh[j] = gate_f[j] * hu_g[j];
                for (int j = 0; j < H; ++j) gate_g[j] = act(gru_p->act, pre(gru_p->w_g, gru_p->b_g, rh, j));
                for (int j = 0; j < H; ++j) {
                    ld hj;
                    switch (variant) {
                        case Variant::update_drop:
                            hj = (1.0L - gate_i[j]) * h[j] + gate_i[j] * (gate_g[j] * site_scale(j));
                            break;
                        case Variant::moon:
                            hj = ((1.0L - gate_i[j]) * h[j] + gate_i[j] * gate_g[j]) * site_scale(j);
                            break;
                        default:
                            hj = (1.0L - gate_i[j]) * h[j] + gate_i[j] * gate_g[j];
                            break;
                    }
                    h[j] = hj;
                }
            }

            const bool predicted = lm || t == T - 1;
            if (!predicted) continue;
            for (int v = 0; v < V; ++v) {
                ld acc = static_cast<ld>(m.params.b_out[v]);
                for (int j = 0; j < H; ++j) {
                    ld hj = h[j];
                    if (!plan.out.empty()) hj *= static_cast<ld>(plan.out[t](b, j));
                    acc += static_cast<ld>(m.params.w_out(v, j)) * hj;
                }
                logits[v] = acc;
            }
            ld mx = logits[0];
            for (int v = 1; v < V; ++v) mx = std::max(mx, logits[v]);
            ld sum = 0.0L;
            for (int v = 0; v < V; ++v) sum += std::exp(logits[v] - mx);
            const int target = lm ? batch.target(b, t) : batch.labels[b];
            loss_sum += std::log(sum) + mx - logits[target];
        }
    }
    const long n_pred = lm ? static_cast<long>(B) * T : B;
    return loss_sum / static_cast<ld>(n_pred);
}

struct CoreResult {
    double loss = 0.0;  // mean NLL over predicted positions
    long positions = 0;
    long correct = 0;
};

// The one forward loop. `plan` carries materialized dropout multipliers
// (always in the train phase, and whenever a tape is recorded);
// otherwise inference uses the uniform scalar factors directly.
CoreResult run_core(const Model& m, const SequenceBatch& batch, const DropoutConfig& drop,
                    Phase phase, const ScalePlan* plan, const StateBatch* init, Tape* tape,
                    StateBatch* final_state) {
    const ModelConfig& cfg = m.cfg;
    batch.validate();
    if (batch.vocab_size > cfg.vocab) {
        throw std::invalid_argument("batch vocabulary exceeds model vocabulary");
    }
    const int B = batch.batch, T = batch.time, E = cfg.emb_dim, H = cfg.hidden, V = cfg.out_dim;
    const bool lm = !batch.is_classification();
    if (lm) {
        for (int id : batch.targets) {
            if (id < 0 || id >= V) throw std::invalid_argument("target id outside output vocabulary");
        }
    } else {
        for (int id : batch.labels) {
            if (id < 0 || id >= V) throw std::invalid_argument("label outside class count");
        }
    }
    const bool lstm = cfg.arch == Arch::lstm;
    const bool gal = drop.recurrent.enabled() && drop.recurrent.variant == Variant::gal;
    const Variant variant = drop.recurrent.enabled() ? drop.recurrent.variant : Variant::none;

    Matrix h = init ? init->h : Matrix::Zero(B, H);
    Matrix c = lstm ? (init && init->c.size() ? init->c : Matrix::Zero(B, H)) : Matrix();
    if (h.rows() != B || h.cols() != H) throw std::invalid_argument("initial state shape mismatch");

    if (tape) {
        tape->cfg = cfg;
        tape->drop = drop;
        tape->phase = phase;
        tape->batch = batch;
        tape->h.clear();
        tape->c.clear();
        tape->steps.clear();
        tape->h.reserve(T + 1);
        tape->h.push_back(h);
        if (lstm) {
            tape->c.reserve(T + 1);
            tape->c.push_back(c);
        }
        tape->steps.reserve(T);
    }

    const double rec_inf =
        drop.recurrent.enabled() ? infer_scale(drop.recurrent.rate, drop.recurrent.scaling) : 1.0;
    const double in_inf =
        drop.input.enabled() ? infer_scale(drop.input.rate, drop.input.scaling) : 1.0;
    const double out_inf =
        drop.output.enabled() ? infer_scale(drop.output.rate, drop.output.scaling) : 1.0;

    const RnnParams* rnn = std::get_if<RnnParams>(&m.params.cell);
    const LstmParams* lstm_p = std::get_if<LstmParams>(&m.params.cell);
    const GruParams* gru_p = std::get_if<GruParams>(&m.params.cell);

    const long n_pred = lm ? static_cast<long>(B) * T : B;
    double loss_sum = 0.0;
    long correct = 0;

    Matrix z_in(B, E + H);
    for (int t = 0; t < T; ++t) {
        // Input embedding + forward dropout on the input connection.
        Matrix x(B, E);
        for (int b = 0; b < B; ++b) x.row(b) = m.params.embedding.row(batch.token(b, t));
        if (plan && !plan->in.empty()) {
            x = x.cwiseProduct(plan->in[t]);
        } else if (drop.input.enabled() && phase == Phase::infer) {
            x *= in_inf;
        }

        const std::vector<Matrix>* rs = (plan && !plan->rec.empty()) ? &plan->rec[t] : nullptr;
        // Dropped h_{t-1}: used by every variant on the vanilla RNN and
        // by gal in the gate computations of LSTM/GRU.
        auto h_used = [&](int slot) -> Matrix {
            if (variant == Variant::none) return h;
            if (rs) {
                const int s = slot < static_cast<int>(rs->size()) ? slot : 0;
                return h.cwiseProduct((*rs)[s]);
            }
            return (rec_inf * h).eval();
        };

        StepTape st;
        if (rnn) {
            z_in.leftCols(E) = x;
            z_in.rightCols(H) = h_used(0);
            Matrix a = z_in * rnn->w_h.transpose();
            a.rowwise() += rnn->b_h.transpose();
            h = act_m(rnn->act, a);
        } else if (lstm_p) {
            auto gate = [&](const Matrix& w, const Vector& b, int slot, Activation act) {
                if (gal) z_in.rightCols(H) = h_used(slot);
                Matrix a = z_in * w.transpose();
                a.rowwise() += b.transpose();
                return act_m(act, a);
            };
            z_in.leftCols(E) = x;
            if (!gal) z_in.rightCols(H) = h;
            st.i = gate(lstm_p->w_i, lstm_p->b_i, 0, Activation::sigmoid);
            st.f = gate(lstm_p->w_f, lstm_p->b_f, 1, Activation::sigmoid);
            st.o = gate(lstm_p->w_o, lstm_p->b_o, 2, Activation::sigmoid);
            st.g = gate(lstm_p->w_g, lstm_p->b_g, 3, lstm_p->act);
            switch (variant) {
                case Variant::moon: {
                    Matrix c_raw = st.f.cwiseProduct(c) + st.i.cwiseProduct(st.g);
                    c = rs ? c_raw.cwiseProduct((*rs)[0]) : (rec_inf * c_raw).eval();
                    break;
                }
                case Variant::update_drop: {
                    Matrix g_d = rs ? st.g.cwiseProduct((*rs)[0]) : (rec_inf * st.g).eval();
                    c = st.f.cwiseProduct(c) + st.i.cwiseProduct(g_d);
                    break;
                }
                default:
                    c = st.f.cwiseProduct(c) + st.i.cwiseProduct(st.g);
                    break;
            }
            h = st.o.cwiseProduct(act_m(lstm_p->act, c));
        } else {
            auto gate = [&](const Matrix& w, const Vector& b, const Matrix& right, Activation act) {
                z_in.rightCols(H) = right;
                Matrix a = z_in * w.transpose();
                a.rowwise() += b.transpose();
                return act_m(act, a);
            };
            z_in.leftCols(E) = x;
            st.z = gate(gru_p->w_z, gru_p->b_z, gal ? h_used(0) : h, Activation::sigmoid);
            st.r = gate(gru_p->w_r, gru_p->b_r, gal ? h_used(1) : h, Activation::sigmoid);
            st.g = gate(gru_p->w_g, gru_p->b_g,
                        st.r.cwiseProduct(gal ? h_used(2) : h), gru_p->act);
            switch (variant) {
                case Variant::update_drop: {
                    Matrix g_d = rs ? st.g.cwiseProduct((*rs)[0]) : (rec_inf * st.g).eval();
                    h = (1.0 - st.z.array()).matrix().cwiseProduct(h) + st.z.cwiseProduct(g_d);
                    break;
                }
                case Variant::moon: {
                    Matrix h_raw =
                        (1.0 - st.z.array()).matrix().cwiseProduct(h) + st.z.cwiseProduct(st.g);
                    h = rs ? h_raw.cwiseProduct((*rs)[0]) : (rec_inf * h_raw).eval();
                    break;
                }
                default:
                    h = (1.0 - st.z.array()).matrix().cwiseProduct(h) + st.z.cwiseProduct(st.g);
                    break;
            }
        }

        // Prediction head.
        const bool predicted = lm || t == T - 1;
        if (predicted) {
            Matrix h_out = h;
            if (plan && !plan->out.empty()) {
                h_out = h.cwiseProduct(plan->out[t]);
            } else if (drop.output.enabled() && phase == Phase::infer) {
                h_out = (out_inf * h).eval();
            }
            Matrix logits = h_out * m.params.w_out.transpose();
            logits.rowwise() += m.params.b_out.transpose();
            Matrix probs(B, V);
            for (int b = 0; b < B; ++b) {
                const auto row = logits.row(b);
                const double mx = row.maxCoeff();
                Eigen::ArrayXd e = (row.transpose().array() - mx).exp();
                const double sum = e.sum();
                probs.row(b) = (e / sum).matrix().transpose();
                const int target = lm ? batch.target(b, t) : batch.labels[b];
                loss_sum += std::log(sum) + mx - row[target];
                if (!lm) {
                    Eigen::Index argmax;
                    row.maxCoeff(&argmax);
                    if (static_cast<int>(argmax) == batch.labels[b]) ++correct;
                }
            }
            st.probs = std::move(probs);
        }

        if (tape) {
            st.x = std::move(x);
            tape->steps.push_back(std::move(st));
            tape->h.push_back(h);
            if (lstm) tape->c.push_back(c);
        }
    }

    if (final_state) {
        final_state->h = h;
        if (lstm) final_state->c = c;
    }

    CoreResult res;
    res.loss = loss_sum / static_cast<double>(n_pred);
    res.positions = n_pred;
    res.correct = correct;
    if (!std::isfinite(res.loss)) throw std::runtime_error("non-finite loss in forward pass");
    return res;
}

}  // namespace

StateBatch zero_state_batch(const ModelConfig& cfg, int batch) {
    StateBatch s;
    s.h = Matrix::Zero(batch, cfg.hidden);
    if (cfg.arch == Arch::lstm) s.c = Matrix::Zero(batch, cfg.hidden);
    return s;
}

DropoutConfig DropoutConfig::with_forward(const DropoutSpec& spec, double input_rate,
                                          double output_rate) {
    DropoutConfig d;
    d.recurrent = spec;
    d.input.variant = Variant::forward;
    d.input.rate = input_rate;
    d.input.scaling = spec.scaling;
    d.output.variant = Variant::forward;
    d.output.rate = output_rate;
    d.output.scaling = spec.scaling;
    return d;
}

ForwardResult forward_sequence(const Model& m, const SequenceBatch& batch,
                               const DropoutConfig& drop, Rng& rng, Phase phase,
                               const StateBatch* init) {
    ForwardResult out;
    Tape& tape = out.tape;
    if (phase == Phase::train) {
        tape.scales = sample_scales(drop, m.cfg.arch, batch.batch, batch.time, m.cfg.emb_dim,
                                    m.cfg.hidden, &rng);
    } else {
        tape.scales = infer_scales(drop, m.cfg.arch, batch.batch, batch.time, m.cfg.emb_dim,
                                   m.cfg.hidden);
    }
    CoreResult core = run_core(m, batch, drop, phase, &tape.scales, init, &tape, &out.final_state);
    tape.loss = core.loss;
    out.loss = core.loss;
    return out;
}

InferenceResult run_sequence(const Model& m, const SequenceBatch& batch, const DropoutConfig& drop,
                             Rng* rng, Phase phase, const StateBatch* init) {
    InferenceResult out;
    ScalePlan plan;
    const ScalePlan* plan_ptr = nullptr;
    if (phase == Phase::train) {
        plan = sample_scales(drop, m.cfg.arch, batch.batch, batch.time, m.cfg.emb_dim, m.cfg.hidden,
                             rng);
        plan_ptr = &plan;
    }
    CoreResult core = run_core(m, batch, drop, phase, plan_ptr, init, nullptr, &out.final_state);
    out.loss = core.loss;
    out.positions = core.positions;
    out.correct = core.correct;
    return out;
}

double Tape::replay_loss(const Model& m) const {
    StateBatch init;
    init.h = h.at(0);
    if (!c.empty()) init.c = c.at(0);
    CoreResult core = run_core(m, batch, drop, phase, &scales, &init, nullptr, nullptr);
    return core.loss;
}

Gradients backward_sequence(Tape& tape, const Model& m, double loss_scale) {
    if (tape.consumed) throw std::invalid_argument("backward_sequence: tape already consumed");
    if (tape.steps.empty()) throw std::invalid_argument("backward_sequence: tape is empty");
    tape.consumed = true;

    const ModelConfig& cfg = tape.cfg;
    const SequenceBatch& batch = tape.batch;
    const int B = batch.batch, T = batch.time, E = cfg.emb_dim, H = cfg.hidden;
    const bool lm = !batch.is_classification();
    const long n_pred = lm ? static_cast<long>(B) * T : B;
    const Variant variant =
        tape.drop.recurrent.enabled() ? tape.drop.recurrent.variant : Variant::none;
    const bool gal = variant == Variant::gal;

    Gradients grads = zeros_like(cfg);
    Matrix* g_emb = &grads.embedding;

    auto rec_at = [&](int t, int slot) -> const Matrix* {
        if (tape.scales.rec.empty()) return nullptr;
        const auto& slots = tape.scales.rec[t];
        return &slots[slot < static_cast<int>(slots.size()) ? slot : 0];
    };

    const RnnParams* rnn = std::get_if<RnnParams>(&m.params.cell);
    const LstmParams* lstm_p = std::get_if<LstmParams>(&m.params.cell);
    const GruParams* gru_p = std::get_if<GruParams>(&m.params.cell);

    RnnParams* g_rnn = std::get_if<RnnParams>(&grads.cell);
    LstmParams* g_lstm = std::get_if<LstmParams>(&grads.cell);
    GruParams* g_gru = std::get_if<GruParams>(&grads.cell);

    Matrix dh_next = Matrix::Zero(B, H);
    Matrix dc_next = lstm_p ? Matrix::Zero(B, H) : Matrix();
    Matrix z_in(B, E + H);

    for (int t = T - 1; t >= 0; --t) {
        const StepTape& st = tape.steps[t];
        const Matrix& h_prev = tape.h[t];
        const Matrix& h_t = tape.h[t + 1];

        Matrix dh = dh_next;
        Matrix dx = Matrix::Zero(B, E);

        // Output head.
        if (st.probs.size()) {
            Matrix dlogits = st.probs;
            for (int b = 0; b < B; ++b) {
                const int target = lm ? batch.target(b, t) : batch.labels[b];
                dlogits(b, target) -= 1.0;
            }
            dlogits *= loss_scale / static_cast<double>(n_pred);

            Matrix h_out = h_t;
            const Matrix* out_scale = tape.scales.out.empty() ? nullptr : &tape.scales.out[t];
            if (out_scale) h_out = h_t.cwiseProduct(*out_scale);
            grads.w_out.noalias() += dlogits.transpose() * h_out;
            grads.b_out += dlogits.colwise().sum().transpose();
            Matrix dh_out = dlogits * m.params.w_out;
            dh += out_scale ? dh_out.cwiseProduct(*out_scale).eval() : dh_out;
        }

        if (rnn) {
            Matrix da = dh.cwiseProduct(act_grad_value_m(rnn->act, h_t));
            const Matrix* s = variant != Variant::none ? rec_at(t, 0) : nullptr;
            z_in.leftCols(E) = st.x;
            z_in.rightCols(H) = s ? h_prev.cwiseProduct(*s).eval() : h_prev;
            g_rnn->w_h.noalias() += da.transpose() * z_in;
            g_rnn->b_h += da.colwise().sum().transpose();
            Matrix dz = da * rnn->w_h;
            dx += dz.leftCols(E);
            Matrix dh_prev = dz.rightCols(H);
            dh_next = s ? dh_prev.cwiseProduct(*s).eval() : dh_prev;
        } else if (lstm_p) {
            const Matrix& c_prev = tape.c[t];
            const Matrix& c_t = tape.c[t + 1];
            const Matrix phi_c = act_m(lstm_p->act, c_t);
            const Matrix* s = variant != Variant::none && !gal ? rec_at(t, 0) : nullptr;

            Matrix da_o = dh.cwiseProduct(phi_c)
                              .cwiseProduct(act_grad_value_m(Activation::sigmoid, st.o));
            Matrix dc = dc_next + dh.cwiseProduct(st.o)
                                      .cwiseProduct(act_grad_value_m(lstm_p->act, phi_c));
            Matrix dc_raw = variant == Variant::moon ? dc.cwiseProduct(*s).eval() : std::move(dc);
            Matrix g_eff =
                variant == Variant::update_drop ? st.g.cwiseProduct(*s).eval() : st.g;
            Matrix da_f = dc_raw.cwiseProduct(c_prev)
                              .cwiseProduct(act_grad_value_m(Activation::sigmoid, st.f));
            Matrix da_i = dc_raw.cwiseProduct(g_eff)
                              .cwiseProduct(act_grad_value_m(Activation::sigmoid, st.i));
            Matrix dg = dc_raw.cwiseProduct(st.i);
            if (variant == Variant::update_drop) dg = dg.cwiseProduct(*s);
            Matrix da_g = dg.cwiseProduct(act_grad_value_m(lstm_p->act, st.g));
            dc_next = dc_raw.cwiseProduct(st.f);

            Matrix dh_prev = Matrix::Zero(B, H);
            z_in.leftCols(E) = st.x;
            struct GatePath {
                const Matrix* da;
                const Matrix* w;
                Matrix* gw;
                Vector* gb;
                int slot;
            };
            const GatePath paths[4] = {
                {&da_i, &lstm_p->w_i, &g_lstm->w_i, &g_lstm->b_i, 0},
                {&da_f, &lstm_p->w_f, &g_lstm->w_f, &g_lstm->b_f, 1},
                {&da_o, &lstm_p->w_o, &g_lstm->w_o, &g_lstm->b_o, 2},
                {&da_g, &lstm_p->w_g, &g_lstm->w_g, &g_lstm->b_g, 3},
            };
            for (const auto& gp : paths) {
                const Matrix* gs = gal ? rec_at(t, gp.slot) : nullptr;
                z_in.rightCols(H) = gs ? h_prev.cwiseProduct(*gs).eval() : h_prev;
                gp.gw->noalias() += gp.da->transpose() * z_in;
                *gp.gb += gp.da->colwise().sum().transpose();
                Matrix dz = *gp.da * *gp.w;
                dx += dz.leftCols(E);
                Matrix dh_used = dz.rightCols(H);
                dh_prev += gs ? dh_used.cwiseProduct(*gs).eval() : dh_used;
            }
            dh_next = std::move(dh_prev);
        } else {
            const Matrix* s = variant != Variant::none && !gal ? rec_at(t, 0) : nullptr;
            auto gal_scale = [&](int slot) -> const Matrix* {
                return gal ? rec_at(t, slot) : nullptr;
            };

            Matrix dh_raw = variant == Variant::moon ? dh.cwiseProduct(*s).eval() : std::move(dh);
            Matrix g_eff =
                variant == Variant::update_drop ? st.g.cwiseProduct(*s).eval() : st.g;
            Matrix da_z = dh_raw.cwiseProduct(g_eff - h_prev)
                              .cwiseProduct(act_grad_value_m(Activation::sigmoid, st.z));
            Matrix dh_prev = dh_raw.cwiseProduct((1.0 - st.z.array()).matrix());
            Matrix dg = dh_raw.cwiseProduct(st.z);
            if (variant == Variant::update_drop) dg = dg.cwiseProduct(*s);
            Matrix da_g = dg.cwiseProduct(act_grad_value_m(gru_p->act, st.g));

            // candidate path: z_in = [x, r * h_used_g]
            const Matrix* sg = gal_scale(2);
            Matrix h_used_g = sg ? h_prev.cwiseProduct(*sg).eval() : h_prev;
            z_in.leftCols(E) = st.x;
            z_in.rightCols(H) = st.r.cwiseProduct(h_used_g);
            g_gru->w_g.noalias() += da_g.transpose() * z_in;
            g_gru->b_g += da_g.colwise().sum().transpose();
            Matrix dz_g = da_g * gru_p->w_g;
            dx += dz_g.leftCols(E);
            Matrix drh = dz_g.rightCols(H);
            Matrix dr = drh.cwiseProduct(h_used_g);
            Matrix dh_used_g = drh.cwiseProduct(st.r);
            dh_prev += sg ? dh_used_g.cwiseProduct(*sg).eval() : dh_used_g;
            Matrix da_r = dr.cwiseProduct(act_grad_value_m(Activation::sigmoid, st.r));

            struct GatePath {
                const Matrix* da;
                const Matrix* w;
                Matrix* gw;
                Vector* gb;
                int slot;
            };
            const GatePath paths[2] = {
                {&da_z, &gru_p->w_z, &g_gru->w_z, &g_gru->b_z, 0},
                {&da_r, &gru_p->w_r, &g_gru->w_r, &g_gru->b_r, 1},
            };
            for (const auto& gp : paths) {
                const Matrix* gs = gal_scale(gp.slot);
                z_in.rightCols(H) = gs ? h_prev.cwiseProduct(*gs).eval() : h_prev;
                gp.gw->noalias() += gp.da->transpose() * z_in;
                *gp.gb += gp.da->colwise().sum().transpose();
                Matrix dz = *gp.da * *gp.w;
                dx += dz.leftCols(E);
                Matrix dh_used = dz.rightCols(H);
                dh_prev += gs ? dh_used.cwiseProduct(*gs).eval() : dh_used;
            }
            dh_next = std::move(dh_prev);
        }

        // Embedding rows.
        const Matrix* in_scale = tape.scales.in.empty() ? nullptr : &tape.scales.in[t];
        Matrix demb = in_scale ? dx.cwiseProduct(*in_scale).eval() : std::move(dx);
        for (int b = 0; b < B; ++b) {
            g_emb->row(batch.token(b, t)) += demb.row(b);
        }
    }

    return grads;
}

double global_norm(const Gradients& g) {
    double sq = 0.0;
    for_each_tensor(g, [&](const std::string&, const double* data, Eigen::Index size) {
        for (Eigen::Index i = 0; i < size; ++i) sq += data[i] * data[i];
    });
    return std::sqrt(sq);
}

void clip_gradients(Gradients& g, double threshold) {
    if (threshold <= 0.0) throw std::invalid_argument("clip threshold must be positive");
    const double norm = global_norm(g);
    if (norm <= threshold) return;
    const double scale = threshold / norm;
    for_each_tensor(g, [&](const std::string&, double* data, Eigen::Index size) {
        for (Eigen::Index i = 0; i < size; ++i) data[i] *= scale;
    });
}

GradCheckReport grad_check(Model& m, const SequenceBatch& batch, const DropoutConfig& drop,
                           std::uint64_t seed, double eps, int n_coords) {
    // Analytic gradients under the mask stream fixed by `seed`.
    Rng rng(seed);
    ForwardResult fr = forward_sequence(m, batch, drop, rng, Phase::train);
    const ScalePlan& plan = fr.tape.scales;
    Gradients analytic = backward_sequence(fr.tape, m);

    struct TensorRef {
        std::string name;
        double* param;
        const double* grad;
        Eigen::Index size;
    };
    std::vector<TensorRef> refs;
    {
        std::vector<std::pair<std::string, std::pair<double*, Eigen::Index>>> params;
        for_each_tensor(m.params, [&](const std::string& name, double* data, Eigen::Index size) {
            params.push_back({name, {data, size}});
        });
        std::size_t k = 0;
        for_each_tensor(static_cast<const ParamSet&>(analytic),
                        [&](const std::string& name, const double* data, Eigen::Index size) {
                            refs.push_back({name, params[k].second.first, data, size});
                            ++k;
                        });
    }

    Eigen::Index total = 0;
    for (const auto& r : refs) total += r.size;

    Rng coord_rng(seed ^ 0x5eedc0ffeeULL);
    std::set<Eigen::Index> picked;
    const Eigen::Index want = std::min<Eigen::Index>(n_coords, total);
    while (static_cast<Eigen::Index>(picked.size()) < want) {
        picked.insert(static_cast<Eigen::Index>(coord_rng.below(total)));
    }

    auto loss_at = [&]() { return loss_scalar_ld(m, batch, drop, plan); };

    GradCheckReport report;
    for (Eigen::Index flat : picked) {
        Eigen::Index off = flat;
        for (const auto& r : refs) {
            if (off >= r.size) {
                off -= r.size;
                continue;
            }
            const double saved = r.param[off];
            r.param[off] = saved + eps;
            const long double lp = loss_at();
            r.param[off] = saved - eps;
            const long double lmi = loss_at();
            r.param[off] = saved;
            const double numeric = static_cast<double>((lp - lmi) / (2.0L * eps));
            const double a = r.grad[off];
            const double rel =
                std::abs(a - numeric) / std::max({std::abs(a), std::abs(numeric), 1e-8});
            report.rows.push_back({r.name, off, a, numeric, rel});
            report.max_rel_err = std::max(report.max_rel_err, rel);
            break;
        }
    }
    return report;
}

}  // namespace rnnlab
