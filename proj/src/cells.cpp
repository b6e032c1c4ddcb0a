// SPDX-License-Identifier: Apache-2.0
#include "rnnlab/cells.hpp"

#include <stdexcept>

namespace rnnlab {

namespace {

void check_widths(const Matrix& w, const Vector& x, const Vector& h, const char* name) {
    if (w.cols() != x.size() + h.size()) {
        throw std::invalid_argument(std::string(name) + ": expects input+hidden width " +
                                    std::to_string(w.cols()) + ", got " +
                                    std::to_string(x.size() + h.size()));
    }
}

// d(v) under the given spec: identity when disabled, otherwise the usual
// mask / scale rules. Masks are only consulted in the train phase.
Vector drop(const Vector& v, const DropoutSpec& spec, std::span<const Mask> masks,
            std::size_t slot, Phase phase, const char* who) {
    if (!spec.enabled()) return v;
    if (phase == Phase::infer) return infer_scale(spec.rate, spec.scaling) * v;
    if (slot >= masks.size()) {
        throw std::invalid_argument(std::string(who) + ": step needs at least " +
                                    std::to_string(slot + 1) + " mask(s), got " +
                                    std::to_string(masks.size()));
    }
    return apply_dropout(v, masks[slot], spec.rate, phase, spec.scaling);
}

}  // namespace

CellState zero_state(int hidden, bool with_cell) {
    CellState s;
    s.h = Vector::Zero(hidden);
    if (with_cell) s.c = Vector::Zero(hidden);
    return s;
}

int masks_per_step(Variant v, int n_gates, bool gal_tied) {
    if (v == Variant::gal && !gal_tied) return n_gates;
    return 1;
}

CellState rnn_step(const RnnParams& p, const Vector& x, const CellState& state,
               const DropoutSpec& drop_spec, std::span<const Mask> masks, Phase phase) {
    check_widths(p.w_h, x, state.h, "rnn_step");
    Vector h_used = drop(state.h, drop_spec, masks, 0, phase, "rnn_step");
    CellState out;
    out.h = activation(p.act, affine(p.w_h, {x, h_used}, p.b_h));
    return out;
}

CellState lstm_step(const LstmParams& p, const Vector& x, const CellState& state,
                const DropoutSpec& drop_spec, std::span<const Mask> masks, Phase phase) {
    check_widths(p.w_i, x, state.h, "lstm_step");
    if (state.c.size() != state.h.size()) {
        throw std::invalid_argument("lstm_step: state must carry both h and c of equal length");
    }

    const bool gal = drop_spec.enabled() && drop_spec.variant == Variant::gal;
    auto h_for_gate = [&](int gate) -> Vector {
        if (!gal) return state.h;
        const std::size_t slot = drop_spec.gal_tied ? 0 : static_cast<std::size_t>(gate);
        return drop(state.h, drop_spec, masks, slot, phase, "lstm_step");
    };

    const Vector i_t = activation(Activation::sigmoid, affine(p.w_i, {x, h_for_gate(0)}, p.b_i));
    const Vector f_t = activation(Activation::sigmoid, affine(p.w_f, {x, h_for_gate(1)}, p.b_f));
    const Vector o_t = activation(Activation::sigmoid, affine(p.w_o, {x, h_for_gate(2)}, p.b_o));
    const Vector g_t = activation(p.act, affine(p.w_g, {x, h_for_gate(3)}, p.b_g));

    CellState out;
    switch (drop_spec.enabled() ? drop_spec.variant : Variant::none) {
        case Variant::moon: {
            Vector c_raw = f_t.cwiseProduct(state.c) + i_t.cwiseProduct(g_t);
            out.c = drop(c_raw, drop_spec, masks, 0, phase, "lstm_step");
            break;
        }
        case Variant::update_drop: {
            Vector g_d = drop(g_t, drop_spec, masks, 0, phase, "lstm_step");
            out.c = f_t.cwiseProduct(state.c) + i_t.cwiseProduct(g_d);
            break;
        }
        default:
            out.c = f_t.cwiseProduct(state.c) + i_t.cwiseProduct(g_t);
            break;
    }
    out.h = o_t.cwiseProduct(activation(p.act, out.c));
    return out;
}

CellState gru_step(const GruParams& p, const Vector& x, const CellState& state,
               const DropoutSpec& drop_spec, std::span<const Mask> masks, Phase phase) {
    check_widths(p.w_z, x, state.h, "gru_step");

    const bool gal = drop_spec.enabled() && drop_spec.variant == Variant::gal;
    auto h_for_gate = [&](int gate) -> Vector {
        if (!gal) return state.h;
        const std::size_t slot = drop_spec.gal_tied ? 0 : static_cast<std::size_t>(gate);
        return drop(state.h, drop_spec, masks, slot, phase, "gru_step");
    };

    const Vector z_t = activation(Activation::sigmoid, affine(p.w_z, {x, h_for_gate(0)}, p.b_z));
    const Vector r_t = activation(Activation::sigmoid, affine(p.w_r, {x, h_for_gate(1)}, p.b_r));
    const Vector g_t = activation(p.act, affine(p.w_g, {x, r_t.cwiseProduct(h_for_gate(2))}, p.b_g));

    const Vector ones = Vector::Ones(state.h.size());
    CellState out;
    switch (drop_spec.enabled() ? drop_spec.variant : Variant::none) {
        case Variant::update_drop: {
            Vector g_d = drop(g_t, drop_spec, masks, 0, phase, "gru_step");
            out.h = (ones - z_t).cwiseProduct(state.h) + z_t.cwiseProduct(g_d);
            break;
        }
        case Variant::moon: {
            Vector h_raw = (ones - z_t).cwiseProduct(state.h) + z_t.cwiseProduct(g_t);
            out.h = drop(h_raw, drop_spec, masks, 0, phase, "gru_step");
            break;
        }
        default:
            out.h = (ones - z_t).cwiseProduct(state.h) + z_t.cwiseProduct(g_t);
            break;
    }
    return out;
}

Vector embed(const Matrix& table, int token) {
    if (token < 0 || token >= table.rows()) {
        throw std::out_of_range("embed: token " + std::to_string(token) + " outside vocabulary of " +
                                std::to_string(table.rows()));
    }
    return table.row(token).transpose();
}

Vector output_layer(const Matrix& w, const Vector& b, const Vector& h,
                    const DropoutSpec& forward_drop, const Mask* mask, Phase phase) {
    Vector h_used = h;
    if (forward_drop.enabled()) {
        if (phase == Phase::train) {
            if (mask == nullptr) {
                throw std::invalid_argument("output_layer: train phase needs a mask");
            }
            h_used = apply_dropout(h, *mask, forward_drop.rate, phase, forward_drop.scaling);
        } else {
            h_used = infer_scale(forward_drop.rate, forward_drop.scaling) * h;
        }
    }
    return affine(w, {h_used}, b);
}

}  // namespace rnnlab
