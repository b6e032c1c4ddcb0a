// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <span>

#include "rnnlab/dropout.hpp"
#include "rnnlab/linalg.hpp"

namespace rnnlab {

// Single recurrent layer parameters. Every weight matrix maps the
// concatenation [x_t, h_{t-1}] (input + hidden) to hidden.

struct RnnParams {
    Matrix w_h;  // hidden x (input + hidden)
    Vector b_h;
    Activation act = Activation::tanh;
};

struct LstmParams {
    Matrix w_i, w_f, w_o, w_g;  // each hidden x (input + hidden)
    Vector b_i, b_f, b_o, b_g;
    Activation act = Activation::tanh;  // cell update and output nonlinearity
};

struct GruParams {
    Matrix w_z, w_r, w_g;  // each hidden x (input + hidden)
    Vector b_z, b_r, b_g;
    Activation act = Activation::tanh;
};

// Hidden state h, plus the cell vector c for LSTM (empty otherwise).
struct CellState {
    Vector h;
    Vector c;
};

CellState zero_state(int hidden, bool with_cell);

// One step of the vanilla recurrence: h_t = f(W_h [x_t, d(h_{t-1})] + b_h).
// A vanilla cell has no gates, so every recurrent variant coincides with
// dropping the previous hidden state; the variant tag is accepted and
// ignored beyond enabling the mask.
CellState rnn_step(const RnnParams& p, const Vector& x, const CellState& state,
               const DropoutSpec& drop, std::span<const Mask> masks, Phase phase);

// One LSTM step. Mask layout per variant:
//   moon / update-drop: one hidden-width mask.
//   gal (tied):         one hidden-width mask applied to h_{t-1} in all
//                       four gate computations.
//   gal (untied):       four hidden-width masks, order i, f, o, g.
// moon:        c_t = d(f_t*c_{t-1} + i_t*g_t)
// update-drop: c_t = f_t*c_{t-1} + i_t*d(g_t)
// none / gal:  c_t = f_t*c_{t-1} + i_t*g_t
CellState lstm_step(const LstmParams& p, const Vector& x, const CellState& state,
                const DropoutSpec& drop, std::span<const Mask> masks, Phase phase);

// One GRU step. gal substitutes d(h_{t-1}) in the z, r and g
// computations (tied: one mask; untied: three masks, order z, r, g).
// update-drop: h_t = (1-z_t)*h_{t-1} + z_t*d(g_t)
// moon:        h_t = d((1-z_t)*h_{t-1} + z_t*g_t)
CellState gru_step(const GruParams& p, const Vector& x, const CellState& state,
               const DropoutSpec& drop, std::span<const Mask> masks, Phase phase);

// Number of hidden-width masks a step consumes for this spec.
int masks_per_step(Variant v, int n_gates, bool gal_tied);

// Row `token` of the table. Out-of-vocabulary ids are rejected.
Vector embed(const Matrix& table, int token);

// logits = W * d_forward(h) + b, forward dropout on the hidden-to-output
// connection. mask may be null when dropout is disabled or at inference.
Vector output_layer(const Matrix& w, const Vector& b, const Vector& h,
                    const DropoutSpec& forward_drop, const Mask* mask, Phase phase);

}  // namespace rnnlab
