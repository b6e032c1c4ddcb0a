// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <string>
#include <vector>

#include "rnnlab/linalg.hpp"

namespace rnnlab {

// Numerical statement of why dropping hidden state (or cell values)
// erases memory while dropping only the update vector does not. In this
// module p is the KEEP probability; callers converting from a
// DropoutSpec pass keep = 1 - rate.

enum class DecayScheme { hidden_drop, update_drop };

struct DecayScenario {
    double keep_prob = 1.0;        // in (0, 1]
    Vector h0;
    std::vector<Vector> updates;   // g_0 .. g_t, all the same width as h0
    DecayScheme scheme = DecayScheme::hidden_drop;

    void validate() const;
};

// hidden-drop: h_t = p^{t+1} h_0 + sum_{i=0..t} p^{t-i+1} g_i
// update-drop: h_t = p h_0 + p sum_{i=0..t} g_i
Vector closed_form(const DecayScenario& s);

// Iterates the inference-phase recurrence with every gate pinned to 1
// and the output nonlinearity replaced by identity:
//   hidden-drop: h_t = (h_{t-1} + g_t) * p
//   update-drop: c_{-1} = p h_0, then c_t = c_{t-1} + p g_t
// Matches closed_form to machine precision.
Vector simulate_forced_gates(const DecayScenario& s);

struct DecayRow {
    DecayScheme scheme;
    double p;
    int t;
    double h0_coefficient;
};

// Coefficient-of-h0 curves per scheme for t = 0..t_max:
// p^{t+1} under hidden-drop versus the constant p under update-drop.
std::vector<DecayRow> decay_report(const std::vector<double>& p_values, int t_max);

std::string decay_scheme_name(DecayScheme s);

// CSV with columns scheme,p,t,h0_coefficient.
std::string decay_report_csv(const std::vector<DecayRow>& rows);

}  // namespace rnnlab
