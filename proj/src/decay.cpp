// SPDX-License-Identifier: Apache-2.0
#include "rnnlab/decay.hpp"

#include <cmath>
#include <stdexcept>

#include "rnnlab/io.hpp"

namespace rnnlab {

void DecayScenario::validate() const {
    if (keep_prob <= 0.0 || keep_prob > 1.0) {
        throw std::invalid_argument("keep_prob must lie in (0, 1]");
    }
    for (const auto& g : updates) {
        if (g.size() != h0.size()) {
            throw std::invalid_argument("all update vectors must match h0's width");
        }
    }
    if (updates.empty()) throw std::invalid_argument("scenario needs at least g_0");
}

Vector closed_form(const DecayScenario& s) {
    s.validate();
    const double p = s.keep_prob;
    const int t = static_cast<int>(s.updates.size()) - 1;
    if (s.scheme == DecayScheme::hidden_drop) {
        Vector h = std::pow(p, t + 1) * s.h0;
        for (int i = 0; i <= t; ++i) {
            h += std::pow(p, t - i + 1) * s.updates[i];
        }
        return h;
    }
    Vector sum = Vector::Zero(s.h0.size());
    for (const auto& g : s.updates) sum += g;
    return p * s.h0 + p * sum;
}

Vector simulate_forced_gates(const DecayScenario& s) {
    s.validate();
    const double p = s.keep_prob;
    if (s.scheme == DecayScheme::hidden_drop) {
        // c_t = 1*c_{t-1} + 1*g_t, then the whole state is scaled by p.
        Vector h = s.h0;
        for (const auto& g : s.updates) {
            h = ((h + g) * p).eval();
        }
        return h;
    }
    // Only additions to the state are scaled; h_0 enters the summation
    // as the first update, so its coefficient is the constant p.
    Vector c = (p * s.h0).eval();
    for (const auto& g : s.updates) {
        c += p * g;
    }
    return c;
}

std::vector<DecayRow> decay_report(const std::vector<double>& p_values, int t_max) {
    if (t_max < 0) throw std::invalid_argument("t_max must be >= 0");
    std::vector<DecayRow> rows;
    for (double p : p_values) {
        if (p <= 0.0 || p > 1.0) throw std::invalid_argument("p values must lie in (0, 1]");
        for (int t = 0; t <= t_max; ++t) {
            rows.push_back({DecayScheme::hidden_drop, p, t, std::pow(p, t + 1)});
        }
        for (int t = 0; t <= t_max; ++t) {
            rows.push_back({DecayScheme::update_drop, p, t, p});
        }
    }
    return rows;
}

std::string decay_scheme_name(DecayScheme s) {
    return s == DecayScheme::hidden_drop ? "hidden-drop" : "update-drop";
}

std::string decay_report_csv(const std::vector<DecayRow>& rows) {
    CsvWriter csv({"scheme", "p", "t", "h0_coefficient"});
    for (const auto& r : rows) {
        csv.add_row({decay_scheme_name(r.scheme), format_double(r.p), std::to_string(r.t),
                     format_double(r.h0_coefficient)});
    }
    return csv.content();
}

}  // namespace rnnlab
