// SPDX-License-Identifier: Apache-2.0
#include "rnnlab/dropout.hpp"

#include <stdexcept>

namespace rnnlab {

void DropoutSpec::validate() const {
    if (rate < 0.0 || rate >= 1.0) {
        throw std::invalid_argument("dropout rate must lie in [0, 1), got " + std::to_string(rate));
    }
}

Mask sample_mask(int len, double p, Rng& rng, int born_at) {
    if (p < 0.0 || p >= 1.0) {
        throw std::invalid_argument("sample_mask: p must lie in [0, 1), got " + std::to_string(p));
    }
    Mask m;
    m.born_at = born_at;
    m.values = Vector(len);
    for (int i = 0; i < len; ++i) m.values[i] = rng.keep(p) ? 1.0 : 0.0;
    return m;
}

Vector apply_dropout(const Vector& x, const Mask& mask, double p, Phase phase, Scaling scaling) {
    if (phase == Phase::infer) {
        return infer_scale(p, scaling) * x;
    }
    if (mask.values.size() != x.size()) {
        throw std::invalid_argument("apply_dropout: mask length " + std::to_string(mask.values.size()) +
                                    " != input length " + std::to_string(x.size()));
    }
    return train_keep_scale(p, scaling) * mask.values.cwiseProduct(x);
}

std::vector<Mask> mask_plan(const DropoutSpec& spec, int seq_len, int width, Rng& rng) {
    if (seq_len < 1) throw std::invalid_argument("mask_plan: seq_len must be >= 1");
    spec.validate();
    std::vector<Mask> plan;
    plan.reserve(static_cast<std::size_t>(seq_len));
    if (!spec.enabled()) {
        Mask ones;
        ones.values = Vector::Ones(width);
        for (int t = 0; t < seq_len; ++t) plan.push_back(ones);
        return plan;
    }
    if (spec.mode == MaskMode::per_sequence) {
        Mask m = sample_mask(width, spec.rate, rng, kSequenceBorn);
        for (int t = 0; t < seq_len; ++t) plan.push_back(m);
    } else {
        for (int t = 0; t < seq_len; ++t) plan.push_back(sample_mask(width, spec.rate, rng, t));
    }
    return plan;
}

MaskMode parse_mask_mode(const std::string& s) {
    if (s == "per-step") return MaskMode::per_step;
    if (s == "per-sequence") return MaskMode::per_sequence;
    throw std::invalid_argument("unknown mask mode: " + s);
}

Scaling parse_scaling(const std::string& s) {
    if (s == "test-scale") return Scaling::test_scale;
    if (s == "train-scale") return Scaling::train_scale;
    throw std::invalid_argument("unknown scaling: " + s);
}

Variant parse_variant(const std::string& s) {
    if (s == "none") return Variant::none;
    if (s == "moon") return Variant::moon;
    if (s == "gal") return Variant::gal;
    if (s == "update-drop") return Variant::update_drop;
    if (s == "forward") return Variant::forward;
    throw std::invalid_argument("unknown dropout variant: " + s);
}

std::string mask_mode_name(MaskMode m) { return m == MaskMode::per_step ? "per-step" : "per-sequence"; }
std::string scaling_name(Scaling s) { return s == Scaling::test_scale ? "test-scale" : "train-scale"; }

std::string variant_name(Variant v) {
    switch (v) {
        case Variant::none: return "none";
        case Variant::moon: return "moon";
        case Variant::gal: return "gal";
        case Variant::update_drop: return "update-drop";
        case Variant::forward: return "forward";
    }
    return "?";
}

}  // namespace rnnlab
