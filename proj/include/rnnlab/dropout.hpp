// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <string>
#include <vector>

#include "rnnlab/linalg.hpp"
#include "rnnlab/rng.hpp"

namespace rnnlab {

enum class MaskMode { per_step, per_sequence };
enum class Scaling { test_scale, train_scale };
enum class Variant { none, moon, gal, update_drop, forward };
enum class Phase { train, infer };

// Where and how dropout is applied. `rate` is the drop probability;
// every entry of a sampled mask is 1 with probability 1 - rate.
// variant == none ignores the rate entirely. rate must stay below 1.
struct DropoutSpec {
    double rate = 0.0;
    MaskMode mode = MaskMode::per_step;
    Scaling scaling = Scaling::test_scale;
    Variant variant = Variant::none;
    // gal shares one mask across the four gate inputs at a step; flip
    // this to sample an independent mask per gate instead.
    bool gal_tied = true;

    bool enabled() const { return variant != Variant::none && rate > 0.0; }
    void validate() const;
};

// Mask born at a specific step, or once for the whole sequence.
inline constexpr int kSequenceBorn = -1;

struct Mask {
    Vector values;  // entries are exactly 0 or 1
    int born_at = kSequenceBorn;
};

// Each entry is 1 with probability 1 - p. Requires 0 <= p < 1.
Mask sample_mask(int len, double p, Rng& rng, int born_at = kSequenceBorn);

// test-scale: train -> mask*x, infer -> (1-p)*x.
// train-scale: train -> mask*x/(1-p), infer -> x unchanged.
// Inference never consults the mask.
Vector apply_dropout(const Vector& x, const Mask& mask, double p, Phase phase, Scaling scaling);

// The multiplier a mask entry of 1 contributes in the train phase.
inline double train_keep_scale(double p, Scaling scaling) {
    return scaling == Scaling::train_scale ? 1.0 / (1.0 - p) : 1.0;
}

// The uniform multiplier applied at inference.
inline double infer_scale(double p, Scaling scaling) {
    return scaling == Scaling::test_scale ? 1.0 - p : 1.0;
}

// One mask per step (per-step mode) or a single sequence-born mask
// replicated seq_len times (per-sequence mode). variant == none yields
// all-ones masks.
std::vector<Mask> mask_plan(const DropoutSpec& spec, int seq_len, int width, Rng& rng);

MaskMode parse_mask_mode(const std::string& s);
Scaling parse_scaling(const std::string& s);
Variant parse_variant(const std::string& s);
std::string mask_mode_name(MaskMode m);
std::string scaling_name(Scaling s);
std::string variant_name(Variant v);

}  // namespace rnnlab
