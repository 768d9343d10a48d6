// Copyright 2026 the spumr authors
// SPDX-License-Identifier: Apache-2.0
//
// Gaussian uncertainty heads, reparameterized sampling, KL and gate-weight
// regularizers, and uncertainty-aware Top-K fusion.

#pragma once

#include <vector>

#include "spumr/matrix.hpp"
#include "spumr/tape.hpp"

namespace spumr {

/// Parameters of one two-layer MLP head: input d -> hidden d (leaky-relu)
/// -> output d.
struct MlpHead {
  ad::Parameter* w1 = nullptr;  // (d, d)
  ad::Parameter* b1 = nullptr;  // (1, d)
  ad::Parameter* w2 = nullptr;  // (d, d)
  ad::Parameter* b2 = nullptr;  // (1, d)
};

struct GaussianHeads {
  MlpHead mu;
  MlpHead sigma;
};

struct GaussianNodes {
  ad::NodeId mu = -1;
  ad::NodeId logvar = -1;  // clamped to [-logvar_clamp, +logvar_clamp]
};

inline constexpr double kDefaultLogvarClamp = 10.0;
inline constexpr double kDefaultLeakySlope = 0.01;

/// mu = MLP_mu(h), logvar = clamp(MLP_sigma(h)).
GaussianNodes estimate_gaussian(ad::Tape& tape, ad::NodeId h, const GaussianHeads& heads,
                                double leaky_slope = kDefaultLeakySlope,
                                double logvar_clamp = kDefaultLogvarClamp);

/// z = mu + exp(logvar/2) .* eps with eps a constant (no gradient).
/// Pass an all-zero eps (or use mu directly) for eval mode.
ad::NodeId sample_reparameterized(ad::Tape& tape, const GaussianNodes& g, const Matrix& eps);

/// Sum over provided (entity-batch, modality) Gaussians of
/// 1/2 * sum(exp(logvar) + mu^2 - 1 - logvar).
ad::NodeId kl_loss(ad::Tape& tape, const std::vector<GaussianNodes>& gaussians);

struct GateOutput {
  ad::NodeId weights = -1;              // (n, M), rows on the simplex
  std::vector<std::vector<i64>> selected;  // kept modality indices per row
};

/// logits = concat * W_g^T; keep the top_k logits per row (ties to the lower
/// modality index), mask the rest to -inf, softmax. Dropped modalities get
/// exactly zero weight.
GateOutput gate(ad::Tape& tape, ad::NodeId concat, ad::Parameter& w_g, i64 top_k);

/// z_e = sum_m weights[:,m] .* samples[m].
ad::NodeId fuse(ad::Tape& tape, const GateOutput& g, const std::vector<ad::NodeId>& samples);

/// sum_e sum_m G_m(e) * ||sigma_e^m||_2^2, with ||sigma||^2 = sum exp(logvar).
ad::NodeId uncertainty_penalty(ad::Tape& tape, const GateOutput& g,
                               const std::vector<GaussianNodes>& per_modality);

}  // namespace spumr
