// Copyright 2026 the spumr authors
// SPDX-License-Identifier: Apache-2.0

#include "spumr/uncertainty.hpp"

#include <algorithm>
#include <numeric>

#include "spumr/errors.hpp"

namespace spumr {

using ad::NodeId;
using ad::Tape;

namespace {

NodeId mlp_forward(Tape& tape, NodeId h, const MlpHead& head, double slope) {
  NodeId hidden = tape.add_rowvec(tape.matmul_nt(h, tape.param(*head.w1)), tape.param(*head.b1));
  hidden = tape.leaky_relu(hidden, slope);
  return tape.add_rowvec(tape.matmul_nt(hidden, tape.param(*head.w2)), tape.param(*head.b2));
}

}  // namespace

GaussianNodes estimate_gaussian(Tape& tape, NodeId h, const GaussianHeads& heads,
                                double leaky_slope, double logvar_clamp) {
  GaussianNodes g;
  g.mu = mlp_forward(tape, h, heads.mu, leaky_slope);
  g.logvar = tape.clamp(mlp_forward(tape, h, heads.sigma, leaky_slope), -logvar_clamp,
                        logvar_clamp);
  return g;
}

NodeId sample_reparameterized(Tape& tape, const GaussianNodes& g, const Matrix& eps) {
  require_same_shape(tape.value(g.mu), eps, "sample_reparameterized");
  const NodeId sigma = tape.exp(tape.scalar_mul(g.logvar, 0.5));
  return tape.add(g.mu, tape.mul(sigma, tape.constant(eps)));
}

NodeId kl_loss(Tape& tape, const std::vector<GaussianNodes>& gaussians) {
  if (gaussians.empty()) throw ShapeError("kl_loss: no gaussians");
  NodeId total = -1;
  for (const auto& g : gaussians) {
    const Matrix& mu = tape.value(g.mu);
    const NodeId ones = tape.constant(Matrix::full(mu.rows(), mu.cols(), 1.0));
    NodeId term = tape.add(tape.exp(g.logvar), tape.mul(g.mu, g.mu));
    term = tape.sub(tape.sub(term, ones), g.logvar);
    const NodeId summed = tape.sum(term);
    total = total < 0 ? summed : tape.add(total, summed);
  }
  return tape.scalar_mul(total, 0.5);
}

GateOutput gate(Tape& tape, NodeId concat, ad::Parameter& w_g, i64 top_k) {
  const i64 n_modalities = w_g.value.rows();
  if (top_k < 1 || top_k > n_modalities) {
    throw ConfigError("gate: top_k must be in [1, " + std::to_string(n_modalities) + "]");
  }
  if (tape.value(concat).cols() != w_g.value.cols()) {
    throw ShapeError("gate: concat cols " + tape.value(concat).shape_str() +
                     " vs W_g " + w_g.value.shape_str());
  }
  NodeId logits = tape.matmul_nt(concat, tape.param(w_g));
  const Matrix& lv = tape.value(logits);
  const i64 n = lv.rows();

  GateOutput out;
  out.selected.resize(static_cast<std::size_t>(n));
  if (top_k == n_modalities) {
    for (i64 r = 0; r < n; ++r) {
      auto& sel = out.selected[static_cast<std::size_t>(r)];
      sel.resize(static_cast<std::size_t>(n_modalities));
      std::iota(sel.begin(), sel.end(), 0);
    }
    out.weights = tape.softmax_rows(logits);
    return out;
  }

  // Masked entries get a -1e9 offset; exp underflows to exactly zero.
  Matrix mask(n, n_modalities);
  std::vector<i64> order(static_cast<std::size_t>(n_modalities));
  for (i64 r = 0; r < n; ++r) {
    std::iota(order.begin(), order.end(), 0);
    std::stable_sort(order.begin(), order.end(), [&](i64 a, i64 b) {
      if (lv(r, a) != lv(r, b)) return lv(r, a) > lv(r, b);
      return a < b;  // ties keep the lower modality index
    });
    auto& sel = out.selected[static_cast<std::size_t>(r)];
    sel.assign(order.begin(), order.begin() + top_k);
    std::sort(sel.begin(), sel.end());
    for (i64 j = top_k; j < n_modalities; ++j) mask(r, order[static_cast<std::size_t>(j)]) = -1e9;
  }
  out.weights = tape.softmax_rows(tape.add(logits, tape.constant(std::move(mask))));
  return out;
}

NodeId fuse(Tape& tape, const GateOutput& g, const std::vector<NodeId>& samples) {
  const Matrix& w = tape.value(g.weights);
  if (static_cast<i64>(samples.size()) != w.cols()) {
    throw ShapeError("fuse: " + std::to_string(samples.size()) + " samples for " +
                     std::to_string(w.cols()) + " gate columns");
  }
  NodeId out = -1;
  for (std::size_t m = 0; m < samples.size(); ++m) {
    const NodeId wm = tape.slice_cols(g.weights, static_cast<i64>(m), 1);
    const NodeId term = tape.scale_rows(samples[m], wm);
    out = out < 0 ? term : tape.add(out, term);
  }
  return out;
}

NodeId uncertainty_penalty(Tape& tape, const GateOutput& g,
                           const std::vector<GaussianNodes>& per_modality) {
  const Matrix& w = tape.value(g.weights);
  if (static_cast<i64>(per_modality.size()) != w.cols()) {
    throw ShapeError("uncertainty_penalty: modality count mismatch");
  }
  std::vector<NodeId> sigma_sq;  // (n,1) per modality
  sigma_sq.reserve(per_modality.size());
  for (const auto& gm : per_modality) {
    sigma_sq.push_back(tape.sum_rows(tape.exp(gm.logvar)));
  }
  const NodeId stacked = tape.concat_cols(sigma_sq);  // (n, M)
  return tape.sum(tape.mul(g.weights, stacked));
}

}  // namespace spumr
