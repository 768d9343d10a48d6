// Copyright 2026 the spumr authors
// SPDX-License-Identifier: Apache-2.0

#include "spumr/model.hpp"

#include <algorithm>
#include <cmath>
#include <unordered_map>

#include "spumr/errors.hpp"
#include "spumr/kernels.hpp"

namespace spumr {

using ad::NodeId;
using ad::Tape;

std::string variant_name(Variant v) {
  switch (v) {
    case Variant::spumr: return "spumr";
    case Variant::spumr_wo_msg: return "spumr_wo_msg";
    case Variant::spumr_wo_csg: return "spumr_wo_csg";
    case Variant::spumr_wo_upa: return "spumr_wo_upa";
    case Variant::mf_bpr: return "mf_bpr";
  }
  return "?";
}

Variant parse_variant(const std::string& name) {
  if (name == "spumr") return Variant::spumr;
  if (name == "spumr_wo_msg") return Variant::spumr_wo_msg;
  if (name == "spumr_wo_csg") return Variant::spumr_wo_csg;
  if (name == "spumr_wo_upa") return Variant::spumr_wo_upa;
  if (name == "mf_bpr") return Variant::mf_bpr;
  throw ConfigError("unknown model variant '" + name + "'");
}

TrainBatch TrainBatch::build(const std::vector<std::pair<i32, i32>>& pairs,
                             const std::vector<i64>& pair_index,
                             const std::vector<i32>& negatives,
                             const std::vector<i64>& extra_items) {
  TrainBatch b;
  const i64 n = static_cast<i64>(pair_index.size());
  b.users.reserve(static_cast<std::size_t>(n));
  b.pos_items.reserve(static_cast<std::size_t>(n));
  b.neg_items.reserve(static_cast<std::size_t>(n));
  for (i64 r = 0; r < n; ++r) {
    const auto& [u, i] = pairs[static_cast<std::size_t>(pair_index[static_cast<std::size_t>(r)])];
    b.users.push_back(u);
    b.pos_items.push_back(i);
    b.neg_items.push_back(negatives[static_cast<std::size_t>(r)]);
  }
  b.unique_users = b.users;
  std::sort(b.unique_users.begin(), b.unique_users.end());
  b.unique_users.erase(std::unique(b.unique_users.begin(), b.unique_users.end()),
                       b.unique_users.end());
  b.unique_items = b.pos_items;
  b.unique_items.insert(b.unique_items.end(), b.neg_items.begin(), b.neg_items.end());
  b.unique_items.insert(b.unique_items.end(), extra_items.begin(), extra_items.end());
  std::sort(b.unique_items.begin(), b.unique_items.end());
  b.unique_items.erase(std::unique(b.unique_items.begin(), b.unique_items.end()),
                       b.unique_items.end());

  std::unordered_map<i64, i64> urow, irow;
  urow.reserve(b.unique_users.size());
  irow.reserve(b.unique_items.size());
  for (std::size_t r = 0; r < b.unique_users.size(); ++r) urow[b.unique_users[r]] = static_cast<i64>(r);
  for (std::size_t r = 0; r < b.unique_items.size(); ++r) irow[b.unique_items[r]] = static_cast<i64>(r);
  b.pair_user_row.reserve(static_cast<std::size_t>(n));
  b.pair_pos_row.reserve(static_cast<std::size_t>(n));
  b.pair_neg_row.reserve(static_cast<std::size_t>(n));
  for (i64 r = 0; r < n; ++r) {
    b.pair_user_row.push_back(urow.at(b.users[static_cast<std::size_t>(r)]));
    b.pair_pos_row.push_back(irow.at(b.pos_items[static_cast<std::size_t>(r)]));
    b.pair_neg_row.push_back(irow.at(b.neg_items[static_cast<std::size_t>(r)]));
  }
  return b;
}

NodeId project(Tape& tape, const Matrix& features, ad::Parameter& w, ad::Parameter& b) {
  if (features.cols() != w.value.cols()) {
    throw ShapeError("project: features " + features.shape_str() + " vs W " +
                     w.value.shape_str());
  }
  if (b.value.rows() != 1 || b.value.cols() != w.value.rows()) {
    throw ShapeError("project: bias " + b.value.shape_str() + " vs W " + w.value.shape_str());
  }
  return tape.add_rowvec(tape.matmul_nt(tape.constant(features), tape.param(w)), tape.param(b));
}

ModalityBundle forward_modality(Tape& tape, const std::string& modality,
                                const CsrMatrix& profile_op, const Matrix& features,
                                ad::Parameter& w, ad::Parameter& b,
                                const CsrMatrix* user_knn_prop, const CsrMatrix* item_knn_prop,
                                const CsrMatrix* user_collab_prop,
                                const CsrMatrix* item_collab_prop, i64 layers) {
  ModalityBundle out;
  out.modality = modality;
  out.item_projected = project(tape, features, w, b);
  out.user_profiles = tape.sparse_matmul(profile_op, out.item_projected);

  out.user_refined = out.user_profiles;
  out.item_refined = out.item_projected;
  if (user_knn_prop != nullptr) {
    for (i64 l = 0; l < layers; ++l) {
      out.user_refined = tape.sparse_matmul(*user_knn_prop, out.user_refined);
    }
  }
  if (item_knn_prop != nullptr) {
    for (i64 l = 0; l < layers; ++l) {
      out.item_refined = tape.sparse_matmul(*item_knn_prop, out.item_refined);
    }
  }

  out.user_collab = user_collab_prop != nullptr
                        ? tape.sparse_matmul(*user_collab_prop, out.user_refined)
                        : out.user_refined;
  out.item_collab = item_collab_prop != nullptr
                        ? tape.sparse_matmul(*item_collab_prop, out.item_refined)
                        : out.item_refined;
  return out;
}

CsrMatrix interaction_profile_op(const InteractionTable& table) {
  CsrMatrix op;
  op.rows = table.n_users;
  op.cols = table.n_items;
  op.offsets.resize(static_cast<std::size_t>(table.n_users + 1), 0);
  op.colidx.reserve(table.pairs.size());
  op.weights.reserve(table.pairs.size());
  for (i64 u = 0; u < table.n_users; ++u) {
    const auto& items = table.user_items[static_cast<std::size_t>(u)];
    if (items.empty()) {
      throw DataError("user " + std::to_string(u) + " has no train interactions to profile");
    }
    const double w = 1.0 / static_cast<double>(items.size());
    for (i32 i : items) {
      op.colidx.push_back(i);
      op.weights.push_back(w);
    }
    op.offsets[static_cast<std::size_t>(u + 1)] = static_cast<i64>(op.colidx.size());
  }
  return op;
}

SpumrModel::SpumrModel(const ModelConfig& config, const InteractionTable& train,
                       std::vector<FeatureMatrix> features, const GraphSet& graphs,
                       std::uint64_t seed)
    : config_(config), train_(&train), features_(std::move(features)) {
  if (features_.empty()) throw ConfigError("SpumrModel requires at least one modality");
  // K defaults to |M|; larger configured values mean "keep every modality"
  config_.gate_top_k = std::min<i64>(config_.gate_top_k, static_cast<i64>(features_.size()));
  for (const auto& f : features_) {
    if (f.rows() != train.n_items) {
      throw ShapeError("modality '" + f.modality + "': " + std::to_string(f.rows()) +
                       " rows for " + std::to_string(train.n_items) + " items");
    }
  }
  profile_op_ = interaction_profile_op(train);

  const bool use_msg = config_.variant != Variant::spumr_wo_msg;
  const bool use_csg = config_.variant != Variant::spumr_wo_csg;
  if (use_msg) {
    if (graphs.user_knn.size() != features_.size() || graphs.item_knn.size() != features_.size()) {
      throw ConfigError("modality KNN graphs missing for this variant");
    }
    for (const auto& g : graphs.user_knn) user_knn_prop_.push_back(g.propagation_matrix());
    for (const auto& g : graphs.item_knn) item_knn_prop_.push_back(g.propagation_matrix());
    has_msg_ = true;
  }
  if (use_csg) {
    if (graphs.user_collab.n_nodes != train.n_users ||
        graphs.item_collab.n_nodes != train.n_items) {
      throw ConfigError("collaborative graphs missing for this variant");
    }
    user_collab_prop_ = graphs.user_collab.propagation_matrix();
    item_collab_prop_ = graphs.item_collab.propagation_matrix();
    has_csg_ = true;
  }

  // registration order fixes the init RNG stream
  Rng rng(Rng::mix(seed, 0x9a7a11ULL));
  for (const auto& f : features_) {
    proj_w_.push_back(&params_.create("proj.w." + f.modality, config_.d, f.dim(),
                                      ad::InitKind::xavier_uniform, rng));
    proj_b_.push_back(&params_.create("proj.b." + f.modality, 1, config_.d,
                                      ad::InitKind::zeros, rng));
  }
  if (config_.variant != Variant::spumr_wo_upa) {
    auto make_head = [&](const std::string& prefix) {
      MlpHead head;
      head.w1 = &params_.create(prefix + ".w1", config_.d, config_.d,
                                ad::InitKind::xavier_uniform, rng);
      head.b1 = &params_.create(prefix + ".b1", 1, config_.d, ad::InitKind::zeros, rng);
      head.w2 = &params_.create(prefix + ".w2", config_.d, config_.d,
                                ad::InitKind::xavier_uniform, rng);
      head.b2 = &params_.create(prefix + ".b2", 1, config_.d, ad::InitKind::zeros, rng);
      return head;
    };
    const i64 n_heads = config_.per_modality_heads ? n_modalities() : 1;
    for (i64 h = 0; h < n_heads; ++h) {
      const std::string tag =
          config_.per_modality_heads ? "." + features_[static_cast<std::size_t>(h)].modality : "";
      GaussianHeads gh;
      gh.mu = make_head("head.mu" + tag);
      gh.sigma = make_head("head.sigma" + tag);
      heads_.push_back(gh);
    }
    gate_w_ = &params_.create("gate.w", n_modalities(), n_modalities() * config_.d,
                              ad::InitKind::xavier_uniform, rng);
  }
}

SpumrModel::Stage SpumrModel::run_graph_stage(Tape& tape) const {
  Stage st;
  for (std::size_t m = 0; m < features_.size(); ++m) {
    const CsrMatrix* uk = has_msg_ ? &user_knn_prop_[m] : nullptr;
    const CsrMatrix* ik = has_msg_ ? &item_knn_prop_[m] : nullptr;
    const CsrMatrix* uc = has_csg_ ? &user_collab_prop_ : nullptr;
    const CsrMatrix* ic = has_csg_ ? &item_collab_prop_ : nullptr;
    ModalityBundle b = forward_modality(tape, features_[m].modality, profile_op_,
                                        features_[m].data, *proj_w_[m], *proj_b_[m], uk, ik,
                                        uc, ic, config_.layers);
    st.user_final.push_back(b.user_collab);
    st.item_final.push_back(b.item_collab);
    st.bundles.push_back(std::move(b));
  }
  return st;
}

SpumrModel::FusedEntities SpumrModel::fuse_entities(Tape& tape,
                                                    const std::vector<NodeId>& h_per_modality,
                                                    const Matrix* eps_per_modality) const {
  FusedEntities out;
  if (config_.variant == Variant::spumr_wo_upa) {
    NodeId acc = h_per_modality[0];
    for (std::size_t m = 1; m < h_per_modality.size(); ++m) {
      acc = tape.add(acc, h_per_modality[m]);
    }
    out.z = tape.scalar_mul(acc, 1.0 / static_cast<double>(h_per_modality.size()));
    return out;
  }

  std::vector<NodeId> samples;
  for (std::size_t m = 0; m < h_per_modality.size(); ++m) {
    const GaussianHeads& heads = heads_[config_.per_modality_heads ? m : 0];
    GaussianNodes g = estimate_gaussian(tape, h_per_modality[m], heads, config_.leaky_slope,
                                        config_.logvar_clamp);
    if (eps_per_modality != nullptr) {
      samples.push_back(sample_reparameterized(tape, g, eps_per_modality[m]));
    } else {
      samples.push_back(g.mu);  // eval mode: z = mu
    }
    out.gaussians.push_back(g);
  }

  out.gate_out = gate(tape, tape.concat_cols(h_per_modality), *gate_w_, config_.gate_top_k);
  out.z = fuse(tape, out.gate_out, samples);
  return out;
}

BatchNodes SpumrModel::build_batch(Tape& tape, const TrainBatch& batch, Rng* noise_rng) {
  Stage st = run_graph_stage(tape);

  std::vector<NodeId> h_users, h_items;
  for (std::size_t m = 0; m < features_.size(); ++m) {
    h_users.push_back(tape.slice_rows(st.user_final[m], batch.unique_users));
    h_items.push_back(tape.slice_rows(st.item_final[m], batch.unique_items));
  }

  // noise is drawn in a fixed order: per modality, users then items
  std::vector<Matrix> user_eps, item_eps;
  const Matrix* ueps = nullptr;
  const Matrix* ieps = nullptr;
  if (noise_rng != nullptr && config_.variant != Variant::spumr_wo_upa) {
    for (std::size_t m = 0; m < features_.size(); ++m) {
      Matrix eu(static_cast<i64>(batch.unique_users.size()), config_.d);
      for (i64 i = 0; i < eu.size(); ++i) eu.data()[i] = noise_rng->normal();
      Matrix ei(static_cast<i64>(batch.unique_items.size()), config_.d);
      for (i64 i = 0; i < ei.size(); ++i) ei.data()[i] = noise_rng->normal();
      user_eps.push_back(std::move(eu));
      item_eps.push_back(std::move(ei));
    }
    ueps = user_eps.data();
    ieps = item_eps.data();
  }

  FusedEntities fu = fuse_entities(tape, h_users, ueps);
  FusedEntities fi = fuse_entities(tape, h_items, ieps);

  BatchNodes out;
  out.z_users = fu.z;
  out.z_items = fi.z;
  if (config_.variant != Variant::spumr_wo_upa) {
    std::vector<GaussianNodes> all = fu.gaussians;
    all.insert(all.end(), fi.gaussians.begin(), fi.gaussians.end());
    out.kl = kl_loss(tape, all);
    const NodeId upen_u = uncertainty_penalty(tape, fu.gate_out, fu.gaussians);
    const NodeId upen_i = uncertainty_penalty(tape, fi.gate_out, fi.gaussians);
    out.upen = tape.add(upen_u, upen_i);
  }
  return out;
}

EvalOutput SpumrModel::eval_embeddings() const {
  Tape tape;
  Stage st = run_graph_stage(tape);

  EvalOutput out;
  for (const auto& f : features_) out.modalities.push_back(f.modality);

  FusedEntities fu = fuse_entities(tape, st.user_final, nullptr);
  FusedEntities fi = fuse_entities(tape, st.item_final, nullptr);
  out.z_users = tape.value(fu.z);
  out.z_items = tape.value(fi.z);
  if (config_.variant == Variant::spumr_wo_upa) return out;

  out.has_uncertainty = true;
  out.gate_users = tape.value(fu.gate_out.weights);
  out.gate_items = tape.value(fi.gate_out.weights);
  const i64 m_count = n_modalities();
  out.sigma_norm_users = Matrix(train_->n_users, m_count);
  out.sigma_norm_items = Matrix(train_->n_items, m_count);
  for (i64 m = 0; m < m_count; ++m) {
    const auto& gu = fu.gaussians[static_cast<std::size_t>(m)];
    const auto& gi = fi.gaussians[static_cast<std::size_t>(m)];
    out.mu_users.push_back(tape.value(gu.mu));
    out.mu_items.push_back(tape.value(gi.mu));
    const Matrix& lvu = tape.value(gu.logvar);
    for (i64 r = 0; r < lvu.rows(); ++r) {
      double s = 0.0;
      for (i64 c = 0; c < lvu.cols(); ++c) s += std::exp(lvu(r, c));
      out.sigma_norm_users(r, m) = std::sqrt(s);
    }
    const Matrix& lvi = tape.value(gi.logvar);
    for (i64 r = 0; r < lvi.rows(); ++r) {
      double s = 0.0;
      for (i64 c = 0; c < lvi.cols(); ++c) s += std::exp(lvi(r, c));
      out.sigma_norm_items(r, m) = std::sqrt(s);
    }
  }
  return out;
}

MfBprModel::MfBprModel(i64 n_users, i64 n_items, i64 d, std::uint64_t seed) {
  Rng rng(Rng::mix(seed, 0x9a7a11ULL));
  user_emb_ = &params_.create("mf.user_emb", n_users, d, ad::InitKind::xavier_uniform, rng);
  item_emb_ = &params_.create("mf.item_emb", n_items, d, ad::InitKind::xavier_uniform, rng);
}

BatchNodes MfBprModel::build_batch(Tape& tape, const TrainBatch& batch, Rng*) {
  BatchNodes out;
  out.z_users = tape.slice_rows(tape.param(*user_emb_), batch.unique_users);
  out.z_items = tape.slice_rows(tape.param(*item_emb_), batch.unique_items);
  return out;
}

EvalOutput MfBprModel::eval_embeddings() const {
  EvalOutput out;
  out.z_users = user_emb_->value;
  out.z_items = item_emb_->value;
  return out;
}

std::unique_ptr<RankingModel> make_model(const ModelConfig& config,
                                         const InteractionTable& train,
                                         std::vector<FeatureMatrix> features,
                                         const GraphSet& graphs, std::uint64_t seed) {
  if (config.variant == Variant::mf_bpr) {
    return std::make_unique<MfBprModel>(train.n_users, train.n_items, config.d, seed);
  }
  return std::make_unique<SpumrModel>(config, train, std::move(features), graphs, seed);
}

}  // namespace spumr
