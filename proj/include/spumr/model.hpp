// Copyright 2026 the spumr authors
// SPDX-License-Identifier: Apache-2.0
//
// SPUMR forward pass: modality projection, similarity-graph refinement,
// collaborative refinement, uncertainty-aware fusion. Also the MF-BPR
// baseline behind the same training/evaluation interface.

#pragma once

#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "spumr/data.hpp"
#include "spumr/graphs.hpp"
#include "spumr/matrix.hpp"
#include "spumr/tape.hpp"
#include "spumr/uncertainty.hpp"

namespace spumr {

enum class Variant { spumr, spumr_wo_msg, spumr_wo_csg, spumr_wo_upa, mf_bpr };

std::string variant_name(Variant v);
Variant parse_variant(const std::string& name);

struct ModelConfig {
  i64 d = 64;
  i64 layers = 3;  // L for the modality KNN graphs
  i64 gate_top_k = 2;
  double leaky_slope = 0.01;
  double logvar_clamp = 10.0;
  bool per_modality_heads = false;
  Variant variant = Variant::spumr;
};

struct GraphSet {
  std::vector<SimilarityGraph> user_knn;  // one per modality
  std::vector<SimilarityGraph> item_knn;
  SimilarityGraph user_collab;
  SimilarityGraph item_collab;
};

/// Mini-batch of (user, pos, neg) triples plus dedup bookkeeping. Row maps
/// point into the unique entity lists.
struct TrainBatch {
  std::vector<i64> users, pos_items, neg_items;
  std::vector<i64> unique_users, unique_items;
  std::vector<i64> pair_user_row, pair_pos_row, pair_neg_row;

  i64 n_pairs() const { return static_cast<i64>(users.size()); }

  /// extra_items (may be empty) are folded into unique_items; used when the
  /// faithful contrastive denominator needs the users' full positive sets.
  static TrainBatch build(const std::vector<std::pair<i32, i32>>& pairs,
                          const std::vector<i64>& pair_index,
                          const std::vector<i32>& negatives,
                          const std::vector<i64>& extra_items = {});
};

struct BatchNodes {
  ad::NodeId z_users = -1;  // (n_unique_users, d)
  ad::NodeId z_items = -1;  // (n_unique_items, d)
  ad::NodeId kl = -1;       // -1 when the variant has no uncertainty stage
  ad::NodeId upen = -1;
};

struct EvalOutput {
  Matrix z_users, z_items;
  bool has_uncertainty = false;
  std::vector<Matrix> mu_users, mu_items;    // per modality
  Matrix sigma_norm_users, sigma_norm_items; // (n, M), L2 norms of sigma
  Matrix gate_users, gate_items;             // (n, M)
  std::vector<std::string> modalities;
};

class RankingModel {
 public:
  virtual ~RankingModel() = default;
  virtual ad::ParamStore& params() = 0;
  virtual const ad::ParamStore& params() const = 0;
  /// Representation nodes for the batch's unique entities. noise_rng null
  /// means deterministic (z = mu).
  virtual BatchNodes build_batch(ad::Tape& tape, const TrainBatch& batch, Rng* noise_rng) = 0;
  virtual EvalOutput eval_embeddings() const = 0;
};

/// row i = W e_i + b, differentiable w.r.t. W (d x d_m) and b (1 x d).
ad::NodeId project(ad::Tape& tape, const Matrix& features, ad::Parameter& w,
                   ad::Parameter& b);

/// Per-modality representation nodes after each pipeline stage.
struct ModalityBundle {
  std::string modality;
  ad::NodeId item_projected = -1;
  ad::NodeId user_profiles = -1;
  ad::NodeId user_refined = -1;  // after L layers over the user KNN graph
  ad::NodeId item_refined = -1;
  ad::NodeId user_collab = -1;   // after 1 layer over the collaborative graph
  ad::NodeId item_collab = -1;
};

/// Runs projection -> interest profiles -> modality-KNN refinement (L
/// layers) -> collaborative refinement (1 layer). Null graph operators skip
/// their stage (ablations), leaving the input representation in place.
ModalityBundle forward_modality(ad::Tape& tape, const std::string& modality,
                                const CsrMatrix& profile_op, const Matrix& features,
                                ad::Parameter& w, ad::Parameter& b,
                                const CsrMatrix* user_knn_prop, const CsrMatrix* item_knn_prop,
                                const CsrMatrix* user_collab_prop,
                                const CsrMatrix* item_collab_prop, i64 layers);

class SpumrModel : public RankingModel {
 public:
  /// graphs may omit stages the variant does not use. Features arrive in a
  /// fixed modality order that also fixes the gate concat order.
  SpumrModel(const ModelConfig& config, const InteractionTable& train,
             std::vector<FeatureMatrix> features, const GraphSet& graphs,
             std::uint64_t seed);

  ad::ParamStore& params() override { return params_; }
  const ad::ParamStore& params() const override { return params_; }
  BatchNodes build_batch(ad::Tape& tape, const TrainBatch& batch, Rng* noise_rng) override;
  EvalOutput eval_embeddings() const override;

  i64 n_modalities() const { return static_cast<i64>(features_.size()); }
  const ModelConfig& config() const { return config_; }

 private:
  struct Stage {
    std::vector<ModalityBundle> bundles;
    std::vector<ad::NodeId> user_final, item_final;  // h^{c,m} per modality
  };
  Stage run_graph_stage(ad::Tape& tape) const;

  struct FusedEntities {
    ad::NodeId z = -1;
    std::vector<GaussianNodes> gaussians;  // per modality
    GateOutput gate_out;
  };
  FusedEntities fuse_entities(ad::Tape& tape, const std::vector<ad::NodeId>& h_per_modality,
                              const Matrix* eps_per_modality) const;

  ModelConfig config_;
  const InteractionTable* train_;
  std::vector<FeatureMatrix> features_;
  CsrMatrix profile_op_;  // (n_users x n_items), rows 1/|I_u|
  std::vector<CsrMatrix> user_knn_prop_, item_knn_prop_;
  CsrMatrix user_collab_prop_, item_collab_prop_;
  bool has_msg_ = false, has_csg_ = false;

  ad::ParamStore params_;
  std::vector<ad::Parameter*> proj_w_, proj_b_;
  std::vector<GaussianHeads> heads_;  // size 1 when shared, M when per-modality
  ad::Parameter* gate_w_ = nullptr;
};

class MfBprModel : public RankingModel {
 public:
  MfBprModel(i64 n_users, i64 n_items, i64 d, std::uint64_t seed);
  ad::ParamStore& params() override { return params_; }
  const ad::ParamStore& params() const override { return params_; }
  BatchNodes build_batch(ad::Tape& tape, const TrainBatch& batch, Rng* noise_rng) override;
  EvalOutput eval_embeddings() const override;

 private:
  ad::ParamStore params_;
  ad::Parameter* user_emb_ = nullptr;
  ad::Parameter* item_emb_ = nullptr;
};

/// Row-normalized user->item incidence of the train interactions
/// (weight 1/|I_u|); the on-tape form of Eq. 1 profiles.
CsrMatrix interaction_profile_op(const InteractionTable& table);

std::unique_ptr<RankingModel> make_model(const ModelConfig& config,
                                         const InteractionTable& train,
                                         std::vector<FeatureMatrix> features,
                                         const GraphSet& graphs, std::uint64_t seed);

}  // namespace spumr
