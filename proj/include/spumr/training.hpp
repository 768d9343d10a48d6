// Copyright 2026 the spumr authors
// SPDX-License-Identifier: Apache-2.0
//
// Composite training objective, negative sampling, the epoch loop with
// early stopping, and the MF-BPR baseline.

#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "spumr/data.hpp"
#include "spumr/io.hpp"
#include "spumr/model.hpp"
#include "spumr/tape.hpp"

namespace spumr {

struct TrainConfig {
  i64 batch_size = 2048;
  double lr = 0.001;
  i64 d = 64;
  i64 layers = 3;  // L
  i64 knn_k = 10;
  double lambda_cl = 0.01;
  double lambda_kl = 1e-3;
  double lambda_u = 5e-3;
  i64 gate_top_k = 2;
  i64 max_epochs = 1000;
  i64 patience = 20;
  std::uint64_t seed = 42;
  bool faithful_losses = false;
  bool per_modality_heads = false;
  bool reg_scale_full = false;  // scale KL/U batch sums by total/batch entities
  int threads = 1;
  i64 eval_k = 20;  // early-stopping metric is Recall@eval_k
  Variant variant = Variant::spumr;

  void validate() const;  // throws ConfigError
};

/// Uniform sample of `count` items outside the user's train set, by
/// rejection. Errors if the user interacts with every item.
std::vector<i32> sample_negatives(i64 user, const InteractionTable& train, Rng& rng,
                                  i64 count = 1);

/// Minimized BPR: sum softplus(-s_pos) + sum softplus(s_neg), which equals
/// -sum log sigma(s_pos) - sum log sigma(-s_neg). With `faithful` the
/// objective is Eq-as-printed: +sum log sigma(s_pos) - sum log sigma(-s_neg).
ad::NodeId bpr_loss(ad::Tape& tape, ad::NodeId z_u, ad::NodeId z_pos, ad::NodeId z_neg,
                    bool faithful = false);

/// In-batch contrastive loss: for each pair, cross-entropy of the positive
/// item against all positive items of the mini-batch. `cand_rows` are the
/// candidate rows inside z_items and `targets[r]` indexes the pair's
/// positive within cand_rows. An optional additive mask (n_pairs x |cand|)
/// restricts the denominator (used by the faithful per-user form).
ad::NodeId contrastive_loss(ad::Tape& tape, ad::NodeId z_u_pairs, ad::NodeId z_items,
                            const std::vector<i64>& cand_rows, std::vector<i64> targets,
                            const Matrix* mask = nullptr);

struct LossNodes {
  ad::NodeId total = -1;
  ad::NodeId bpr = -1;
  ad::NodeId cl = -1;
  ad::NodeId kl = -1;    // -1 when variant lacks the uncertainty stage
  ad::NodeId upen = -1;
};

/// L = L_BPR + lambda_CL * L_CL + lambda_KL * L_KL + lambda_U * L_U over one
/// batch. reg_scale multiplies the KL/U terms (1.0 = plain batch sum).
LossNodes total_loss(ad::Tape& tape, const BatchNodes& nodes, const TrainBatch& batch,
                     const TrainConfig& config, const InteractionTable& train,
                     double reg_scale = 1.0);

struct EpochRecord {
  i64 epoch = 0;
  double loss = 0.0, bpr = 0.0, cl = 0.0, kl = 0.0, upen = 0.0;
  double val_recall = 0.0, val_ndcg = 0.0;
};

struct FitResult {
  std::vector<EpochRecord> history;
  i64 best_epoch = -1;
  double best_recall = 0.0;
  io::MatrixBundle best_checkpoint;  // parameter values + Adam state
};

/// Checkpoint (de)serialization: values plus Adam moments and step count.
io::MatrixBundle snapshot_params(const ad::ParamStore& params);
void restore_params(ad::ParamStore& params, const io::MatrixBundle& bundle);

/// Epoch loop: seeded shuffle, mini-batches, backward, Adam; per-epoch
/// validation Recall@eval_k with best-checkpoint tracking and patience-based
/// early stopping. The model is left holding the best parameters.
FitResult fit(const TrainConfig& config, const InteractionTable& train,
              const std::vector<std::vector<i32>>& valid_holdout, RankingModel& model);

/// Free user/item embedding tables under L_BPR with the shared optimizer,
/// early stopping, and evaluation harness.
FitResult mf_bpr_baseline(const TrainConfig& config, const InteractionTable& train,
                          const std::vector<std::vector<i32>>& valid_holdout,
                          MfBprModel& model);

}  // namespace spumr
