// Copyright 2026 the spumr authors
// SPDX-License-Identifier: Apache-2.0

#include "spumr/training.hpp"

#include <algorithm>
#include <cmath>
#include <unordered_map>

#include "spumr/errors.hpp"
#include "spumr/evaluation.hpp"

namespace spumr {

using ad::NodeId;
using ad::Tape;

void TrainConfig::validate() const {
  if (batch_size < 1) throw ConfigError("batch_size must be >= 1");
  if (lr <= 0) throw ConfigError("lr must be > 0");
  if (d < 1) throw ConfigError("d must be >= 1");
  if (layers < 0) throw ConfigError("layers must be >= 0");
  if (knn_k < 1) throw ConfigError("knn_k must be >= 1");
  if (lambda_cl < 0 || lambda_kl < 0 || lambda_u < 0) {
    throw ConfigError("loss weights must be >= 0");
  }
  if (patience < 1) throw ConfigError("patience must be >= 1");
  if (max_epochs < 1) throw ConfigError("max_epochs must be >= 1");
  if (gate_top_k < 1) throw ConfigError("gate_top_k must be >= 1");
}

std::vector<i32> sample_negatives(i64 user, const InteractionTable& train, Rng& rng,
                                  i64 count) {
  const auto& owned = train.user_items[static_cast<std::size_t>(user)];
  if (static_cast<i64>(owned.size()) >= train.n_items) {
    throw DataError("user " + std::to_string(user) + " interacts with every item");
  }
  std::vector<i32> out;
  out.reserve(static_cast<std::size_t>(count));
  for (i64 c = 0; c < count; ++c) {
    for (;;) {
      const i32 cand = static_cast<i32>(rng.below(static_cast<std::uint64_t>(train.n_items)));
      if (!std::binary_search(owned.begin(), owned.end(), cand)) {
        out.push_back(cand);
        break;
      }
    }
  }
  return out;
}

namespace {

/// s_r = z_a[r] . z_b[r]
NodeId rowwise_dot(Tape& tape, NodeId a, NodeId b) {
  return tape.sum_rows(tape.mul(a, b));
}

}  // namespace

NodeId bpr_loss(Tape& tape, NodeId z_u, NodeId z_pos, NodeId z_neg, bool faithful) {
  const NodeId s_pos = rowwise_dot(tape, z_u, z_pos);
  const NodeId s_neg = rowwise_dot(tape, z_u, z_neg);
  if (faithful) {
    // Objective exactly as printed: +sum log sig(s_pos) - sum log sig(-s_neg).
    const NodeId pos_term = tape.sum(tape.log(tape.sigmoid(s_pos)));
    const NodeId neg_term = tape.sum(tape.log(tape.sigmoid(tape.scalar_mul(s_neg, -1.0))));
    return tape.sub(pos_term, neg_term);
  }
  // -log sig(x) = softplus(-x), numerically stable in both tails
  const NodeId pos_term = tape.sum(tape.softplus(tape.scalar_mul(s_pos, -1.0)));
  const NodeId neg_term = tape.sum(tape.softplus(s_neg));
  return tape.add(pos_term, neg_term);
}

NodeId contrastive_loss(Tape& tape, NodeId z_u_pairs, NodeId z_items,
                        const std::vector<i64>& cand_rows, std::vector<i64> targets,
                        const Matrix* mask) {
  const NodeId z_cand = tape.slice_rows(z_items, cand_rows);
  NodeId scores = tape.matmul_nt(z_u_pairs, z_cand);
  if (mask != nullptr) {
    scores = tape.add(scores, tape.constant(*mask));
  }
  return tape.softmax_xent_rows(scores, std::move(targets));
}

LossNodes total_loss(Tape& tape, const BatchNodes& nodes, const TrainBatch& batch,
                     const TrainConfig& config, const InteractionTable& train,
                     double reg_scale) {
  LossNodes out;
  const NodeId z_u = tape.slice_rows(nodes.z_users, batch.pair_user_row);
  const NodeId z_pos = tape.slice_rows(nodes.z_items, batch.pair_pos_row);
  const NodeId z_neg = tape.slice_rows(nodes.z_items, batch.pair_neg_row);
  out.bpr = bpr_loss(tape, z_u, z_pos, z_neg, config.faithful_losses);
  out.total = out.bpr;

  if (config.lambda_cl > 0.0) {
    if (!config.faithful_losses) {
      // candidates = unique positive items of the batch
      std::vector<i64> cand_rows = batch.pair_pos_row;
      std::sort(cand_rows.begin(), cand_rows.end());
      cand_rows.erase(std::unique(cand_rows.begin(), cand_rows.end()), cand_rows.end());
      std::unordered_map<i64, i64> col_of;
      col_of.reserve(cand_rows.size());
      for (std::size_t c = 0; c < cand_rows.size(); ++c) col_of[cand_rows[c]] = static_cast<i64>(c);
      std::vector<i64> targets;
      targets.reserve(batch.pair_pos_row.size());
      for (i64 row : batch.pair_pos_row) targets.push_back(col_of.at(row));
      out.cl = contrastive_loss(tape, z_u, nodes.z_items, cand_rows, std::move(targets));
    } else {
      // denominator over the user's own train positives, as printed; the
      // batch must have been built with the users' positive sets included
      std::unordered_map<i64, i64> item_row;
      item_row.reserve(batch.unique_items.size());
      for (std::size_t r = 0; r < batch.unique_items.size(); ++r) {
        item_row[batch.unique_items[r]] = static_cast<i64>(r);
      }
      std::vector<i64> cand_rows(batch.unique_items.size());
      for (std::size_t r = 0; r < cand_rows.size(); ++r) cand_rows[r] = static_cast<i64>(r);
      const i64 n_pairs = batch.n_pairs();
      Matrix mask = Matrix::full(n_pairs, static_cast<i64>(cand_rows.size()), -1e9);
      std::vector<i64> targets(static_cast<std::size_t>(n_pairs));
      for (i64 p = 0; p < n_pairs; ++p) {
        const auto& owned = train.user_items[static_cast<std::size_t>(
            batch.users[static_cast<std::size_t>(p)])];
        for (i32 item : owned) {
          auto it = item_row.find(item);
          if (it != item_row.end()) mask(p, it->second) = 0.0;
        }
        targets[static_cast<std::size_t>(p)] =
            item_row.at(batch.pos_items[static_cast<std::size_t>(p)]);
      }
      out.cl = contrastive_loss(tape, z_u, nodes.z_items, cand_rows, std::move(targets), &mask);
    }
    out.total = tape.add(out.total, tape.scalar_mul(out.cl, config.lambda_cl));
  }

  if (nodes.kl >= 0 && config.lambda_kl > 0.0) {
    out.kl = nodes.kl;
    out.total = tape.add(out.total, tape.scalar_mul(out.kl, config.lambda_kl * reg_scale));
  }
  if (nodes.upen >= 0 && config.lambda_u > 0.0) {
    out.upen = nodes.upen;
    out.total = tape.add(out.total, tape.scalar_mul(out.upen, config.lambda_u * reg_scale));
  }
  return out;
}

io::MatrixBundle snapshot_params(const ad::ParamStore& params) {
  io::MatrixBundle bundle;
  for (const auto& p : params.all()) {
    bundle[p->name] = p->value;
    bundle[p->name + ".adam_m"] = p->adam_m;
    bundle[p->name + ".adam_v"] = p->adam_v;
    Matrix t(1, 1);
    t(0, 0) = static_cast<double>(p->adam_t);
    bundle[p->name + ".adam_t"] = t;
  }
  return bundle;
}

void restore_params(ad::ParamStore& params, const io::MatrixBundle& bundle) {
  for (const auto& p : params.all()) {
    const auto it = bundle.find(p->name);
    if (it == bundle.end()) {
      throw CacheError("checkpoint missing parameter '" + p->name + "'");
    }
    if (!it->second.same_shape(p->value)) {
      throw ShapeError("checkpoint parameter '" + p->name + "' has shape " +
                       it->second.shape_str() + ", expected " + p->value.shape_str());
    }
    p->value = it->second;
    if (auto m = bundle.find(p->name + ".adam_m"); m != bundle.end()) p->adam_m = m->second;
    if (auto v = bundle.find(p->name + ".adam_v"); v != bundle.end()) p->adam_v = v->second;
    if (auto t = bundle.find(p->name + ".adam_t"); t != bundle.end()) {
      p->adam_t = static_cast<i64>(t->second(0, 0));
    }
  }
}

FitResult fit(const TrainConfig& config, const InteractionTable& train,
              const std::vector<std::vector<i32>>& valid_holdout, RankingModel& model) {
  config.validate();
  const auto& pairs = train.pairs;
  if (pairs.empty()) throw DataError("fit: no train pairs");

  const bool has_uncertainty =
      config.variant != Variant::spumr_wo_upa && config.variant != Variant::mf_bpr;

  FitResult result;
  i64 epochs_since_best = 0;

  std::vector<i64> order(pairs.size());
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = static_cast<i64>(i);

  for (i64 epoch = 0; epoch < config.max_epochs; ++epoch) {
    Rng shuffle_rng(Rng::mix(config.seed, 0x50000ULL + static_cast<std::uint64_t>(epoch)));
    Rng neg_rng(Rng::mix(config.seed, 0x4e000ULL + static_cast<std::uint64_t>(epoch)));
    Rng noise_rng(Rng::mix(config.seed, 0x42000ULL + static_cast<std::uint64_t>(epoch)));
    shuffle_rng.shuffle(order);

    EpochRecord rec;
    rec.epoch = epoch;
    i64 n_batches = 0;
    for (std::size_t start = 0; start < order.size(); start += static_cast<std::size_t>(config.batch_size)) {
      const std::size_t end = std::min(order.size(), start + static_cast<std::size_t>(config.batch_size));
      std::vector<i64> batch_index(order.begin() + static_cast<std::ptrdiff_t>(start),
                                   order.begin() + static_cast<std::ptrdiff_t>(end));
      std::vector<i32> negatives;
      negatives.reserve(batch_index.size());
      for (i64 pi : batch_index) {
        const i64 u = pairs[static_cast<std::size_t>(pi)].first;
        negatives.push_back(sample_negatives(u, train, neg_rng, 1)[0]);
      }
      std::vector<i64> extra_items;
      if (config.faithful_losses && config.lambda_cl > 0.0) {
        for (i64 pi : batch_index) {
          const i64 u = pairs[static_cast<std::size_t>(pi)].first;
          for (i32 item : train.user_items[static_cast<std::size_t>(u)]) {
            extra_items.push_back(item);
          }
        }
      }
      TrainBatch batch = TrainBatch::build(pairs, batch_index, negatives, extra_items);

      double reg_scale = 1.0;
      if (config.reg_scale_full && has_uncertainty) {
        const double total_entities = static_cast<double>(train.n_users + train.n_items);
        const double batch_entities = static_cast<double>(batch.unique_users.size() +
                                                          batch.unique_items.size());
        reg_scale = total_entities / batch_entities;
      }

      Tape tape;
      BatchNodes nodes = model.build_batch(tape, batch, &noise_rng);
      LossNodes losses = total_loss(tape, nodes, batch, config, train, reg_scale);

      const double loss_value = tape.scalar(losses.total);
      if (!std::isfinite(loss_value)) {
        throw NumericError(
            "non-finite loss at epoch " + std::to_string(epoch) + " batch " +
            std::to_string(n_batches) + " (bpr=" + std::to_string(tape.scalar(losses.bpr)) +
            (losses.cl >= 0 ? " cl=" + std::to_string(tape.scalar(losses.cl)) : "") +
            (losses.kl >= 0 ? " kl=" + std::to_string(tape.scalar(losses.kl)) : "") +
            (losses.upen >= 0 ? " u=" + std::to_string(tape.scalar(losses.upen)) : "") + ")");
      }

      model.params().zero_grad();
      tape.backward(losses.total);
      ad::adam_step(model.params(), config.lr);

      rec.loss += loss_value;
      rec.bpr += tape.scalar(losses.bpr);
      rec.cl += losses.cl >= 0 ? tape.scalar(losses.cl) : 0.0;
      rec.kl += losses.kl >= 0 ? tape.scalar(losses.kl) : 0.0;
      rec.upen += losses.upen >= 0 ? tape.scalar(losses.upen) : 0.0;
      ++n_batches;
    }
    rec.loss /= static_cast<double>(n_batches);
    rec.bpr /= static_cast<double>(n_batches);
    rec.cl /= static_cast<double>(n_batches);
    rec.kl /= static_cast<double>(n_batches);
    rec.upen /= static_cast<double>(n_batches);

    const EvalOutput emb = model.eval_embeddings();
    const MetricReport report = evaluate(emb.z_users, emb.z_items, train, valid_holdout,
                                         {config.eval_k}, config.threads);
    rec.val_recall = report.at_k(config.eval_k).recall;
    rec.val_ndcg = report.at_k(config.eval_k).ndcg;
    result.history.push_back(rec);

    if (result.best_epoch < 0 || rec.val_recall > result.best_recall) {
      result.best_epoch = epoch;
      result.best_recall = rec.val_recall;
      result.best_checkpoint = snapshot_params(model.params());
      epochs_since_best = 0;
    } else {
      ++epochs_since_best;
      if (epochs_since_best >= config.patience) break;
    }
  }

  restore_params(model.params(), result.best_checkpoint);
  return result;
}

FitResult mf_bpr_baseline(const TrainConfig& config, const InteractionTable& train,
                          const std::vector<std::vector<i32>>& valid_holdout,
                          MfBprModel& model) {
  TrainConfig c = config;
  c.variant = Variant::mf_bpr;
  c.lambda_cl = 0.0;
  c.lambda_kl = 0.0;
  c.lambda_u = 0.0;
  return fit(c, train, valid_holdout, model);
}

}  // namespace spumr
