// Copyright 2026 the spumr authors
// SPDX-License-Identifier: Apache-2.0
//
// Full-ranking Top-K evaluation: every non-train item is scored and ranked
// per user; Recall@K and NDCG@K averaged over users with holdout items.

#pragma once

#include <string>
#include <vector>

#include "spumr/data.hpp"
#include "spumr/matrix.hpp"

namespace spumr {

struct MetricReport {
  struct Row {
    i64 k = 0;
    double recall = 0.0;
    double ndcg = 0.0;
  };
  std::vector<Row> rows;
  i64 n_users_evaluated = 0;
  std::string model_tag;
  std::string split_tag;

  const Row& at_k(i64 k) const;
  std::string format() const;  // stable key=value lines for scripting
};

/// Items sorted by descending score z_u . z_i, ties by ascending item id;
/// excluded items removed before ranking. top_k < 0 returns the full
/// ordering, otherwise only the first top_k survivors.
std::vector<i32> rank_items(const double* z_u, const Matrix& z_items,
                            const std::vector<i32>& exclude, i64 top_k = -1);

/// |top-K intersect holdout| / |holdout|; holdout must be non-empty.
double recall_at_k(const std::vector<i32>& ranked, const std::vector<i32>& holdout, i64 k);

/// Binary-relevance NDCG: DCG over hit ranks r <= K of 1/log2(r+1), IDCG
/// truncated at min(K, |holdout|).
double ndcg_at_k(const std::vector<i32>& ranked, const std::vector<i32>& holdout, i64 k);

/// Per-user metrics averaged over users with non-empty holdout. Train
/// positives are always excluded from the candidate ranking.
MetricReport evaluate(const Matrix& z_users, const Matrix& z_items,
                      const InteractionTable& train,
                      const std::vector<std::vector<i32>>& holdout,
                      const std::vector<i64>& ks = {10, 20}, int threads = 1);

}  // namespace spumr
