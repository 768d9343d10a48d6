// Copyright 2026 the spumr authors
// SPDX-License-Identifier: Apache-2.0

#include "spumr/evaluation.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>
#include <unordered_set>

#include "spumr/errors.hpp"
#include "spumr/kernels.hpp"
#include "spumr/parallel.hpp"

namespace spumr {

const MetricReport::Row& MetricReport::at_k(i64 k) const {
  for (const auto& r : rows) {
    if (r.k == k) return r;
  }
  throw ConfigError("metric report has no K=" + std::to_string(k) + " row");
}

std::string MetricReport::format() const {
  std::ostringstream os;
  os << "model=" << model_tag << " split=" << split_tag
     << " users_evaluated=" << n_users_evaluated << "\n";
  for (const auto& r : rows) {
    char buf[128];
    std::snprintf(buf, sizeof(buf), "k=%lld recall=%.6f ndcg=%.6f\n",
                  static_cast<long long>(r.k), r.recall, r.ndcg);
    os << buf;
  }
  return os.str();
}

std::vector<i32> rank_items(const double* z_u, const Matrix& z_items,
                            const std::vector<i32>& exclude, i64 top_k) {
  const i64 n = z_items.rows();
  const std::size_t d = static_cast<std::size_t>(z_items.cols());
  std::vector<char> excluded(static_cast<std::size_t>(n), 0);
  for (i32 e : exclude) excluded[static_cast<std::size_t>(e)] = 1;

  struct Scored {
    double score;
    i32 id;
  };
  std::vector<Scored> scored;
  scored.reserve(static_cast<std::size_t>(n));
  for (i64 i = 0; i < n; ++i) {
    if (excluded[static_cast<std::size_t>(i)]) continue;
    scored.push_back({kernels::dot(z_u, z_items.row(i), d), static_cast<i32>(i)});
  }
  auto cmp = [](const Scored& a, const Scored& b) {
    if (a.score != b.score) return a.score > b.score;
    return a.id < b.id;
  };
  if (top_k >= 0 && top_k < static_cast<i64>(scored.size())) {
    std::partial_sort(scored.begin(), scored.begin() + top_k, scored.end(), cmp);
    scored.resize(static_cast<std::size_t>(top_k));
  } else {
    std::sort(scored.begin(), scored.end(), cmp);
  }
  std::vector<i32> out;
  out.reserve(scored.size());
  for (const auto& s : scored) out.push_back(s.id);
  return out;
}

double recall_at_k(const std::vector<i32>& ranked, const std::vector<i32>& holdout, i64 k) {
  if (holdout.empty()) throw DataError("recall_at_k: empty holdout");
  std::unordered_set<i32> want(holdout.begin(), holdout.end());
  i64 hits = 0;
  const i64 upto = std::min<i64>(k, static_cast<i64>(ranked.size()));
  for (i64 r = 0; r < upto; ++r) {
    if (want.count(ranked[static_cast<std::size_t>(r)]) != 0) ++hits;
  }
  return static_cast<double>(hits) / static_cast<double>(holdout.size());
}

double ndcg_at_k(const std::vector<i32>& ranked, const std::vector<i32>& holdout, i64 k) {
  if (holdout.empty()) throw DataError("ndcg_at_k: empty holdout");
  std::unordered_set<i32> want(holdout.begin(), holdout.end());
  double dcg = 0.0;
  const i64 upto = std::min<i64>(k, static_cast<i64>(ranked.size()));
  for (i64 r = 0; r < upto; ++r) {
    if (want.count(ranked[static_cast<std::size_t>(r)]) != 0) {
      dcg += 1.0 / std::log2(static_cast<double>(r) + 2.0);
    }
  }
  double idcg = 0.0;
  const i64 ideal = std::min<i64>(k, static_cast<i64>(holdout.size()));
  for (i64 r = 0; r < ideal; ++r) {
    idcg += 1.0 / std::log2(static_cast<double>(r) + 2.0);
  }
  return dcg / idcg;
}

MetricReport evaluate(const Matrix& z_users, const Matrix& z_items,
                      const InteractionTable& train,
                      const std::vector<std::vector<i32>>& holdout,
                      const std::vector<i64>& ks, int threads) {
  if (z_users.cols() != z_items.cols()) {
    throw ShapeError("evaluate: user dim " + z_users.shape_str() + " vs item dim " +
                     z_items.shape_str());
  }
  if (static_cast<i64>(holdout.size()) != z_users.rows()) {
    throw ShapeError("evaluate: holdout lists " + std::to_string(holdout.size()) +
                     " vs users " + std::to_string(z_users.rows()));
  }
  i64 max_k = 0;
  for (i64 k : ks) max_k = std::max(max_k, k);

  const i64 n_users = z_users.rows();
  // per-user metric rows; summed afterwards so thread count cannot change
  // the reduction order
  Matrix recalls(n_users, static_cast<i64>(ks.size()));
  Matrix ndcgs(n_users, static_cast<i64>(ks.size()));
  std::vector<char> counted(static_cast<std::size_t>(n_users), 0);

  parallel_for(n_users, threads, [&](i64 u) {
    const auto& want = holdout[static_cast<std::size_t>(u)];
    if (want.empty()) return;
    counted[static_cast<std::size_t>(u)] = 1;
    const auto ranked = rank_items(z_users.row(u), z_items,
                                   train.user_items[static_cast<std::size_t>(u)], max_k);
    for (std::size_t j = 0; j < ks.size(); ++j) {
      recalls(u, static_cast<i64>(j)) = recall_at_k(ranked, want, ks[j]);
      ndcgs(u, static_cast<i64>(j)) = ndcg_at_k(ranked, want, ks[j]);
    }
  });

  i64 evaluated = 0;
  for (char c : counted) evaluated += c;
  if (evaluated == 0) throw DataError("evaluate: no users with non-empty holdout");

  MetricReport report;
  report.n_users_evaluated = evaluated;
  for (std::size_t j = 0; j < ks.size(); ++j) {
    MetricReport::Row row;
    row.k = ks[j];
    double rsum = 0.0, nsum = 0.0;
    for (i64 u = 0; u < n_users; ++u) {
      rsum += recalls(u, static_cast<i64>(j));
      nsum += ndcgs(u, static_cast<i64>(j));
    }
    row.recall = rsum / static_cast<double>(evaluated);
    row.ndcg = nsum / static_cast<double>(evaluated);
    report.rows.push_back(row);
  }
  return report;
}

}  // namespace spumr
