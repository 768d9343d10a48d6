// Copyright 2026 the spumr authors
// SPDX-License-Identifier: Apache-2.0

#include "spumr/graphs.hpp"

#include <algorithm>
#include <cmath>
#include <mutex>

#include "spumr/errors.hpp"
#include "spumr/kernels.hpp"
#include "spumr/parallel.hpp"

namespace spumr {

i64 SimilarityGraph::neighbor_count(i64 r) const {
  i64 n = csr.row_nnz(r);
  if (scheme == NormScheme::row_normalized_weight) {
    // diagonal entry is stored explicitly for these graphs
    for (i64 e = csr.offsets[r]; e < csr.offsets[r + 1]; ++e) {
      if (csr.colidx[e] == static_cast<i32>(r)) {
        --n;
        break;
      }
    }
  }
  return n;
}

CsrMatrix SimilarityGraph::propagation_matrix() const {
  if (scheme == NormScheme::row_normalized_weight) return csr;

  // symmetric_degree: rebuild with the diagonal inserted and coefficients
  // 1/sqrt((|N_u|+1)(|N_v|+1)); stored similarity weights are not used.
  std::vector<double> inv_sqrt_deg(static_cast<std::size_t>(n_nodes));
  for (i64 r = 0; r < n_nodes; ++r) {
    inv_sqrt_deg[static_cast<std::size_t>(r)] =
        1.0 / std::sqrt(static_cast<double>(csr.row_nnz(r) + 1));
  }
  CsrMatrix p;
  p.rows = n_nodes;
  p.cols = n_nodes;
  p.offsets.resize(static_cast<std::size_t>(n_nodes + 1), 0);
  p.colidx.reserve(static_cast<std::size_t>(csr.nnz() + n_nodes));
  p.weights.reserve(static_cast<std::size_t>(csr.nnz() + n_nodes));
  for (i64 r = 0; r < n_nodes; ++r) {
    const double du = inv_sqrt_deg[static_cast<std::size_t>(r)];
    bool self_emitted = false;
    for (i64 e = csr.offsets[r]; e < csr.offsets[r + 1]; ++e) {
      const i32 v = csr.colidx[e];
      if (!self_emitted && static_cast<i64>(v) > r) {
        p.colidx.push_back(static_cast<i32>(r));
        p.weights.push_back(du * du);
        self_emitted = true;
      }
      p.colidx.push_back(v);
      p.weights.push_back(du * inv_sqrt_deg[static_cast<std::size_t>(v)]);
    }
    if (!self_emitted) {
      p.colidx.push_back(static_cast<i32>(r));
      p.weights.push_back(du * du);
    }
    p.offsets[static_cast<std::size_t>(r + 1)] = static_cast<i64>(p.colidx.size());
  }
  return p;
}

void SimilarityGraph::check_invariants(i64 k) const {
  for (i64 r = 0; r < n_nodes; ++r) {
    if (neighbor_count(r) > k) {
      throw DataError("graph row " + std::to_string(r) + " exceeds k neighbors");
    }
    double row_sum = 0.0;
    for (i64 e = csr.offsets[r]; e < csr.offsets[r + 1]; ++e) {
      if (e > csr.offsets[r] && csr.colidx[e] <= csr.colidx[e - 1]) {
        throw DataError("graph row " + std::to_string(r) + " columns not strictly increasing");
      }
      const double w = csr.weights[e];
      if (!std::isfinite(w) || w < 0.0) {
        throw DataError("graph row " + std::to_string(r) + " has invalid weight");
      }
      row_sum += w;
    }
    if (scheme == NormScheme::row_normalized_weight && std::abs(row_sum - 1.0) > 1e-6) {
      throw DataError("row-normalized graph row " + std::to_string(r) +
                      " sums to " + std::to_string(row_sum));
    }
  }
}

Matrix user_interest_profiles(const InteractionTable& table, const Matrix& item_feats) {
  if (item_feats.rows() != table.n_items) {
    throw ShapeError("user_interest_profiles: item feature rows " +
                     std::to_string(item_feats.rows()) + " != n_items " +
                     std::to_string(table.n_items));
  }
  const std::size_t d = static_cast<std::size_t>(item_feats.cols());
  Matrix profiles(table.n_users, item_feats.cols());
  for (i64 u = 0; u < table.n_users; ++u) {
    const auto& items = table.user_items[static_cast<std::size_t>(u)];
    if (items.empty()) {
      throw DataError("user " + std::to_string(u) + " has no interactions to profile");
    }
    double* out = profiles.row(u);
    for (i32 i : items) kernels::axpy(1.0, item_feats.row(i), out, d);
    kernels::scale(1.0 / static_cast<double>(items.size()), out, d);
  }
  return profiles;
}

namespace {

struct ScoredNode {
  double score;
  i32 id;
};

// Descending score, ascending id on ties.
inline bool better(const ScoredNode& a, const ScoredNode& b) {
  if (a.score != b.score) return a.score > b.score;
  return a.id < b.id;
}

}  // namespace

SimilarityGraph build_knn_cosine(const Matrix& vectors, i64 k, int n_threads,
                                 std::vector<std::string>* warnings) {
  const i64 n = vectors.rows();
  if (k < 1) throw ConfigError("build_knn_cosine: k must be >= 1");
  if (k >= n) throw ConfigError("build_knn_cosine: k must be < n_nodes");
  const std::size_t d = static_cast<std::size_t>(vectors.cols());

  std::vector<double> inv_norm(static_cast<std::size_t>(n));
  i64 zero_norm_rows = 0;
  for (i64 r = 0; r < n; ++r) {
    const double nn = std::sqrt(kernels::dot(vectors.row(r), vectors.row(r), d));
    if (nn == 0.0) {
      inv_norm[static_cast<std::size_t>(r)] = 0.0;  // similarity defined as 0
      ++zero_norm_rows;
    } else {
      inv_norm[static_cast<std::size_t>(r)] = 1.0 / nn;
    }
  }
  if (zero_norm_rows > 0 && warnings != nullptr) {
    warnings->push_back(std::to_string(zero_norm_rows) +
                        " zero-norm rows in KNN input; their similarities are 0");
  }

  std::vector<std::vector<ScoredNode>> rows(static_cast<std::size_t>(n));
  parallel_for(n, n_threads, [&](i64 u) {
    // bounded selection: keep the k best seen so far
    std::vector<ScoredNode> heap;
    heap.reserve(static_cast<std::size_t>(k) + 1);
    auto worse = [](const ScoredNode& a, const ScoredNode& b) { return better(a, b); };
    for (i64 v = 0; v < n; ++v) {
      if (v == u) continue;
      const double cos = kernels::dot(vectors.row(u), vectors.row(v), d) *
                         inv_norm[static_cast<std::size_t>(u)] *
                         inv_norm[static_cast<std::size_t>(v)];
      const ScoredNode cand{cos, static_cast<i32>(v)};
      if (static_cast<i64>(heap.size()) < k) {
        heap.push_back(cand);
        std::push_heap(heap.begin(), heap.end(), worse);
      } else if (better(cand, heap.front())) {
        std::pop_heap(heap.begin(), heap.end(), worse);
        heap.back() = cand;
        std::push_heap(heap.begin(), heap.end(), worse);
      }
    }
    std::sort(heap.begin(), heap.end(),
              [](const ScoredNode& a, const ScoredNode& b) { return a.id < b.id; });
    rows[static_cast<std::size_t>(u)] = std::move(heap);
  });

  SimilarityGraph g;
  g.n_nodes = n;
  g.scheme = NormScheme::symmetric_degree;
  g.includes_self = true;
  g.csr.rows = n;
  g.csr.cols = n;
  g.csr.offsets.resize(static_cast<std::size_t>(n + 1), 0);
  g.csr.colidx.reserve(static_cast<std::size_t>(n * k));
  g.csr.weights.reserve(static_cast<std::size_t>(n * k));
  for (i64 u = 0; u < n; ++u) {
    for (const auto& s : rows[static_cast<std::size_t>(u)]) {
      g.csr.colidx.push_back(s.id);
      g.csr.weights.push_back(std::max(0.0, s.score));
    }
    g.csr.offsets[static_cast<std::size_t>(u + 1)] = static_cast<i64>(g.csr.colidx.size());
  }
  return g;
}

SimilarityGraph build_jaccard(const InteractionTable& table, JaccardSide side, i64 k,
                              int n_threads) {
  if (k < 1) throw ConfigError("build_jaccard: k must be >= 1");
  const bool user_side = side == JaccardSide::user;
  const i64 n = user_side ? table.n_users : table.n_items;
  const auto& own_sets = user_side ? table.user_items : table.item_users;
  const auto& cross_sets = user_side ? table.item_users : table.user_items;

  std::vector<std::vector<ScoredNode>> rows(static_cast<std::size_t>(n));
  parallel_for(n, n_threads, [&](i64 e) {
    const auto& mine = own_sets[static_cast<std::size_t>(e)];
    // count intersections against peers sharing at least one interaction
    std::vector<i64> overlap(static_cast<std::size_t>(n), 0);
    std::vector<i32> touched;
    for (i32 x : mine) {
      for (i32 peer : cross_sets[static_cast<std::size_t>(x)]) {
        if (static_cast<i64>(peer) == e) continue;
        if (overlap[static_cast<std::size_t>(peer)] == 0) touched.push_back(peer);
        ++overlap[static_cast<std::size_t>(peer)];
      }
    }
    std::sort(touched.begin(), touched.end());
    std::vector<ScoredNode> heap;
    heap.reserve(static_cast<std::size_t>(k) + 1);
    auto worse = [](const ScoredNode& a, const ScoredNode& b) { return better(a, b); };
    for (i32 peer : touched) {
      const i64 inter = overlap[static_cast<std::size_t>(peer)];
      const i64 uni = static_cast<i64>(mine.size()) +
                      static_cast<i64>(own_sets[static_cast<std::size_t>(peer)].size()) - inter;
      const double w = static_cast<double>(inter) / static_cast<double>(uni);
      const ScoredNode cand{w, peer};
      if (static_cast<i64>(heap.size()) < k) {
        heap.push_back(cand);
        std::push_heap(heap.begin(), heap.end(), worse);
      } else if (better(cand, heap.front())) {
        std::pop_heap(heap.begin(), heap.end(), worse);
        heap.back() = cand;
        std::push_heap(heap.begin(), heap.end(), worse);
      }
    }
    std::sort(heap.begin(), heap.end(),
              [](const ScoredNode& a, const ScoredNode& b) { return a.id < b.id; });
    rows[static_cast<std::size_t>(e)] = std::move(heap);
  });

  SimilarityGraph g;
  g.n_nodes = n;
  g.scheme = NormScheme::row_normalized_weight;
  g.includes_self = true;
  g.csr.rows = n;
  g.csr.cols = n;
  g.csr.offsets.resize(static_cast<std::size_t>(n + 1), 0);
  for (i64 e = 0; e < n; ++e) {
    const auto& nbrs = rows[static_cast<std::size_t>(e)];
    double raw_sum = 1.0;  // the self edge enters normalization with weight 1
    for (const auto& s : nbrs) raw_sum += s.score;
    const double inv = 1.0 / raw_sum;
    bool self_emitted = false;
    for (const auto& s : nbrs) {
      if (!self_emitted && static_cast<i64>(s.id) > e) {
        g.csr.colidx.push_back(static_cast<i32>(e));
        g.csr.weights.push_back(inv);
        self_emitted = true;
      }
      g.csr.colidx.push_back(s.id);
      g.csr.weights.push_back(s.score * inv);
    }
    if (!self_emitted) {
      g.csr.colidx.push_back(static_cast<i32>(e));
      g.csr.weights.push_back(inv);
    }
    g.csr.offsets[static_cast<std::size_t>(e + 1)] = static_cast<i64>(g.csr.colidx.size());
  }
  return g;
}

Matrix propagate_symmetric(const SimilarityGraph& graph, const Matrix& feats, i64 layers,
                           int n_threads) {
  if (graph.scheme != NormScheme::symmetric_degree) {
    throw ConfigError("propagate_symmetric requires a symmetric_degree graph");
  }
  if (feats.rows() != graph.n_nodes) {
    throw ShapeError("propagate_symmetric: feats rows " + std::to_string(feats.rows()) +
                     " != n_nodes " + std::to_string(graph.n_nodes));
  }
  if (layers == 0) return feats;
  const CsrMatrix p = graph.propagation_matrix();
  Matrix cur = feats;
  Matrix next(feats.rows(), feats.cols());
  const std::size_t d = static_cast<std::size_t>(feats.cols());
  for (i64 l = 0; l < layers; ++l) {
    next.zero();
    parallel_for(graph.n_nodes, n_threads, [&](i64 r) {
      double* orow = next.row(r);
      for (i64 e = p.offsets[r]; e < p.offsets[r + 1]; ++e) {
        kernels::axpy(p.weights[e], cur.row(p.colidx[e]), orow, d);
      }
    });
    std::swap(cur, next);
  }
  return cur;
}

Matrix propagate_weighted(const SimilarityGraph& graph, const Matrix& feats, int n_threads) {
  if (graph.scheme != NormScheme::row_normalized_weight) {
    throw ConfigError("propagate_weighted requires a row_normalized_weight graph");
  }
  if (feats.rows() != graph.n_nodes) {
    throw ShapeError("propagate_weighted: feats rows " + std::to_string(feats.rows()) +
                     " != n_nodes " + std::to_string(graph.n_nodes));
  }
  Matrix out(feats.rows(), feats.cols());
  const std::size_t d = static_cast<std::size_t>(feats.cols());
  parallel_for(graph.n_nodes, n_threads, [&](i64 r) {
    double* orow = out.row(r);
    for (i64 e = graph.csr.offsets[r]; e < graph.csr.offsets[r + 1]; ++e) {
      kernels::axpy(graph.csr.weights[e], feats.row(graph.csr.colidx[e]), orow, d);
    }
  });
  return out;
}

}  // namespace spumr
