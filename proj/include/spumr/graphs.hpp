// Copyright 2026 the spumr authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "spumr/csr.hpp"
#include "spumr/data.hpp"
#include "spumr/matrix.hpp"

namespace spumr {

enum class NormScheme : std::uint8_t {
  symmetric_degree = 0,       // propagation coefficients from degrees only
  row_normalized_weight = 1,  // stored weights row-stochastic incl. self
};

/// Sparse weighted directed similarity graph.
///
/// symmetric_degree graphs store the k chosen neighbors per row (no
/// diagonal); the self term is added by the propagation kernel.
/// row_normalized_weight graphs store the diagonal explicitly and each row
/// (neighbors + self) sums to 1.
struct SimilarityGraph {
  i64 n_nodes = 0;
  CsrMatrix csr;
  NormScheme scheme = NormScheme::symmetric_degree;
  bool includes_self = true;

  /// Non-self out-degree of a row.
  i64 neighbor_count(i64 r) const;

  /// The dense-equivalent propagation operator as a CSR matrix:
  /// symmetric_degree -> D^-1/2 (A+I) D^-1/2 with D = diag(|N|+1);
  /// row_normalized_weight -> the stored row-stochastic matrix itself.
  CsrMatrix propagation_matrix() const;

  void check_invariants(i64 k) const;  // throws DataError on violation
};

/// Mean of projected item feature rows over each user's interactions.
/// Users must have at least one interaction in `table`.
Matrix user_interest_profiles(const InteractionTable& table, const Matrix& item_feats);

/// Directed KNN graph under cosine similarity: row u keeps the k nodes
/// v != u with the largest cos(row_u, row_v), ties to the smaller id.
/// Stored weights are cosines clipped to >= 0. Zero-norm rows compare as 0
/// to everything and trigger a warning.
SimilarityGraph build_knn_cosine(const Matrix& vectors, i64 k, int n_threads = 1,
                                 std::vector<std::string>* warnings = nullptr);

enum class JaccardSide { user, item };

/// Jaccard KNN graph over interaction sets (users) or co-occurrence sets
/// (items): row e keeps up to k peers with the largest positive Jaccard
/// weight, ties to the smaller id, plus an explicit self edge of raw weight
/// 1; each row is then normalized to sum 1.
SimilarityGraph build_jaccard(const InteractionTable& table, JaccardSide side, i64 k,
                              int n_threads = 1);

/// L layers of h <- D^-1/2 (A+I) D^-1/2 h over a symmetric_degree graph.
/// Edge weights are ignored; coefficients are purely degree-based.
Matrix propagate_symmetric(const SimilarityGraph& graph, const Matrix& feats, i64 layers,
                           int n_threads = 1);

/// One layer of row-stochastic propagation over a row_normalized_weight
/// graph; each output row is a convex combination of input rows.
Matrix propagate_weighted(const SimilarityGraph& graph, const Matrix& feats,
                          int n_threads = 1);

}  // namespace spumr
