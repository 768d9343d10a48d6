// Copyright 2026 the spumr authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstdint>
#include <string>
#include <unordered_map>
#include <utility>
#include <vector>

#include "spumr/matrix.hpp"

namespace spumr {

/// Bipartite user-item interactions with dense contiguous ids. user_items
/// and item_users are exact transposes; every user and item has at least one
/// interaction.
struct InteractionTable {
  i64 n_users = 0;
  i64 n_items = 0;
  std::vector<std::pair<i32, i32>> pairs;  // (user, item), sorted
  std::vector<std::vector<i32>> user_items;
  std::vector<std::vector<i32>> item_users;

  // raw <-> dense id maps, first-seen order
  std::vector<std::string> user_raw_ids;
  std::vector<std::string> item_raw_ids;
  std::unordered_map<std::string, i32> user_id_map;
  std::unordered_map<std::string, i32> item_id_map;

  void check_invariants() const;  // throws DataError on violation
  static InteractionTable from_pairs(i64 n_users, i64 n_items,
                                     std::vector<std::pair<i32, i32>> pairs);
};

struct LoadReport {
  i64 duplicate_count = 0;
  i64 line_count = 0;
  std::vector<std::string> warnings;  // e.g. sub-5-core degree notices
};

/// Parse `raw_user <TAB|,> raw_item` lines, remap ids first-seen, drop
/// duplicates. Extra columns ignored. Malformed line -> ParseError with the
/// 1-based line number; empty file -> ParseError.
InteractionTable load_interactions(const std::string& path, LoadReport* report = nullptr);

/// Dense per-entity modality features.
struct FeatureMatrix {
  std::string modality;  // "visual", "textual", ...
  Matrix data;

  i64 rows() const { return data.rows(); }
  i64 dim() const { return data.cols(); }
};

/// Load a feature matrix (binary MMFEAT01 or text fallback). Row count must
/// equal expected_rows (ShapeError otherwise); non-finite entries raise a
/// DataError naming the first offending row.
FeatureMatrix load_modal_features(const std::string& path, const std::string& modality,
                                  i64 expected_rows);

/// Per-user holdout split. train holds the surviving InteractionTable; valid
/// and test list holdout items per user (possibly empty).
struct SplitSet {
  InteractionTable train;
  std::vector<std::vector<i32>> valid;  // per user, sorted
  std::vector<std::vector<i32>> test;   // per user, sorted
  std::uint64_t seed = 0;
  double ratios[3] = {0.8, 0.1, 0.1};
};

/// Deterministic per-user split: each user's interactions are shuffled by a
/// generator derived from (seed, user) and cut into train/valid/test.
/// Users with n < 3 keep everything in train; otherwise
/// n_test = max(1, round(r_test*n)) and likewise for valid, remainder train
/// (train never empty).
SplitSet split_per_user(const InteractionTable& table, const double ratios[3],
                        std::uint64_t seed);

}  // namespace spumr
