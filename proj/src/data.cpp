// Copyright 2026 the spumr authors
// SPDX-License-Identifier: Apache-2.0

#include "spumr/data.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <set>
#include <sstream>

#include "spumr/errors.hpp"
#include "spumr/io.hpp"
#include "spumr/rng.hpp"

namespace spumr {

void InteractionTable::check_invariants() const {
  if (static_cast<i64>(user_items.size()) != n_users ||
      static_cast<i64>(item_users.size()) != n_items) {
    throw DataError("interaction table: adjacency size mismatch");
  }
  i64 total = 0;
  for (i64 u = 0; u < n_users; ++u) {
    const auto& items = user_items[static_cast<std::size_t>(u)];
    if (items.empty()) throw DataError("user " + std::to_string(u) + " has no interactions");
    if (!std::is_sorted(items.begin(), items.end()) ||
        std::adjacent_find(items.begin(), items.end()) != items.end()) {
      throw DataError("user adjacency not strictly sorted");
    }
    total += static_cast<i64>(items.size());
  }
  if (total != static_cast<i64>(pairs.size())) {
    throw DataError("pair count does not match adjacency");
  }
  i64 total_t = 0;
  for (i64 i = 0; i < n_items; ++i) {
    const auto& users = item_users[static_cast<std::size_t>(i)];
    if (users.empty()) throw DataError("item " + std::to_string(i) + " has no interactions");
    total_t += static_cast<i64>(users.size());
  }
  if (total_t != total) throw DataError("item adjacency is not the transpose of user adjacency");
}

InteractionTable InteractionTable::from_pairs(i64 n_users, i64 n_items,
                                              std::vector<std::pair<i32, i32>> pairs) {
  InteractionTable t;
  t.n_users = n_users;
  t.n_items = n_items;
  std::sort(pairs.begin(), pairs.end());
  pairs.erase(std::unique(pairs.begin(), pairs.end()), pairs.end());
  t.pairs = std::move(pairs);
  t.user_items.assign(static_cast<std::size_t>(n_users), {});
  t.item_users.assign(static_cast<std::size_t>(n_items), {});
  for (const auto& [u, i] : t.pairs) {
    t.user_items[static_cast<std::size_t>(u)].push_back(i);
    t.item_users[static_cast<std::size_t>(i)].push_back(u);
  }
  return t;
}

namespace {

// Split a line on the first tab or comma; trims surrounding spaces/CR.
bool split_pair_line(const std::string& line, std::string& a, std::string& b) {
  std::size_t sep = line.find_first_of("\t,");
  if (sep == std::string::npos) {
    // whitespace-separated fallback
    std::istringstream ss(line);
    if (!(ss >> a >> b)) return false;
    return true;
  }
  auto trim = [](std::string s) {
    const char* ws = " \r\n";
    const auto lo = s.find_first_not_of(ws);
    if (lo == std::string::npos) return std::string();
    const auto hi = s.find_last_not_of(ws);
    return s.substr(lo, hi - lo + 1);
  };
  a = trim(line.substr(0, sep));
  std::string rest = line.substr(sep + 1);
  // extra columns beyond the second are ignored
  const std::size_t sep2 = rest.find_first_of("\t,");
  b = trim(sep2 == std::string::npos ? rest : rest.substr(0, sep2));
  return !a.empty() && !b.empty();
}

}  // namespace

InteractionTable load_interactions(const std::string& path, LoadReport* report) {
  std::ifstream is(path);
  if (!is) throw IoError("cannot open: " + path);

  InteractionTable t;
  std::set<std::pair<i32, i32>> seen;
  LoadReport local;
  std::string line;
  i64 line_no = 0;
  while (std::getline(is, line)) {
    ++line_no;
    if (line.empty() || line[0] == '#') continue;
    std::string ru, ri;
    if (!split_pair_line(line, ru, ri)) {
      throw ParseError(path + ":" + std::to_string(line_no) + ": malformed interaction line");
    }
    auto [uit, unew] = t.user_id_map.try_emplace(ru, static_cast<i32>(t.user_raw_ids.size()));
    if (unew) t.user_raw_ids.push_back(ru);
    auto [iit, inew] = t.item_id_map.try_emplace(ri, static_cast<i32>(t.item_raw_ids.size()));
    if (inew) t.item_raw_ids.push_back(ri);
    if (!seen.emplace(uit->second, iit->second).second) {
      ++local.duplicate_count;
    }
    ++local.line_count;
  }
  if (seen.empty()) throw ParseError(path + ": no interactions found");

  t.n_users = static_cast<i64>(t.user_raw_ids.size());
  t.n_items = static_cast<i64>(t.item_raw_ids.size());
  t.pairs.assign(seen.begin(), seen.end());
  t.user_items.assign(static_cast<std::size_t>(t.n_users), {});
  t.item_users.assign(static_cast<std::size_t>(t.n_items), {});
  for (const auto& [u, i] : t.pairs) {
    t.user_items[static_cast<std::size_t>(u)].push_back(i);
    t.item_users[static_cast<std::size_t>(i)].push_back(u);
  }
  t.check_invariants();

  // 5-core filtering is expected upstream; low degrees are only warned about.
  i64 thin_users = 0, thin_items = 0;
  for (const auto& v : t.user_items) thin_users += v.size() < 5 ? 1 : 0;
  for (const auto& v : t.item_users) thin_items += v.size() < 5 ? 1 : 0;
  if (thin_users > 0 || thin_items > 0) {
    local.warnings.push_back("degree < 5 for " + std::to_string(thin_users) + " users / " +
                             std::to_string(thin_items) + " items (expected 5-core input)");
  }
  if (report != nullptr) *report = std::move(local);
  return t;
}

FeatureMatrix load_modal_features(const std::string& path, const std::string& modality,
                                  i64 expected_rows) {
  Matrix m = io::read_feature_matrix(path);
  if (m.rows() != expected_rows) {
    throw ShapeError(path + ": feature rows " + std::to_string(m.rows()) +
                     " != expected " + std::to_string(expected_rows));
  }
  for (i64 r = 0; r < m.rows(); ++r) {
    const double* row = m.row(r);
    for (i64 c = 0; c < m.cols(); ++c) {
      if (!std::isfinite(row[c])) {
        throw DataError(path + ": non-finite value at row " + std::to_string(r));
      }
    }
  }
  return FeatureMatrix{modality, std::move(m)};
}

SplitSet split_per_user(const InteractionTable& table, const double ratios[3],
                        std::uint64_t seed) {
  const double rsum = ratios[0] + ratios[1] + ratios[2];
  if (std::abs(rsum - 1.0) > 1e-9) {
    throw ConfigError("split ratios must sum to 1");
  }
  SplitSet s;
  s.seed = seed;
  for (int i = 0; i < 3; ++i) s.ratios[i] = ratios[i];
  s.valid.assign(static_cast<std::size_t>(table.n_users), {});
  s.test.assign(static_cast<std::size_t>(table.n_users), {});

  std::vector<std::pair<i32, i32>> train_pairs;
  train_pairs.reserve(table.pairs.size());
  for (i64 u = 0; u < table.n_users; ++u) {
    std::vector<i32> items = table.user_items[static_cast<std::size_t>(u)];
    const i64 n = static_cast<i64>(items.size());
    i64 n_test = 0, n_valid = 0;
    if (n >= 3) {
      n_test = std::max<i64>(1, std::llround(ratios[2] * static_cast<double>(n)));
      n_valid = std::max<i64>(1, std::llround(ratios[1] * static_cast<double>(n)));
      while (n_test + n_valid >= n) {  // keep train non-empty
        if (n_valid > 0) --n_valid;
        else --n_test;
      }
    }
    Rng rng(Rng::mix(seed, static_cast<std::uint64_t>(u)));
    rng.shuffle(items);
    auto& test_u = s.test[static_cast<std::size_t>(u)];
    auto& valid_u = s.valid[static_cast<std::size_t>(u)];
    test_u.assign(items.begin(), items.begin() + n_test);
    valid_u.assign(items.begin() + n_test, items.begin() + n_test + n_valid);
    std::sort(test_u.begin(), test_u.end());
    std::sort(valid_u.begin(), valid_u.end());
    for (i64 j = n_test + n_valid; j < n; ++j) {
      train_pairs.emplace_back(static_cast<i32>(u), items[static_cast<std::size_t>(j)]);
    }
  }

  // Items can lose all train interactions to holdouts; that is allowed for
  // the train table only when they still appear in valid/test. The train
  // table keeps the full id space so feature rows stay aligned.
  s.train.n_users = table.n_users;
  s.train.n_items = table.n_items;
  std::sort(train_pairs.begin(), train_pairs.end());
  s.train.pairs = std::move(train_pairs);
  s.train.user_items.assign(static_cast<std::size_t>(table.n_users), {});
  s.train.item_users.assign(static_cast<std::size_t>(table.n_items), {});
  for (const auto& [u, i] : s.train.pairs) {
    s.train.user_items[static_cast<std::size_t>(u)].push_back(i);
    s.train.item_users[static_cast<std::size_t>(i)].push_back(u);
  }
  s.train.user_raw_ids = table.user_raw_ids;
  s.train.item_raw_ids = table.item_raw_ids;
  s.train.user_id_map = table.user_id_map;
  s.train.item_id_map = table.item_id_map;
  return s;
}

}  // namespace spumr
