// Copyright 2026 the spumr authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <map>
#include <string>

#include "spumr/training.hpp"

namespace spumr {

/// Everything a command run needs: hyperparameters, paths, and flags.
/// Populated from a flat key-value config file; CLI flags override.
struct RunConfig {
  TrainConfig train;

  std::string interactions_path;
  std::string visual_features_path;
  std::string textual_features_path;
  std::string cache_dir;   // falls back to $SPUMR_CACHE_DIR
  std::string output_dir = "out";

  bool knn_from_raw = true;  // cosine KNN over raw d_m features (vs projected)

  /// Modalities with a configured feature path, in gate order.
  std::vector<std::pair<std::string, std::string>> modality_paths() const;

  void validate_paths_for_prepare() const;  // throws ConfigError
};

/// Parse `key = value` lines ('#' comments, blank lines ignored).
/// Unknown keys raise ConfigError naming the key and line.
RunConfig parse_config_file(const std::string& path);

/// Apply one key=value setting (shared by file parser and CLI overrides).
void apply_config_entry(RunConfig& config, const std::string& key, const std::string& value);

std::string config_summary(const RunConfig& config);  // stable key=value echo

}  // namespace spumr
