// Copyright 2026 the spumr authors
// SPDX-License-Identifier: Apache-2.0
//
// Operator surface behind the CLI subcommands. All functions throw Error
// subclasses; the CLI maps them to nonzero exits.

#pragma once

#include <iosfwd>
#include <string>

#include "spumr/config.hpp"
#include "spumr/data.hpp"
#include "spumr/model.hpp"

namespace spumr {

/// Loaded view of a prepared cache directory.
struct CacheBundle {
  InteractionTable train;
  std::vector<std::vector<i32>> valid, test;
  std::vector<FeatureMatrix> features;  // dense-id order
  GraphSet graphs;
  std::string manifest_hash;
  std::uint64_t split_seed = 0;
};

/// Build ID maps, splits, feature remaps, and the four similarity graphs
/// under cache_dir, with a manifest for dependency tracking. Rerunning with
/// an unchanged config is a no-op ("cache hit").
void cmd_prepare(const RunConfig& config, std::ostream& out);

/// Train the configured variant from the prepared caches; writes
/// model.ckpt, model.meta.json, and history.jsonl under output_dir.
void cmd_train(const RunConfig& config, std::ostream& out);

/// Evaluate a checkpoint on the test split (K = 10, 20). Refuses when the
/// cache manifest no longer matches the checkpoint's recorded hash.
void cmd_evaluate(const RunConfig& config, const std::string& checkpoint_path,
                  std::ostream& out);

/// Write z_u, z_i, per-modality mu, per-modality sigma norms, and gate
/// weights as an MMCKPT01 bundle.
void cmd_export_embeddings(const RunConfig& config, const std::string& checkpoint_path,
                           const std::string& out_path, std::ostream& out);

/// Shared cache loader (exposed for tests). Graph requirements follow the
/// variant in config.train.variant.
CacheBundle load_caches(const RunConfig& config);

}  // namespace spumr
