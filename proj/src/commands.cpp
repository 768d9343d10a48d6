// Copyright 2026 the spumr authors
// SPDX-License-Identifier: Apache-2.0

#include "spumr/commands.hpp"

#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>

#include <json.hpp>

#include "spumr/errors.hpp"
#include "spumr/evaluation.hpp"
#include "spumr/graphs.hpp"
#include "spumr/io.hpp"
#include "spumr/training.hpp"

namespace spumr {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

std::string join(const std::string& dir, const std::string& name) {
  return (fs::path(dir) / name).string();
}

std::string ratios_str(const double r[3]) {
  std::ostringstream os;
  os << r[0] << ":" << r[1] << ":" << r[2];
  return os.str();
}

constexpr double kSplitRatios[3] = {0.8, 0.1, 0.1};

std::string split_key_for(const std::string& interactions_hash, std::uint64_t seed) {
  return io::string_hash(interactions_hash + "|" + std::to_string(seed) + "|" +
                         ratios_str(kSplitRatios));
}

std::string graph_key_for(const RunConfig& c, const std::string& split_key,
                          const std::vector<std::pair<std::string, std::string>>& feats) {
  std::string s = split_key + "|k=" + std::to_string(c.train.knn_k) +
                  "|raw=" + (c.knn_from_raw ? "1" : "0");
  if (!c.knn_from_raw) s += "|d=" + std::to_string(c.train.d);
  for (const auto& [mod, path] : feats) s += "|" + mod + "=" + io::file_hash(path);
  return io::string_hash(s);
}

void write_pairs_file(const std::string& path, const std::vector<std::pair<i32, i32>>& pairs) {
  std::ofstream os(path);
  if (!os) throw IoError("cannot open for writing: " + path);
  for (const auto& [u, i] : pairs) os << u << "\t" << i << "\n";
  if (!os) throw IoError("write failed: " + path);
}

void write_holdout_file(const std::string& path, const std::vector<std::vector<i32>>& holdout) {
  std::ofstream os(path);
  if (!os) throw IoError("cannot open for writing: " + path);
  for (std::size_t u = 0; u < holdout.size(); ++u) {
    for (i32 i : holdout[u]) os << u << "\t" << i << "\n";
  }
  if (!os) throw IoError("write failed: " + path);
}

std::vector<std::pair<i32, i32>> read_pairs_file(const std::string& path) {
  std::ifstream is(path);
  if (!is) throw IoError("cannot open: " + path);
  std::vector<std::pair<i32, i32>> pairs;
  i64 u, i;
  while (is >> u >> i) pairs.emplace_back(static_cast<i32>(u), static_cast<i32>(i));
  return pairs;
}

void write_idmap(const std::string& path, const std::vector<std::string>& raw_ids) {
  std::ofstream os(path);
  if (!os) throw IoError("cannot open for writing: " + path);
  for (const auto& r : raw_ids) os << r << "\n";
  if (!os) throw IoError("write failed: " + path);
}

std::vector<std::string> read_idmap(const std::string& path) {
  std::ifstream is(path);
  if (!is) throw IoError("cannot open: " + path);
  std::vector<std::string> ids;
  std::string line;
  while (std::getline(is, line)) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    ids.push_back(line);
  }
  return ids;
}

/// Feature rows are indexed by the raw item id parsed as an integer; produce
/// the dense-id-ordered matrix used everywhere downstream.
Matrix remap_features(const Matrix& raw, const std::vector<std::string>& item_raw_ids,
                      const std::string& modality) {
  Matrix dense(static_cast<i64>(item_raw_ids.size()), raw.cols());
  for (std::size_t d = 0; d < item_raw_ids.size(); ++d) {
    i64 row = -1;
    try {
      std::size_t used = 0;
      row = std::stoll(item_raw_ids[d], &used);
      if (used != item_raw_ids[d].size()) row = -1;
    } catch (const std::exception&) {
      row = -1;
    }
    if (row < 0 || row >= raw.rows()) {
      throw DataError(modality + " features: item raw id '" + item_raw_ids[d] +
                      "' is not a row index in [0, " + std::to_string(raw.rows()) + ")");
    }
    std::copy(raw.row(row), raw.row(row) + raw.cols(), dense.row(static_cast<i64>(d)));
  }
  return dense;
}

std::string graph_file(const std::string& dir, const std::string& name) {
  return join(dir, "graph_" + name + ".bin");
}

json read_manifest(const std::string& dir) {
  const std::string path = join(dir, "manifest.json");
  if (!fs::exists(path)) return {};
  try {
    return json::parse(io::read_text_file(path));
  } catch (const json::exception& e) {
    throw CacheError("corrupt manifest " + path + ": " + e.what());
  }
}

std::uint8_t scheme_tag(NormScheme s) { return static_cast<std::uint8_t>(s); }

void save_graph(const std::string& path, const SimilarityGraph& g) {
  io::GraphRecord rec;
  rec.csr = g.csr;
  rec.scheme = scheme_tag(g.scheme);
  rec.includes_self = g.includes_self;
  io::write_graph(path, rec);
}

SimilarityGraph load_graph(const std::string& path) {
  io::GraphRecord rec = io::read_graph(path);
  SimilarityGraph g;
  g.n_nodes = rec.csr.rows;
  g.csr = std::move(rec.csr);
  g.scheme = static_cast<NormScheme>(rec.scheme);
  g.includes_self = rec.includes_self;
  return g;
}

struct GraphNeeds {
  bool knn = false;
  bool collab = false;
};

GraphNeeds graph_needs(Variant v) {
  switch (v) {
    case Variant::spumr:
    case Variant::spumr_wo_upa: return {true, true};
    case Variant::spumr_wo_msg: return {false, true};
    case Variant::spumr_wo_csg: return {true, false};
    case Variant::mf_bpr: return {false, false};
  }
  return {true, true};
}

ModelConfig model_config_from(const TrainConfig& t) {
  ModelConfig m;
  m.d = t.d;
  m.layers = t.layers;
  m.gate_top_k = t.gate_top_k;
  m.per_modality_heads = t.per_modality_heads;
  m.variant = t.variant;
  return m;
}

}  // namespace

void cmd_prepare(const RunConfig& config, std::ostream& out) {
  config.validate_paths_for_prepare();
  config.train.validate();
  fs::create_directories(config.cache_dir);

  LoadReport report;
  InteractionTable table = load_interactions(config.interactions_path, &report);
  out << "loaded " << table.pairs.size() << " interactions (" << table.n_users << " users, "
      << table.n_items << " items, " << report.duplicate_count << " duplicates dropped)\n";
  for (const auto& w : report.warnings) out << "warning: " << w << "\n";

  const std::string interactions_hash = io::file_hash(config.interactions_path);
  const std::string split_key = split_key_for(interactions_hash, config.train.seed);
  const auto feats = config.modality_paths();
  const std::string graph_key = graph_key_for(config, split_key, feats);

  json manifest = read_manifest(config.cache_dir);
  const bool split_hit =
      !manifest.is_null() && manifest.value("split_key", "") == split_key &&
      fs::exists(join(config.cache_dir, "split_train.tsv"));
  bool graphs_hit =
      !manifest.is_null() && manifest.value("graph_key", "") == graph_key && split_hit;
  for (const auto& [mod, path] : feats) {
    (void)path;
    graphs_hit = graphs_hit && fs::exists(graph_file(config.cache_dir, "user_knn_" + mod)) &&
                 fs::exists(join(config.cache_dir, "features_" + mod + ".bin"));
  }
  graphs_hit = graphs_hit && fs::exists(graph_file(config.cache_dir, "user_collab"));

  if (split_hit && graphs_hit) {
    out << "cache hit: splits and graphs up to date\n";
    return;
  }

  SplitSet split;
  if (split_hit) {
    out << "split cache: hit\n";
    // reload so graph construction below sees the same train table
    auto train_pairs = read_pairs_file(join(config.cache_dir, "split_train.tsv"));
    split.train = InteractionTable::from_pairs(table.n_users, table.n_items,
                                               std::move(train_pairs));
    split.train.user_raw_ids = table.user_raw_ids;
    split.train.item_raw_ids = table.item_raw_ids;
  } else {
    split = split_per_user(table, kSplitRatios, config.train.seed);
    write_pairs_file(join(config.cache_dir, "split_train.tsv"), split.train.pairs);
    write_holdout_file(join(config.cache_dir, "split_valid.tsv"), split.valid);
    write_holdout_file(join(config.cache_dir, "split_test.tsv"), split.test);
    write_idmap(join(config.cache_dir, "idmap_users.txt"), table.user_raw_ids);
    write_idmap(join(config.cache_dir, "idmap_items.txt"), table.item_raw_ids);
    i64 n_valid = 0, n_test = 0;
    for (const auto& v : split.valid) n_valid += static_cast<i64>(v.size());
    for (const auto& v : split.test) n_test += static_cast<i64>(v.size());
    out << "split cache: rebuilt (train=" << split.train.pairs.size() << " valid=" << n_valid
        << " test=" << n_test << " seed=" << config.train.seed << ")\n";
  }

  // graphs are built from TRAIN interactions only
  json graph_meta;
  {
    std::vector<FeatureMatrix> dense_feats;
    for (const auto& [mod, path] : feats) {
      const Matrix raw = io::read_feature_matrix(path);
      FeatureMatrix fm{mod, remap_features(raw, table.item_raw_ids, mod)};
      if (!fm.data.all_finite()) {
        throw DataError(mod + " features contain non-finite values");
      }
      io::write_feature_matrix(join(config.cache_dir, "features_" + mod + ".bin"), fm.data);
      dense_feats.push_back(std::move(fm));
    }

    // optional snapshot projection for KNN over projected features
    std::vector<Matrix> knn_inputs;
    if (!config.knn_from_raw) {
      Rng proj_rng(Rng::mix(config.train.seed, 0x709ec0deULL));
      io::MatrixBundle snapshot;
      for (auto& fm : dense_feats) {
        const double bound = std::sqrt(6.0 / static_cast<double>(config.train.d + fm.dim()));
        Matrix w(config.train.d, fm.dim());
        for (i64 i = 0; i < w.size(); ++i) w.data()[i] = proj_rng.uniform(-bound, bound);
        Matrix projected(fm.rows(), config.train.d);
        kernels::matmul_nt(fm.data.data(), w.data(), projected.data(),
                           static_cast<std::size_t>(fm.rows()),
                           static_cast<std::size_t>(fm.dim()),
                           static_cast<std::size_t>(config.train.d));
        snapshot["proj_snapshot." + fm.modality] = w;
        knn_inputs.push_back(std::move(projected));
      }
      io::write_matrix_bundle(join(config.cache_dir, "proj_snapshot.ckpt"), snapshot);
    } else {
      for (auto& fm : dense_feats) knn_inputs.push_back(fm.data);
    }

    std::vector<std::string> warnings;
    for (std::size_t m = 0; m < dense_feats.size(); ++m) {
      const std::string& mod = dense_feats[m].modality;
      const Matrix profiles = user_interest_profiles(split.train, knn_inputs[m]);
      const SimilarityGraph user_knn =
          build_knn_cosine(profiles, config.train.knn_k, config.train.threads, &warnings);
      save_graph(graph_file(config.cache_dir, "user_knn_" + mod), user_knn);
      const SimilarityGraph item_knn =
          build_knn_cosine(knn_inputs[m], config.train.knn_k, config.train.threads, &warnings);
      save_graph(graph_file(config.cache_dir, "item_knn_" + mod), item_knn);
      graph_meta["modalities"].push_back(mod);
    }
    const SimilarityGraph user_collab =
        build_jaccard(split.train, JaccardSide::user, config.train.knn_k, config.train.threads);
    save_graph(graph_file(config.cache_dir, "user_collab"), user_collab);
    const SimilarityGraph item_collab =
        build_jaccard(split.train, JaccardSide::item, config.train.knn_k, config.train.threads);
    save_graph(graph_file(config.cache_dir, "item_collab"), item_collab);
    for (const auto& w : warnings) out << "warning: " << w << "\n";
    out << "graph cache: rebuilt (k=" << config.train.knn_k
        << " knn_from_raw=" << (config.knn_from_raw ? 1 : 0) << ")\n";
  }

  json m;
  m["format"] = 1;
  m["n_users"] = table.n_users;
  m["n_items"] = table.n_items;
  m["n_interactions"] = table.pairs.size();
  m["seed"] = config.train.seed;
  m["ratios"] = {kSplitRatios[0], kSplitRatios[1], kSplitRatios[2]};
  m["knn_k"] = config.train.knn_k;
  m["layers"] = config.train.layers;
  m["knn_from_raw"] = config.knn_from_raw;
  m["interactions_hash"] = interactions_hash;
  m["split_key"] = split_key;
  m["graph_key"] = graph_key;
  json mods = json::array();
  json feat_hashes = json::object();
  for (const auto& [mod, path] : feats) {
    mods.push_back(mod);
    feat_hashes[mod] = io::file_hash(path);
  }
  m["modalities"] = mods;
  m["feature_hashes"] = feat_hashes;
  io::write_text_file(join(config.cache_dir, "manifest.json"), m.dump(2) + "\n");
  out << "manifest written: " << join(config.cache_dir, "manifest.json") << "\n";
}

CacheBundle load_caches(const RunConfig& config) {
  if (config.cache_dir.empty()) {
    throw ConfigError("cache_dir not set (config key or SPUMR_CACHE_DIR)");
  }
  const json manifest = read_manifest(config.cache_dir);
  if (manifest.is_null()) {
    throw CacheError("no manifest in " + config.cache_dir + "; run prepare first");
  }

  // consistency with the current config and input files
  const std::string interactions_hash = io::file_hash(config.interactions_path);
  const std::string split_key = split_key_for(interactions_hash, config.train.seed);
  if (manifest.value("split_key", "") != split_key) {
    throw CacheError("split cache does not match this config/seed; rerun prepare");
  }
  const auto feats = config.modality_paths();
  const GraphNeeds needs = graph_needs(config.train.variant);
  if (needs.knn || needs.collab) {
    const std::string graph_key = graph_key_for(config, split_key, feats);
    if (manifest.value("graph_key", "") != graph_key) {
      throw CacheError("graph cache does not match this config (k/features); rerun prepare");
    }
  }

  CacheBundle bundle;
  bundle.manifest_hash = io::file_hash(join(config.cache_dir, "manifest.json"));
  bundle.split_seed = manifest.value("seed", 0ULL);
  const i64 n_users = manifest.value("n_users", 0LL);
  const i64 n_items = manifest.value("n_items", 0LL);

  auto train_pairs = read_pairs_file(join(config.cache_dir, "split_train.tsv"));
  bundle.train = InteractionTable::from_pairs(n_users, n_items, std::move(train_pairs));
  bundle.train.user_raw_ids = read_idmap(join(config.cache_dir, "idmap_users.txt"));
  bundle.train.item_raw_ids = read_idmap(join(config.cache_dir, "idmap_items.txt"));

  bundle.valid.assign(static_cast<std::size_t>(n_users), {});
  for (const auto& [u, i] : read_pairs_file(join(config.cache_dir, "split_valid.tsv"))) {
    bundle.valid[static_cast<std::size_t>(u)].push_back(i);
  }
  bundle.test.assign(static_cast<std::size_t>(n_users), {});
  for (const auto& [u, i] : read_pairs_file(join(config.cache_dir, "split_test.tsv"))) {
    bundle.test[static_cast<std::size_t>(u)].push_back(i);
  }

  if (config.train.variant != Variant::mf_bpr) {
    if (feats.empty()) {
      throw ConfigError("variant " + variant_name(config.train.variant) +
                        " needs modality features");
    }
    for (const auto& [mod, path] : feats) {
      (void)path;
      const std::string cached = join(config.cache_dir, "features_" + mod + ".bin");
      bundle.features.push_back(load_modal_features(cached, mod, n_items));
    }
  }
  if (needs.knn) {
    for (const auto& [mod, path] : feats) {
      (void)path;
      bundle.graphs.user_knn.push_back(load_graph(graph_file(config.cache_dir, "user_knn_" + mod)));
      bundle.graphs.item_knn.push_back(load_graph(graph_file(config.cache_dir, "item_knn_" + mod)));
    }
  }
  if (needs.collab) {
    bundle.graphs.user_collab = load_graph(graph_file(config.cache_dir, "user_collab"));
    bundle.graphs.item_collab = load_graph(graph_file(config.cache_dir, "item_collab"));
  }
  return bundle;
}

void cmd_train(const RunConfig& config, std::ostream& out) {
  config.train.validate();
  CacheBundle caches = load_caches(config);
  fs::create_directories(config.output_dir);

  auto model = make_model(model_config_from(config.train), caches.train,
                          caches.features, caches.graphs, config.train.seed);

  out << "training " << variant_name(config.train.variant) << " (" << config_summary(config)
      << ")\n";
  FitResult result = fit(config.train, caches.train, caches.valid, *model);
  for (const auto& rec : result.history) {
    out << "epoch=" << rec.epoch << " loss=" << rec.loss << " bpr=" << rec.bpr
        << " cl=" << rec.cl << " kl=" << rec.kl << " u=" << rec.upen
        << " val_recall@" << config.train.eval_k << "=" << rec.val_recall << "\n";
  }
  out << "best epoch " << result.best_epoch << " val_recall@" << config.train.eval_k << "="
      << result.best_recall << "\n";

  const std::string ckpt_path = join(config.output_dir, "model.ckpt");
  io::write_matrix_bundle(ckpt_path, result.best_checkpoint);

  json meta;
  meta["manifest_hash"] = caches.manifest_hash;
  meta["variant"] = variant_name(config.train.variant);
  meta["seed"] = config.train.seed;
  meta["d"] = config.train.d;
  meta["layers"] = config.train.layers;
  meta["gate_top_k"] = config.train.gate_top_k;
  meta["per_modality_heads"] = config.train.per_modality_heads;
  meta["best_epoch"] = result.best_epoch;
  meta["best_val_recall"] = result.best_recall;
  meta["config"] = config_summary(config);
  io::write_text_file(join(config.output_dir, "model.meta.json"), meta.dump(2) + "\n");

  std::ostringstream hist;
  {
    json header;
    header["type"] = "config";
    header["config"] = config_summary(config);
    header["variant"] = variant_name(config.train.variant);
    header["seed"] = config.train.seed;
    hist << header.dump() << "\n";
  }
  for (const auto& rec : result.history) {
    json line;
    line["type"] = "epoch";
    line["epoch"] = rec.epoch;
    line["loss"] = rec.loss;
    line["bpr"] = rec.bpr;
    line["cl"] = rec.cl;
    line["kl"] = rec.kl;
    line["u"] = rec.upen;
    line["val_recall"] = rec.val_recall;
    line["val_ndcg"] = rec.val_ndcg;
    hist << line.dump() << "\n";
  }
  io::write_text_file(join(config.output_dir, "history.jsonl"), hist.str());
  out << "checkpoint: " << ckpt_path << "\n";
}

namespace {

struct LoadedModel {
  std::unique_ptr<RankingModel> model;
  CacheBundle caches;
  json meta;
};

LoadedModel load_model_for_eval(const RunConfig& config, const std::string& checkpoint_path) {
  const std::string meta_path =
      checkpoint_path.size() > 5
          ? checkpoint_path.substr(0, checkpoint_path.size() - 5) + ".meta.json"
          : checkpoint_path + ".meta.json";
  if (!fs::exists(checkpoint_path)) throw IoError("checkpoint not found: " + checkpoint_path);
  if (!fs::exists(meta_path)) throw IoError("checkpoint metadata not found: " + meta_path);
  json meta;
  try {
    meta = json::parse(io::read_text_file(meta_path));
  } catch (const json::exception& e) {
    throw CacheError("corrupt checkpoint metadata: " + std::string(e.what()));
  }

  RunConfig effective = config;
  effective.train.variant = parse_variant(meta.value("variant", "spumr"));
  effective.train.d = meta.value("d", effective.train.d);
  effective.train.layers = meta.value("layers", effective.train.layers);
  effective.train.gate_top_k = meta.value("gate_top_k", effective.train.gate_top_k);
  effective.train.per_modality_heads =
      meta.value("per_modality_heads", effective.train.per_modality_heads);
  effective.train.seed = meta.value("seed", effective.train.seed);

  CacheBundle caches = load_caches(effective);
  if (meta.value("manifest_hash", "") != caches.manifest_hash) {
    throw CacheError(
        "cache manifest hash does not match the checkpoint (split leakage guard); "
        "re-run prepare+train with a consistent config");
  }
  auto model = make_model(model_config_from(effective.train), caches.train, caches.features,
                          caches.graphs, effective.train.seed);
  restore_params(model->params(), io::read_matrix_bundle(checkpoint_path));
  LoadedModel lm;
  lm.model = std::move(model);
  lm.caches = std::move(caches);
  lm.meta = std::move(meta);
  return lm;
}

}  // namespace

void cmd_evaluate(const RunConfig& config, const std::string& checkpoint_path,
                  std::ostream& out) {
  LoadedModel lm = load_model_for_eval(config, checkpoint_path);
  const EvalOutput emb = lm.model->eval_embeddings();
  MetricReport report = evaluate(emb.z_users, emb.z_items, lm.caches.train, lm.caches.test,
                                 {10, 20}, config.train.threads);
  report.model_tag = lm.meta.value("variant", "?");
  report.split_tag = "test";
  out << report.format();
  fs::create_directories(config.output_dir);
  io::write_text_file(join(config.output_dir, "metrics.txt"), report.format());
}

void cmd_export_embeddings(const RunConfig& config, const std::string& checkpoint_path,
                           const std::string& out_path, std::ostream& out) {
  LoadedModel lm = load_model_for_eval(config, checkpoint_path);
  const EvalOutput emb = lm.model->eval_embeddings();
  io::MatrixBundle bundle;
  bundle["z_users"] = emb.z_users;
  bundle["z_items"] = emb.z_items;
  if (emb.has_uncertainty) {
    for (std::size_t m = 0; m < emb.modalities.size(); ++m) {
      bundle["mu_users." + emb.modalities[m]] = emb.mu_users[m];
      bundle["mu_items." + emb.modalities[m]] = emb.mu_items[m];
    }
    bundle["sigma_norm_users"] = emb.sigma_norm_users;
    bundle["sigma_norm_items"] = emb.sigma_norm_items;
    bundle["gate_users"] = emb.gate_users;
    bundle["gate_items"] = emb.gate_items;
  }
  io::write_matrix_bundle(out_path, bundle);
  out << "exported " << bundle.size() << " matrices to " << out_path << "\n";
}

}  // namespace spumr
