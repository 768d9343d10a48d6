// Copyright 2026 the spumr authors
// SPDX-License-Identifier: Apache-2.0

#include "spumr/config.hpp"

#include <cstdlib>
#include <fstream>
#include <sstream>

#include "spumr/errors.hpp"

namespace spumr {

namespace {

std::string trim(const std::string& s) {
  const char* ws = " \t\r\n";
  const auto lo = s.find_first_not_of(ws);
  if (lo == std::string::npos) return {};
  const auto hi = s.find_last_not_of(ws);
  return s.substr(lo, hi - lo + 1);
}

bool parse_bool(const std::string& key, const std::string& value) {
  if (value == "true" || value == "1" || value == "yes" || value == "on") return true;
  if (value == "false" || value == "0" || value == "no" || value == "off") return false;
  throw ConfigError("key '" + key + "': expected boolean, got '" + value + "'");
}

double parse_double(const std::string& key, const std::string& value) {
  try {
    std::size_t used = 0;
    const double v = std::stod(value, &used);
    if (used != value.size()) throw std::invalid_argument(value);
    return v;
  } catch (const std::exception&) {
    throw ConfigError("key '" + key + "': expected number, got '" + value + "'");
  }
}

i64 parse_int(const std::string& key, const std::string& value) {
  try {
    std::size_t used = 0;
    const long long v = std::stoll(value, &used);
    if (used != value.size()) throw std::invalid_argument(value);
    return static_cast<i64>(v);
  } catch (const std::exception&) {
    throw ConfigError("key '" + key + "': expected integer, got '" + value + "'");
  }
}

}  // namespace

void apply_config_entry(RunConfig& c, const std::string& key, const std::string& value) {
  if (key == "interactions") c.interactions_path = value;
  else if (key == "visual_features") c.visual_features_path = value;
  else if (key == "textual_features") c.textual_features_path = value;
  else if (key == "cache_dir") c.cache_dir = value;
  else if (key == "output_dir") c.output_dir = value;
  else if (key == "variant") c.train.variant = parse_variant(value);
  else if (key == "d") c.train.d = parse_int(key, value);
  else if (key == "layers") c.train.layers = parse_int(key, value);
  else if (key == "knn_k") c.train.knn_k = parse_int(key, value);
  else if (key == "gate_top_k") c.train.gate_top_k = parse_int(key, value);
  else if (key == "batch_size") c.train.batch_size = parse_int(key, value);
  else if (key == "lr") c.train.lr = parse_double(key, value);
  else if (key == "lambda_cl") c.train.lambda_cl = parse_double(key, value);
  else if (key == "lambda_kl") c.train.lambda_kl = parse_double(key, value);
  else if (key == "lambda_u") c.train.lambda_u = parse_double(key, value);
  else if (key == "max_epochs") c.train.max_epochs = parse_int(key, value);
  else if (key == "patience") c.train.patience = parse_int(key, value);
  else if (key == "seed") c.train.seed = static_cast<std::uint64_t>(parse_int(key, value));
  else if (key == "threads") c.train.threads = static_cast<int>(parse_int(key, value));
  else if (key == "eval_k") c.train.eval_k = parse_int(key, value);
  else if (key == "faithful_losses") c.train.faithful_losses = parse_bool(key, value);
  else if (key == "per_modality_heads") c.train.per_modality_heads = parse_bool(key, value);
  else if (key == "reg_scale_full") c.train.reg_scale_full = parse_bool(key, value);
  else if (key == "knn_from_raw") c.knn_from_raw = parse_bool(key, value);
  else throw ConfigError("unknown config key '" + key + "'");
}

RunConfig parse_config_file(const std::string& path) {
  std::ifstream is(path);
  if (!is) throw IoError("cannot open config: " + path);
  RunConfig c;
  std::string line;
  i64 line_no = 0;
  while (std::getline(is, line)) {
    ++line_no;
    const std::string stripped = trim(line);
    if (stripped.empty() || stripped[0] == '#') continue;
    const auto eq = stripped.find('=');
    if (eq == std::string::npos) {
      throw ConfigError(path + ":" + std::to_string(line_no) + ": expected 'key = value'");
    }
    const std::string key = trim(stripped.substr(0, eq));
    const std::string value = trim(stripped.substr(eq + 1));
    if (key.empty()) {
      throw ConfigError(path + ":" + std::to_string(line_no) + ": empty key");
    }
    try {
      apply_config_entry(c, key, value);
    } catch (const ConfigError& e) {
      throw ConfigError(path + ":" + std::to_string(line_no) + ": " + e.what());
    }
  }
  if (c.cache_dir.empty()) {
    if (const char* env = std::getenv("SPUMR_CACHE_DIR")) c.cache_dir = env;
  }
  return c;
}

std::vector<std::pair<std::string, std::string>> RunConfig::modality_paths() const {
  std::vector<std::pair<std::string, std::string>> out;
  if (!visual_features_path.empty()) out.emplace_back("visual", visual_features_path);
  if (!textual_features_path.empty()) out.emplace_back("textual", textual_features_path);
  return out;
}

void RunConfig::validate_paths_for_prepare() const {
  if (interactions_path.empty()) throw ConfigError("interactions path not set");
  if (cache_dir.empty()) {
    throw ConfigError("cache_dir not set (config key or SPUMR_CACHE_DIR)");
  }
}

std::string config_summary(const RunConfig& c) {
  std::ostringstream os;
  os << "variant=" << variant_name(c.train.variant) << " d=" << c.train.d
     << " layers=" << c.train.layers << " knn_k=" << c.train.knn_k
     << " gate_top_k=" << c.train.gate_top_k << " batch_size=" << c.train.batch_size
     << " lr=" << c.train.lr << " lambda_cl=" << c.train.lambda_cl
     << " lambda_kl=" << c.train.lambda_kl << " lambda_u=" << c.train.lambda_u
     << " max_epochs=" << c.train.max_epochs << " patience=" << c.train.patience
     << " seed=" << c.train.seed << " knn_from_raw=" << (c.knn_from_raw ? 1 : 0)
     << " faithful_losses=" << (c.train.faithful_losses ? 1 : 0)
     << " per_modality_heads=" << (c.train.per_modality_heads ? 1 : 0)
     << " reg_scale_full=" << (c.train.reg_scale_full ? 1 : 0);
  return os.str();
}

}  // namespace spumr
