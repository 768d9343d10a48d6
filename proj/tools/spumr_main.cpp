// Copyright 2026 the spumr authors
// SPDX-License-Identifier: Apache-2.0
//
// CLI entry point: prepare / train / evaluate / export-embeddings.

#include <iostream>
#include <optional>
#include <string>

#include <CLI11.hpp>

#include "spumr/commands.hpp"
#include "spumr/errors.hpp"
#include "spumr/kernels.hpp"

namespace {

struct CommonFlags {
  std::string config_path;
  std::optional<std::uint64_t> seed;
  std::optional<std::string> variant;
  std::optional<int> threads;
  std::optional<bool> faithful_losses;
  std::optional<bool> knn_from_raw;
  std::optional<std::string> cache_dir;
  std::optional<std::string> output_dir;
};

void add_common(CLI::App* cmd, CommonFlags& flags) {
  cmd->add_option("--config", flags.config_path, "flat key=value config file")->required();
  cmd->add_option("--seed", flags.seed, "override the config seed");
  cmd->add_option("--variant", flags.variant,
                  "model variant: spumr, spumr_wo_msg, spumr_wo_csg, spumr_wo_upa, mf_bpr");
  cmd->add_option("--threads", flags.threads, "threads for parallel regions");
  cmd->add_option("--faithful-losses", flags.faithful_losses,
                  "use the loss formulas exactly as printed (diagnostic)");
  cmd->add_option("--knn-from-raw", flags.knn_from_raw,
                  "build modality KNN graphs from raw features (default true)");
  cmd->add_option("--cache-dir", flags.cache_dir, "override cache_dir");
  cmd->add_option("--output-dir", flags.output_dir, "override output_dir");
}

spumr::RunConfig resolve(const CommonFlags& flags) {
  spumr::RunConfig config = spumr::parse_config_file(flags.config_path);
  if (flags.seed) config.train.seed = *flags.seed;
  if (flags.variant) config.train.variant = spumr::parse_variant(*flags.variant);
  if (flags.threads) config.train.threads = *flags.threads;
  if (flags.faithful_losses) config.train.faithful_losses = *flags.faithful_losses;
  if (flags.knn_from_raw) config.knn_from_raw = *flags.knn_from_raw;
  if (flags.cache_dir) config.cache_dir = *flags.cache_dir;
  if (flags.output_dir) config.output_dir = *flags.output_dir;
  return config;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"SPUMR multimodal recommender toolkit"};
  app.require_subcommand(1);

  CommonFlags prep_flags, train_flags, eval_flags, export_flags;
  std::string eval_checkpoint, export_checkpoint, export_out;

  CLI::App* prepare = app.add_subcommand("prepare", "build split and graph caches");
  add_common(prepare, prep_flags);

  CLI::App* train = app.add_subcommand("train", "train a model variant");
  add_common(train, train_flags);

  CLI::App* evaluate = app.add_subcommand("evaluate", "evaluate a checkpoint on the test split");
  add_common(evaluate, eval_flags);
  evaluate->add_option("--checkpoint", eval_checkpoint, "model.ckpt path")->required();

  CLI::App* exp = app.add_subcommand("export-embeddings",
                                     "write fused and per-modality embeddings");
  add_common(exp, export_flags);
  exp->add_option("--checkpoint", export_checkpoint, "model.ckpt path")->required();
  exp->add_option("--out", export_out, "output bundle path")->required();

  CLI11_PARSE(app, argc, argv);

  try {
    if (prepare->parsed()) {
      spumr::cmd_prepare(resolve(prep_flags), std::cout);
    } else if (train->parsed()) {
      spumr::cmd_train(resolve(train_flags), std::cout);
    } else if (evaluate->parsed()) {
      spumr::cmd_evaluate(resolve(eval_flags), eval_checkpoint, std::cout);
    } else if (exp->parsed()) {
      spumr::cmd_export_embeddings(resolve(export_flags), export_checkpoint, export_out,
                                   std::cout);
    }
  } catch (const spumr::Error& e) {
    std::cerr << "error[" << e.cls() << "]: " << e.what() << std::endl;
    return 1;
  } catch (const std::exception& e) {
    std::cerr << "error[internal]: " << e.what() << std::endl;
    return 1;
  }
  return 0;
}
