// Copyright 2026 the spumr authors
// SPDX-License-Identifier: Apache-2.0
//
// End-to-end runs of the spumr binary: prepare / train / evaluate /
// export-embeddings on a small synthetic dataset, cache idempotence, and
// error-class exit behavior.

#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <array>
#include <cstdio>
#include <filesystem>
#include <fstream>

#include "spumr/commands.hpp"
#include "spumr/io.hpp"

#include "synthetic.hpp"
#include "test_util.hpp"

using namespace spumr;
namespace fs = std::filesystem;

namespace {

#ifndef SPUMR_CLI_PATH
#error "SPUMR_CLI_PATH must point at the spumr binary"
#endif

struct CliResult {
  int exit_code = -1;
  std::string output;  // stdout + stderr
};

CliResult run_cli(const std::string& args) {
  const std::string cmd = std::string(SPUMR_CLI_PATH) + " " + args + " 2>&1";
  std::array<char, 4096> buf{};
  CliResult result;
  FILE* pipe = popen(cmd.c_str(), "r");
  REQUIRE(pipe != nullptr);
  while (std::fgets(buf.data(), static_cast<int>(buf.size()), pipe) != nullptr) {
    result.output += buf.data();
  }
  const int status = pclose(pipe);
  result.exit_code = WIFEXITED(status) ? WEXITSTATUS(status) : -1;
  return result;
}

struct Workspace {
  fs::path root;
  Workspace() {
    root = fs::temp_directory_path() /
           ("spumr_cli_" + std::to_string(::getpid()) + "_" + std::to_string(rand()));
    fs::create_directories(root);
  }
  ~Workspace() { fs::remove_all(root); }
  std::string path(const std::string& name) const { return (root / name).string(); }

  /// Small dataset + config file; returns the config path.
  std::string setup_dataset(i64 max_epochs = 3) {
    test::BlockParams params;
    params.n_users = 48;
    params.n_items = 40;
    params.d_v = 8;
    params.d_t = 6;
    const test::BlockDataset ds = test::make_block_dataset(7, params);
    test::write_block_dataset(ds, path("data"));
    std::ofstream os(path("run.conf"));
    os << "interactions = " << path("data/interactions.tsv") << "\n"
       << "visual_features = " << path("data/visual.bin") << "\n"
       << "textual_features = " << path("data/textual.bin") << "\n"
       << "cache_dir = " << path("cache") << "\n"
       << "output_dir = " << path("out") << "\n"
       << "d = 8\nlayers = 1\nknn_k = 4\nbatch_size = 512\n"
       << "max_epochs = " << max_epochs << "\npatience = 20\nseed = 11\n";
    os.close();
    return path("run.conf");
  }
};

}  // namespace

TEST_CASE("full pipeline: prepare, train, evaluate, export") {
  Workspace ws;
  const std::string conf = ws.setup_dataset();

  // prepare
  const CliResult prep = run_cli("prepare --config " + conf);
  INFO(prep.output);
  REQUIRE(prep.exit_code == 0);
  CHECK(prep.output.find("split cache: rebuilt") != std::string::npos);
  CHECK(prep.output.find("graph cache: rebuilt") != std::string::npos);
  CHECK(fs::exists(ws.path("cache/manifest.json")));

  // idempotent rerun
  const CliResult prep2 = run_cli("prepare --config " + conf);
  REQUIRE(prep2.exit_code == 0);
  CHECK(prep2.output.find("cache hit") != std::string::npos);

  // changing k rebuilds graphs but keeps splits
  const auto split_before = fs::last_write_time(ws.path("cache/split_train.tsv"));
  {
    std::ofstream os(ws.path("run_k2.conf"), std::ios::app);
    os << io::read_text_file(conf) << "knn_k = 2\n";
  }
  const CliResult prep3 = run_cli("prepare --config " + ws.path("run_k2.conf"));
  INFO(prep3.output);
  REQUIRE(prep3.exit_code == 0);
  CHECK(prep3.output.find("split cache: hit") != std::string::npos);
  CHECK(prep3.output.find("graph cache: rebuilt") != std::string::npos);
  CHECK(fs::last_write_time(ws.path("cache/split_train.tsv")) == split_before);

  // restore the original cache state for training
  REQUIRE(run_cli("prepare --config " + conf).exit_code == 0);

  // train
  const CliResult train = run_cli("train --config " + conf);
  INFO(train.output);
  REQUIRE(train.exit_code == 0);
  REQUIRE(fs::exists(ws.path("out/model.ckpt")));
  REQUIRE(fs::exists(ws.path("out/model.meta.json")));
  REQUIRE(fs::exists(ws.path("out/history.jsonl")));

  // history parses as one json object per line with the expected fields
  {
    std::ifstream is(ws.path("out/history.jsonl"));
    std::string line;
    i64 epochs = 0;
    bool saw_header = false;
    while (std::getline(is, line)) {
      CHECK(line.front() == '{');
      CHECK(line.back() == '}');
      if (line.find("\"type\":\"config\"") != std::string::npos) saw_header = true;
      if (line.find("\"type\":\"epoch\"") != std::string::npos) {
        ++epochs;
        CHECK(line.find("\"bpr\"") != std::string::npos);
        CHECK(line.find("\"kl\"") != std::string::npos);
        CHECK(line.find("\"val_recall\"") != std::string::npos);
      }
    }
    CHECK(saw_header);
    CHECK(epochs == 3);
  }

  // evaluate
  const CliResult eval = run_cli("evaluate --config " + conf + " --checkpoint " +
                                 ws.path("out/model.ckpt"));
  INFO(eval.output);
  REQUIRE(eval.exit_code == 0);
  CHECK(eval.output.find("k=10 recall=") != std::string::npos);
  CHECK(eval.output.find("k=20 recall=") != std::string::npos);
  CHECK(fs::exists(ws.path("out/metrics.txt")));

  // export then reload: bit-identical matrices with the documented names
  const std::string emb = ws.path("out/embeddings.ckpt");
  const CliResult exp = run_cli("export-embeddings --config " + conf + " --checkpoint " +
                                ws.path("out/model.ckpt") + " --out " + emb);
  INFO(exp.output);
  REQUIRE(exp.exit_code == 0);
  const auto bundle = io::read_matrix_bundle(emb);
  REQUIRE(bundle.count("z_users") == 1);
  REQUIRE(bundle.count("z_items") == 1);
  REQUIRE(bundle.count("mu_users.visual") == 1);
  REQUIRE(bundle.count("sigma_norm_items") == 1);
  CHECK(bundle.at("z_users").rows() == 48);
  CHECK(bundle.at("z_users").cols() == 8);
  const auto& sn = bundle.at("sigma_norm_users");
  for (i64 i = 0; i < sn.size(); ++i) CHECK(sn.data()[i] >= 0.0);

  io::write_matrix_bundle(ws.path("out/embeddings2.ckpt"), bundle);
  CHECK(io::file_hash(emb) == io::file_hash(ws.path("out/embeddings2.ckpt")));

  // tampering with the manifest trips the leakage guard
  {
    std::ofstream os(ws.path("cache/manifest.json"), std::ios::app);
    os << "\n";
  }
  const CliResult bad = run_cli("evaluate --config " + conf + " --checkpoint " +
                                ws.path("out/model.ckpt"));
  CHECK(bad.exit_code != 0);
  CHECK(bad.output.find("error[cache]") != std::string::npos);
}

TEST_CASE("mf_bpr variant trains without graph caches") {
  Workspace ws;
  test::BlockParams params;
  params.n_users = 30;
  params.n_items = 24;
  const test::BlockDataset ds = test::make_block_dataset(9, params);
  test::write_block_dataset(ds, ws.path("data"));
  {
    std::ofstream os(ws.path("mf.conf"));
    os << "interactions = " << ws.path("data/interactions.tsv") << "\n"
       << "cache_dir = " << ws.path("cache") << "\n"
       << "output_dir = " << ws.path("out") << "\n"
       << "variant = mf_bpr\nd = 8\nmax_epochs = 2\nseed = 3\n";
  }
  // prepare without feature paths builds only splits and collaborative graphs
  REQUIRE(run_cli("prepare --config " + ws.path("mf.conf")).exit_code == 0);
  const CliResult train = run_cli("train --config " + ws.path("mf.conf"));
  INFO(train.output);
  REQUIRE(train.exit_code == 0);
  CHECK(fs::exists(ws.path("out/model.ckpt")));
}

TEST_CASE("error classes are machine-parsable and exits nonzero") {
  Workspace ws;
  {
    std::ofstream os(ws.path("bad.conf"));
    os << "interactions = /nonexistent/file.tsv\ncache_dir = " << ws.path("cache") << "\n";
  }
  const CliResult io_err = run_cli("prepare --config " + ws.path("bad.conf"));
  CHECK(io_err.exit_code != 0);
  CHECK(io_err.output.find("error[io]") != std::string::npos);

  {
    std::ofstream os(ws.path("unknown.conf"));
    os << "intractions = typo.tsv\n";
  }
  const CliResult cfg_err = run_cli("prepare --config " + ws.path("unknown.conf"));
  CHECK(cfg_err.exit_code != 0);
  CHECK(cfg_err.output.find("error[config]") != std::string::npos);
  CHECK(cfg_err.output.find("intractions") != std::string::npos);

  const CliResult cache_err = run_cli("train --config " + ws.path("unknown2.conf"));
  CHECK(cache_err.exit_code != 0);

  // train without prepare
  {
    std::ofstream os(ws.path("noprep.conf"));
    os << "interactions = " << ws.path("data/interactions.tsv") << "\n"
       << "cache_dir = " << ws.path("cache_missing") << "\nvariant = mf_bpr\n";
  }
  test::BlockParams params;
  params.n_users = 10;
  params.n_items = 8;
  test::write_block_dataset(test::make_block_dataset(1, params), ws.path("data"));
  const CliResult noprep = run_cli("train --config " + ws.path("noprep.conf"));
  CHECK(noprep.exit_code != 0);
  CHECK(noprep.output.find("error[cache]") != std::string::npos);
}

TEST_CASE("config flags override file values") {
  Workspace ws;
  const std::string conf = ws.setup_dataset(2);
  REQUIRE(run_cli("prepare --config " + conf).exit_code == 0);
  const CliResult train = run_cli("train --config " + conf + " --variant mf_bpr --seed 99");
  INFO(train.output);
  REQUIRE(train.exit_code == 0);
  CHECK(train.output.find("training mf_bpr") != std::string::npos);
  CHECK(train.output.find("seed=99") != std::string::npos);
}
