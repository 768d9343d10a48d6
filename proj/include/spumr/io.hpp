// Copyright 2026 the spumr authors
// SPDX-License-Identifier: Apache-2.0
//
// Binary file formats. All integers and floats little-endian.
//
//   MMFEAT01  feature matrix: magic, u64 rows, u64 dim, f32 payload
//   MMCKPT01  named f64 matrix bundle: magic, u64 count, then per entry
//             u32 name_len, name bytes, u64 rows, u64 cols, f64 payload
//   MMGRF01   similarity graph: magic, u64 n_nodes, u64 nnz, u8 scheme,
//             u8 includes_self, u64 offsets[n+1], u32 cols[nnz], f64 w[nnz]

#pragma once

#include <map>
#include <string>
#include <vector>

#include "spumr/csr.hpp"
#include "spumr/matrix.hpp"

namespace spumr::io {

// ---- feature files (f32 on disk, f64 in memory) ----

void write_feature_matrix(const std::string& path, const Matrix& m);

/// Binary when the magic matches, otherwise text: first line "rows dim",
/// then one whitespace-separated row per line.
Matrix read_feature_matrix(const std::string& path);

// ---- checkpoint-style named matrix bundles ----

using MatrixBundle = std::map<std::string, Matrix>;

void write_matrix_bundle(const std::string& path, const MatrixBundle& bundle);
MatrixBundle read_matrix_bundle(const std::string& path);

// ---- graph cache ----

struct GraphRecord {
  CsrMatrix csr;
  std::uint8_t scheme = 0;
  bool includes_self = false;
};

void write_graph(const std::string& path, const GraphRecord& g);
GraphRecord read_graph(const std::string& path);

// ---- misc ----

/// FNV-1a 64 over the file bytes, as a hex string. Used for cache manifests.
std::string file_hash(const std::string& path);
std::string string_hash(const std::string& text);

std::string read_text_file(const std::string& path);
void write_text_file(const std::string& path, const std::string& text);

}  // namespace spumr::io
