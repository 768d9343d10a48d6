// Copyright 2026 the spumr authors
// SPDX-License-Identifier: Apache-2.0

#include "spumr/io.hpp"

#include <cmath>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <sstream>

#include "spumr/errors.hpp"

namespace spumr::io {
namespace {

constexpr char kFeatMagic[] = "MMFEAT01";
constexpr char kCkptMagic[] = "MMCKPT01";
constexpr char kGraphMagic[] = "MMGRF01";

template <typename T>
void put(std::ostream& os, T v) {
  os.write(reinterpret_cast<const char*>(&v), sizeof(T));
}

template <typename T>
T get(std::istream& is, const std::string& path) {
  T v{};
  is.read(reinterpret_cast<char*>(&v), sizeof(T));
  if (!is) throw IoError("truncated file: " + path);
  return v;
}

std::ofstream open_out(const std::string& path) {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw IoError("cannot open for writing: " + path);
  return os;
}

std::ifstream open_in(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw IoError("cannot open: " + path);
  return is;
}

}  // namespace

void write_feature_matrix(const std::string& path, const Matrix& m) {
  auto os = open_out(path);
  os.write(kFeatMagic, 8);
  put<std::uint64_t>(os, static_cast<std::uint64_t>(m.rows()));
  put<std::uint64_t>(os, static_cast<std::uint64_t>(m.cols()));
  std::vector<float> row(static_cast<std::size_t>(m.cols()));
  for (i64 r = 0; r < m.rows(); ++r) {
    const double* src = m.row(r);
    for (i64 c = 0; c < m.cols(); ++c) row[static_cast<std::size_t>(c)] = static_cast<float>(src[c]);
    os.write(reinterpret_cast<const char*>(row.data()),
             static_cast<std::streamsize>(row.size() * sizeof(float)));
  }
  if (!os) throw IoError("write failed: " + path);
}

namespace {

Matrix read_feature_text(const std::string& path) {
  std::ifstream is(path);
  if (!is) throw IoError("cannot open: " + path);
  i64 rows = 0, dim = 0;
  std::string header;
  if (!std::getline(is, header)) throw ParseError(path + ": empty feature file");
  {
    std::istringstream hs(header);
    if (!(hs >> rows >> dim) || rows < 0 || dim <= 0) {
      throw ParseError(path + ": bad feature header '" + header + "'");
    }
  }
  Matrix m(rows, dim);
  std::string token;
  for (i64 r = 0; r < rows; ++r) {
    for (i64 c = 0; c < dim; ++c) {
      if (!(is >> token)) {
        throw ParseError(path + ": truncated at row " + std::to_string(r));
      }
      // strtod accepts nan/inf tokens; non-finite values are rejected later
      // with the row index attached
      char* end = nullptr;
      const double v = std::strtod(token.c_str(), &end);
      if (end == token.c_str() || *end != '\0') {
        throw ParseError(path + ": bad number '" + token + "' at row " + std::to_string(r));
      }
      m(r, c) = v;
    }
  }
  return m;
}

}  // namespace

Matrix read_feature_matrix(const std::string& path) {
  {
    auto is = open_in(path);
    char magic[8] = {};
    is.read(magic, 8);
    if (is && std::memcmp(magic, kFeatMagic, 8) == 0) {
      const auto rows = static_cast<i64>(get<std::uint64_t>(is, path));
      const auto dim = static_cast<i64>(get<std::uint64_t>(is, path));
      if (rows < 0 || dim <= 0 || rows > (1LL << 32) || dim > (1LL << 24)) {
        throw ParseError(path + ": implausible feature header");
      }
      Matrix m(rows, dim);
      std::vector<float> row(static_cast<std::size_t>(dim));
      for (i64 r = 0; r < rows; ++r) {
        is.read(reinterpret_cast<char*>(row.data()),
                static_cast<std::streamsize>(row.size() * sizeof(float)));
        if (!is) throw IoError("truncated file: " + path);
        for (i64 c = 0; c < dim; ++c) m(r, c) = static_cast<double>(row[static_cast<std::size_t>(c)]);
      }
      return m;
    }
  }
  return read_feature_text(path);
}

void write_matrix_bundle(const std::string& path, const MatrixBundle& bundle) {
  auto os = open_out(path);
  os.write(kCkptMagic, 8);
  put<std::uint64_t>(os, bundle.size());
  for (const auto& [name, m] : bundle) {
    put<std::uint32_t>(os, static_cast<std::uint32_t>(name.size()));
    os.write(name.data(), static_cast<std::streamsize>(name.size()));
    put<std::uint64_t>(os, static_cast<std::uint64_t>(m.rows()));
    put<std::uint64_t>(os, static_cast<std::uint64_t>(m.cols()));
    os.write(reinterpret_cast<const char*>(m.data()),
             static_cast<std::streamsize>(m.size() * static_cast<i64>(sizeof(double))));
  }
  if (!os) throw IoError("write failed: " + path);
}

MatrixBundle read_matrix_bundle(const std::string& path) {
  auto is = open_in(path);
  char magic[8] = {};
  is.read(magic, 8);
  if (!is || std::memcmp(magic, kCkptMagic, 8) != 0) {
    throw ParseError(path + ": not a MMCKPT01 bundle");
  }
  const auto count = get<std::uint64_t>(is, path);
  MatrixBundle bundle;
  for (std::uint64_t i = 0; i < count; ++i) {
    const auto name_len = get<std::uint32_t>(is, path);
    if (name_len > 4096) throw ParseError(path + ": implausible entry name length");
    std::string name(name_len, '\0');
    is.read(name.data(), name_len);
    const auto rows = static_cast<i64>(get<std::uint64_t>(is, path));
    const auto cols = static_cast<i64>(get<std::uint64_t>(is, path));
    Matrix m(rows, cols);
    is.read(reinterpret_cast<char*>(m.data()),
            static_cast<std::streamsize>(m.size() * static_cast<i64>(sizeof(double))));
    if (!is) throw IoError("truncated file: " + path);
    bundle.emplace(std::move(name), std::move(m));
  }
  return bundle;
}

void write_graph(const std::string& path, const GraphRecord& g) {
  auto os = open_out(path);
  os.write(kGraphMagic, 7);
  put<std::uint64_t>(os, static_cast<std::uint64_t>(g.csr.rows));
  put<std::uint64_t>(os, static_cast<std::uint64_t>(g.csr.nnz()));
  put<std::uint8_t>(os, g.scheme);
  put<std::uint8_t>(os, g.includes_self ? 1 : 0);
  os.write(reinterpret_cast<const char*>(g.csr.offsets.data()),
           static_cast<std::streamsize>(g.csr.offsets.size() * sizeof(i64)));
  os.write(reinterpret_cast<const char*>(g.csr.colidx.data()),
           static_cast<std::streamsize>(g.csr.colidx.size() * sizeof(i32)));
  os.write(reinterpret_cast<const char*>(g.csr.weights.data()),
           static_cast<std::streamsize>(g.csr.weights.size() * sizeof(double)));
  if (!os) throw IoError("write failed: " + path);
}

GraphRecord read_graph(const std::string& path) {
  auto is = open_in(path);
  char magic[7] = {};
  is.read(magic, 7);
  if (!is || std::memcmp(magic, kGraphMagic, 7) != 0) {
    throw ParseError(path + ": not a MMGRF01 graph file");
  }
  GraphRecord g;
  const auto n = static_cast<i64>(get<std::uint64_t>(is, path));
  const auto nnz = static_cast<i64>(get<std::uint64_t>(is, path));
  g.scheme = get<std::uint8_t>(is, path);
  g.includes_self = get<std::uint8_t>(is, path) != 0;
  g.csr.rows = n;
  g.csr.cols = n;
  g.csr.offsets.resize(static_cast<std::size_t>(n + 1));
  g.csr.colidx.resize(static_cast<std::size_t>(nnz));
  g.csr.weights.resize(static_cast<std::size_t>(nnz));
  is.read(reinterpret_cast<char*>(g.csr.offsets.data()),
          static_cast<std::streamsize>(g.csr.offsets.size() * sizeof(i64)));
  is.read(reinterpret_cast<char*>(g.csr.colidx.data()),
          static_cast<std::streamsize>(g.csr.colidx.size() * sizeof(i32)));
  is.read(reinterpret_cast<char*>(g.csr.weights.data()),
          static_cast<std::streamsize>(g.csr.weights.size() * sizeof(double)));
  if (!is) throw IoError("truncated file: " + path);
  return g;
}

std::string string_hash(const std::string& text) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char c : text) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  char buf[17];
  std::snprintf(buf, sizeof(buf), "%016llx", static_cast<unsigned long long>(h));
  return buf;
}

std::string file_hash(const std::string& path) {
  return string_hash(read_text_file(path));
}

std::string read_text_file(const std::string& path) {
  auto is = open_in(path);
  std::ostringstream ss;
  ss << is.rdbuf();
  return ss.str();
}

void write_text_file(const std::string& path, const std::string& text) {
  auto os = open_out(path);
  os.write(text.data(), static_cast<std::streamsize>(text.size()));
  if (!os) throw IoError("write failed: " + path);
}

}  // namespace spumr::io
