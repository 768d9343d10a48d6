// Copyright 2026 the spumr authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <stdexcept>
#include <string>

namespace spumr {

// All toolkit errors carry a short machine-parsable class tag. The CLI
// prints them as "error[<cls>]: <message>" and exits nonzero.
class Error : public std::runtime_error {
 public:
  Error(std::string cls, const std::string& msg)
      : std::runtime_error(msg), cls_(std::move(cls)) {}
  const std::string& cls() const { return cls_; }

 private:
  std::string cls_;
};

struct ParseError : Error {
  explicit ParseError(const std::string& msg) : Error("parse", msg) {}
};
struct ShapeError : Error {
  explicit ShapeError(const std::string& msg) : Error("shape", msg) {}
};
struct DataError : Error {
  explicit DataError(const std::string& msg) : Error("data", msg) {}
};
struct IoError : Error {
  explicit IoError(const std::string& msg) : Error("io", msg) {}
};
struct ConfigError : Error {
  explicit ConfigError(const std::string& msg) : Error("config", msg) {}
};
struct CacheError : Error {
  explicit CacheError(const std::string& msg) : Error("cache", msg) {}
};
struct NumericError : Error {
  explicit NumericError(const std::string& msg) : Error("numeric", msg) {}
};

}  // namespace spumr
