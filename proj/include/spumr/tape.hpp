// Copyright 2026 the spumr authors
// SPDX-License-Identifier: Apache-2.0
//
// Minimal reverse-mode differentiation over dense f64 matrices with
// sparse-times-dense support. A Tape is a single-threaded define-by-run
// graph rebuilt per mini-batch; Parameters live outside the tape and
// their grads accumulate across backward calls until zero_grad.

#pragma once

#include <cstdint>
#include <functional>
#include <memory>
#include <string>
#include <unordered_map>
#include <vector>

#include "spumr/csr.hpp"
#include "spumr/matrix.hpp"
#include "spumr/rng.hpp"

namespace spumr::ad {

using spumr::i32;
using spumr::i64;
using spumr::Matrix;

enum class InitKind { xavier_uniform, zeros };

/// A named learnable matrix plus its persistent grad and Adam moments.
struct Parameter {
  std::string name;
  Matrix value;
  Matrix grad;
  Matrix adam_m;
  Matrix adam_v;
  i64 adam_t = 0;

  Parameter(std::string n, i64 rows, i64 cols)
      : name(std::move(n)),
        value(rows, cols),
        grad(rows, cols),
        adam_m(rows, cols),
        adam_v(rows, cols) {}
};

class ParamStore {
 public:
  /// Registers a parameter; the name must be unique.
  Parameter& create(const std::string& name, i64 rows, i64 cols, InitKind init, Rng& rng);
  Parameter* find(const std::string& name);
  const Parameter* find(const std::string& name) const;
  const std::vector<std::unique_ptr<Parameter>>& all() const { return params_; }
  void zero_grad();
  i64 total_elements() const;

 private:
  std::vector<std::unique_ptr<Parameter>> params_;
  std::unordered_map<std::string, Parameter*> by_name_;
};

using NodeId = i32;

enum class Op : std::uint8_t {
  leaf,
  matmul,        // A(m,k) B(k,n)
  matmul_nt,     // A(m,k) B(n,k)^T
  sparse_matmul, // G(n,n) X(n,d), no grad through G
  add,
  sub,
  mul,           // elementwise
  scalar_mul,
  add_rowvec,    // A(n,d) + b(1,d)
  scale_rows,    // A(n,d) * s(n,1) per row
  exp,
  log,           // input clamped to >= 1e-12
  sigmoid,
  softplus,
  leaky_relu,
  clamp,
  softmax_rows,
  concat_cols,
  slice_cols,
  slice_rows,    // gather rows by index, repetition allowed
  sum,           // 1x1
  mean,          // 1x1
  sum_rows,      // (n,1)
  l2_norm_sq_rows,
  softmax_xent_rows,  // mean_r [logsumexp(row) - row[target_r]], 1x1
};

struct Node {
  Matrix value;
  Matrix grad;  // allocated lazily during backward
  Op op = Op::leaf;
  std::vector<NodeId> parents;
  double s0 = 0.0, s1 = 0.0;
  std::vector<i64> indices;   // slice_rows / xent targets
  const CsrMatrix* sparse = nullptr;
  Matrix aux;                 // cached softmax for xent
  Parameter* param = nullptr; // bound parameter for leaf nodes
  bool requires_grad = false;
};

class Tape {
 public:
  NodeId constant(Matrix value);
  NodeId param(Parameter& p);  // leaf that accumulates into p.grad

  NodeId matmul(NodeId a, NodeId b);
  NodeId matmul_nt(NodeId a, NodeId b);
  NodeId sparse_matmul(const CsrMatrix& g, NodeId x);
  NodeId add(NodeId a, NodeId b);
  NodeId sub(NodeId a, NodeId b);
  NodeId mul(NodeId a, NodeId b);
  NodeId scalar_mul(NodeId a, double s);
  NodeId add_rowvec(NodeId a, NodeId b);
  NodeId scale_rows(NodeId a, NodeId s);
  NodeId exp(NodeId a);
  NodeId log(NodeId a);
  NodeId sigmoid(NodeId a);
  NodeId softplus(NodeId a);
  NodeId leaky_relu(NodeId a, double slope = 0.01);
  NodeId clamp(NodeId a, double lo, double hi);
  NodeId softmax_rows(NodeId a);
  NodeId concat_cols(const std::vector<NodeId>& parts);
  NodeId slice_cols(NodeId a, i64 start, i64 count);
  NodeId slice_rows(NodeId a, std::vector<i64> index);
  NodeId sum(NodeId a);
  NodeId mean(NodeId a);
  NodeId sum_rows(NodeId a);
  NodeId l2_norm_sq_rows(NodeId a);
  NodeId softmax_xent_rows(NodeId logits, std::vector<i64> targets);

  /// Reverse pass from a 1x1 loss node. Node-local grads are reset per
  /// call; Parameter grads accumulate.
  void backward(NodeId loss);

  const Matrix& value(NodeId id) const { return nodes_[static_cast<std::size_t>(id)].value; }
  const Matrix& grad(NodeId id) const { return nodes_[static_cast<std::size_t>(id)].grad; }
  double scalar(NodeId id) const;
  i64 size() const { return static_cast<i64>(nodes_.size()); }

 private:
  NodeId push(Node n);
  Node& at(NodeId id) { return nodes_[static_cast<std::size_t>(id)]; }
  Matrix& grad_buf(NodeId id);

  std::vector<Node> nodes_;
};

/// One Adam step (bias-corrected) over every parameter in the store.
void adam_step(ParamStore& params, double lr, double beta1 = 0.9, double beta2 = 0.999,
               double eps = 1e-8);

struct GradCheckEntry {
  std::string name;
  double max_rel_err = 0.0;
};

struct GradCheckReport {
  std::vector<GradCheckEntry> entries;
  double worst = 0.0;
  bool pass = false;
  double tol = 0.0;
};

/// Central-difference check of every parameter in `params` against the
/// analytic grads produced by `loss_fn(true)`. loss_fn must be a pure
/// function of the parameter values (freeze any sampling noise) returning
/// the scalar loss; when called with record=true it must also run backward
/// so parameter grads are populated.
GradCheckReport grad_check(const std::function<double(bool record)>& loss_fn,
                           const std::vector<Parameter*>& params, double eps, double tol,
                           double denom_floor = 1e-4);

}  // namespace spumr::ad
