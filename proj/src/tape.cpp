// Copyright 2026 the spumr authors
// SPDX-License-Identifier: Apache-2.0

#include "spumr/tape.hpp"

#include <algorithm>
#include <cmath>

#include "spumr/errors.hpp"
#include "spumr/kernels.hpp"

namespace spumr::ad {

namespace {
constexpr double kLogFloor = 1e-12;
}

// ---------------- ParamStore ----------------

Parameter& ParamStore::create(const std::string& name, i64 rows, i64 cols, InitKind init,
                              Rng& rng) {
  if (by_name_.count(name) != 0) {
    throw ConfigError("parameter '" + name + "' registered twice");
  }
  auto p = std::make_unique<Parameter>(name, rows, cols);
  if (init == InitKind::xavier_uniform) {
    // fan_in = cols, fan_out = rows
    const double bound = std::sqrt(6.0 / static_cast<double>(rows + cols));
    double* d = p->value.data();
    for (i64 i = 0; i < p->value.size(); ++i) d[i] = rng.uniform(-bound, bound);
  }
  Parameter& ref = *p;
  by_name_.emplace(name, &ref);
  params_.push_back(std::move(p));
  return ref;
}

Parameter* ParamStore::find(const std::string& name) {
  auto it = by_name_.find(name);
  return it == by_name_.end() ? nullptr : it->second;
}

const Parameter* ParamStore::find(const std::string& name) const {
  auto it = by_name_.find(name);
  return it == by_name_.end() ? nullptr : it->second;
}

void ParamStore::zero_grad() {
  for (auto& p : params_) p->grad.zero();
}

i64 ParamStore::total_elements() const {
  i64 n = 0;
  for (const auto& p : params_) n += p->value.size();
  return n;
}

// ---------------- Tape ----------------

NodeId Tape::push(Node n) {
  nodes_.push_back(std::move(n));
  return static_cast<NodeId>(nodes_.size() - 1);
}

Matrix& Tape::grad_buf(NodeId id) {
  Node& n = at(id);
  if (n.grad.empty()) n.grad = Matrix(n.value.rows(), n.value.cols());
  return n.grad;
}

double Tape::scalar(NodeId id) const {
  const Matrix& v = value(id);
  if (v.rows() != 1 || v.cols() != 1) {
    throw ShapeError("scalar() on node of shape " + v.shape_str());
  }
  return v(0, 0);
}

NodeId Tape::constant(Matrix value) {
  Node n;
  n.value = std::move(value);
  n.requires_grad = false;
  return push(std::move(n));
}

NodeId Tape::param(Parameter& p) {
  Node n;
  n.value = p.value;
  n.param = &p;
  n.requires_grad = true;
  return push(std::move(n));
}

namespace {
void check_matmul(const Matrix& a, const Matrix& b, i64 a_inner, i64 b_inner, const char* op) {
  if (a_inner != b_inner) {
    throw ShapeError(std::string(op) + ": inner dims " + a.shape_str() + " vs " +
                     b.shape_str());
  }
}
}  // namespace

NodeId Tape::matmul(NodeId a, NodeId b) {
  const Matrix& va = value(a);
  const Matrix& vb = value(b);
  check_matmul(va, vb, va.cols(), vb.rows(), "matmul");
  Node n;
  n.op = Op::matmul;
  n.parents = {a, b};
  n.value = Matrix(va.rows(), vb.cols());
  kernels::matmul(va.data(), vb.data(), n.value.data(), static_cast<std::size_t>(va.rows()),
                  static_cast<std::size_t>(va.cols()), static_cast<std::size_t>(vb.cols()));
  n.requires_grad = at(a).requires_grad || at(b).requires_grad;
  return push(std::move(n));
}

NodeId Tape::matmul_nt(NodeId a, NodeId b) {
  const Matrix& va = value(a);
  const Matrix& vb = value(b);
  check_matmul(va, vb, va.cols(), vb.cols(), "matmul_nt");
  Node n;
  n.op = Op::matmul_nt;
  n.parents = {a, b};
  n.value = Matrix(va.rows(), vb.rows());
  kernels::matmul_nt(va.data(), vb.data(), n.value.data(), static_cast<std::size_t>(va.rows()),
                     static_cast<std::size_t>(va.cols()), static_cast<std::size_t>(vb.rows()));
  n.requires_grad = at(a).requires_grad || at(b).requires_grad;
  return push(std::move(n));
}

NodeId Tape::sparse_matmul(const CsrMatrix& g, NodeId x) {
  const Matrix& vx = value(x);
  if (vx.rows() != g.cols) {
    throw ShapeError("sparse_matmul: graph " + std::to_string(g.rows) + "x" +
                     std::to_string(g.cols) + " vs dense " + vx.shape_str());
  }
  Node n;
  n.op = Op::sparse_matmul;
  n.parents = {x};
  n.sparse = &g;
  n.value = Matrix(g.rows, vx.cols());
  csr_matmul(g, vx, n.value);
  n.requires_grad = at(x).requires_grad;
  return push(std::move(n));
}

NodeId Tape::add(NodeId a, NodeId b) {
  const Matrix& va = value(a);
  const Matrix& vb = value(b);
  require_same_shape(va, vb, "add");
  Node n;
  n.op = Op::add;
  n.parents = {a, b};
  n.value = Matrix(va.rows(), va.cols());
  kernels::vadd(va.data(), vb.data(), n.value.data(), static_cast<std::size_t>(va.size()));
  n.requires_grad = at(a).requires_grad || at(b).requires_grad;
  return push(std::move(n));
}

NodeId Tape::sub(NodeId a, NodeId b) {
  const Matrix& va = value(a);
  const Matrix& vb = value(b);
  require_same_shape(va, vb, "sub");
  Node n;
  n.op = Op::sub;
  n.parents = {a, b};
  n.value = Matrix(va.rows(), va.cols());
  kernels::vsub(va.data(), vb.data(), n.value.data(), static_cast<std::size_t>(va.size()));
  n.requires_grad = at(a).requires_grad || at(b).requires_grad;
  return push(std::move(n));
}

NodeId Tape::mul(NodeId a, NodeId b) {
  const Matrix& va = value(a);
  const Matrix& vb = value(b);
  require_same_shape(va, vb, "mul");
  Node n;
  n.op = Op::mul;
  n.parents = {a, b};
  n.value = Matrix(va.rows(), va.cols());
  kernels::vmul(va.data(), vb.data(), n.value.data(), static_cast<std::size_t>(va.size()));
  n.requires_grad = at(a).requires_grad || at(b).requires_grad;
  return push(std::move(n));
}

NodeId Tape::scalar_mul(NodeId a, double s) {
  const Matrix& va = value(a);
  Node n;
  n.op = Op::scalar_mul;
  n.parents = {a};
  n.s0 = s;
  n.value = va;
  kernels::scale(s, n.value.data(), static_cast<std::size_t>(n.value.size()));
  n.requires_grad = at(a).requires_grad;
  return push(std::move(n));
}

NodeId Tape::add_rowvec(NodeId a, NodeId b) {
  const Matrix& va = value(a);
  const Matrix& vb = value(b);
  if (vb.rows() != 1 || vb.cols() != va.cols()) {
    throw ShapeError("add_rowvec: " + va.shape_str() + " vs " + vb.shape_str());
  }
  Node n;
  n.op = Op::add_rowvec;
  n.parents = {a, b};
  n.value = Matrix(va.rows(), va.cols());
  for (i64 r = 0; r < va.rows(); ++r) {
    kernels::vadd(va.row(r), vb.data(), n.value.row(r), static_cast<std::size_t>(va.cols()));
  }
  n.requires_grad = at(a).requires_grad || at(b).requires_grad;
  return push(std::move(n));
}

NodeId Tape::scale_rows(NodeId a, NodeId s) {
  const Matrix& va = value(a);
  const Matrix& vs = value(s);
  if (vs.cols() != 1 || vs.rows() != va.rows()) {
    throw ShapeError("scale_rows: " + va.shape_str() + " vs " + vs.shape_str());
  }
  Node n;
  n.op = Op::scale_rows;
  n.parents = {a, s};
  n.value = va;
  for (i64 r = 0; r < va.rows(); ++r) {
    kernels::scale(vs(r, 0), n.value.row(r), static_cast<std::size_t>(va.cols()));
  }
  n.requires_grad = at(a).requires_grad || at(s).requires_grad;
  return push(std::move(n));
}

NodeId Tape::exp(NodeId a) {
  Node n;
  n.op = Op::exp;
  n.parents = {a};
  n.value = value(a);
  double* d = n.value.data();
  for (i64 i = 0; i < n.value.size(); ++i) d[i] = std::exp(d[i]);
  n.requires_grad = at(a).requires_grad;
  return push(std::move(n));
}

NodeId Tape::log(NodeId a) {
  Node n;
  n.op = Op::log;
  n.parents = {a};
  n.value = value(a);
  double* d = n.value.data();
  for (i64 i = 0; i < n.value.size(); ++i) d[i] = std::log(std::max(d[i], kLogFloor));
  n.requires_grad = at(a).requires_grad;
  return push(std::move(n));
}

NodeId Tape::sigmoid(NodeId a) {
  Node n;
  n.op = Op::sigmoid;
  n.parents = {a};
  n.value = value(a);
  double* d = n.value.data();
  for (i64 i = 0; i < n.value.size(); ++i) {
    const double x = d[i];
    if (x >= 0.0) {
      d[i] = 1.0 / (1.0 + std::exp(-x));
    } else {
      const double e = std::exp(x);
      d[i] = e / (1.0 + e);
    }
  }
  n.requires_grad = at(a).requires_grad;
  return push(std::move(n));
}

NodeId Tape::softplus(NodeId a) {
  Node n;
  n.op = Op::softplus;
  n.parents = {a};
  n.value = value(a);
  double* d = n.value.data();
  for (i64 i = 0; i < n.value.size(); ++i) {
    const double x = d[i];
    d[i] = std::max(x, 0.0) + std::log1p(std::exp(-std::abs(x)));
  }
  n.requires_grad = at(a).requires_grad;
  return push(std::move(n));
}

NodeId Tape::leaky_relu(NodeId a, double slope) {
  Node n;
  n.op = Op::leaky_relu;
  n.parents = {a};
  n.s0 = slope;
  n.value = value(a);
  double* d = n.value.data();
  for (i64 i = 0; i < n.value.size(); ++i) {
    if (d[i] < 0.0) d[i] *= slope;
  }
  n.requires_grad = at(a).requires_grad;
  return push(std::move(n));
}

NodeId Tape::clamp(NodeId a, double lo, double hi) {
  Node n;
  n.op = Op::clamp;
  n.parents = {a};
  n.s0 = lo;
  n.s1 = hi;
  n.value = value(a);
  double* d = n.value.data();
  for (i64 i = 0; i < n.value.size(); ++i) d[i] = std::clamp(d[i], lo, hi);
  n.requires_grad = at(a).requires_grad;
  return push(std::move(n));
}

NodeId Tape::softmax_rows(NodeId a) {
  Node n;
  n.op = Op::softmax_rows;
  n.parents = {a};
  n.value = value(a);
  for (i64 r = 0; r < n.value.rows(); ++r) {
    double* row = n.value.row(r);
    double mx = row[0];
    for (i64 c = 1; c < n.value.cols(); ++c) mx = std::max(mx, row[c]);
    double denom = 0.0;
    for (i64 c = 0; c < n.value.cols(); ++c) {
      row[c] = std::exp(row[c] - mx);
      denom += row[c];
    }
    const double inv = 1.0 / denom;
    for (i64 c = 0; c < n.value.cols(); ++c) row[c] *= inv;
  }
  n.requires_grad = at(a).requires_grad;
  return push(std::move(n));
}

NodeId Tape::concat_cols(const std::vector<NodeId>& parts) {
  if (parts.empty()) throw ShapeError("concat_cols: no inputs");
  const i64 rows = value(parts[0]).rows();
  i64 cols = 0;
  bool rg = false;
  for (NodeId p : parts) {
    if (value(p).rows() != rows) {
      throw ShapeError("concat_cols: row mismatch " + value(p).shape_str());
    }
    cols += value(p).cols();
    rg = rg || at(p).requires_grad;
  }
  Node n;
  n.op = Op::concat_cols;
  n.parents = parts;
  n.value = Matrix(rows, cols);
  i64 at_col = 0;
  for (NodeId p : parts) {
    const Matrix& vp = value(p);
    for (i64 r = 0; r < rows; ++r) {
      std::copy(vp.row(r), vp.row(r) + vp.cols(), n.value.row(r) + at_col);
    }
    at_col += vp.cols();
  }
  n.requires_grad = rg;
  return push(std::move(n));
}

NodeId Tape::slice_cols(NodeId a, i64 start, i64 count) {
  const Matrix& va = value(a);
  if (start < 0 || count < 1 || start + count > va.cols()) {
    throw ShapeError("slice_cols: range [" + std::to_string(start) + ", +" +
                     std::to_string(count) + ") of " + va.shape_str());
  }
  Node n;
  n.op = Op::slice_cols;
  n.parents = {a};
  n.s0 = static_cast<double>(start);
  n.s1 = static_cast<double>(count);
  n.value = Matrix(va.rows(), count);
  for (i64 r = 0; r < va.rows(); ++r) {
    std::copy(va.row(r) + start, va.row(r) + start + count, n.value.row(r));
  }
  n.requires_grad = at(a).requires_grad;
  return push(std::move(n));
}

NodeId Tape::slice_rows(NodeId a, std::vector<i64> index) {
  const Matrix& va = value(a);
  Node n;
  n.op = Op::slice_rows;
  n.parents = {a};
  n.value = Matrix(static_cast<i64>(index.size()), va.cols());
  for (std::size_t r = 0; r < index.size(); ++r) {
    const i64 src = index[r];
    if (src < 0 || src >= va.rows()) {
      throw ShapeError("slice_rows: index " + std::to_string(src) + " out of " +
                       std::to_string(va.rows()));
    }
    std::copy(va.row(src), va.row(src) + va.cols(), n.value.row(static_cast<i64>(r)));
  }
  n.indices = std::move(index);
  n.requires_grad = at(a).requires_grad;
  return push(std::move(n));
}

NodeId Tape::sum(NodeId a) {
  Node n;
  n.op = Op::sum;
  n.parents = {a};
  n.value = Matrix(1, 1);
  n.value(0, 0) = kernels::sum(value(a).data(), static_cast<std::size_t>(value(a).size()));
  n.requires_grad = at(a).requires_grad;
  return push(std::move(n));
}

NodeId Tape::mean(NodeId a) {
  Node n;
  n.op = Op::mean;
  n.parents = {a};
  n.value = Matrix(1, 1);
  n.value(0, 0) = kernels::sum(value(a).data(), static_cast<std::size_t>(value(a).size())) /
                  static_cast<double>(value(a).size());
  n.requires_grad = at(a).requires_grad;
  return push(std::move(n));
}

NodeId Tape::sum_rows(NodeId a) {
  const Matrix& va = value(a);
  Node n;
  n.op = Op::sum_rows;
  n.parents = {a};
  n.value = Matrix(va.rows(), 1);
  for (i64 r = 0; r < va.rows(); ++r) {
    n.value(r, 0) = kernels::sum(va.row(r), static_cast<std::size_t>(va.cols()));
  }
  n.requires_grad = at(a).requires_grad;
  return push(std::move(n));
}

NodeId Tape::l2_norm_sq_rows(NodeId a) {
  const Matrix& va = value(a);
  Node n;
  n.op = Op::l2_norm_sq_rows;
  n.parents = {a};
  n.value = Matrix(va.rows(), 1);
  for (i64 r = 0; r < va.rows(); ++r) {
    n.value(r, 0) = kernels::dot(va.row(r), va.row(r), static_cast<std::size_t>(va.cols()));
  }
  n.requires_grad = at(a).requires_grad;
  return push(std::move(n));
}

NodeId Tape::softmax_xent_rows(NodeId logits, std::vector<i64> targets) {
  const Matrix& vl = value(logits);
  if (static_cast<i64>(targets.size()) != vl.rows()) {
    throw ShapeError("softmax_xent_rows: " + std::to_string(targets.size()) +
                     " targets for " + vl.shape_str());
  }
  Node n;
  n.op = Op::softmax_xent_rows;
  n.parents = {logits};
  n.aux = vl;  // becomes softmax(logits)
  double total = 0.0;
  for (i64 r = 0; r < vl.rows(); ++r) {
    const i64 t = targets[static_cast<std::size_t>(r)];
    if (t < 0 || t >= vl.cols()) {
      throw ShapeError("softmax_xent_rows: target column out of range");
    }
    double* row = n.aux.row(r);
    double mx = row[0];
    for (i64 c = 1; c < vl.cols(); ++c) mx = std::max(mx, row[c]);
    double denom = 0.0;
    for (i64 c = 0; c < vl.cols(); ++c) {
      row[c] = std::exp(row[c] - mx);
      denom += row[c];
    }
    total += std::log(denom) - (vl(r, t) - mx);
    const double inv = 1.0 / denom;
    for (i64 c = 0; c < vl.cols(); ++c) row[c] *= inv;
  }
  n.indices = std::move(targets);
  n.value = Matrix(1, 1);
  n.value(0, 0) = total / static_cast<double>(vl.rows());
  n.requires_grad = at(logits).requires_grad;
  return push(std::move(n));
}

// ---------------- backward ----------------

void Tape::backward(NodeId loss) {
  const Matrix& lv = value(loss);
  if (lv.rows() != 1 || lv.cols() != 1) {
    throw ShapeError("backward requires a 1x1 loss node, got " + lv.shape_str());
  }
  // node-local grads are per-call scratch
  for (auto& n : nodes_) {
    if (!n.grad.empty()) n.grad.zero();
  }
  grad_buf(loss)(0, 0) = 1.0;

  for (NodeId id = loss; id >= 0; --id) {
    Node& n = at(id);
    if (!n.requires_grad || n.grad.empty()) continue;
    const Matrix& g = n.grad;
    switch (n.op) {
      case Op::leaf:
        break;
      case Op::matmul: {
        Node& a = at(n.parents[0]);
        Node& b = at(n.parents[1]);
        if (a.requires_grad) {
          kernels::matmul_nt(g.data(), b.value.data(), grad_buf(n.parents[0]).data(),
                             static_cast<std::size_t>(g.rows()),
                             static_cast<std::size_t>(g.cols()),
                             static_cast<std::size_t>(b.value.rows()), true);
        }
        if (b.requires_grad) {
          kernels::matmul_tn(a.value.data(), g.data(), grad_buf(n.parents[1]).data(),
                             static_cast<std::size_t>(a.value.cols()),
                             static_cast<std::size_t>(a.value.rows()),
                             static_cast<std::size_t>(g.cols()), true);
        }
        break;
      }
      case Op::matmul_nt: {
        // C = A B^T: dA += dC B, dB += dC^T A
        Node& a = at(n.parents[0]);
        Node& b = at(n.parents[1]);
        if (a.requires_grad) {
          kernels::matmul(g.data(), b.value.data(), grad_buf(n.parents[0]).data(),
                          static_cast<std::size_t>(g.rows()),
                          static_cast<std::size_t>(g.cols()),
                          static_cast<std::size_t>(b.value.cols()), true);
        }
        if (b.requires_grad) {
          kernels::matmul_tn(g.data(), a.value.data(), grad_buf(n.parents[1]).data(),
                             static_cast<std::size_t>(g.cols()),
                             static_cast<std::size_t>(g.rows()),
                             static_cast<std::size_t>(a.value.cols()), true);
        }
        break;
      }
      case Op::sparse_matmul: {
        Node& x = at(n.parents[0]);
        if (x.requires_grad) {
          csr_t_matmul_acc(*n.sparse, g, grad_buf(n.parents[0]));
        }
        break;
      }
      case Op::add:
        for (int side = 0; side < 2; ++side) {
          if (at(n.parents[static_cast<std::size_t>(side)]).requires_grad) {
            Matrix& pg = grad_buf(n.parents[static_cast<std::size_t>(side)]);
            kernels::axpy(1.0, g.data(), pg.data(), static_cast<std::size_t>(g.size()));
          }
        }
        break;
      case Op::sub: {
        if (at(n.parents[0]).requires_grad) {
          kernels::axpy(1.0, g.data(), grad_buf(n.parents[0]).data(),
                        static_cast<std::size_t>(g.size()));
        }
        if (at(n.parents[1]).requires_grad) {
          kernels::axpy(-1.0, g.data(), grad_buf(n.parents[1]).data(),
                        static_cast<std::size_t>(g.size()));
        }
        break;
      }
      case Op::mul: {
        Node& a = at(n.parents[0]);
        Node& b = at(n.parents[1]);
        if (a.requires_grad) {
          Matrix& pg = grad_buf(n.parents[0]);
          const double* gb = b.value.data();
          const double* gd = g.data();
          double* out = pg.data();
          for (i64 i = 0; i < g.size(); ++i) out[i] += gd[i] * gb[i];
        }
        if (b.requires_grad) {
          Matrix& pg = grad_buf(n.parents[1]);
          const double* ga = a.value.data();
          const double* gd = g.data();
          double* out = pg.data();
          for (i64 i = 0; i < g.size(); ++i) out[i] += gd[i] * ga[i];
        }
        break;
      }
      case Op::scalar_mul:
        if (at(n.parents[0]).requires_grad) {
          kernels::axpy(n.s0, g.data(), grad_buf(n.parents[0]).data(),
                        static_cast<std::size_t>(g.size()));
        }
        break;
      case Op::add_rowvec: {
        if (at(n.parents[0]).requires_grad) {
          kernels::axpy(1.0, g.data(), grad_buf(n.parents[0]).data(),
                        static_cast<std::size_t>(g.size()));
        }
        if (at(n.parents[1]).requires_grad) {
          Matrix& pg = grad_buf(n.parents[1]);
          for (i64 r = 0; r < g.rows(); ++r) {
            kernels::axpy(1.0, g.row(r), pg.data(), static_cast<std::size_t>(g.cols()));
          }
        }
        break;
      }
      case Op::scale_rows: {
        Node& a = at(n.parents[0]);
        Node& s = at(n.parents[1]);
        if (a.requires_grad) {
          Matrix& pg = grad_buf(n.parents[0]);
          for (i64 r = 0; r < g.rows(); ++r) {
            kernels::axpy(s.value(r, 0), g.row(r), pg.row(r),
                          static_cast<std::size_t>(g.cols()));
          }
        }
        if (s.requires_grad) {
          Matrix& pg = grad_buf(n.parents[1]);
          for (i64 r = 0; r < g.rows(); ++r) {
            pg(r, 0) += kernels::dot(g.row(r), a.value.row(r),
                                     static_cast<std::size_t>(g.cols()));
          }
        }
        break;
      }
      case Op::exp: {
        if (at(n.parents[0]).requires_grad) {
          Matrix& pg = grad_buf(n.parents[0]);
          const double* y = n.value.data();
          const double* gd = g.data();
          double* out = pg.data();
          for (i64 i = 0; i < g.size(); ++i) out[i] += gd[i] * y[i];
        }
        break;
      }
      case Op::log: {
        if (at(n.parents[0]).requires_grad) {
          Matrix& pg = grad_buf(n.parents[0]);
          const double* x = at(n.parents[0]).value.data();
          const double* gd = g.data();
          double* out = pg.data();
          for (i64 i = 0; i < g.size(); ++i) {
            if (x[i] > kLogFloor) out[i] += gd[i] / x[i];
          }
        }
        break;
      }
      case Op::sigmoid: {
        if (at(n.parents[0]).requires_grad) {
          Matrix& pg = grad_buf(n.parents[0]);
          const double* y = n.value.data();
          const double* gd = g.data();
          double* out = pg.data();
          for (i64 i = 0; i < g.size(); ++i) out[i] += gd[i] * y[i] * (1.0 - y[i]);
        }
        break;
      }
      case Op::softplus: {
        if (at(n.parents[0]).requires_grad) {
          Matrix& pg = grad_buf(n.parents[0]);
          const double* y = n.value.data();
          const double* gd = g.data();
          double* out = pg.data();
          // sigmoid(x) = 1 - exp(-softplus(x))
          for (i64 i = 0; i < g.size(); ++i) out[i] += gd[i] * (1.0 - std::exp(-y[i]));
        }
        break;
      }
      case Op::leaky_relu: {
        if (at(n.parents[0]).requires_grad) {
          Matrix& pg = grad_buf(n.parents[0]);
          const double* x = at(n.parents[0]).value.data();
          const double* gd = g.data();
          double* out = pg.data();
          for (i64 i = 0; i < g.size(); ++i) out[i] += gd[i] * (x[i] < 0.0 ? n.s0 : 1.0);
        }
        break;
      }
      case Op::clamp: {
        if (at(n.parents[0]).requires_grad) {
          Matrix& pg = grad_buf(n.parents[0]);
          const double* x = at(n.parents[0]).value.data();
          const double* gd = g.data();
          double* out = pg.data();
          for (i64 i = 0; i < g.size(); ++i) {
            if (x[i] > n.s0 && x[i] < n.s1) out[i] += gd[i];
          }
        }
        break;
      }
      case Op::softmax_rows: {
        if (at(n.parents[0]).requires_grad) {
          Matrix& pg = grad_buf(n.parents[0]);
          for (i64 r = 0; r < g.rows(); ++r) {
            const double* y = n.value.row(r);
            const double* gd = g.row(r);
            const double inner = kernels::dot(gd, y, static_cast<std::size_t>(g.cols()));
            double* out = pg.row(r);
            for (i64 c = 0; c < g.cols(); ++c) out[c] += y[c] * (gd[c] - inner);
          }
        }
        break;
      }
      case Op::concat_cols: {
        i64 at_col = 0;
        for (NodeId pid : n.parents) {
          Node& p = at(pid);
          if (p.requires_grad) {
            Matrix& pg = grad_buf(pid);
            for (i64 r = 0; r < g.rows(); ++r) {
              kernels::axpy(1.0, g.row(r) + at_col, pg.row(r),
                            static_cast<std::size_t>(p.value.cols()));
            }
          }
          at_col += p.value.cols();
        }
        break;
      }
      case Op::slice_cols: {
        if (at(n.parents[0]).requires_grad) {
          Matrix& pg = grad_buf(n.parents[0]);
          const i64 start = static_cast<i64>(n.s0);
          for (i64 r = 0; r < g.rows(); ++r) {
            kernels::axpy(1.0, g.row(r), pg.row(r) + start,
                          static_cast<std::size_t>(g.cols()));
          }
        }
        break;
      }
      case Op::slice_rows: {
        if (at(n.parents[0]).requires_grad) {
          Matrix& pg = grad_buf(n.parents[0]);
          for (std::size_t r = 0; r < n.indices.size(); ++r) {
            kernels::axpy(1.0, g.row(static_cast<i64>(r)), pg.row(n.indices[r]),
                          static_cast<std::size_t>(g.cols()));
          }
        }
        break;
      }
      case Op::sum: {
        if (at(n.parents[0]).requires_grad) {
          Matrix& pg = grad_buf(n.parents[0]);
          const double gv = g(0, 0);
          double* out = pg.data();
          for (i64 i = 0; i < pg.size(); ++i) out[i] += gv;
        }
        break;
      }
      case Op::mean: {
        if (at(n.parents[0]).requires_grad) {
          Matrix& pg = grad_buf(n.parents[0]);
          const double gv = g(0, 0) / static_cast<double>(pg.size());
          double* out = pg.data();
          for (i64 i = 0; i < pg.size(); ++i) out[i] += gv;
        }
        break;
      }
      case Op::sum_rows: {
        if (at(n.parents[0]).requires_grad) {
          Matrix& pg = grad_buf(n.parents[0]);
          for (i64 r = 0; r < pg.rows(); ++r) {
            const double gv = g(r, 0);
            double* out = pg.row(r);
            for (i64 c = 0; c < pg.cols(); ++c) out[c] += gv;
          }
        }
        break;
      }
      case Op::l2_norm_sq_rows: {
        if (at(n.parents[0]).requires_grad) {
          Matrix& pg = grad_buf(n.parents[0]);
          const Matrix& x = at(n.parents[0]).value;
          for (i64 r = 0; r < pg.rows(); ++r) {
            kernels::axpy(2.0 * g(r, 0), x.row(r), pg.row(r),
                          static_cast<std::size_t>(pg.cols()));
          }
        }
        break;
      }
      case Op::softmax_xent_rows: {
        if (at(n.parents[0]).requires_grad) {
          Matrix& pg = grad_buf(n.parents[0]);
          const double gv = g(0, 0) / static_cast<double>(pg.rows());
          for (i64 r = 0; r < pg.rows(); ++r) {
            kernels::axpy(gv, n.aux.row(r), pg.row(r), static_cast<std::size_t>(pg.cols()));
            pg(r, n.indices[static_cast<std::size_t>(r)]) -= gv;
          }
        }
        break;
      }
    }
  }

  // flush leaf grads into bound parameters
  for (auto& n : nodes_) {
    if (n.op == Op::leaf && n.param != nullptr && !n.grad.empty()) {
      kernels::axpy(1.0, n.grad.data(), n.param->grad.data(),
                    static_cast<std::size_t>(n.grad.size()));
    }
  }
}

void adam_step(ParamStore& params, double lr, double beta1, double beta2, double eps) {
  for (const auto& p : params.all()) {
    p->adam_t += 1;
    const double b1t = std::pow(beta1, static_cast<double>(p->adam_t));
    const double b2t = std::pow(beta2, static_cast<double>(p->adam_t));
    kernels::adam_update(p->value.data(), p->grad.data(), p->adam_m.data(), p->adam_v.data(),
                         static_cast<std::size_t>(p->value.size()), lr, beta1, beta2, eps, b1t,
                         b2t);
  }
}

GradCheckReport grad_check(const std::function<double(bool record)>& loss_fn,
                           const std::vector<Parameter*>& params, double eps, double tol,
                           double denom_floor) {
  for (Parameter* p : params) p->grad.zero();
  loss_fn(true);

  GradCheckReport report;
  report.tol = tol;
  for (Parameter* p : params) {
    GradCheckEntry entry;
    entry.name = p->name;
    for (i64 i = 0; i < p->value.size(); ++i) {
      const double orig = p->value.data()[i];
      p->value.data()[i] = orig + eps;
      const double fp = loss_fn(false);
      p->value.data()[i] = orig - eps;
      const double fm = loss_fn(false);
      p->value.data()[i] = orig;
      const double numeric = (fp - fm) / (2.0 * eps);
      const double analytic = p->grad.data()[i];
      const double denom = std::max({std::abs(numeric), std::abs(analytic), denom_floor});
      entry.max_rel_err = std::max(entry.max_rel_err, std::abs(numeric - analytic) / denom);
    }
    report.worst = std::max(report.worst, entry.max_rel_err);
    report.entries.push_back(std::move(entry));
  }
  report.pass = report.worst < tol;
  return report;
}

}  // namespace spumr::ad
