// Copyright 2026 the spumr authors
// SPDX-License-Identifier: Apache-2.0
//
// Tape engine: analytic values, finite-difference gradients per op, shared
// subexpression accumulation, and grad lifecycle.

#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <functional>

#include "spumr/csr.hpp"
#include "spumr/tape.hpp"

#include "test_util.hpp"

using namespace spumr;
using ad::NodeId;
using ad::Tape;

namespace {

/// FD-check a loss built from a single parameter.
double check_param_grad(ad::Parameter& p, const std::function<NodeId(Tape&, NodeId)>& body,
                        double eps = 1e-5) {
  auto loss_fn = [&](bool record) {
    Tape tape;
    const NodeId leaf = tape.param(p);
    const NodeId loss = body(tape, leaf);
    if (record) tape.backward(loss);
    return tape.scalar(loss);
  };
  const auto report = ad::grad_check(loss_fn, {&p}, eps, 1e-4);
  return report.worst;
}

ad::Parameter make_param(const std::string& name, const Matrix& value) {
  ad::Parameter p(name, value.rows(), value.cols());
  p.value = value;
  return p;
}

}  // namespace

TEST_CASE("analytic forward values: sigmoid, softmax, softplus") {
  Tape tape;
  Matrix x(1, 2);
  const NodeId zero = tape.constant(x);
  CHECK(tape.value(tape.sigmoid(zero))(0, 0) == doctest::Approx(0.5));
  const NodeId sm = tape.softmax_rows(zero);
  CHECK(tape.value(sm)(0, 0) == doctest::Approx(0.5));
  CHECK(tape.value(sm)(0, 1) == doctest::Approx(0.5));
  CHECK(tape.value(tape.softplus(zero))(0, 0) == doctest::Approx(std::log(2.0)));
}

TEST_CASE("sigmoid gradient at zero is 0.25") {
  Rng rng(1);
  auto p = make_param("x", Matrix(1, 1));
  Tape tape;
  const NodeId loss = tape.sum(tape.sigmoid(tape.param(p)));
  tape.backward(loss);
  CHECK(p.grad(0, 0) == doctest::Approx(0.25));
}

TEST_CASE("loss = sum(p) gives all-ones grad; sum(p*p) gives 2p") {
  Rng rng(2);
  auto p = make_param("p", test::random_matrix(rng, 3, 4));
  {
    Tape tape;
    tape.backward(tape.sum(tape.param(p)));
    for (i64 i = 0; i < p.grad.size(); ++i) CHECK(p.grad.data()[i] == 1.0);
  }
  p.grad.zero();
  {
    Tape tape;
    const NodeId leaf = tape.param(p);
    tape.backward(tape.sum(tape.mul(leaf, leaf)));
    for (i64 i = 0; i < p.grad.size(); ++i) {
      CHECK(p.grad.data()[i] == doctest::Approx(2.0 * p.value.data()[i]).epsilon(1e-12));
    }
  }
}

TEST_CASE("every op passes a central-difference check") {
  Rng rng(3);

  SUBCASE("matmul both sides") {
    auto a = make_param("a", test::random_matrix(rng, 4, 3));
    auto b = make_param("b", test::random_matrix(rng, 3, 2));
    const Matrix w = test::random_matrix(rng, 4, 2);
    auto loss_fn = [&](bool record) {
      Tape tape;
      const NodeId prod = tape.matmul(tape.param(a), tape.param(b));
      const NodeId loss = tape.sum(tape.mul(prod, tape.constant(w)));
      if (record) tape.backward(loss);
      return tape.scalar(loss);
    };
    const auto report = ad::grad_check(loss_fn, {&a, &b}, 1e-5, 1e-6, 1e-2);
    CHECK(report.pass);
  }

  SUBCASE("matmul_nt both sides") {
    auto a = make_param("a", test::random_matrix(rng, 4, 3));
    auto b = make_param("b", test::random_matrix(rng, 5, 3));
    const Matrix w = test::random_matrix(rng, 4, 5);
    auto loss_fn = [&](bool record) {
      Tape tape;
      const NodeId prod = tape.matmul_nt(tape.param(a), tape.param(b));
      const NodeId loss = tape.sum(tape.mul(prod, tape.constant(w)));
      if (record) tape.backward(loss);
      return tape.scalar(loss);
    };
    CHECK(ad::grad_check(loss_fn, {&a, &b}, 1e-5, 1e-6, 1e-2).pass);
  }

  SUBCASE("elementwise and shape ops") {
    auto p = make_param("p", test::random_matrix(rng, 3, 5, 0.2, 1.8));
    const Matrix c = test::random_matrix(rng, 3, 5, 0.2, 1.8);
    const Matrix w3 = test::random_matrix(rng, 3, 1);
    CHECK(check_param_grad(p, [&](Tape& t, NodeId x) {
            return t.sum(t.mul(t.add(x, t.constant(c)), t.sub(x, t.constant(c))));
          }) < 1e-4);
    CHECK(check_param_grad(p, [&](Tape& t, NodeId x) { return t.sum(t.exp(t.scalar_mul(x, 0.5))); }) < 1e-4);
    CHECK(check_param_grad(p, [&](Tape& t, NodeId x) { return t.sum(t.log(x)); }) < 1e-4);
    CHECK(check_param_grad(p, [&](Tape& t, NodeId x) { return t.sum(t.sigmoid(x)); }) < 1e-4);
    CHECK(check_param_grad(p, [&](Tape& t, NodeId x) { return t.sum(t.softplus(x)); }) < 1e-4);
    CHECK(check_param_grad(p, [&](Tape& t, NodeId x) { return t.sum(t.leaky_relu(x)); }) < 1e-4);
    CHECK(check_param_grad(p, [&](Tape& t, NodeId x) { return t.mean(t.softmax_rows(t.mul(x, x))); }) < 1e-4);
    CHECK(check_param_grad(p, [&](Tape& t, NodeId x) { return t.sum(t.l2_norm_sq_rows(x)); }) < 1e-4);
    CHECK(check_param_grad(p, [&](Tape& t, NodeId x) {
            return t.sum(t.mul(t.sum_rows(x), t.constant(w3)));
          }) < 1e-4);
    CHECK(check_param_grad(p, [&](Tape& t, NodeId x) {
            return t.sum(t.slice_cols(x, 1, 3));
          }) < 1e-4);
    CHECK(check_param_grad(p, [&](Tape& t, NodeId x) {
            return t.sum(t.slice_rows(x, {2, 0, 2, 1}));
          }) < 1e-4);
  }

  SUBCASE("leaky_relu handles negatives with the configured slope") {
    Matrix v(1, 2);
    v(0, 0) = -2.0;
    v(0, 1) = 3.0;
    auto p = make_param("p", v);
    Tape tape;
    const NodeId y = tape.leaky_relu(tape.param(p), 0.01);
    CHECK(tape.value(y)(0, 0) == doctest::Approx(-0.02));
    CHECK(tape.value(y)(0, 1) == doctest::Approx(3.0));
    tape.backward(tape.sum(y));
    CHECK(p.grad(0, 0) == doctest::Approx(0.01));
    CHECK(p.grad(0, 1) == doctest::Approx(1.0));
  }

  SUBCASE("clamp blocks gradient outside the range") {
    Matrix v(1, 3);
    v(0, 0) = -20.0;
    v(0, 1) = 0.5;
    v(0, 2) = 50.0;
    auto p = make_param("p", v);
    Tape tape;
    const NodeId y = tape.clamp(tape.param(p), -10.0, 10.0);
    CHECK(tape.value(y)(0, 0) == -10.0);
    CHECK(tape.value(y)(0, 2) == 10.0);
    tape.backward(tape.sum(y));
    CHECK(p.grad(0, 0) == 0.0);
    CHECK(p.grad(0, 1) == 1.0);
    CHECK(p.grad(0, 2) == 0.0);
  }

  SUBCASE("add_rowvec, scale_rows, concat_cols") {
    auto a = make_param("a", test::random_matrix(rng, 4, 3));
    auto b = make_param("b", test::random_matrix(rng, 1, 3));
    auto s = make_param("s", test::random_matrix(rng, 4, 1));
    const Matrix w = test::random_matrix(rng, 4, 6);
    auto loss_fn = [&](bool record) {
      Tape tape;
      const NodeId x = tape.add_rowvec(tape.param(a), tape.param(b));
      const NodeId y = tape.scale_rows(x, tape.param(s));
      const NodeId z = tape.concat_cols({x, y});
      const NodeId loss = tape.sum(tape.mul(z, tape.constant(w)));
      if (record) tape.backward(loss);
      return tape.scalar(loss);
    };
    CHECK(ad::grad_check(loss_fn, {&a, &b, &s}, 1e-5, 1e-5, 1e-2).pass);
  }

  SUBCASE("softmax_xent_rows") {
    auto p = make_param("p", test::random_matrix(rng, 5, 4));
    auto loss_fn = [&](bool record) {
      Tape tape;
      const NodeId loss = tape.softmax_xent_rows(tape.param(p), {1, 3, 0, 2, 2});
      if (record) tape.backward(loss);
      return tape.scalar(loss);
    };
    CHECK(ad::grad_check(loss_fn, {&p}, 1e-5, 1e-5, 1e-2).pass);
  }
}

TEST_CASE("sparse_matmul equals dense multiply and routes gradients") {
  Rng rng(7);
  CsrMatrix g;
  g.rows = 5;
  g.cols = 4;
  g.offsets = {0, 2, 3, 3, 5, 6};
  g.colidx = {0, 2, 1, 0, 3, 2};
  g.weights = {0.5, 1.5, -0.7, 2.0, 0.1, 1.0};
  const Matrix dense_g = csr_to_dense(g);

  auto x = make_param("x", test::random_matrix(rng, 4, 3));
  Tape tape;
  const NodeId y = tape.sparse_matmul(g, tape.param(x));
  Matrix want(5, 3);
  kernels::matmul(dense_g.data(), x.value.data(), want.data(), 5, 4, 3);
  CHECK(test::max_abs_diff(tape.value(y), want) < 1e-12);

  auto loss_fn = [&](bool record) {
    Tape t;
    const NodeId out = t.sparse_matmul(g, t.param(x));
    const NodeId loss = t.sum(t.mul(out, out));
    if (record) t.backward(loss);
    return t.scalar(loss);
  };
  CHECK(ad::grad_check(loss_fn, {&x}, 1e-5, 1e-5, 1e-2).pass);
}

TEST_CASE("diamond graphs accumulate both paths") {
  // loss = sum((p + p) .* p) = sum(2 p^2) -> grad = 4p
  Rng rng(11);
  auto p = make_param("p", test::random_matrix(rng, 2, 3));
  Tape tape;
  const NodeId leaf = tape.param(p);
  const NodeId two_p = tape.add(leaf, leaf);
  tape.backward(tape.sum(tape.mul(two_p, leaf)));
  for (i64 i = 0; i < p.grad.size(); ++i) {
    CHECK(p.grad.data()[i] == doctest::Approx(4.0 * p.value.data()[i]).epsilon(1e-12));
  }
}

TEST_CASE("grads accumulate across backward calls until zero_grad") {
  Rng rng(13);
  ad::ParamStore store;
  ad::Parameter& p = store.create("p", 2, 2, ad::InitKind::xavier_uniform, rng);
  Tape tape;
  const NodeId loss = tape.sum(tape.param(p));
  tape.backward(loss);
  tape.backward(loss);
  for (i64 i = 0; i < p.grad.size(); ++i) CHECK(p.grad.data()[i] == 2.0);
  store.zero_grad();
  tape.backward(loss);
  for (i64 i = 0; i < p.grad.size(); ++i) CHECK(p.grad.data()[i] == 1.0);
}

TEST_CASE("zero_grad then backward equals a fresh graph") {
  Rng rng(17);
  auto p = make_param("p", test::random_matrix(rng, 3, 3));
  auto build = [&](Tape& tape) {
    const NodeId leaf = tape.param(p);
    return tape.sum(tape.mul(tape.sigmoid(leaf), leaf));
  };
  Matrix fresh;
  {
    Tape tape;
    tape.backward(build(tape));
    fresh = p.grad;
  }
  p.grad.zero();
  {
    Tape tape;
    const NodeId loss = build(tape);
    tape.backward(loss);
    tape.backward(loss);  // contaminate
    p.grad.zero();
    tape.backward(loss);
  }
  CHECK(test::max_abs_diff(fresh, p.grad) == 0.0);
}

TEST_CASE("backward on a non-scalar node errors") {
  Tape tape;
  const NodeId x = tape.constant(Matrix(2, 2));
  CHECK_THROWS_AS(tape.backward(x), ShapeError);
}

TEST_CASE("shape mismatches raise errors naming the op") {
  Tape tape;
  const NodeId a = tape.constant(Matrix(2, 3));
  const NodeId b = tape.constant(Matrix(3, 2));
  try {
    tape.add(a, b);
    FAIL("expected ShapeError");
  } catch (const ShapeError& e) {
    CHECK(std::string(e.what()).find("add") != std::string::npos);
  }
  CHECK_THROWS_AS(tape.matmul(a, a), ShapeError);
  CHECK_THROWS_AS(tape.add_rowvec(a, b), ShapeError);
  CHECK_THROWS_AS(tape.slice_rows(a, {5}), ShapeError);
}

TEST_CASE("parameter store enforces unique names and xavier bounds") {
  Rng rng(19);
  ad::ParamStore store;
  ad::Parameter& w = store.create("w", 6, 4, ad::InitKind::xavier_uniform, rng);
  CHECK_THROWS_AS(store.create("w", 1, 1, ad::InitKind::zeros, rng), ConfigError);
  const double bound = std::sqrt(6.0 / (6 + 4));
  bool any_nonzero = false;
  for (i64 i = 0; i < w.value.size(); ++i) {
    CHECK(std::abs(w.value.data()[i]) <= bound);
    any_nonzero = any_nonzero || w.value.data()[i] != 0.0;
  }
  CHECK(any_nonzero);
  ad::Parameter& z = store.create("z", 3, 3, ad::InitKind::zeros, rng);
  for (i64 i = 0; i < z.value.size(); ++i) CHECK(z.value.data()[i] == 0.0);
}

TEST_CASE("adam_step: zero grad leaves parameters, constant grad steps by ~lr") {
  Rng rng(23);
  ad::ParamStore store;
  ad::Parameter& p = store.create("p", 1, 4, ad::InitKind::zeros, rng);
  store.zero_grad();
  ad::adam_step(store, 0.05);
  for (i64 i = 0; i < p.value.size(); ++i) CHECK(p.value.data()[i] == 0.0);

  // first step from zero moments: bias-corrected ratio 1 -> step ~ -lr*sign(g)
  ad::ParamStore store2;
  ad::Parameter& q = store2.create("q", 1, 2, ad::InitKind::zeros, rng);
  q.grad(0, 0) = 3.0;
  q.grad(0, 1) = -0.5;
  ad::adam_step(store2, 0.05);
  CHECK(q.value(0, 0) == doctest::Approx(-0.05).epsilon(1e-6));
  CHECK(q.value(0, 1) == doctest::Approx(0.05).epsilon(1e-6));
}

TEST_CASE("grad_check reports identity-sum as exact") {
  Rng rng(29);
  auto p = make_param("p", test::random_matrix(rng, 2, 2));
  auto loss_fn = [&](bool record) {
    Tape tape;
    const NodeId loss = tape.sum(tape.param(p));
    if (record) tape.backward(loss);
    return tape.scalar(loss);
  };
  const auto report = ad::grad_check(loss_fn, {&p}, 1e-5, 1e-4);
  CHECK(report.pass);
  CHECK(report.worst < 1e-8);
}
