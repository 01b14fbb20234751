#include <catch2/catch_amalgamated.hpp>

#include "menumax/gradcheck.hpp"
#include "menumax/rng.hpp"
#include "menumax/tape.hpp"

#include <cmath>

using namespace menumax;

namespace {

Arr colvec(std::initializer_list<double> xs) {
  Arr a(static_cast<Eigen::Index>(xs.size()), 1);
  Eigen::Index i = 0;
  for (double x : xs) a(i++, 0) = x;
  return a;
}

}  // namespace

TEST_CASE("softplus at zero") {
  Tape t;
  Var v = t.softplus(t.scalar(0.0));
  CHECK(t.val(v)(0, 0) == Catch::Approx(std::log(2.0)).epsilon(1e-12));
}

TEST_CASE("log-sum-exp is max-shifted and exact for huge inputs") {
  Tape t;
  Var h = t.constant(colvec({1000.0, 1000.0}));
  Var v = t.group_lse(h, 1, 2, 1.0);
  CHECK(t.val(v)(0, 0) == Catch::Approx(1000.0 + std::log(2.0)).epsilon(1e-14));
}

TEST_CASE("inner product") {
  Tape t;
  Var v = t.inner(t.constant(colvec({1, 2})), t.constant(colvec({3, 4})));
  CHECK(t.val(v)(0, 0) == 11.0);
}

TEST_CASE("group_max basics") {
  Tape t;
  Var h = t.constant(colvec({1, 3, 2, 0}));
  Var v = t.group_max(h, 2, 2);
  CHECK(t.val(v)(0, 0) == 3.0);
  CHECK(t.val(v)(1, 0) == 2.0);

  Var c = t.group_max(t.constant(Arr::Constant(6, 1, 4.25)), 3, 2);
  CHECK((t.val(c) == 4.25).all());

  CHECK_THROWS_AS(t.group_max(h, 2, 0), std::invalid_argument);
}

TEST_CASE("soft group max sits within ln(E)/beta above the hard max") {
  CounterRng rng(7, 1);
  const int G = 4, E = 8;
  const double beta = 4096.0;
  Arr h(G * E, 3);
  for (Eigen::Index k = 0; k < h.size(); ++k) h.data()[k] = rng.uniform(k, -2, 2);
  Tape t;
  Var hv = t.constant(h);
  Arr soft = t.val(t.group_lse(hv, G, E, beta));
  Arr hard = t.val(t.group_max(hv, G, E));
  CHECK((soft >= hard).all());
  CHECK((soft <= hard + std::log(static_cast<double>(E)) / beta).all());
}

TEST_CASE("backward of a linear form returns the fixed factor") {
  ParamStore store;
  int w = store.add("w", colvec({0.5, -1.5, 2.0}));
  Tape t;
  Var wv = t.param(store, w);
  Var x = t.constant(colvec({3, 4, 5}));
  t.backward(t.inner(wv, x));
  CHECK((store.entries[0].grad == t.val(x)).all());
}

TEST_CASE("backward of softplus at zero gives sigmoid(0)") {
  ParamStore store;
  int w = store.add("w", Arr::Zero(1, 1));
  Tape t;
  t.backward(t.softplus(t.param(store, w)));
  CHECK(store.entries[0].grad(0, 0) == Catch::Approx(0.5).epsilon(1e-14));
}

TEST_CASE("backward twice gives identical gradients") {
  ParamStore store;
  int w = store.add("w", colvec({1.0, 2.0}));
  Tape t;
  Var wv = t.param(store, w);
  Var root = t.sum_all(t.mul(wv, wv));
  t.backward(root);
  Arr first = store.entries[0].grad;
  t.backward(root);
  CHECK((store.entries[0].grad == first).all());
}

TEST_CASE("stop_gradient blocks and freezes factors") {
  ParamStore store;
  int w = store.add("w", Arr::Constant(1, 1, 3.0));

  {
    Tape t;
    Var wv = t.param(store, w);
    t.backward(t.stop_gradient(t.mul(wv, wv)));
    CHECK(store.entries[0].grad(0, 0) == 0.0);
  }
  {
    Tape t;
    Var wv = t.param(store, w);
    t.backward(t.mul(wv, t.stop_gradient(wv)));
    CHECK(store.entries[0].grad(0, 0) == 3.0);  // product rule with one frozen factor
  }
}

TEST_CASE("clamp subgradient: one inside and at the boundary, zero outside") {
  Arr x(4, 1);
  x << -0.5, 0.0, 0.5, 1.5;
  Tape t;
  Var xv = t.input(x);
  t.backward(t.sum_all(t.clamp(xv, 0.0, 1.0)));
  Arr g = t.adjoint(xv);
  CHECK(g(0, 0) == 0.0);
  CHECK(g(1, 0) == 1.0);
  CHECK(g(2, 0) == 1.0);
  CHECK(g(3, 0) == 0.0);
}

TEST_CASE("shape mismatches are construction errors") {
  Tape t;
  Var a = t.constant(Arr::Zero(2, 3));
  Var b = t.constant(Arr::Zero(3, 3));
  CHECK_THROWS_AS(t.add(a, b), std::invalid_argument);
  CHECK_THROWS_AS(t.inner(a, b), std::invalid_argument);
  CHECK_THROWS_AS(t.matmul(a, t.constant(Arr::Zero(2, 2))), std::invalid_argument);
  CHECK_THROWS_AS(t.backward(a), std::invalid_argument);
}

TEST_CASE("reverse mode matches central differences on a random 3-layer composition") {
  CounterRng rng(42, 2);
  ParamStore store;
  auto randarr = [&](int r, int c, uint64_t salt) {
    Arr a(r, c);
    for (Eigen::Index k = 0; k < a.size(); ++k)
      a.data()[k] = rng.uniform(salt * 10000 + static_cast<uint64_t>(k), -0.8, 0.8);
    return a;
  };
  int w1 = store.add("w1", randarr(5, 3, 1));
  int b1 = store.add("b1", randarr(5, 1, 2));
  int w2 = store.add("w2", randarr(4, 5, 3));
  int b2 = store.add("b2", randarr(4, 1, 4));
  int w3 = store.add("w3", randarr(1, 4, 5));
  Arr x = randarr(3, 7, 6);  // batch of 7 columns

  auto value = [&]() {
    Tape t;
    Var xv = t.constant(x);
    Var h1 = t.leaky_relu(t.add(t.matmul(t.param(store, w1), xv), t.param(store, b1)), 0.01);
    Var h2 = t.softplus(t.add(t.matmul(t.param(store, w2), h1), t.param(store, b2)));
    Var h3 = t.exp(t.scale(t.matmul(t.param(store, w3), h2), 0.3));
    return t.sum_all(t.mul(h3, h3));
  };

  Tape t;
  Var xv = t.constant(x);
  Var h1 = t.leaky_relu(t.add(t.matmul(t.param(store, w1), xv), t.param(store, b1)), 0.01);
  Var h2 = t.softplus(t.add(t.matmul(t.param(store, w2), h1), t.param(store, b2)));
  Var h3 = t.exp(t.scale(t.matmul(t.param(store, w3), h2), 0.3));
  t.backward(t.sum_all(t.mul(h3, h3)));

  auto res = check_against_fd(store, store.flatten_grads(), [&]() {
    Tape tt;
    Var xv2 = tt.constant(x);
    Var g1 = tt.leaky_relu(tt.add(tt.matmul(tt.param(store, w1), xv2), tt.param(store, b1)), 0.01);
    Var g2 = tt.softplus(tt.add(tt.matmul(tt.param(store, w2), g1), tt.param(store, b2)));
    Var g3 = tt.exp(tt.scale(tt.matmul(tt.param(store, w3), g2), 0.3));
    return tt.val(tt.sum_all(tt.mul(g3, g3)))(0, 0);
  });
  CHECK(res.max_err < 1e-5);
}

TEST_CASE("grouped and strided reductions differentiate correctly") {
  CounterRng rng(99, 3);
  const int n = 3, m = 4;
  Arr x(n * m, 5);
  for (Eigen::Index k = 0; k < x.size(); ++k) x.data()[k] = rng.uniform(k, 0, 1);
  Arr weight(m, 5);
  for (Eigen::Index k = 0; k < weight.size(); ++k) weight.data()[k] = rng.uniform(500 + k, -1, 1);

  for (bool lse : {true, false}) {
    Tape t;
    Var xv = t.input(x);
    Var red = lse ? t.group_lse(xv, m, n, 3.0) : t.strided_max(xv, n, m);
    if (!lse) red = t.add(red, t.strided_sum(xv, n, m));
    t.backward(t.sum_all(t.mul(red, t.constant(weight))));
    Arr analytic = t.adjoint(xv);
    auto res = check_input_fd(x, analytic, [&]() {
      Tape tt;
      Var xv2 = tt.constant(x);
      Var red2 = lse ? tt.group_lse(xv2, m, n, 3.0) : tt.strided_max(xv2, n, m);
      if (!lse) red2 = tt.add(red2, tt.strided_sum(xv2, n, m));
      return tt.val(tt.sum_all(tt.mul(red2, tt.constant(weight))))(0, 0);
    });
    CHECK(res.max_err < 1e-5);
  }
}

TEST_CASE("pan_apply matches an explicit per-sample affine map") {
  CounterRng rng(5, 4);
  const int d_out = 3, d_in = 2, B = 4;
  Arr wflat(d_out * d_in, B), x(d_in, B), b(d_out, B);
  for (Eigen::Index k = 0; k < wflat.size(); ++k) wflat.data()[k] = rng.uniform(k, -1, 1);
  for (Eigen::Index k = 0; k < x.size(); ++k) x.data()[k] = rng.uniform(100 + k, -1, 1);
  for (Eigen::Index k = 0; k < b.size(); ++k) b.data()[k] = rng.uniform(200 + k, -1, 1);

  Tape t;
  Var wv = t.input(wflat), xv = t.input(x), bv = t.input(b);
  Var out = t.pan_apply(wv, xv, bv, d_out, d_in);
  for (int s = 0; s < B; ++s)
    for (int r = 0; r < d_out; ++r) {
      double want = b(r, s);
      for (int c = 0; c < d_in; ++c) want += wflat(r * d_in + c, s) * x(c, s);
      CHECK(t.val(out)(r, s) == Catch::Approx(want).epsilon(1e-12));
    }

  Arr weight(d_out, B);
  for (Eigen::Index k = 0; k < weight.size(); ++k) weight.data()[k] = rng.uniform(300 + k, -1, 1);
  t.backward(t.sum_all(t.mul(out, t.constant(weight))));

  auto scalar_eval = [&]() {
    Tape tt;
    Var o = tt.pan_apply(tt.constant(wflat), tt.constant(x), tt.constant(b), d_out, d_in);
    return tt.val(tt.sum_all(tt.mul(o, tt.constant(weight))))(0, 0);
  };
  CHECK(check_input_fd(wflat, t.adjoint(wv), scalar_eval).max_err < 1e-5);
  CHECK(check_input_fd(x, t.adjoint(xv), scalar_eval).max_err < 1e-5);
  CHECK(check_input_fd(b, t.adjoint(bv), scalar_eval).max_err < 1e-5);
}
