#pragma once

// Shared fixtures for unit and acceptance suites.

#include "menumax/adam.hpp"
#include "menumax/pgmn.hpp"
#include "menumax/rng.hpp"
#include "menumax/tape.hpp"

#include <cmath>
#include <functional>
#include <vector>

namespace testutil {

using namespace menumax;

// Fits a PGMN to a scalar target by full-batch Adam over a fixed training
// grid, learning rate decayed geometrically 1e-2 -> 3e-4.  Returns the max
// absolute error on a finer evaluation grid (hard max).
inline double fit_pgmn(Pgmn& net, const std::function<double(const Arr&)>& target,
                       int iters = 6000, int train_per_dim = 26, int eval_per_dim = 51) {
  const int m = net.spec().d_x;
  const long train_total = static_cast<long>(std::pow(train_per_dim, m));
  Arr X(m, train_total), Y(1, train_total);
  Arr pt(m, 1);
  for (long g = 0; g < train_total; ++g) {
    long rem = g;
    for (int j = 0; j < m; ++j) {
      pt(j, 0) = static_cast<double>(rem % train_per_dim) / (train_per_dim - 1);
      rem /= train_per_dim;
    }
    X.col(g) = pt.col(0);
    Y(0, g) = target(pt);
  }
  Adam adam(net.params());
  for (int it = 0; it < iters; ++it) {
    const double lr = 1e-2 * std::pow(3e-4 / 1e-2, static_cast<double>(it) / iters);
    Tape t;
    Var f = net.forward(t, t.constant(X), Var{}, /*hard_max=*/false);
    Var diff = t.sub(f, t.constant(Y));
    Var loss = t.scale(t.sum_all(t.mul(diff, diff)), 1.0 / static_cast<double>(train_total));
    t.backward(loss);
    adam.step(net.params(), lr);
  }
  double linf = 0.0;
  const long total = static_cast<long>(std::pow(eval_per_dim, m));
  for (long g = 0; g < total; ++g) {
    long rem = g;
    for (int j = 0; j < m; ++j) {
      pt(j, 0) = static_cast<double>(rem % eval_per_dim) / (eval_per_dim - 1);
      rem /= eval_per_dim;
    }
    const double err = std::fabs(net.value1(pt, Arr(), true) - target(pt));
    if (err > linf) linf = err;
  }
  return linf;
}

// Convexity triple check: returns the worst violation of
// f(lx1+(1-l)x2, y) <= l f(x1,y) + (1-l) f(x2,y) over `trials` random triples.
inline double convexity_violation(const Pgmn& net, bool hard_max, int trials, uint64_t seed) {
  const int m = net.spec().d_x, dy = net.spec().d_y;
  CounterRng rng(seed, 111);
  double worst = -1e300;
  uint64_t c = 0;
  for (int k = 0; k < trials; ++k) {
    Arr x1(m, 1), x2(m, 1), y(std::max(dy, 1), 1);
    for (int j = 0; j < m; ++j) x1(j, 0) = rng.u01(c++);
    for (int j = 0; j < m; ++j) x2(j, 0) = rng.u01(c++);
    for (int j = 0; j < dy; ++j) y(j, 0) = rng.u01(c++);
    const double lam = rng.u01(c++);
    Arr xm = lam * x1 + (1.0 - lam) * x2;
    const double fm = net.value1(xm, y, hard_max);
    const double f1 = net.value1(x1, y, hard_max);
    const double f2 = net.value1(x2, y, hard_max);
    worst = std::max(worst, fm - (lam * f1 + (1.0 - lam) * f2));
  }
  return worst;
}

// Sets every parameter of a store to zero.
inline void zero_params(ParamStore& store) {
  for (auto& e : store.entries) e.value.setZero();
}

// Sets one named parameter.
inline void set_param(ParamStore& store, const std::string& name, const Arr& v) {
  for (auto& e : store.entries)
    if (e.name == name) {
      e.value = v;
      return;
    }
  throw std::runtime_error("no parameter named " + name);
}

inline const Arr& get_param(const ParamStore& store, const std::string& name) {
  for (auto& e : store.entries)
    if (e.name == name) return e.value;
  throw std::runtime_error("no parameter named " + name);
}

}  // namespace testutil
