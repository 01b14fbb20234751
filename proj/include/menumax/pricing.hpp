#pragma once

// Pricing rules: price(x_i; t_-i) = f(x_i, t_-i) - f(0, t_-i) + c(x_i).
// The zero-outcome subtraction makes the zero bundle cost exactly zero, and
// partial convexity of the network carries over to price minus cost.

#include "parallel.hpp"
#include "pgmn.hpp"
#include "problem.hpp"

#include <functional>

namespace menumax {

struct PricingRule {
  const Pgmn* net = nullptr;
  const MechanismProblem* problem = nullptr;
  bool hard_max = false;  // the smooth soft max is the solving default; hard is per-call

  // Convex core q(x; y) = f(x, y) - f(0, y); price = q + c.
  // X is (m x B); Y is ((n-1)m x B) or empty for a single player.
  Arr core(const Arr& X, const Arr& Y) const {
    const bool conditioned = net->spec().d_y > 0;
    Arr f(1, X.cols()), f0(1, X.cols());
    parallel_chunks(X.cols(), [&](Eigen::Index lo, Eigen::Index hi) {
      const Arr Yc = conditioned ? Y.middleCols(lo, hi - lo).eval() : Arr();
      f.middleCols(lo, hi - lo) =
          net->eval(X.middleCols(lo, hi - lo), Yc, hard_max, false).f;
      if (conditioned) {
        f0.middleCols(lo, hi - lo) =
            net->eval(Arr::Zero(X.rows(), hi - lo), Yc, hard_max, false).f;
      } else {
        f0.middleCols(lo, hi - lo).setConstant(
            net->eval(Arr::Zero(X.rows(), 1), Arr(), hard_max, false).f(0, 0));
      }
    });
    return f - f0;
  }

  Arr price(const Arr& X, const Arr& Y) const {
    Arr p = core(X, Y);
    if (problem && problem->player_cost) p += problem->cost_row(X);
    return p;
  }

  // Price of a batch of outcomes as a tape node (used by the training loss,
  // where the outcomes are fixed samples and theta is differentiated).
  Var price_node(Tape& t, Var x, Var y, bool hard, bool track_params) const {
    Var f = net->forward(t, x, y, hard, track_params);
    const Eigen::Index zcols = net->spec().d_y > 0 ? t.val(x).cols() : 1;
    Var f0 = net->forward(t, t.constant(Arr::Zero(net->spec().d_x, zcols)), y, hard, track_params);
    Var p = t.sub(f, f0);
    if (problem && problem->player_cost) p = t.add(p, t.constant(problem->cost_row(t.val(x))));
    return p;
  }
};

}  // namespace menumax
