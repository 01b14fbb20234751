#pragma once

// Batched inference solver: per column s, maximize the concave objective
//   g_s(x) = <t_s, x> - q_s(x)   over the box [0,1]^m
// by projected gradient ascent with momentum and a geometrically decayed
// step.  Columns are independent; chunks run in parallel and the chunk size
// is fixed, so results do not depend on the thread count.

#include "parallel.hpp"
#include "pricing.hpp"

#include <functional>
#include <stdexcept>

namespace menumax {

struct SolverConfig {
  int iters = 5000;
  double momentum = 0.9;
  double lr_init = 0.2;
  double lr_final = 3e-4;
  // Early exit once the chunk's objective stops moving and the unit-step
  // projected gradient is below tol (both checked periodically).
  bool early_stop = true;
  double tol = 1e-7;
  double plateau_tol = 1e-11;
  int check_every = 50;
  // Conditional-gradient finishing steps (vertex direction + line search);
  // these handle near-flat directions whose gradients are too small for the
  // decayed schedule to traverse the box.
  int fw_steps = 6;
  // Momentum-free endgame with halving steps; settles onto stiff ridges the
  // momentum phase only orbits (the soft-max curvature scale is ~beta).
  int polish_steps = 200;
  // Indifference handling: after convergence, raise any coordinate to 1 when
  // doing so costs no utility (ties break toward the larger allocation).
  bool tie_break_up = true;
  double tie_tol = 1e-9;
};

// Shorter schedule for large evaluation sweeps; results agree with the
// default schedule to well under the 1e-6 utility contract (see tests).
inline SolverConfig eval_solver_config() {
  SolverConfig cfg;
  cfg.iters = 1000;
  cfg.lr_final = 1e-4;
  cfg.polish_steps = 250;
  return cfg;
}

// Evaluator of the convex part q over one chunk: fills q (1 x w) and, when
// grad is non-null, dq/dx (m x w).  The factory runs once per chunk, so
// chunk-lifetime work (freezing the conditioning-generated affine maps)
// happens once rather than per solver iteration.
using ChunkEvalFn = std::function<void(const Arr& X, Arr* q, Arr* grad)>;
using ConvexPartFactory = std::function<ChunkEvalFn(Eigen::Index lo, Eigen::Index w)>;

struct SolveResult {
  Arr x;        // m x B maximizer
  Arr q;        // 1 x B convex part at x
  Arr obj;      // 1 x B achieved <t,x> - q(x)
  double cert;  // max over columns of the projected-gradient sup norm
};

inline SolveResult maximize_batch(const ConvexPartFactory& make_eval, const Arr& T,
                                  const SolverConfig& cfg, const Arr* warm_start = nullptr) {
  const Eigen::Index m = T.rows(), B = T.cols();
  SolveResult res;
  res.x = warm_start ? *warm_start : Arr::Constant(m, B, 0.5);
  res.q = Arr(1, B);
  res.obj = Arr(1, B);
  Arr certs = Arr::Zero(1, (B + kChunkCols - 1) / kChunkCols);

  const double decay = cfg.iters > 1 ? std::pow(cfg.lr_final / cfg.lr_init,
                                                1.0 / static_cast<double>(cfg.iters - 1))
                                     : 1.0;

  parallel_chunks(B, [&](Eigen::Index lo, Eigen::Index hi) {
    const Eigen::Index w = hi - lo;
    ChunkEvalFn eval = make_eval(lo, w);
    Arr X = res.x.middleCols(lo, w);
    const Arr Tc = T.middleCols(lo, w);
    Arr V = Arr::Zero(m, w);
    Arr q(1, w), gq(m, w);
    Arr prev_obj;
    double lr = cfg.lr_init;
    for (int it = 0; it < cfg.iters; ++it, lr *= decay) {
      const bool check = cfg.early_stop && it % cfg.check_every == 0;
      eval(X, check ? &q : nullptr, &gq);
      Arr g = Tc - gq;
      if (!g.allFinite())
        throw std::runtime_error("best_response: non-finite utility gradient at iteration " +
                                 std::to_string(it));
      if (check) {
        const double pg = ((X + g).max(0.0).min(1.0) - X).abs().maxCoeff();
        if (pg <= cfg.tol) break;
        Arr obj = (Tc * X).colwise().sum() - q;
        if (prev_obj.size() && (obj - prev_obj).abs().maxCoeff() <= cfg.plateau_tol) break;
        prev_obj = std::move(obj);
      }
      V = cfg.momentum * V + g;
      X = (X + lr * V).max(0.0).min(1.0);
    }
    // Conditional-gradient refinement: flat directions of the objective make
    // gradient steps arbitrarily slow, but a step toward the best box vertex
    // with an exact line search reaches the face in one move.
    for (int k = 0; k < cfg.fw_steps; ++k) {
      eval(X, nullptr, &gq);
      Arr g = Tc - gq;
      Arr D = (g > 0.0).select(Arr::Ones(m, w), Arr::Zero(m, w)) - X;  // s - x
      Arr gap = (g * D).colwise().sum();
      if ((gap <= cfg.tol).all()) break;
      // bisection on the directional derivative along D (concave in tau)
      Arr tlo = Arr::Zero(1, w), thi = Arr::Ones(1, w);
      eval((X + D).eval(), nullptr, &gq);
      Arr dphi1 = ((Tc - gq) * D).colwise().sum();
      Arr tau = (dphi1 >= 0.0).select(thi, 0.5 * (tlo + thi));
      Arr active = (dphi1 < 0.0).cast<double>() * (gap > cfg.tol).cast<double>();
      for (int b = 0; b < 30 && active.maxCoeff() > 0; ++b) {
        Arr Xt = X + D * tau.replicate(m, 1);
        eval(Xt, nullptr, &gq);
        Arr dphi = ((Tc - gq) * D).colwise().sum();
        for (Eigen::Index s = 0; s < w; ++s) {
          if (active(0, s) == 0.0) continue;
          if (dphi(0, s) > 0) tlo(0, s) = tau(0, s);
          else thi(0, s) = tau(0, s);
          tau(0, s) = 0.5 * (tlo(0, s) + thi(0, s));
        }
      }
      // only accept moves for columns with a positive gap
      for (Eigen::Index s = 0; s < w; ++s)
        if (gap(0, s) <= cfg.tol) tau(0, s) = 0.0;
      X = (X + D * tau.replicate(m, 1)).max(0.0).min(1.0);
    }
    // momentum-free polish with halving steps settles stiff smooth ridges
    double plr = cfg.lr_final;
    for (int k = 0; k < cfg.polish_steps; ++k) {
      eval(X, nullptr, &gq);
      if (k % 25 == 0) {
        const double pg = ((X + (Tc - gq)).max(0.0).min(1.0) - X).abs().maxCoeff();
        if (pg <= cfg.tol) break;
        if (k > 0) plr *= 0.5;
      }
      X = (X + plr * (Tc - gq)).max(0.0).min(1.0);
    }
    eval(X, &q, &gq);
    if (cfg.tie_break_up) {
      Arr obj = (Tc * X).colwise().sum() - q;
      for (Eigen::Index j = 0; j < m; ++j) {
        Arr Xtry = X;
        Xtry.row(j).setOnes();
        Arr qtry(1, w);
        eval(Xtry, &qtry, nullptr);
        Arr objtry = (Tc * Xtry).colwise().sum() - qtry;
        for (Eigen::Index s = 0; s < w; ++s)
          if (objtry(0, s) >= obj(0, s) - cfg.tie_tol && Xtry(j, s) > X(j, s)) {
            X(j, s) = 1.0;
            obj(0, s) = objtry(0, s);
            q(0, s) = qtry(0, s);
          }
      }
      eval(X, &q, &gq);
    }
    const Arr pg = ((X + (Tc - gq)).max(0.0).min(1.0) - X);
    certs(0, lo / kChunkCols) = pg.abs().maxCoeff();
    res.x.middleCols(lo, w) = X;
    res.q.middleCols(lo, w) = q;
    res.obj.middleCols(lo, w) = (Tc * X).colwise().sum() - q;
  });
  res.cert = certs.maxCoeff();
  return res;
}

// Convex part of a pricing rule: freezes the conditioning-generated affine
// maps for the chunk once, then evaluates f(x,y) - f(0,y) per call.
inline ConvexPartFactory pricing_core_fn(const PricingRule& rule, const Arr& Y) {
  return [&rule, Y](Eigen::Index lo, Eigen::Index w) -> ChunkEvalFn {
    const bool conditioned = rule.net->spec().d_y > 0;
    auto fz = std::make_shared<Pgmn::Frozen>(
        rule.net->freeze(conditioned ? Y.middleCols(lo, w).eval() : Arr()));
    const int m = rule.net->spec().d_x;
    Arr f0;
    rule.net->eval_frozen(*fz, Arr::Zero(m, conditioned ? w : 1), rule.hard_max, &f0, nullptr);
    return [&rule, fz, f0](const Arr& X, Arr* q, Arr* grad) {
      Arr f;
      rule.net->eval_frozen(*fz, X, rule.hard_max, q ? &f : nullptr, grad);
      if (q) *q = f0.cols() == f.cols() ? (f - f0).eval() : (f - f0(0, 0)).eval();
    };
  };
}

// Best response of one player: outcome, price and achieved utility.
struct BestResponse {
  Arr x;        // m x B
  Arr price;    // 1 x B
  Arr utility;  // 1 x B
  double cert;
};

inline BestResponse best_response_batch(const PricingRule& rule, const Arr& T, const Arr& Y,
                                        const SolverConfig& cfg, const Arr* warm = nullptr) {
  SolveResult sr = maximize_batch(pricing_core_fn(rule, Y), T, cfg, warm);
  BestResponse br;
  br.x = std::move(sr.x);
  br.cert = sr.cert;
  br.price = sr.q;
  br.utility = sr.obj;  // cost terms cancel between valuation and price
  if (rule.problem && rule.problem->player_cost) br.price += rule.problem->cost_row(br.x);
  return br;
}

inline BestResponse best_response(const PricingRule& rule, const Eigen::VectorXd& t_i,
                                  const Arr& t_minus, const SolverConfig& cfg) {
  Arr T(t_i.size(), 1);
  T.col(0) = t_i.array();
  return best_response_batch(rule, T, t_minus, cfg);
}

}  // namespace menumax
