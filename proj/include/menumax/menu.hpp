#pragma once

// Menu mechanisms over a shared pricing network: per-player best responses,
// Monte-Carlo evaluation of the designer's expected utility, and a regret
// estimator probing truthfulness of the induced direct mechanism.

#include "best_response.hpp"
#include "pricing.hpp"
#include "problem.hpp"
#include "rng.hpp"

#include <functional>
#include <map>
#include <memory>
#include <numeric>
#include <vector>

namespace menumax {

// Rows of profile matrix T belonging to everyone but player i, keeping the
// (t_1, ..., t_{i-1}, t_{i+1}, ..., t_n) ordering.
inline Arr conditioning_block(const Arr& T, int n, int m, int player) {
  Arr Y(static_cast<Eigen::Index>(n - 1) * m, T.cols());
  Eigen::Index r = 0;
  for (int i = 0; i < n; ++i) {
    if (i == player) continue;
    Y.middleRows(r, m) = T.middleRows(static_cast<Eigen::Index>(i) * m, m);
    r += m;
  }
  return Y;
}

struct MenuOutcome {
  Arr x;  // n*m x B allocations
  Arr p;  // n x B payments
  Arr u;  // n x B achieved player utilities
  double cert = 0.0;
};

// Runs the menu mechanism on a batch of (reported) profiles: every player
// independently picks her utility-maximizing bundle given the others' types.
inline MenuOutcome run_menu_mechanism(const PricingRule& rule, const Arr& T,
                                      const SolverConfig& cfg) {
  const int n = rule.problem->n, m = rule.problem->m;
  MenuOutcome out;
  out.x = Arr(static_cast<Eigen::Index>(n) * m, T.cols());
  out.p = Arr(n, T.cols());
  out.u = Arr(n, T.cols());
  for (int i = 0; i < n; ++i) {
    const Arr Y = n > 1 ? conditioning_block(T, n, m, i) : Arr();
    const Arr Ti = T.middleRows(static_cast<Eigen::Index>(i) * m, m);
    BestResponse br = best_response_batch(rule, Ti, Y, cfg);
    out.x.middleRows(static_cast<Eigen::Index>(i) * m, m) = br.x;
    out.p.row(i) = br.price;
    out.u.row(i) = br.utility;
    out.cert = std::max(out.cert, br.cert);
  }
  return out;
}

// ---------------------------------------------------------------------------
// Expected designer utility.
// ---------------------------------------------------------------------------

struct EvalStats {
  double mean = 0.0;
  double std_err = 0.0;
  long samples = 0;
  long ir_violations = 0;  // count of u_i < -1e-6 across players and samples
  double solver_cert = 0.0;
  Arr u0;  // 1 x N per-sample designer utilities
};

// Deduplicates identical profile columns (exact bit match); discrete type
// distributions collapse to a handful of distinct best-response problems.
inline std::pair<Arr, std::vector<Eigen::Index>> unique_columns(const Arr& T) {
  std::map<std::vector<double>, Eigen::Index> seen;
  std::vector<Eigen::Index> remap(T.cols());
  std::vector<Eigen::Index> keep;
  for (Eigen::Index s = 0; s < T.cols(); ++s) {
    std::vector<double> key(T.col(s).data(), T.col(s).data() + T.rows());
    auto [it, fresh] = seen.emplace(std::move(key), static_cast<Eigen::Index>(keep.size()));
    if (fresh) keep.push_back(s);
    remap[s] = it->second;
  }
  Arr U(T.rows(), static_cast<Eigen::Index>(keep.size()));
  for (std::size_t k = 0; k < keep.size(); ++k) U.col(k) = T.col(keep[k]);
  return {U, remap};
}

inline EvalStats expected_utility(const PricingRule& rule, long n_samples, uint64_t seed,
                                  const SolverConfig& cfg,
                                  uint64_t stream = Streams::kEvaluation) {
  const MechanismProblem& prob = *rule.problem;
  Arr T = sample_types(prob, n_samples, seed, stream);
  auto [U, remap] = unique_columns(T);
  MenuOutcome mo = run_menu_mechanism(rule, U, cfg);

  const int n = prob.n, m = prob.m;
  Arr X(static_cast<Eigen::Index>(n) * m, n_samples), P(n, n_samples), Uu(n, n_samples);
  for (long s = 0; s < n_samples; ++s) {
    X.col(s) = mo.x.col(remap[s]);
    P.col(s) = mo.p.col(remap[s]);
    Uu.col(s) = mo.u.col(remap[s]);
  }
  EvalStats st;
  st.u0 = designer_utility_value(prob, X, P);
  st.samples = n_samples;
  st.mean = st.u0.mean();
  const double var = (st.u0 - st.mean).square().sum() / std::max<long>(1, n_samples - 1);
  st.std_err = std::sqrt(var / static_cast<double>(n_samples));
  st.ir_violations = (Uu < -1e-6).count();
  st.solver_cert = mo.cert;
  return st;
}

// ---------------------------------------------------------------------------
// Regret estimation.
// ---------------------------------------------------------------------------

// Outcome and payment of one player for a batch of reported profiles.
using PlayerOutcomeFn =
    std::function<void(int player, const Arr& reported, Arr& x_i, Arr& p_i)>;

// The direct mechanism induced by a menu mechanism.  Keeps a warm-start
// cache per (player, batch width): regret search evaluates the same batch
// under tiny report perturbations, where the previous optimum is an
// excellent initial point for the concave solver.
inline PlayerOutcomeFn menu_player_outcome(const PricingRule& rule, const SolverConfig& cfg) {
  auto cache = std::make_shared<std::map<std::pair<int, Eigen::Index>, Arr>>();
  return [&rule, cfg, cache](int player, const Arr& reported, Arr& x_i, Arr& p_i) {
    const int n = rule.problem->n, m = rule.problem->m;
    const Arr Y = n > 1 ? conditioning_block(reported, n, m, player) : Arr();
    const Arr Ti = reported.middleRows(static_cast<Eigen::Index>(player) * m, m);
    auto key = std::make_pair(player, reported.cols());
    auto it = cache->find(key);
    BestResponse br = best_response_batch(rule, Ti, Y, cfg,
                                          it != cache->end() ? &it->second : nullptr);
    (*cache)[key] = br.x;
    x_i = std::move(br.x);
    p_i = std::move(br.price);
  };
}

struct RegretStats {
  double max_regret = 0.0;
  double mean_regret = 0.0;
  long profiles = 0;
};

struct RegretConfig {
  int restarts = 8;
  int ga_steps = 30;
  double lr_init = 0.1;
  double lr_final = 0.01;
  double momentum = 0.9;
  double fd_step = 1e-4;
};

// Lower-bound regret estimate: for each sampled profile and player, searches
// for a profitable misreport by multi-restart projected gradient ascent on
// the misreport utility (gradients by central differences through the
// mechanism).  Restart 0 starts at the truthful report.
inline RegretStats estimate_regret(const PlayerOutcomeFn& mech, const MechanismProblem& prob,
                                   long n_profiles, uint64_t seed, const RegretConfig& rc = {}) {
  const int n = prob.n, m = prob.m;
  const double lo = prob.type_lo(), hi = prob.type_hi();
  Arr T = sample_types(prob, n_profiles, seed, Streams::kRegret);
  CounterRng rng(seed, Streams::kRegret + 100);

  RegretStats rs;
  rs.profiles = n_profiles;
  Arr regret = Arr::Zero(n, n_profiles);

  for (int i = 0; i < n; ++i) {
    const Arr Ti = T.middleRows(static_cast<Eigen::Index>(i) * m, m);
    Arr x_true, p_true;
    mech(i, T, x_true, p_true);
    Arr u_true = (Ti * x_true).colwise().sum() - p_true;
    if (prob.player_cost) u_true += prob.cost_row(x_true);

    // candidate misreports: n_profiles * restarts columns
    const Eigen::Index W = n_profiles * rc.restarts;
    Arr C(m, W);
    for (long s = 0; s < n_profiles; ++s)
      for (int r = 0; r < rc.restarts; ++r) {
        const Eigen::Index col = s * rc.restarts + r;
        if (r == 0) {
          C.col(col) = Ti.col(s);
        } else {
          for (int j = 0; j < m; ++j)
            C(j, col) = rng.uniform(pack4(static_cast<uint64_t>(s), static_cast<uint64_t>(i),
                                          static_cast<uint64_t>(j), static_cast<uint64_t>(r)),
                                    lo, hi);
        }
      }
    Arr reported(static_cast<Eigen::Index>(n) * m, W);
    for (long s = 0; s < n_profiles; ++s)
      for (int r = 0; r < rc.restarts; ++r) reported.col(s * rc.restarts + r) = T.col(s);
    Arr Ti_true = reported.middleRows(static_cast<Eigen::Index>(i) * m, m);

    auto misreport_utility = [&](const Arr& cand) {
      reported.middleRows(static_cast<Eigen::Index>(i) * m, m) = cand;
      Arr x, p;
      mech(i, reported, x, p);
      Arr u = (Ti_true * x).colwise().sum() - p;
      if (prob.player_cost) u += prob.cost_row(x);
      return u;
    };

    Arr V = Arr::Zero(m, W);
    const double decay = rc.ga_steps > 1
                             ? std::pow(rc.lr_final / rc.lr_init, 1.0 / (rc.ga_steps - 1))
                             : 1.0;
    double lr = rc.lr_init;
    for (int step = 0; step < rc.ga_steps; ++step, lr *= decay) {
      Arr g(m, W);
      for (int j = 0; j < m; ++j) {
        Arr Cp = C, Cm = C;
        Cp.row(j) = (C.row(j) + rc.fd_step).min(hi);
        Cm.row(j) = (C.row(j) - rc.fd_step).max(lo);
        const Arr up = misreport_utility(Cp);
        const Arr um = misreport_utility(Cm);
        g.row(j) = (up - um) / (Cp.row(j) - Cm.row(j)).max(1e-12);
      }
      V = rc.momentum * V + g;
      C = (C + lr * V).max(lo).min(hi);
    }
    const Arr u_mis = misreport_utility(C);
    for (long s = 0; s < n_profiles; ++s) {
      double best = -1e300;
      for (int r = 0; r < rc.restarts; ++r)
        best = std::max(best, u_mis(0, s * rc.restarts + r));
      regret(i, s) = std::max(0.0, best - u_true(0, s));
    }
  }
  rs.max_regret = regret.maxCoeff();
  rs.mean_regret = regret.mean();
  return rs;
}

}  // namespace menumax
