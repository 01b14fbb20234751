#pragma once

// Mechanism-design problem instances: type distributions, player utilities
// with an optional cost term, and the designer utilities of the supported
// auction settings (reproducible goods, reverse indivisible / divisible).

#include "rng.hpp"
#include "tape.hpp"

#include <cstdint>
#include <functional>
#include <stdexcept>
#include <string>

namespace menumax {

enum class Dist { kUniform, kBernoulli, kCorrelated };
enum class ReverseMode { kNone, kIndivisible, kDivisible };

inline const char* to_string(Dist d) {
  switch (d) {
    case Dist::kUniform: return "uniform";
    case Dist::kBernoulli: return "bernoulli";
    case Dist::kCorrelated: return "correlated";
  }
  return "?";
}

inline const char* to_string(ReverseMode r) {
  switch (r) {
    case ReverseMode::kNone: return "none";
    case ReverseMode::kIndivisible: return "indivisible";
    case ReverseMode::kDivisible: return "divisible";
  }
  return "?";
}

struct MechanismProblem {
  int n = 1;
  int m = 1;
  Dist dist = Dist::kUniform;
  double c_prod = 0.0;  // one-time production cost per good
  double c_dup = 0.0;   // duplication cost per allocated unit
  ReverseMode reverse = ReverseMode::kNone;
  double buyer_value = 1.0;  // v_j for reverse auctions

  // Player cost c_i(x_i), normalized to c(0) = 0; empty means identically 0.
  // Shared across players, matching the shared pricing network.
  std::function<double(const Eigen::Ref<const Eigen::VectorXd>&)> player_cost;

  double type_lo() const { return reverse == ReverseMode::kNone ? 0.0 : -1.0; }
  double type_hi() const { return reverse == ReverseMode::kNone ? 1.0 : 0.0; }

  void validate() const {
    if (n < 1 || m < 1) throw std::invalid_argument("problem: n and m must be positive");
    if (c_prod < 0 || c_dup < 0) throw std::invalid_argument("problem: costs must be nonnegative");
    if (reverse != ReverseMode::kNone && dist != Dist::kUniform)
      throw std::invalid_argument("problem: reverse settings use uniform costs");
  }

  // Cost values for a batch of outcomes, as a (1 x B) row.
  Arr cost_row(const Arr& X) const {
    Arr out = Arr::Zero(1, X.cols());
    if (player_cost)
      for (Eigen::Index s = 0; s < X.cols(); ++s) out(0, s) = player_cost(X.matrix().col(s));
    return out;
  }
};

// Compact setting id in the F^{cp,cd}_{n,m} style, e.g. "B_1_10" or
// "U_3_10:cp=1" — see config.hpp for the parser.
inline std::string setting_id(const MechanismProblem& p) {
  std::string s;
  s += (p.dist == Dist::kUniform ? "U" : p.dist == Dist::kBernoulli ? "B" : "C");
  s += "_" + std::to_string(p.n) + "_" + std::to_string(p.m);
  if (p.c_prod != 0) s += ":cp=" + std::to_string(p.c_prod);
  if (p.c_dup != 0) s += ":cd=" + std::to_string(p.c_dup);
  if (p.reverse == ReverseMode::kIndivisible) s += ":rev=indivisible";
  if (p.reverse == ReverseMode::kDivisible) s += ":rev=divisible";
  return s;
}

// ---------------------------------------------------------------------------
// Type sampling.  Profile k occupies column k with row layout i*m + j.
// Draw (k, i, j) is addressed by a fixed counter, so profiles are identical
// for a given seed regardless of chunking or thread count.
// ---------------------------------------------------------------------------

inline Arr sample_types(const MechanismProblem& p, long count, uint64_t seed,
                        uint64_t stream = Streams::kTypeSamples) {
  if (count < 1) throw std::invalid_argument("sample_types: count must be >= 1");
  CounterRng rng(seed, stream);
  Arr t(static_cast<Eigen::Index>(p.n) * p.m, count);
  constexpr uint64_t kCenterTag = 255;  // player slot reserved for shared centers
  for (long k = 0; k < count; ++k) {
    for (int j = 0; j < p.m; ++j) {
      double center = 0.0;
      if (p.dist == Dist::kCorrelated)
        center = rng.uniform(pack4(static_cast<uint64_t>(k), kCenterTag,
                                   static_cast<uint64_t>(j), 0),
                             0.25, 0.75);
      for (int i = 0; i < p.n; ++i) {
        const uint64_t c = pack4(static_cast<uint64_t>(k), static_cast<uint64_t>(i),
                                 static_cast<uint64_t>(j), 0);
        double v = 0.0;
        switch (p.dist) {
          case Dist::kUniform: v = rng.uniform(c, p.type_lo(), p.type_hi()); break;
          case Dist::kBernoulli: v = rng.bernoulli01(c); break;
          case Dist::kCorrelated: v = rng.uniform(c, center - 0.25, center + 0.25); break;
        }
        t(i * p.m + j, k) = v;
      }
    }
  }
  return t;
}

// ---------------------------------------------------------------------------
// Utilities.
// ---------------------------------------------------------------------------

// u_i = <x_i, t_i> + c_i(x_i) - p_i.
inline double player_utility(const MechanismProblem& p, const Eigen::Ref<const Eigen::VectorXd>& x_i,
                             double p_i, const Eigen::Ref<const Eigen::VectorXd>& t_i) {
  double u = x_i.dot(t_i) - p_i;
  if (p.player_cost) u += p.player_cost(x_i);
  return u;
}

// Designer utility as a differentiable node over a batch: x (n*m x B),
// pay (n x B), both tape vars; returns (1 x B).
inline Var designer_utility_node(Tape& t, const MechanismProblem& p, Var x, Var pay) {
  Var psum = t.col_sum(pay);
  switch (p.reverse) {
    case ReverseMode::kNone: {
      Var u = psum;
      if (p.c_prod != 0.0)
        u = t.sub(u, t.scale(t.col_sum(t.strided_max(x, p.n, p.m)), p.c_prod));
      if (p.c_dup != 0.0)
        u = t.sub(u, t.scale(t.col_sum(t.strided_sum(x, p.n, p.m)), p.c_dup));
      return u;
    }
    case ReverseMode::kIndivisible: {
      Var k = t.clamp(t.strided_sum(x, p.n, p.m), -std::numeric_limits<double>::infinity(), 1.0);
      return t.add(psum, t.scale(t.col_sum(k), p.buyer_value));
    }
    case ReverseMode::kDivisible: {
      const double v = p.buyer_value;
      Var e = t.exp(t.scale(t.strided_sum(x, p.n, p.m), -1.0 / v));
      Var gain = t.add(t.scale(t.col_sum(e), -v), t.scalar(v * p.m));
      return t.add(psum, gain);
    }
  }
  throw std::invalid_argument("designer_utility: unknown setting");
}

// Plain-value version for evaluation paths.
inline Arr designer_utility_value(const MechanismProblem& p, const Arr& x, const Arr& pay) {
  Tape t;
  return t.val(designer_utility_node(t, p, t.constant(x), t.constant(pay)));
}

}  // namespace menumax
