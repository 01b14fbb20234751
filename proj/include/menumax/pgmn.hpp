#pragma once

// Partial GroupMax network: f(x, y) convex in x and continuous in (x, y).
//
// Layer k applies an affine map generated from y to the previous convex
// features plus an unconstrained residual map of the raw x, then takes a
// grouped max.  All maps acting on convex features carry positive weights,
// so convexity in x is structural.  The first-layer residual is fixed to
// zero and the residual emitters' biases are discarded.

#include "pan.hpp"
#include "rng.hpp"
#include "tape.hpp"

#include <cmath>
#include <limits>
#include <stdexcept>
#include <string>
#include <vector>

namespace menumax {

struct PgmnSpec {
  int d_x = 1;              // outcome dimension (m)
  int d_y = 0;              // conditioning dimension ((n-1)*m); 0 => single player
  int layers = 1;           // K hidden groupmax layers
  int groups = 8;           // G
  int group_size = 8;       // E
  double soft_beta = 4096;  // inner soft-max temperature; infinity = hard max
  int pan_hidden = 0;       // perceptron width of conditioned affine emitters
  int pan_layers = 2;
  double leaky_slope = 0.01;

  int hidden() const { return groups * group_size; }  // h_x = G * E

  void validate() const {
    if (d_x < 1 || layers < 1 || groups < 1 || group_size < 1)
      throw std::invalid_argument("PgmnSpec: dimensions must be positive");
    if (d_y > 0 && pan_hidden < 1)
      throw std::invalid_argument("PgmnSpec: pan_hidden required with conditioning input");
  }
};

// Per-spec default widths: h_x = 64(m+3) as G = 2(m+3) groups of 32, one
// hidden layer for a single player and two otherwise.
inline PgmnSpec default_pgmn_spec(int n, int m) {
  PgmnSpec s;
  s.d_x = m;
  s.d_y = (n - 1) * m;
  s.layers = (n == 1) ? 1 : 2;
  s.groups = 2 * (m + 3);
  s.group_size = 32;
  s.pan_hidden = 24 * (m + 3);
  return s;
}

class Pgmn {
 public:
  explicit Pgmn(PgmnSpec spec, uint64_t seed = 0) : spec_(spec) {
    spec_.validate();
    const int hx = spec_.hidden();
    PanSpec base;
    base.d_y = spec_.d_y;
    base.hidden = spec_.pan_hidden;
    base.layers = spec_.pan_layers;
    base.leaky_slope = spec_.leaky_slope;

    auto make = [&](int d_in, int d_out, bool positive, const std::string& name) {
      PanSpec ps = base;
      ps.d_in = d_in;
      ps.d_out = d_out;
      ps.positive = positive;
      return Pan(ps, params_, name, seed);
    };
    pan_x_.push_back(make(spec_.d_x, hx, false, "fx0"));
    for (int k = 1; k < spec_.layers; ++k) {
      pan_x_.push_back(make(spec_.groups, hx, true, "fx" + std::to_string(k)));
      pan_r_.push_back(make(spec_.d_x, hx, false, "fr" + std::to_string(k)));
    }
    pan_x_.push_back(make(spec_.groups, 1, true, "fx" + std::to_string(spec_.layers)));
    pan_r_.push_back(make(spec_.d_x, 1, false, "fr" + std::to_string(spec_.layers)));
  }

  const PgmnSpec& spec() const { return spec_; }
  ParamStore& params() { return params_; }
  const ParamStore& params() const { return params_; }

  // f(x, y) for a batch: x (d_x x B), y (d_y x B; invalid when d_y == 0).
  // hard_max selects the evaluation-time exact max; otherwise the soft max at
  // spec.soft_beta is used.  Output is (1 x B).
  Var forward(Tape& tape, Var x, Var y, bool hard_max, bool track_params = true) const {
    if (tape.val(x).rows() != spec_.d_x) throw std::invalid_argument("Pgmn: x dimension mismatch");
    if (spec_.d_y > 0) {
      if (!y.valid() || tape.val(y).rows() != spec_.d_y)
        throw std::invalid_argument("Pgmn: y dimension mismatch");
    }
    ParamStore& store = const_cast<ParamStore&>(params_);
    const int K = spec_.layers;
    Var xk = x;
    for (int k = 1; k <= K; ++k) {
      auto ax = pan_x_[k - 1].emit(tape, store, y, track_params);
      Var h = pan_x_[k - 1].apply(tape, ax, xk);
      if (k > 1) {  // residual on raw x; the first-layer residual is zero
        auto ar = pan_r_[k - 2].emit(tape, store, y, track_params);
        h = tape.add(h, pan_r_[k - 2].apply(tape, ar, x, /*with_bias=*/false));
      }
      xk = reduce(tape, h, hard_max);
    }
    auto af = pan_x_[K].emit(tape, store, y, track_params);
    Var z = pan_x_[K].apply(tape, af, xk);
    auto arf = pan_r_[K - 1].emit(tape, store, y, track_params);
    z = tape.add(z, pan_r_[K - 1].apply(tape, arf, x, /*with_bias=*/false));
    return z;  // (1 x B)
  }

  // ---- fast evaluation path ----
  //
  // The affine maps emitted from the conditioning input are fixed while an
  // outcome is optimized, so they are materialized once ("frozen") and the
  // light x-side computation runs tape-free per solver iteration.

  struct Frozen {
    bool conditioned = false;
    Eigen::Index cols = 0;           // batch width the maps were emitted for
    std::vector<Arr> wx, bx, wr;     // hidden layers 0..K-1 (wr from layer 1)
    Arr fwx, fb, fwr;                // final affine
  };

  Frozen freeze(const Arr& Y) const {
    Frozen fz;
    fz.conditioned = spec_.d_y > 0;
    fz.cols = fz.conditioned ? Y.cols() : 1;
    Tape t;
    Var y = fz.conditioned ? t.constant(Y) : Var{};
    ParamStore& store = const_cast<ParamStore&>(params_);
    const int K = spec_.layers;
    for (int k = 0; k < K; ++k) {
      auto a = pan_x_[k].emit(t, store, y, false);
      fz.wx.push_back(t.val(a.w));
      fz.bx.push_back(t.val(a.b));
      if (k >= 1) fz.wr.push_back(t.val(pan_r_[k - 1].emit(t, store, y, false).w));
    }
    auto af = pan_x_[K].emit(t, store, y, false);
    fz.fwx = t.val(af.w);
    fz.fb = t.val(af.b);
    fz.fwr = t.val(pan_r_[K - 1].emit(t, store, y, false).w);
    return fz;
  }

  // f (1 x B) and optionally df/dx (d_x x B) at X under frozen affine maps.
  void eval_frozen(const Frozen& fz, const Arr& X, bool hard_max, Arr* f, Arr* grad_x) const {
    const int K = spec_.layers, G = spec_.groups, E = spec_.group_size;
    const Eigen::Index w = X.cols();
    const double beta = spec_.soft_beta;
    const bool hard = hard_max || std::isinf(beta);
    if (fz.conditioned && fz.cols != w)
      throw std::invalid_argument("eval_frozen: batch width does not match frozen maps");

    std::vector<Arr> soft_cache(K);
    std::vector<IArr> hard_cache(K);
    Arr prev = X;
    for (int k = 0; k < K; ++k) {
      Arr H = apply_affine(fz.wx[k], &fz.bx[k], prev, fz.conditioned);
      if (k >= 1) H += apply_affine(fz.wr[k - 1], nullptr, X, fz.conditioned);
      Arr red(G, w);
      if (hard) {
        IArr amax(G, w);
        reduce_hard(H, G, E, red, amax);
        hard_cache[k] = std::move(amax);
      } else {
        Arr sm(G * E, w);
        reduce_soft(H, G, E, beta, red, sm);
        soft_cache[k] = std::move(sm);
      }
      prev = std::move(red);
    }
    Arr out = apply_affine(fz.fwx, &fz.fb, prev, fz.conditioned) +
              apply_affine(fz.fwr, nullptr, X, fz.conditioned);
    if (f) *f = out;
    if (!grad_x) return;

    Arr dprev = affine_transpose_apply(fz.fwx, Arr::Ones(1, w), G, fz.conditioned);
    Arr dx = affine_transpose_apply(fz.fwr, Arr::Ones(1, w), spec_.d_x, fz.conditioned);
    for (int k = K - 1; k >= 0; --k) {
      Arr dH(G * E, w);
      if (hard) {
        dH.setZero();
        const IArr& amax = hard_cache[k];
        for (Eigen::Index s = 0; s < w; ++s)
          for (int g = 0; g < G; ++g) dH(g * E + amax(g, s), s) = dprev(g, s);
      } else {
        for (int g = 0; g < G; ++g)
          dH.middleRows(g * E, E) =
              soft_cache[k].middleRows(g * E, E) * dprev.row(g).replicate(E, 1);
      }
      if (k >= 1) {
        dx += affine_transpose_apply(fz.wr[k - 1], dH, spec_.d_x, fz.conditioned);
        dprev = affine_transpose_apply(fz.wx[k], dH, G, fz.conditioned);
      } else {
        dx += affine_transpose_apply(fz.wx[0], dH, spec_.d_x, fz.conditioned);
      }
    }
    *grad_x = std::move(dx);
  }

  struct BatchEval {
    Arr f;       // 1 x B
    Arr grad_x;  // d_x x B when requested
  };
  BatchEval eval(const Arr& X, const Arr& Y, bool hard_max, bool want_grad_x) const {
    Frozen fz = freeze(Y);
    BatchEval out;
    eval_frozen(fz, X, hard_max, &out.f, want_grad_x ? &out.grad_x : nullptr);
    return out;
  }

  double value1(const Arr& x, const Arr& y, bool hard_max) const {
    return eval(x, y, hard_max, false).f(0, 0);
  }

 private:
  Var reduce(Tape& tape, Var h, bool hard_max) const {
    if (hard_max || std::isinf(spec_.soft_beta))
      return tape.group_max(h, spec_.groups, spec_.group_size);
    return tape.group_lse(h, spec_.groups, spec_.group_size, spec_.soft_beta);
  }

  // W x (+ b): W is a plain matrix in direct mode, or per-sample row-major
  // flattened maps (d_out*d_in x w) in conditioned mode.
  static Arr apply_affine(const Arr& W, const Arr* b, const Arr& X, bool conditioned) {
    if (!conditioned) {
      Arr out = (W.matrix() * X.matrix()).array();
      if (b) out += b->replicate(1, X.cols());
      return out;
    }
    const Eigen::Index d_in = X.rows(), d_out = W.rows() / d_in, w = X.cols();
    Arr out(d_out, w);
    for (Eigen::Index s = 0; s < w; ++s) {
      Eigen::Map<const Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>>
          Ws(W.col(s).data(), d_out, d_in);
      out.col(s) = (Ws * X.col(s).matrix()).array();
    }
    if (b) out += *b;
    return out;
  }

  // W^T d for the backward sweep; d_in names the output dimension.
  static Arr affine_transpose_apply(const Arr& W, const Arr& D, Eigen::Index d_in,
                                    bool conditioned) {
    if (!conditioned) return (W.matrix().transpose() * D.matrix()).array();
    const Eigen::Index d_out = D.rows(), w = D.cols();
    Arr out(d_in, w);
    for (Eigen::Index s = 0; s < w; ++s) {
      Eigen::Map<const Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>>
          Ws(W.col(s).data(), d_out, d_in);
      out.col(s) = (Ws.transpose() * D.col(s).matrix()).array();
    }
    return out;
  }

  static void reduce_hard(const Arr& H, int G, int E, Arr& out, IArr& amax) {
    for (Eigen::Index s = 0; s < H.cols(); ++s) {
      const double* col = H.col(s).data();
      for (int g = 0; g < G; ++g) {
        int best = 0;
        double bv = col[g * E];
        for (int e = 1; e < E; ++e)
          if (col[g * E + e] > bv) { bv = col[g * E + e]; best = e; }
        out(g, s) = bv;
        amax(g, s) = best;
      }
    }
  }

  static void reduce_soft(const Arr& H, int G, int E, double beta, Arr& out, Arr& softmax) {
    const Eigen::Index w = H.cols();
    Arr rep(G * E, w);
    for (int g = 0; g < G; ++g) {
      out.row(g) = H.middleRows(g * E, E).colwise().maxCoeff();
      rep.middleRows(g * E, E) = out.row(g).replicate(E, 1);
    }
    softmax = ((H - rep) * beta).exp();
    Arr sums(G, w);
    for (int g = 0; g < G; ++g) {
      sums.row(g) = softmax.middleRows(g * E, E).colwise().sum();
      rep.middleRows(g * E, E) = sums.row(g).replicate(E, 1);
    }
    softmax /= rep;
    out += sums.log() / beta;
  }

  PgmnSpec spec_;
  ParamStore params_;
  std::vector<Pan> pan_x_;  // layers 0..K (emitters of W^x_k, b_k)
  std::vector<Pan> pan_r_;  // layers 1..K (residual emitters, bias unused)
};

}  // namespace menumax
