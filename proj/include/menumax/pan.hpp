#pragma once

// Parameterized affine network: emits the weight matrix and bias of an affine
// transform as a function of a conditioning vector y.  With d_y == 0 (single
// player, no conditioning) the transform parameters are held directly.
//
// When `positive` is set the emitted matrix passes through softplus, so every
// entry is strictly positive for every y.  Positive outputs are rescaled by
// 1/d_in (and by a further 1/sqrt(d_in) in direct mode) to keep activation
// magnitudes of order one at initialization.

#include "rng.hpp"
#include "tape.hpp"

#include <cmath>
#include <string>
#include <vector>

namespace menumax {

struct PanSpec {
  int d_y = 0;
  int d_in = 1;
  int d_out = 1;
  bool positive = false;
  int hidden = 0;   // perceptron width; required when d_y > 0
  int layers = 2;   // perceptron depth
  double leaky_slope = 0.01;
};

class Pan {
 public:
  // Emitted (W, b) as tape vars.  Conditioned mode returns W flattened
  // row-major with one column per sample: (d_out*d_in x B) and (d_out x B).
  struct Affine {
    Var w;
    Var b;
  };

  Pan() = default;

  Pan(const PanSpec& spec, ParamStore& store, const std::string& prefix, uint64_t seed)
      : spec_(spec) {
    if (spec_.d_y > 0 && spec_.hidden <= 0)
      throw std::invalid_argument("Pan: conditioned mode needs hidden > 0");
    int pidx = 0;
    auto init = [&](int rows, int cols, int fan_in) {
      const uint64_t stream = (Streams::kNetInit << 40) ^ hash_name(prefix) ^ static_cast<uint64_t>(pidx++);
      CounterRng rng(seed, stream);
      const double bound = 1.0 / std::sqrt(static_cast<double>(fan_in));
      Arr a(rows, cols);
      for (Eigen::Index k = 0; k < a.size(); ++k)
        a.data()[k] = rng.uniform(static_cast<uint64_t>(k), -bound, bound);
      return a;
    };
    if (spec_.d_y == 0) {
      w_direct_ = store.add(prefix + ".W", init(spec_.d_out, spec_.d_in, spec_.d_in));
      b_direct_ = store.add(prefix + ".b", init(spec_.d_out, 1, spec_.d_in));
    } else {
      int in = spec_.d_y;
      for (int l = 0; l < spec_.layers; ++l) {
        mlp_w_.push_back(store.add(prefix + ".mlp" + std::to_string(l) + ".W",
                                   init(spec_.hidden, in, in)));
        mlp_b_.push_back(store.add(prefix + ".mlp" + std::to_string(l) + ".b",
                                   init(spec_.hidden, 1, in)));
        in = spec_.hidden;
      }
      head_w_w_ = store.add(prefix + ".headW.W", init(spec_.d_out * spec_.d_in, in, in));
      head_w_b_ = store.add(prefix + ".headW.b", init(spec_.d_out * spec_.d_in, 1, in));
      head_b_w_ = store.add(prefix + ".headb.W", init(spec_.d_out, in, in));
      head_b_b_ = store.add(prefix + ".headb.b", init(spec_.d_out, 1, in));
    }
  }

  const PanSpec& spec() const { return spec_; }

  // Build (W, b) on the tape.  `y` is ignored in direct mode.  With
  // track_params == false the parameters enter as constants, so backward
  // passes touch no ParamStore gradients (used for outcome-only gradients).
  Affine emit(Tape& tape, ParamStore& store, Var y, bool track_params) const {
    auto p = [&](int idx) -> Var {
      return track_params ? tape.param(store, idx) : tape.constant(store.entries[idx].value);
    };
    if (spec_.d_y == 0) {
      Var w = p(w_direct_);
      if (spec_.positive) {
        const double s = 1.0 / (spec_.d_in * std::sqrt(static_cast<double>(spec_.d_in)));
        w = tape.scale(tape.softplus(w), s);
      }
      return {w, p(b_direct_)};
    }
    if (!y.valid()) throw std::invalid_argument("Pan: conditioning input required");
    Var h = y;
    for (std::size_t l = 0; l < mlp_w_.size(); ++l)
      h = tape.leaky_relu(tape.add(tape.matmul(p(mlp_w_[l]), h), p(mlp_b_[l])), spec_.leaky_slope);
    Var wflat = tape.add(tape.matmul(p(head_w_w_), h), p(head_w_b_));
    if (spec_.positive) wflat = tape.scale(tape.softplus(wflat), 1.0 / spec_.d_in);
    Var b = tape.add(tape.matmul(p(head_b_w_), h), p(head_b_b_));
    return {wflat, b};
  }

  // Apply the emitted transform to x, both modes: returns W(y) x (+ b).
  Var apply(Tape& tape, const Affine& a, Var x, bool with_bias = true) const {
    if (spec_.d_y == 0) {
      Var h = tape.matmul(a.w, x);
      return with_bias ? tape.add(h, a.b) : h;
    }
    return tape.pan_apply(a.w, x, with_bias ? a.b : Var{}, spec_.d_out, spec_.d_in);
  }

 private:
  static uint64_t hash_name(const std::string& s) {
    uint64_t h = 1469598103934665603ull;
    for (char c : s) h = (h ^ static_cast<unsigned char>(c)) * 1099511628211ull;
    return h & 0xFFFFFFFFull;
  }

  PanSpec spec_;
  int w_direct_ = -1, b_direct_ = -1;
  std::vector<int> mlp_w_, mlp_b_;
  int head_w_w_ = -1, head_w_b_ = -1, head_b_w_ = -1, head_b_b_ = -1;
};

}  // namespace menumax
