#pragma once

// Reverse-mode differentiation over dense 64-bit arrays.
//
// A Tape is a define-by-run graph rebuilt per forward pass.  Node values are
// Eigen arrays of shape (rows x cols); by convention columns index a batch of
// independent samples, so one tape evaluates and differentiates a whole batch
// at once.  backward() runs from a 1x1 root and accumulates both per-node
// adjoints (for input gradients) and parameter gradients (into ParamStore).
//
// Each tape is confined to one thread; parameter values are only read during
// a pass, so independent tapes over disjoint batches may run concurrently.

#include <Eigen/Dense>

#include <cmath>
#include <cstdint>
#include <limits>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

namespace menumax {

using Arr = Eigen::ArrayXXd;
using IArr = Eigen::ArrayXXi;

// Ordered, named parameter arrays (theta) with matching gradient slots.
// The set of parameters is fixed once a network has been constructed.
struct ParamStore {
  struct Entry {
    std::string name;
    Arr value;
    Arr grad;
  };
  std::vector<Entry> entries;

  int add(std::string name, Arr init) {
    entries.push_back({std::move(name), std::move(init), Arr()});
    auto& e = entries.back();
    e.grad = Arr::Zero(e.value.rows(), e.value.cols());
    return static_cast<int>(entries.size()) - 1;
  }

  void zero_grads() {
    for (auto& e : entries) e.grad.setZero();
  }

  std::size_t scalar_count() const {
    std::size_t n = 0;
    for (const auto& e : entries) n += static_cast<std::size_t>(e.value.size());
    return n;
  }

  // Flat views used by the optimizer and by finite-difference oracles.
  std::vector<double> flatten() const {
    std::vector<double> out;
    out.reserve(scalar_count());
    for (const auto& e : entries)
      out.insert(out.end(), e.value.data(), e.value.data() + e.value.size());
    return out;
  }
  std::vector<double> flatten_grads() const {
    std::vector<double> out;
    out.reserve(scalar_count());
    for (const auto& e : entries)
      out.insert(out.end(), e.grad.data(), e.grad.data() + e.grad.size());
    return out;
  }
  void unflatten(const std::vector<double>& flat) {
    if (flat.size() != scalar_count()) throw std::invalid_argument("ParamStore::unflatten: size mismatch");
    std::size_t k = 0;
    for (auto& e : entries) {
      std::copy(flat.begin() + k, flat.begin() + k + e.value.size(), e.value.data());
      k += e.value.size();
    }
  }
};

struct Var {
  int i = -1;
  bool valid() const { return i >= 0; }
};

class Tape {
 public:
  enum class Op : uint8_t {
    kConstant,
    kInput,
    kParam,
    kAdd,
    kSub,
    kMul,
    kScale,
    kMatMul,
    kPanApply,
    kInner,
    kSumAll,
    kColSum,
    kGroupLse,
    kGroupMax,
    kStridedMax,
    kStridedSum,
    kSoftplus,
    kLeakyRelu,
    kExp,
    kClamp,
    kStopGradient,
  };

  // ---- leaves ----

  Var constant(Arr v) { return push(Op::kConstant, std::move(v)); }

  Var scalar(double v) {
    Arr a(1, 1);
    a(0, 0) = v;
    return push(Op::kConstant, std::move(a));
  }

  // Leaf whose adjoint is wanted after backward (e.g. an outcome vector).
  Var input(Arr v) { return push(Op::kInput, std::move(v)); }

  Var param(ParamStore& store, int idx) {
    Var v = push(Op::kParam, store.entries.at(idx).value);
    nodes_[v.i].store = &store;
    nodes_[v.i].store_idx = idx;
    return v;
  }

  // ---- arithmetic ----

  Var add(Var a, Var b) { return binary(Op::kAdd, a, b); }
  Var sub(Var a, Var b) { return binary(Op::kSub, a, b); }
  Var mul(Var a, Var b) { return binary(Op::kMul, a, b); }

  Var scale(Var a, double s) {
    Var v = push(Op::kScale, val(a) * s);
    nodes_[v.i].p0 = a.i;
    nodes_[v.i].c0 = s;
    return v;
  }

  // (r x k) times (k x B)
  Var matmul(Var w, Var x) {
    const Arr& W = val(w);
    const Arr& X = val(x);
    if (W.cols() != X.rows()) throw std::invalid_argument("matmul: inner dims disagree");
    Var v = push(Op::kMatMul, (W.matrix() * X.matrix()).array());
    nodes_[v.i].p0 = w.i;
    nodes_[v.i].p1 = x.i;
    return v;
  }

  // Per-sample affine transform: wflat holds a (d_out x d_in) matrix per
  // column, flattened row-major; out[:,s] = W_s * x[:,s] + b[:,s].  Pass an
  // invalid Var as b for a pure linear map.
  Var pan_apply(Var wflat, Var x, Var b, int d_out, int d_in) {
    const Arr& W = val(wflat);
    const Arr& X = val(x);
    const auto cols = X.cols();
    if (W.rows() != static_cast<Eigen::Index>(d_out) * d_in || W.cols() != cols ||
        X.rows() != d_in)
      throw std::invalid_argument("pan_apply: shape mismatch");
    if (b.valid() && (val(b).rows() != d_out || val(b).cols() != cols))
      throw std::invalid_argument("pan_apply: bias shape mismatch");
    Arr out(d_out, cols);
    for (Eigen::Index s = 0; s < cols; ++s) {
      Eigen::Map<const Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>>
          Ws(W.col(s).data(), d_out, d_in);
      out.col(s) = (Ws * X.col(s).matrix()).array();
    }
    if (b.valid()) out += val(b);
    Var v = push(Op::kPanApply, std::move(out));
    nodes_[v.i].p0 = wflat.i;
    nodes_[v.i].p1 = x.i;
    nodes_[v.i].p2 = b.i;
    nodes_[v.i].g = d_out;
    nodes_[v.i].e = d_in;
    return v;
  }

  // Column-wise inner product of two (r x B) arrays -> (1 x B).
  Var inner(Var a, Var b) {
    const Arr& A = val(a);
    const Arr& B = val(b);
    if (A.rows() != B.rows() || A.cols() != B.cols()) throw std::invalid_argument("inner: shape mismatch");
    Var v = push(Op::kInner, (A * B).colwise().sum());
    nodes_[v.i].p0 = a.i;
    nodes_[v.i].p1 = b.i;
    return v;
  }

  Var sum_all(Var a) {
    Arr s(1, 1);
    s(0, 0) = val(a).sum();
    Var v = push(Op::kSumAll, std::move(s));
    nodes_[v.i].p0 = a.i;
    return v;
  }

  // Sum over rows -> (1 x B).
  Var col_sum(Var a) {
    Var v = push(Op::kColSum, val(a).colwise().sum());
    nodes_[v.i].p0 = a.i;
    return v;
  }

  // ---- grouped reductions (rows g*E+e belong to group g) ----

  // Soft max per group: (1/beta) log sum exp(beta h), max-shifted so the
  // result is exact for arbitrarily large inputs.
  Var group_lse(Var h, int G, int E, double beta) {
    const Arr& H = val(h);
    check_groups(H, G, E);
    if (!(beta > 0)) throw std::invalid_argument("group_lse: beta must be positive");
    const auto cols = H.cols();
    Arr gmax(G, cols), rep(G * E, cols);
    for (int g = 0; g < G; ++g) {
      gmax.row(g) = H.middleRows(g * E, E).colwise().maxCoeff();
      rep.middleRows(g * E, E) = gmax.row(g).replicate(E, 1);
    }
    Arr ex = ((H - rep) * beta).exp();
    Arr sums(G, cols);
    for (int g = 0; g < G; ++g) {
      sums.row(g) = ex.middleRows(g * E, E).colwise().sum();
      rep.middleRows(g * E, E) = sums.row(g).replicate(E, 1);
    }
    Var v = push(Op::kGroupLse, gmax + sums.log() / beta);
    Node& n = nodes_[v.i];
    n.p0 = h.i;
    n.g = G;
    n.e = E;
    n.cache = ex / rep;  // per-group softmax weights
    return v;
  }

  // Hard max per group; subgradient routed to the lowest-index maximizer.
  Var group_max(Var h, int G, int E) {
    const Arr& H = val(h);
    check_groups(H, G, E);
    const auto cols = H.cols();
    Arr out(G, cols);
    IArr amax(G, cols);
    for (Eigen::Index s = 0; s < cols; ++s) {
      const double* col = H.col(s).data();
      for (int g = 0; g < G; ++g) {
        int best = 0;
        double bv = col[g * E];
        for (int e = 1; e < E; ++e) {
          const double x = col[g * E + e];
          if (x > bv) { bv = x; best = e; }
        }
        out(g, s) = bv;
        amax(g, s) = best;
      }
    }
    Var v = push(Op::kGroupMax, std::move(out));
    Node& n = nodes_[v.i];
    n.p0 = h.i;
    n.g = G;
    n.e = E;
    n.icache = std::move(amax);
    return v;
  }

  // Max over players of a stacked (n*m x B) array (row i*m+j), per good j.
  // Ties break to the lowest player index.
  Var strided_max(Var x, int n, int m) {
    const Arr& X = val(x);
    if (X.rows() != static_cast<Eigen::Index>(n) * m) throw std::invalid_argument("strided_max: shape mismatch");
    const auto cols = X.cols();
    Arr out(m, cols);
    IArr amax(m, cols);
    for (Eigen::Index s = 0; s < cols; ++s) {
      const double* col = X.col(s).data();
      for (int j = 0; j < m; ++j) {
        int best = 0;
        double bv = col[j];
        for (int i = 1; i < n; ++i) {
          const double v2 = col[i * m + j];
          if (v2 > bv) { bv = v2; best = i; }
        }
        out(j, s) = bv;
        amax(j, s) = best;
      }
    }
    Var v = push(Op::kStridedMax, std::move(out));
    Node& nd = nodes_[v.i];
    nd.p0 = x.i;
    nd.g = n;
    nd.e = m;
    nd.icache = std::move(amax);
    return v;
  }

  // Sum over players of a stacked (n*m x B) array -> (m x B).
  Var strided_sum(Var x, int n, int m) {
    const Arr& X = val(x);
    if (X.rows() != static_cast<Eigen::Index>(n) * m) throw std::invalid_argument("strided_sum: shape mismatch");
    Arr out = Arr::Zero(m, X.cols());
    for (int i = 0; i < n; ++i) out += X.middleRows(i * m, m);
    Var v = push(Op::kStridedSum, std::move(out));
    Node& nd = nodes_[v.i];
    nd.p0 = x.i;
    nd.g = n;
    nd.e = m;
    return v;
  }

  // ---- nonlinearities ----

  Var softplus(Var a) {
    const Arr& X = val(a);
    Arr e = (-X.abs()).exp();
    Arr value = X.max(0.0) + e.log1p();
    Arr sigmoid = (X >= 0.0).select(1.0 / (1.0 + e), e / (1.0 + e));
    Var v = push(Op::kSoftplus, std::move(value));
    Node& n = nodes_[v.i];
    n.p0 = a.i;
    n.cache = std::move(sigmoid);
    return v;
  }

  Var leaky_relu(Var a, double slope) {
    const Arr& X = val(a);
    Var v = push(Op::kLeakyRelu, (X >= 0.0).select(X, slope * X));
    Node& n = nodes_[v.i];
    n.p0 = a.i;
    n.c0 = slope;
    return v;
  }

  Var exp(Var a) {
    Var v = push(Op::kExp, val(a).exp());
    nodes_[v.i].p0 = a.i;
    return v;
  }

  // Subgradient convention: 1 inside the interval and at a boundary reached
  // from inside, 0 outside.
  Var clamp(Var a, double lo, double hi) {
    const Arr& X = val(a);
    Var v = push(Op::kClamp, X.max(lo).min(hi));
    Node& n = nodes_[v.i];
    n.p0 = a.i;
    n.c0 = lo;
    n.c1 = hi;
    return v;
  }

  // Value passes through; every adjoint through it is zero.
  Var stop_gradient(Var a) {
    Var v = push(Op::kStopGradient, val(a));
    nodes_[v.i].p0 = a.i;  // kept for graph integrity; backward skips it
    return v;
  }

  // ---- access ----

  const Arr& val(Var v) const { return nodes_.at(v.i).value; }
  const Arr& adjoint(Var v) const { return nodes_.at(v.i).adjoint; }
  std::size_t size() const { return nodes_.size(); }

  // Distance of the recorded forward pass to the nearest nondifferentiable
  // point (leaky-relu zero crossings, max ties, clamp bounds).  A finite-
  // difference probe with step h is only trustworthy when this margin is
  // comfortably larger than h times the local input sensitivity.
  double kink_margin() const {
    double margin = std::numeric_limits<double>::infinity();
    for (const auto& n : nodes_) {
      switch (n.op) {
        case Op::kLeakyRelu:
          margin = std::min(margin, nodes_[n.p0].value.abs().minCoeff());
          break;
        case Op::kClamp: {
          const Arr& x = nodes_[n.p0].value;
          margin = std::min(margin, (x - n.c0).abs().minCoeff());
          margin = std::min(margin, (x - n.c1).abs().minCoeff());
          break;
        }
        case Op::kGroupMax: {
          const Arr& h = nodes_[n.p0].value;
          for (Eigen::Index s = 0; s < h.cols(); ++s)
            for (int g = 0; g < n.g; ++g) {
              double top = -std::numeric_limits<double>::infinity(), second = top;
              for (int e = 0; e < n.e; ++e) {
                const double v = h(g * n.e + e, s);
                if (v > top) { second = top; top = v; }
                else if (v > second) second = v;
              }
              if (n.e > 1) margin = std::min(margin, top - second);
            }
          break;
        }
        case Op::kStridedMax: {
          const Arr& x = nodes_[n.p0].value;
          for (Eigen::Index s = 0; s < x.cols(); ++s)
            for (int j = 0; j < n.e; ++j) {
              double top = -std::numeric_limits<double>::infinity(), second = top;
              for (int i = 0; i < n.g; ++i) {
                const double v = x(i * n.e + j, s);
                if (v > top) { second = top; top = v; }
                else if (v > second) second = v;
              }
              if (n.g > 1) margin = std::min(margin, top - second);
            }
          break;
        }
        default:
          break;
      }
    }
    return margin;
  }

  // Reverse accumulation from a scalar root.  Parameter gradients of every
  // bound store are reset first, so repeated calls give identical results.
  void backward(Var root) {
    Node& r = nodes_.at(root.i);
    if (r.value.rows() != 1 || r.value.cols() != 1)
      throw std::invalid_argument("backward: root must be a 1x1 scalar");
    for (auto& n : nodes_) {
      n.adjoint = Arr::Zero(n.value.rows(), n.value.cols());
      if (n.op == Op::kParam) n.store->entries[n.store_idx].grad.setZero();
    }
    r.adjoint(0, 0) = 1.0;
    for (int i = root.i; i >= 0; --i) backprop(i);
    for (auto& n : nodes_)
      if (n.op == Op::kParam) n.store->entries[n.store_idx].grad += n.adjoint;
  }

 private:
  struct Node {
    Op op;
    Arr value;
    Arr adjoint;
    Arr cache;
    IArr icache;
    int p0 = -1, p1 = -1, p2 = -1;
    double c0 = 0.0, c1 = 0.0;
    int g = 0, e = 0;
    ParamStore* store = nullptr;
    int store_idx = -1;
  };

  std::vector<Node> nodes_;

  Var push(Op op, Arr v) {
    Node n;
    n.op = op;
    n.value = std::move(v);
    nodes_.push_back(std::move(n));
    return Var{static_cast<int>(nodes_.size()) - 1};
  }

  static void check_groups(const Arr& h, int G, int E) {
    if (G < 1 || E < 1) throw std::invalid_argument("group op: empty group");
    if (h.rows() != static_cast<Eigen::Index>(G) * E)
      throw std::invalid_argument("group op: rows != G*E");
  }

  // Broadcast-aware elementwise binary op.  Allowed right shapes against a
  // left (r x c): (r x c), (1 x 1), (r x 1), (1 x c) and symmetrically.
  Var binary(Op op, Var a, Var b) {
    const Arr& A = val(a);
    const Arr& B = val(b);
    Arr out = apply_binary(op, A, B);
    Var v = push(op, std::move(out));
    nodes_[v.i].p0 = a.i;
    nodes_[v.i].p1 = b.i;
    return v;
  }

  static bool bcast_ok(const Arr& big, const Arr& small) {
    return (small.rows() == big.rows() || small.rows() == 1) &&
           (small.cols() == big.cols() || small.cols() == 1);
  }

  static Arr expand(const Arr& x, Eigen::Index r, Eigen::Index c) {
    if (x.rows() == r && x.cols() == c) return x;
    return x.replicate(r / x.rows(), c / x.cols());
  }

  static Arr apply_binary(Op op, const Arr& A, const Arr& B) {
    const Eigen::Index r = std::max(A.rows(), B.rows());
    const Eigen::Index c = std::max(A.cols(), B.cols());
    const bool ok = (A.rows() == r && A.cols() == c && bcast_ok(A, B)) ||
                    (B.rows() == r && B.cols() == c && bcast_ok(B, A));
    if (!ok) throw std::invalid_argument("binary op: incompatible shapes");
    Arr Ae = expand(A, r, c), Be = expand(B, r, c);
    switch (op) {
      case Op::kAdd: return Ae + Be;
      case Op::kSub: return Ae - Be;
      case Op::kMul: return Ae * Be;
      default: throw std::logic_error("apply_binary: not a binary op");
    }
  }

  // Accumulate `delta` into parent p, summing over broadcast dimensions.
  void accum(int p, const Arr& delta) {
    Node& n = nodes_[p];
    const Eigen::Index r = n.value.rows(), c = n.value.cols();
    if (delta.rows() == r && delta.cols() == c) {
      n.adjoint += delta;
    } else if (r == 1 && c == 1) {
      n.adjoint(0, 0) += delta.sum();
    } else if (r == 1 && c == delta.cols()) {
      n.adjoint += delta.colwise().sum();
    } else if (c == 1 && r == delta.rows()) {
      n.adjoint += delta.rowwise().sum();
    } else {
      throw std::logic_error("accum: unexpected broadcast reduction");
    }
  }

  void backprop(int i) {
    Node& n = nodes_[i];
    if (n.op == Op::kConstant || n.op == Op::kInput || n.op == Op::kParam ||
        n.op == Op::kStopGradient)
      return;
    if ((n.adjoint == 0.0).all()) return;
    const Arr& g = n.adjoint;
    switch (n.op) {
      case Op::kAdd:
        accum(n.p0, g);
        accum(n.p1, g);
        break;
      case Op::kSub:
        accum(n.p0, g);
        accum(n.p1, -g);
        break;
      case Op::kMul: {
        const Arr& A = nodes_[n.p0].value;
        const Arr& B = nodes_[n.p1].value;
        accum(n.p0, g * expand(B, g.rows(), g.cols()));
        accum(n.p1, g * expand(A, g.rows(), g.cols()));
        break;
      }
      case Op::kScale:
        accum(n.p0, g * n.c0);
        break;
      case Op::kMatMul: {
        const Arr& W = nodes_[n.p0].value;
        const Arr& X = nodes_[n.p1].value;
        nodes_[n.p0].adjoint += (g.matrix() * X.matrix().transpose()).array();
        nodes_[n.p1].adjoint += (W.matrix().transpose() * g.matrix()).array();
        break;
      }
      case Op::kPanApply: {
        const int d_out = n.g, d_in = n.e;
        const Arr& W = nodes_[n.p0].value;
        const Arr& X = nodes_[n.p1].value;
        Arr& dW = nodes_[n.p0].adjoint;
        Arr& dX = nodes_[n.p1].adjoint;
        for (Eigen::Index s = 0; s < g.cols(); ++s) {
          Eigen::Map<const Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>>
              Ws(W.col(s).data(), d_out, d_in);
          Eigen::Map<Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>>
              dWs(dW.col(s).data(), d_out, d_in);
          dWs.noalias() += g.col(s).matrix() * X.col(s).matrix().transpose();
          dX.col(s).matrix().noalias() += Ws.transpose() * g.col(s).matrix();
        }
        if (n.p2 >= 0) nodes_[n.p2].adjoint += g;
        break;
      }
      case Op::kInner: {
        const Arr& A = nodes_[n.p0].value;
        const Arr& B = nodes_[n.p1].value;
        const Arr grow = g.replicate(A.rows(), 1);
        nodes_[n.p0].adjoint += grow * B;
        nodes_[n.p1].adjoint += grow * A;
        break;
      }
      case Op::kSumAll:
        nodes_[n.p0].adjoint += g(0, 0);
        break;
      case Op::kColSum:
        nodes_[n.p0].adjoint += g.replicate(nodes_[n.p0].value.rows(), 1);
        break;
      case Op::kGroupLse: {
        Arr& dh = nodes_[n.p0].adjoint;
        for (int gi = 0; gi < n.g; ++gi)
          dh.middleRows(gi * n.e, n.e) +=
              n.cache.middleRows(gi * n.e, n.e) * g.row(gi).replicate(n.e, 1);
        break;
      }
      case Op::kGroupMax: {
        Arr& dh = nodes_[n.p0].adjoint;
        for (Eigen::Index s = 0; s < g.cols(); ++s)
          for (int gi = 0; gi < n.g; ++gi)
            dh(gi * n.e + n.icache(gi, s), s) += g(gi, s);
        break;
      }
      case Op::kStridedMax: {
        Arr& dx = nodes_[n.p0].adjoint;
        const int m = n.e;
        for (Eigen::Index s = 0; s < g.cols(); ++s)
          for (int j = 0; j < m; ++j) dx(n.icache(j, s) * m + j, s) += g(j, s);
        break;
      }
      case Op::kStridedSum: {
        Arr& dx = nodes_[n.p0].adjoint;
        for (int i2 = 0; i2 < n.g; ++i2) dx.middleRows(i2 * n.e, n.e) += g;
        break;
      }
      case Op::kSoftplus:
        nodes_[n.p0].adjoint += g * n.cache;
        break;
      case Op::kLeakyRelu: {
        const Arr& X = nodes_[n.p0].value;
        nodes_[n.p0].adjoint += g * (X >= 0.0).select(Arr::Ones(X.rows(), X.cols()), Arr::Constant(X.rows(), X.cols(), n.c0));
        break;
      }
      case Op::kExp:
        nodes_[n.p0].adjoint += g * n.value;
        break;
      case Op::kClamp: {
        const Arr& X = nodes_[n.p0].value;
        nodes_[n.p0].adjoint += g * ((X >= n.c0) && (X <= n.c1)).cast<double>();
        break;
      }
      default:
        throw std::logic_error("backprop: unhandled op");
    }
  }
};

}  // namespace menumax
