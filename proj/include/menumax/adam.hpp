#pragma once

// Adam with bias correction (beta1 = 0.9, beta2 = 0.999, eps = 1e-8).

#include "tape.hpp"

#include <cmath>
#include <vector>

namespace menumax {

class Adam {
 public:
  explicit Adam(const ParamStore& store, double beta1 = 0.9, double beta2 = 0.999,
                double eps = 1e-8)
      : beta1_(beta1), beta2_(beta2), eps_(eps) {
    m_.reserve(store.entries.size());
    v_.reserve(store.entries.size());
    for (const auto& e : store.entries) {
      m_.push_back(Arr::Zero(e.value.rows(), e.value.cols()));
      v_.push_back(Arr::Zero(e.value.rows(), e.value.cols()));
    }
  }

  // Applies one update from store.grads at the given learning rate.
  void step(ParamStore& store, double lr) {
    ++t_;
    const double bc1 = 1.0 - std::pow(beta1_, t_);
    const double bc2 = 1.0 - std::pow(beta2_, t_);
    for (std::size_t i = 0; i < store.entries.size(); ++i) {
      auto& e = store.entries[i];
      m_[i] = beta1_ * m_[i] + (1.0 - beta1_) * e.grad;
      v_[i] = beta2_ * v_[i] + (1.0 - beta2_) * e.grad.square();
      e.value -= lr * (m_[i] / bc1) / ((v_[i] / bc2).sqrt() + eps_);
    }
  }

  long step_count() const { return t_; }
  std::vector<Arr>& moments1() { return m_; }
  std::vector<Arr>& moments2() { return v_; }
  void set_step_count(long t) { t_ = t; }

 private:
  double beta1_, beta2_, eps_;
  long t_ = 0;
  std::vector<Arr> m_, v_;
};

}  // namespace menumax
