#pragma once

// Central finite-difference oracles for gradient verification.  These are
// deliberately independent of the tape: they only re-evaluate a scalar
// function at perturbed parameters.

#include "tape.hpp"

#include <cmath>
#include <functional>
#include <vector>

namespace menumax {

struct GradCheckResult {
  double max_err = 0.0;  // relative where the scale allows, absolute below it
  int worst_index = -1;
};

// Relative discrepancy with an absolute fallback for near-zero pairs.  The
// fallback scale reflects the resolution of central differences themselves:
// their rounding noise is ~|f| eps / 2h ~ 1e-11, so ratios against gradients
// below 1e-4 measure that noise rather than the implementation.
inline double grad_discrepancy(double analytic, double numeric) {
  const double scale = std::max(std::abs(analytic), std::abs(numeric));
  const double diff = std::abs(analytic - numeric);
  return scale < 1e-4 ? diff : diff / scale;
}

// Compares `analytic` (one entry per parameter scalar, ParamStore order)
// against central differences of `f` with step h.
inline GradCheckResult check_against_fd(ParamStore& store,
                                        const std::vector<double>& analytic,
                                        const std::function<double()>& f,
                                        double h = 1e-5) {
  GradCheckResult res;
  int flat = 0;
  for (auto& e : store.entries) {
    for (Eigen::Index k = 0; k < e.value.size(); ++k, ++flat) {
      double& p = e.value.data()[k];
      const double save = p;
      p = save + h;
      const double fp = f();
      p = save - h;
      const double fm = f();
      p = save;
      const double fd = (fp - fm) / (2.0 * h);
      const double err = grad_discrepancy(analytic[static_cast<std::size_t>(flat)], fd);
      if (err > res.max_err) {
        res.max_err = err;
        res.worst_index = flat;
      }
    }
  }
  return res;
}

// Same check for the gradient with respect to a dense input vector.
inline GradCheckResult check_input_fd(Arr& x, const Arr& analytic,
                                      const std::function<double()>& f,
                                      double h = 1e-5) {
  GradCheckResult res;
  for (Eigen::Index k = 0; k < x.size(); ++k) {
    double& p = x.data()[k];
    const double save = p;
    p = save + h;
    const double fp = f();
    p = save - h;
    const double fm = f();
    p = save;
    const double fd = (fp - fm) / (2.0 * h);
    const double err = grad_discrepancy(analytic.data()[k], fd);
    if (err > res.max_err) {
      res.max_err = err;
      res.worst_index = static_cast<int>(k);
    }
  }
  return res;
}

}  // namespace menumax
