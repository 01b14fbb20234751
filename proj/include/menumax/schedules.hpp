#pragma once

// Training schedules: the temperature ramps up stepwise (x1.15 every 2% of
// the run after the first 20%, capped), while the Adam and Langevin rates
// decay geometrically to their floor values.

#include <algorithm>
#include <cmath>

namespace menumax {

struct ScheduleConfig {
  double beta_init = 16.0;
  double beta_max = 512.0;
  double beta_growth = 1.15;
  double beta_warmup_frac = 0.20;
  double beta_step_frac = 0.02;
  double lr_adam_init = 5e-4;
  double lr_adam_final = 1e-5;
  double eta_langevin_init = 0.03;
  double eta_langevin_final = 0.01;
};

struct SchedulePoint {
  double beta;
  double eta_langevin;
  double lr_adam;
};

inline SchedulePoint schedules(long iter, long total, const ScheduleConfig& cfg) {
  SchedulePoint p{};
  const double frac = total > 0 ? static_cast<double>(iter) / static_cast<double>(total) : 0.0;
  if (frac < cfg.beta_warmup_frac) {
    p.beta = cfg.beta_init;
  } else {
    const double steps = std::floor((frac - cfg.beta_warmup_frac) / cfg.beta_step_frac);
    p.beta = std::min(cfg.beta_max, cfg.beta_init * std::pow(cfg.beta_growth, steps));
  }
  p.lr_adam = cfg.lr_adam_init * std::pow(cfg.lr_adam_final / cfg.lr_adam_init, frac);
  p.eta_langevin =
      cfg.eta_langevin_init * std::pow(cfg.eta_langevin_final / cfg.eta_langevin_init, frac);
  return p;
}

}  // namespace menumax
