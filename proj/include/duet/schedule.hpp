#pragma once

#include "duet/body_model.hpp"
#include "duet/rng.hpp"

namespace duet {

// DDPM constants: alpha_t, cumulative alpha_bar_t, and the posterior variance
// gamma_tilde_t, indexed by step t in [1, T] (stored at t-1).
struct NoiseSchedule {
  int T = 0;
  ArrayX alpha;
  ArrayX alpha_bar;
  ArrayX posterior_var;

  static NoiseSchedule cosine(int T);           // improved-DDPM style
  static NoiseSchedule from_alpha_bar(const ArrayX& alpha_bar);
  void validate() const;

  double abar(int t) const;       // t in [1, T]
  double abar_prev(int t) const;  // abar(t-1), with abar(0) = 1
};

// x_t = sqrt(abar_t) x0 + sqrt(1 - abar_t) eps
ArrayX forward_diffuse(const ArrayX& x0, int t, const ArrayX& eps, const NoiseSchedule& s);
MotionSequence forward_diffuse(const MotionSequence& x0, int t, const ArrayX& eps,
                               const NoiseSchedule& s);

struct Posterior {
  ArrayX mean;
  double var = 0.0;
};
// q(x_{t-1} | x_t, x0_hat), the standard DDPM posterior
Posterior posterior_stats(const ArrayX& xt, const ArrayX& x0_hat, int t,
                          const NoiseSchedule& s);

// sample from the posterior; at t == 1 (or zero variance) returns the mean
ArrayX reverse_step(const ArrayX& xt, const ArrayX& x0_hat, int t, const NoiseSchedule& s,
                    Rng& rng);

}  // namespace duet
