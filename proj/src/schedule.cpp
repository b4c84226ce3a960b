#include "duet/schedule.hpp"

namespace duet {

NoiseSchedule NoiseSchedule::cosine(int T) {
  DUET_CHECK(T >= 1, "schedule: T must be >= 1");
  const double s = 0.008;
  auto f = [&](double t) {
    double v = std::cos((t / T + s) / (1.0 + s) * M_PI / 2.0);
    return v * v;
  };
  NoiseSchedule sch;
  sch.T = T;
  sch.alpha.resize(T);
  double f0 = f(0.0);
  double prev_abar = 1.0;
  for (int t = 1; t <= T; ++t) {
    double abar = f(static_cast<double>(t)) / f0;
    double a = abar / prev_abar;
    a = std::min(std::max(a, 0.001), 0.9999);  // beta clipped to [1e-4, 0.999]
    sch.alpha[t - 1] = a;
    prev_abar *= a;
  }
  sch.alpha_bar.resize(T);
  double cum = 1.0;
  for (int t = 1; t <= T; ++t) {
    cum *= sch.alpha[t - 1];
    sch.alpha_bar[t - 1] = cum;
  }
  sch.posterior_var.resize(T);
  for (int t = 1; t <= T; ++t) {
    double beta = 1.0 - sch.alpha[t - 1];
    double denom = 1.0 - sch.alpha_bar[t - 1];
    sch.posterior_var[t - 1] = denom > 1e-12 ? (1.0 - sch.abar_prev(t)) / denom * beta : 0.0;
  }
  sch.validate();
  return sch;
}

NoiseSchedule NoiseSchedule::from_alpha_bar(const ArrayX& alpha_bar) {
  NoiseSchedule sch;
  sch.T = static_cast<int>(alpha_bar.size());
  sch.alpha_bar = alpha_bar;
  sch.alpha.resize(sch.T);
  double prev = 1.0;
  for (int t = 1; t <= sch.T; ++t) {
    sch.alpha[t - 1] = alpha_bar[t - 1] / prev;
    prev = alpha_bar[t - 1];
  }
  sch.posterior_var.resize(sch.T);
  for (int t = 1; t <= sch.T; ++t) {
    double beta = 1.0 - sch.alpha[t - 1];
    double denom = 1.0 - sch.alpha_bar[t - 1];
    sch.posterior_var[t - 1] = denom > 1e-12 ? (1.0 - sch.abar_prev(t)) / denom * beta : 0.0;
  }
  return sch;
}

void NoiseSchedule::validate() const {
  DUET_CHECK(T >= 1 && alpha.size() == T && alpha_bar.size() == T && posterior_var.size() == T,
             "schedule: inconsistent sizes");
  double prev = 1.0;
  for (int t = 1; t <= T; ++t) {
    DUET_CHECK(alpha[t - 1] > 0 && alpha[t - 1] <= 1.0, "schedule: alpha out of (0,1] at ", t);
    DUET_CHECK(alpha_bar[t - 1] > 0 && alpha_bar[t - 1] <= 1.0,
               "schedule: alpha_bar out of (0,1] at ", t);
    DUET_CHECK(alpha_bar[t - 1] < prev, "schedule: alpha_bar not strictly decreasing at ", t);
    DUET_CHECK(posterior_var[t - 1] >= 0, "schedule: negative posterior variance at ", t);
    prev = alpha_bar[t - 1];
  }
}

double NoiseSchedule::abar(int t) const {
  DUET_CHECK(t >= 1 && t <= T, "schedule: step ", t, " outside [1,", T, "]");
  return alpha_bar[t - 1];
}

double NoiseSchedule::abar_prev(int t) const {
  DUET_CHECK(t >= 1 && t <= T, "schedule: step ", t, " outside [1,", T, "]");
  return t >= 2 ? alpha_bar[t - 2] : 1.0;
}

ArrayX forward_diffuse(const ArrayX& x0, int t, const ArrayX& eps, const NoiseSchedule& s) {
  DUET_CHECK(eps.size() == x0.size(), "forward_diffuse: eps shape mismatch");
  double ab = s.abar(t);
  return std::sqrt(ab) * x0 + std::sqrt(1.0 - ab) * eps;
}

MotionSequence forward_diffuse(const MotionSequence& x0, int t, const ArrayX& eps,
                               const NoiseSchedule& s) {
  ArrayX flat = x0.flat();
  return MotionSequence::from_flat(forward_diffuse(flat, t, eps, s), x0.num_frames());
}

Posterior posterior_stats(const ArrayX& xt, const ArrayX& x0_hat, int t,
                          const NoiseSchedule& s) {
  DUET_CHECK(xt.size() == x0_hat.size(), "posterior: shape mismatch");
  Posterior p;
  double abar_t = s.abar(t);
  double abar_p = s.abar_prev(t);
  double beta = 1.0 - s.alpha[t - 1];
  double denom = 1.0 - abar_t;
  if (denom <= 1e-12) {  // no noise was added up to t
    p.mean = x0_hat;
    p.var = 0.0;
    return p;
  }
  double c0 = std::sqrt(abar_p) * beta / denom;
  double ct = std::sqrt(s.alpha[t - 1]) * (1.0 - abar_p) / denom;
  p.mean = c0 * x0_hat + ct * xt;
  p.var = s.posterior_var[t - 1];
  return p;
}

ArrayX reverse_step(const ArrayX& xt, const ArrayX& x0_hat, int t, const NoiseSchedule& s,
                    Rng& rng) {
  Posterior p = posterior_stats(xt, x0_hat, t, s);
  if (t <= 1 || p.var <= 0.0) return p.mean;
  return p.mean + std::sqrt(p.var) * rng.normal_array(static_cast<int>(p.mean.size()));
}

}  // namespace duet
