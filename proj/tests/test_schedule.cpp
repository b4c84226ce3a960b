#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include "duet/schedule.hpp"

using namespace duet;

TEST_CASE("cosine schedule invariants") {
  NoiseSchedule s = NoiseSchedule::cosine(100);
  s.validate();
  CHECK(s.T == 100);
  CHECK(s.abar(100) < 0.01);  // ends near pure noise
  CHECK(s.abar(1) > 0.9);
  CHECK_THROWS(s.abar(0));
  CHECK_THROWS(s.abar(101));
}

TEST_CASE("forward diffusion endpoint behaviour") {
  // abar == 1 -> x_t == x0; abar ~ 0 -> x_t ~ eps
  ArrayX abar(3);
  abar << 1.0, 0.5, 1e-14;
  NoiseSchedule s = NoiseSchedule::from_alpha_bar(abar);
  ArrayX x0 = ArrayX::LinSpaced(5, -1.0, 1.0);
  ArrayX eps = ArrayX::Constant(5, 0.3);
  CHECK(((forward_diffuse(x0, 1, eps, s) - x0).abs() < 1e-12).all());
  CHECK(((forward_diffuse(x0, 3, eps, s) - eps).abs() < 1e-6).all());
}

TEST_CASE("forward diffusion point example") {
  // abar = 0.25, x0 = 1.0, eps = 0.2 -> 0.5 + sqrt(0.75)*0.2 = 0.673205
  ArrayX abar(1);
  abar << 0.25;
  NoiseSchedule s = NoiseSchedule::from_alpha_bar(abar);
  ArrayX x0 = ArrayX::Constant(1, 1.0), eps = ArrayX::Constant(1, 0.2);
  double got = forward_diffuse(x0, 1, eps, s)[0];
  CHECK(std::abs(got - 0.673205) < 1e-6);
}

TEST_CASE("forward diffusion on a motion sequence hits both persons") {
  MotionSequence m;
  m.frames.resize(2);
  m.frames[0][0] = PersonParams::rest();
  m.frames[0][1] = PersonParams::rest();
  m.frames[1][0] = PersonParams::rest();
  m.frames[1][1] = PersonParams::rest();
  ArrayX abar(1);
  abar << 0.25;
  NoiseSchedule s = NoiseSchedule::from_alpha_bar(abar);
  ArrayX eps = ArrayX::Constant(2 * 2 * kPersonDim, 1.0);
  MotionSequence out = forward_diffuse(m, 1, eps, s);
  ArrayX expect = 0.5 * m.flat() + std::sqrt(0.75) * eps;
  CHECK(((out.flat() - expect).abs() < 1e-12).all());
  CHECK_THROWS(forward_diffuse(m, 2, eps, s));
}

TEST_CASE("posterior mean: constant schedule keeps x_t") {
  ArrayX abar(3);
  abar << 0.6, 0.6 - 1e-15, 0.6 - 2e-15;  // effectively constant, still decreasing
  NoiseSchedule s = NoiseSchedule::from_alpha_bar(abar);
  ArrayX xt = ArrayX::LinSpaced(4, 0.0, 3.0);
  ArrayX x0 = xt;  // x0_hat == x_t
  Posterior p = posterior_stats(xt, x0, 2, s);
  CHECK(((p.mean - xt).abs() < 1e-9).all());
  CHECK(p.var == doctest::Approx(0.0).epsilon(1e-12));
}

TEST_CASE("reverse step at t=1 returns the mean exactly") {
  NoiseSchedule s = NoiseSchedule::cosine(10);
  Rng rng(3);
  ArrayX xt = rng.normal_array(6), x0 = rng.normal_array(6);
  Posterior p = posterior_stats(xt, x0, 1, s);
  CHECK(p.var == 0.0);
  Rng r2(4);
  ArrayX out = reverse_step(xt, x0, 1, s, r2);
  CHECK(((out - p.mean) == 0.0).all());
  // and the posterior mean at t=1 is x0_hat itself
  CHECK(((p.mean - x0).abs() < 1e-12).all());
}

TEST_CASE("reverse chains are deterministic per seed") {
  NoiseSchedule s = NoiseSchedule::cosine(20);
  auto run = [&](uint64_t seed) {
    Rng rng(seed);
    ArrayX x = rng.normal_array(8);
    for (int t = 20; t >= 1; --t) {
      ArrayX x0 = 0.5 * x;  // stand-in denoiser
      x = reverse_step(x, x0, t, s, rng);
    }
    return x;
  };
  ArrayX a = run(7), b = run(7), c = run(8);
  CHECK((a == b).all());
  CHECK((a != c).any());
}

TEST_CASE("posterior variance matches the closed form") {
  NoiseSchedule s = NoiseSchedule::cosine(50);
  for (int t = 2; t <= 50; t += 7) {
    double beta = 1.0 - s.alpha[t - 1];
    double expect = (1.0 - s.abar_prev(t)) / (1.0 - s.abar(t)) * beta;
    CHECK(s.posterior_var[t - 1] == doctest::Approx(expect).epsilon(1e-12));
  }
}
