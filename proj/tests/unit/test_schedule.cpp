#include <doctest.h>

#include <cmath>
#include <random>

#include "osmid/core/rng.hpp"
#include "osmid/diffusion/schedule.hpp"

using namespace osmid;
using namespace osmid::diffusion;

TEST_CASE("schedule products for tiny hand cases") {
  NoiseSchedule s = build_schedule(2, 0.1, 0.2);
  CHECK(s.beta_at(1) == doctest::Approx(0.1));
  CHECK(s.beta_at(2) == doctest::Approx(0.2));
  CHECK(s.alpha_bar_at(1) == doctest::Approx(0.9).epsilon(1e-12));
  CHECK(s.alpha_bar_at(2) == doctest::Approx(0.72).epsilon(1e-12));

  NoiseSchedule s1 = build_schedule(1, 0.5, 0.5);
  CHECK(s1.alpha_bar_at(1) == doctest::Approx(0.5).epsilon(1e-15));
}

TEST_CASE("schedule against brute-force long double product oracle") {
  NoiseSchedule s = build_schedule(1000, 1e-4, 0.02);
  long double prod = 1.0L;
  for (int t = 1; t <= 1000; ++t) {
    long double b = 1e-4L + (0.02L - 1e-4L) * (t - 1) / 999.0L;
    prod *= (1.0L - b);
    const double rel = std::fabs(static_cast<double>(prod) - s.alpha_bar_at(t)) /
                       static_cast<double>(prod);
    REQUIRE(rel < 1e-12);
  }
  // monotonicity and the trig identity on marginal coefficients
  for (int t = 1; t <= 1000; ++t) {
    if (t > 1) CHECK(s.alpha_bar_at(t) < s.alpha_bar_at(t - 1));
    const double a = std::sqrt(s.alpha_bar_at(t));
    const double b = std::sqrt(1.0 - s.alpha_bar_at(t));
    CHECK(std::fabs(a * a + b * b - 1.0) < 1e-12);
  }
}

TEST_CASE("schedule rejects invalid ranges") {
  CHECK_THROWS_AS(build_schedule(0, 0.1, 0.2), std::invalid_argument);
  CHECK_THROWS_AS(build_schedule(10, 0.0, 0.2), std::invalid_argument);
  CHECK_THROWS_AS(build_schedule(10, 0.3, 0.2), std::invalid_argument);
  CHECK_THROWS_AS(build_schedule(10, 0.3, 1.0), std::invalid_argument);
}

TEST_CASE("forward marginal endpoints") {
  NoiseSchedule s = build_schedule(50, 1e-3, 0.05);
  Tensor x0 = normal_tensor({4, 4, 1}, 1);
  Tensor zero = Tensor::zeros({4, 4, 1});
  Tensor eps = normal_tensor({4, 4, 1}, 2);

  Tensor xt = forward_diffuse(x0, 20, s, zero);
  const double a = std::sqrt(s.alpha_bar_at(20));
  for (int64_t i = 0; i < xt.numel(); ++i) CHECK(xt[i] == doctest::Approx(a * x0[i]).epsilon(1e-14));

  Tensor xt2 = forward_diffuse(zero, 20, s, eps);
  const double b = std::sqrt(1 - s.alpha_bar_at(20));
  for (int64_t i = 0; i < xt2.numel(); ++i) CHECK(xt2[i] == doctest::Approx(b * eps[i]).epsilon(1e-14));

  CHECK_THROWS_AS(forward_diffuse(x0, 0, s, eps), std::out_of_range);
  CHECK_THROWS_AS(forward_diffuse(x0, 51, s, eps), std::out_of_range);
}

TEST_CASE("closed-form marginal matches the stepwise chain (Monte Carlo)") {
  // iterate the per-step update many times and compare moments
  NoiseSchedule s = build_schedule(30, 1e-3, 0.04);
  const int t_target = 20, n_chains = 10000;
  Tensor x0({2, 2, 1}, {0.8, -0.3, 0.1, 0.5});
  std::vector<double> sum(4, 0.0), sumsq(4, 0.0);
  auto rng = make_rng({777});
  std::normal_distribution<double> gauss(0.0, 1.0);
  for (int chain = 0; chain < n_chains; ++chain) {
    Tensor x = x0;
    for (int t = 1; t <= t_target; ++t) {
      const double keep = std::sqrt(1.0 - s.beta_at(t));
      const double noise = std::sqrt(s.beta_at(t));
      for (int64_t i = 0; i < x.numel(); ++i) x[i] = keep * x[i] + noise * gauss(rng);
    }
    for (int64_t i = 0; i < 4; ++i) {
      sum[static_cast<size_t>(i)] += x[i];
      sumsq[static_cast<size_t>(i)] += x[i] * x[i];
    }
  }
  const double abar = s.alpha_bar_at(t_target);
  for (int i = 0; i < 4; ++i) {
    const double mean = sum[static_cast<size_t>(i)] / n_chains;
    const double var = sumsq[static_cast<size_t>(i)] / n_chains - mean * mean;
    const double expect_mean = std::sqrt(abar) * x0[i];
    const double expect_var = 1.0 - abar;
    const double se = std::sqrt(expect_var / n_chains);
    CHECK(std::fabs(mean - expect_mean) < 3.0 * se);
    CHECK(std::fabs(var - expect_var) / expect_var < 0.05);
  }
}

TEST_CASE("reverse step at t=1 inverts the forward marginal exactly") {
  NoiseSchedule s = build_schedule(10, 0.02, 0.2);
  Tensor x0 = normal_tensor({3, 3, 1}, 5);
  Tensor eps = normal_tensor({3, 3, 1}, 6);
  Tensor x1 = forward_diffuse(x0, 1, s, eps);
  Tensor zero = Tensor::zeros({3, 3, 1});
  Tensor rec = reverse_step(x1, 1, eps, s, zero, 0.0);
  for (int64_t i = 0; i < rec.numel(); ++i)
    CHECK(std::fabs(rec[i] - x0[i]) < 1e-6);
}

TEST_CASE("reverse step with z=0 is deterministic") {
  NoiseSchedule s = build_schedule(10, 0.02, 0.2);
  Tensor xt = normal_tensor({3, 3, 1}, 7);
  Tensor eh = normal_tensor({3, 3, 1}, 8);
  Tensor zero = Tensor::zeros({3, 3, 1});
  Tensor a = reverse_step(xt, 5, eh, s, zero, 0.0);
  Tensor b = reverse_step(xt, 5, eh, s, zero, 0.0);
  CHECK(a.data == b.data);
}
