#pragma once

#include <vector>

#include "osmid/core/tensor.hpp"

namespace osmid::diffusion {

// Per-timestep noise constants. Arrays are 0-indexed, timesteps are
// 1-based in the API (t in 1..T).
struct NoiseSchedule {
  int T = 0;
  std::vector<double> beta;       // beta_t
  std::vector<double> alpha;      // 1 - beta_t
  std::vector<double> alpha_bar;  // running product of alpha

  double beta_at(int t) const { return beta.at(static_cast<size_t>(t - 1)); }
  double alpha_at(int t) const { return alpha.at(static_cast<size_t>(t - 1)); }
  double alpha_bar_at(int t) const { return alpha_bar.at(static_cast<size_t>(t - 1)); }
};

NoiseSchedule build_schedule(int T, double beta_start, double beta_end);

// Closed-form forward marginal x_t = sqrt(abar_t) x0 + sqrt(1-abar_t) eps.
Tensor forward_diffuse(const Tensor& x0, int t, const NoiseSchedule& sched,
                       const Tensor& eps);

// One reverse update from x_t to x_{t-1} given the noise estimate.
Tensor reverse_step(const Tensor& x_t, int t, const Tensor& eps_hat,
                    const NoiseSchedule& sched, const Tensor& z, double sigma_t);

}  // namespace osmid::diffusion
