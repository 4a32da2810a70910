#include "osmid/diffusion/schedule.hpp"

#include <cmath>
#include <stdexcept>

namespace osmid::diffusion {

NoiseSchedule build_schedule(int T, double beta_start, double beta_end) {
  if (T < 1) throw std::invalid_argument("build_schedule: T must be >= 1");
  if (!(beta_start > 0.0 && beta_start <= beta_end && beta_end < 1.0))
    throw std::invalid_argument("build_schedule: need 0 < beta_start <= beta_end < 1");
  NoiseSchedule s;
  s.T = T;
  s.beta.resize(static_cast<size_t>(T));
  s.alpha.resize(static_cast<size_t>(T));
  s.alpha_bar.resize(static_cast<size_t>(T));
  double prod = 1.0;
  for (int t = 0; t < T; ++t) {
    const double b = T == 1 ? beta_start
                            : beta_start + (beta_end - beta_start) * t / (T - 1);
    s.beta[static_cast<size_t>(t)] = b;
    s.alpha[static_cast<size_t>(t)] = 1.0 - b;
    prod *= 1.0 - b;
    s.alpha_bar[static_cast<size_t>(t)] = prod;
  }
  return s;
}

Tensor forward_diffuse(const Tensor& x0, int t, const NoiseSchedule& sched,
                       const Tensor& eps) {
  if (t < 1 || t > sched.T) throw std::out_of_range("forward_diffuse: t out of range");
  if (!x0.same_shape(eps))
    throw std::invalid_argument("forward_diffuse: eps shape must match x0");
  const double a = std::sqrt(sched.alpha_bar_at(t));
  const double b = std::sqrt(1.0 - sched.alpha_bar_at(t));
  Tensor out = x0;
  for (int64_t i = 0; i < out.numel(); ++i)
    out[i] = a * x0[i] + b * eps[i];
  return out;
}

Tensor reverse_step(const Tensor& x_t, int t, const Tensor& eps_hat,
                    const NoiseSchedule& sched, const Tensor& z, double sigma_t) {
  if (t < 1 || t > sched.T) throw std::out_of_range("reverse_step: t out of range");
  if (!x_t.same_shape(eps_hat) || !x_t.same_shape(z))
    throw std::invalid_argument("reverse_step: shape mismatch");
  const double inv_sqrt_alpha = 1.0 / std::sqrt(sched.alpha_at(t));
  const double coef = (1.0 - sched.alpha_at(t)) / std::sqrt(1.0 - sched.alpha_bar_at(t));
  Tensor out = x_t;
  for (int64_t i = 0; i < out.numel(); ++i)
    out[i] = inv_sqrt_alpha * (x_t[i] - coef * eps_hat[i]) + sigma_t * z[i];
  return out;
}

}  // namespace osmid::diffusion
