#pragma once

// Independent oracles shared by the unit and acceptance suites. These
// deliberately re-derive results with naive algorithms (direct DFT,
// exhaustive scans, long-double accumulation) so they cannot share bugs
// with the implementation under test.

#include <cmath>
#include <complex>
#include <vector>

#include "osmid/core/tensor.hpp"
#include "osmid/matching/matching.hpp"
#include "osmid/pc/phase_congruency.hpp"

namespace osmid::testing {

// 1-D phase congruency on a signal via naive DFT and a single-sided
// log-Gabor bank; used to pin edge localization.
inline std::vector<double> pc_1d_oracle(const std::vector<double>& signal,
                                        const pc::PcConfig& cfg) {
  const int n = static_cast<int>(signal.size());
  std::vector<std::complex<double>> freq(static_cast<size_t>(n));
  for (int k = 0; k < n; ++k) {
    std::complex<double> acc(0, 0);
    for (int x = 0; x < n; ++x)
      acc += signal[static_cast<size_t>(x)] *
             std::exp(std::complex<double>(0, -2.0 * M_PI * k * x / n));
    freq[static_cast<size_t>(k)] = acc;
  }
  std::vector<double> sum_e(static_cast<size_t>(n), 0), sum_o(static_cast<size_t>(n), 0),
      sum_amp(static_cast<size_t>(n), 0);
  std::vector<std::vector<std::complex<double>>> responses;
  const double log_sigma = std::log(cfg.sigma_onf);
  for (int s = 0; s < cfg.n_scales; ++s) {
    const double f0 = 1.0 / (cfg.min_wavelength * std::pow(cfg.scale_multiplier, s));
    std::vector<std::complex<double>> resp(static_cast<size_t>(n), {0, 0});
    for (int x = 0; x < n; ++x) {
      std::complex<double> acc(0, 0);
      for (int k = 0; k < n; ++k) {
        const double f = (k <= n / 2 ? k : k - n) / static_cast<double>(n);
        double gain = 0.0;
        if (k != 0 && f > 0) {
          const double lr = std::log(f / f0);
          gain = 2.0 * std::exp(-lr * lr / (2.0 * log_sigma * log_sigma));
        }
        acc += gain * freq[static_cast<size_t>(k)] *
               std::exp(std::complex<double>(0, 2.0 * M_PI * k * x / n));
      }
      resp[static_cast<size_t>(x)] = acc / static_cast<double>(n);
    }
    responses.push_back(resp);
    for (int x = 0; x < n; ++x) {
      sum_e[static_cast<size_t>(x)] += resp[static_cast<size_t>(x)].real();
      sum_o[static_cast<size_t>(x)] += resp[static_cast<size_t>(x)].imag();
      sum_amp[static_cast<size_t>(x)] += std::abs(resp[static_cast<size_t>(x)]);
    }
  }
  std::vector<double> pcv(static_cast<size_t>(n));
  for (int x = 0; x < n; ++x) {
    const double xe =
        std::hypot(sum_e[static_cast<size_t>(x)], sum_o[static_cast<size_t>(x)]) + 1e-8;
    const double me = sum_e[static_cast<size_t>(x)] / xe,
                 mo = sum_o[static_cast<size_t>(x)] / xe;
    double e = 0;
    for (int s = 0; s < cfg.n_scales; ++s) {
      const auto& r = responses[static_cast<size_t>(s)][static_cast<size_t>(x)];
      e += r.real() * me + r.imag() * mo - std::fabs(r.real() * mo - r.imag() * me);
    }
    pcv[static_cast<size_t>(x)] = std::max(e, 0.0) / (sum_amp[static_cast<size_t>(x)] + 1e-8);
  }
  return pcv;
}

// Straight-line re-implementation of the evaluation protocol in long
// double; the production path must agree exactly on NCM/success and to
// 1e-9 on RMSE.
struct BruteForceMetrics {
  int ncm = 0;
  long double rmse = 0.0L;
  bool success = false;
  bool excluded = false;
};

inline BruteForceMetrics brute_force_evaluate(
    const matching::MatchSet& matches, const std::vector<features::Keypoint>& kp_o,
    const std::vector<features::Keypoint>& kp_s, const data::Homography& h_gt,
    double eps_px) {
  BruteForceMetrics out;
  long double acc = 0.0L;
  for (const auto& m : matches.pairs) {
    const auto& po = kp_o.at(static_cast<size_t>(m.opt_index));
    const auto& ps = kp_s.at(static_cast<size_t>(m.sar_index));
    const long double w = h_gt.m[6] * po.x + h_gt.m[7] * po.y + h_gt.m[8];
    const long double gx = (h_gt.m[0] * po.x + h_gt.m[1] * po.y + h_gt.m[2]) / w;
    const long double gy = (h_gt.m[3] * po.x + h_gt.m[4] * po.y + h_gt.m[5]) / w;
    const long double dx = gx - ps.x, dy = gy - ps.y;
    const long double err = sqrtl(dx * dx + dy * dy);
    if (err < eps_px) {
      ++out.ncm;
      acc += err * err;
    }
  }
  if (out.ncm >= 10) {
    out.success = true;
    out.excluded = false;
    out.rmse = sqrtl(acc / out.ncm);
  } else {
    out.success = false;
    out.excluded = true;
    out.rmse = 20.0L;
  }
  return out;
}

}  // namespace osmid::testing
