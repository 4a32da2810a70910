#include "osmid/pc/phase_congruency.hpp"

#include <fftw3.h>

#include <algorithm>
#include <cmath>
#include <complex>
#include <mutex>
#include <stdexcept>
#include <vector>

#include "osmid/core/digest.hpp"
#include "osmid/data/warp.hpp"

namespace osmid::pc {

namespace {

std::mutex& fftw_mutex() {
  static std::mutex m;
  return m;
}

constexpr double kEps = 1e-8;
constexpr double kAngularSigmaRatio = 1.3;  // classical spread/orientation ratio

struct Fft2 {
  int h, w;
  std::vector<std::complex<double>> freq;

  Fft2(const Tensor& img) : h(img.dim(0)), w(img.dim(1)) {
    std::vector<std::complex<double>> in(static_cast<size_t>(h) * w);
    for (int64_t i = 0; i < img.numel(); ++i) in[static_cast<size_t>(i)] = img[i];
    freq.resize(in.size());
    std::lock_guard<std::mutex> lock(fftw_mutex());
    fftw_plan plan = fftw_plan_dft_2d(
        h, w, reinterpret_cast<fftw_complex*>(in.data()),
        reinterpret_cast<fftw_complex*>(freq.data()), FFTW_FORWARD, FFTW_ESTIMATE);
    fftw_execute(plan);
    fftw_destroy_plan(plan);
  }
};

// inverse FFT of freq * filter; filter given as real gain per bin
std::vector<std::complex<double>> apply_filter(const Fft2& f,
                                               const std::vector<double>& gain) {
  const size_t n = f.freq.size();
  std::vector<std::complex<double>> in(n), out(n);
  for (size_t i = 0; i < n; ++i) in[i] = f.freq[i] * gain[i];
  {
    std::lock_guard<std::mutex> lock(fftw_mutex());
    fftw_plan plan = fftw_plan_dft_2d(
        f.h, f.w, reinterpret_cast<fftw_complex*>(in.data()),
        reinterpret_cast<fftw_complex*>(out.data()), FFTW_BACKWARD, FFTW_ESTIMATE);
    fftw_execute(plan);
    fftw_destroy_plan(plan);
  }
  const double scale = 1.0 / (static_cast<double>(f.h) * f.w);
  for (auto& v : out) v *= scale;
  return out;
}

double median_of(std::vector<double> v) {
  if (v.empty()) return 0.0;
  const size_t mid = v.size() / 2;
  std::nth_element(v.begin(), v.begin() + static_cast<std::ptrdiff_t>(mid), v.end());
  double m = v[mid];
  if (v.size() % 2 == 0) {
    std::nth_element(v.begin(), v.begin() + static_cast<std::ptrdiff_t>(mid) - 1, v.end());
    m = 0.5 * (m + v[mid - 1]);
  }
  return m;
}

}  // namespace

void PcConfig::validate() const {
  if (n_scales < 1 || n_orientations < 2 || min_wavelength <= 0 ||
      scale_multiplier <= 1.0 || sigma_onf <= 0 || sigma_onf >= 1 || noise_k < 0)
    throw std::invalid_argument("pc config: invalid parameters");
}

std::string PcConfig::digest() const {
  Digest d;
  d.update(n_scales);
  d.update(n_orientations);
  d.update(min_wavelength);
  d.update(scale_multiplier);
  d.update(sigma_onf);
  d.update(noise_k);
  return d.hex();
}

PcMap compute_pc_map(const data::ImageTile& tile, const PcConfig& cfg) {
  return compute_pc_map(tile.channels() == 1 ? tile.pixels
                                             : data::luminance(tile.pixels),
                        cfg);
}

PcMap compute_pc_map(const Tensor& image, const PcConfig& cfg) {
  cfg.validate();
  if (image.ndim() != 3 || image.dim(2) != 1)
    throw std::invalid_argument("compute_pc_map: image must be [H,W,1]");
  const int h = image.dim(0), w = image.dim(1);
  if (h < 2 * cfg.min_wavelength || w < 2 * cfg.min_wavelength)
    throw std::invalid_argument("compute_pc_map: tile smaller than 2x min wavelength");

  Fft2 fft(image);
  const size_t n = static_cast<size_t>(h) * w;

  // frequency grid (normalized to cycles/pixel) and angles
  std::vector<double> radius(n), theta(n);
  for (int y = 0; y < h; ++y) {
    const double fy = (y <= h / 2 ? y : y - h) / static_cast<double>(h);
    for (int x = 0; x < w; ++x) {
      const double fx = (x <= w / 2 ? x : x - w) / static_cast<double>(w);
      radius[static_cast<size_t>(y) * w + x] = std::hypot(fx, fy);
      theta[static_cast<size_t>(y) * w + x] = std::atan2(-fy, fx);
    }
  }
  radius[0] = 1.0;  // avoid log(0) at DC; gain there is zeroed anyway

  // radial log-Gabor gains per scale
  const double log_sigma = std::log(cfg.sigma_onf);
  std::vector<std::vector<double>> radial(static_cast<size_t>(cfg.n_scales));
  for (int s = 0; s < cfg.n_scales; ++s) {
    const double wavelength = cfg.min_wavelength * std::pow(cfg.scale_multiplier, s);
    const double f0 = 1.0 / wavelength;
    auto& g = radial[static_cast<size_t>(s)];
    g.resize(n);
    for (size_t i = 0; i < n; ++i) {
      const double lr = std::log(radius[i] / f0);
      g[i] = std::exp(-(lr * lr) / (2.0 * log_sigma * log_sigma));
    }
    g[0] = 0.0;
  }

  const double theta_sigma = M_PI / cfg.n_orientations / kAngularSigmaRatio;
  Tensor energy_total({h, w, 1});
  Tensor amp_total({h, w, 1});

  std::vector<double> gain(n);
  for (int o = 0; o < cfg.n_orientations; ++o) {
    const double angle = o * M_PI / cfg.n_orientations;
    std::vector<double> spread(n);
    for (size_t i = 0; i < n; ++i) {
      const double ds = std::sin(theta[i]) * std::cos(angle) -
                        std::cos(theta[i]) * std::sin(angle);
      const double dc = std::cos(theta[i]) * std::cos(angle) +
                        std::sin(theta[i]) * std::sin(angle);
      const double dtheta = std::fabs(std::atan2(ds, dc));
      spread[i] = std::exp(-(dtheta * dtheta) / (2.0 * theta_sigma * theta_sigma));
    }

    std::vector<double> sum_e(n, 0.0), sum_o(n, 0.0), sum_amp(n, 0.0);
    std::vector<std::vector<std::complex<double>>> responses;
    responses.reserve(static_cast<size_t>(cfg.n_scales));
    for (int s = 0; s < cfg.n_scales; ++s) {
      for (size_t i = 0; i < n; ++i) gain[i] = radial[static_cast<size_t>(s)][i] * spread[i];
      responses.push_back(apply_filter(fft, gain));
      const auto& r = responses.back();
      for (size_t i = 0; i < n; ++i) {
        sum_e[i] += r[i].real();
        sum_o[i] += r[i].imag();
        sum_amp[i] += std::abs(r[i]);
      }
    }

    // noise threshold from the smallest-scale response magnitude
    std::vector<double> amp0(n);
    for (size_t i = 0; i < n; ++i) amp0[i] = std::abs(responses[0][i]);
    const double tau = median_of(amp0) / std::sqrt(std::log(4.0));
    const double m = 1.0 / cfg.scale_multiplier;
    const double total_tau = tau * (1.0 - std::pow(m, cfg.n_scales)) / (1.0 - m);
    const double noise_mean = total_tau * std::sqrt(M_PI / 2.0);
    const double noise_sigma = total_tau * std::sqrt((4.0 - M_PI) / 2.0);
    const double t_o = noise_mean + cfg.noise_k * noise_sigma;

    for (size_t i = 0; i < n; ++i) {
      const double xe = std::sqrt(sum_e[i] * sum_e[i] + sum_o[i] * sum_o[i]) + kEps;
      const double mean_e = sum_e[i] / xe, mean_o = sum_o[i] / xe;
      double e = 0.0;
      for (int s = 0; s < cfg.n_scales; ++s) {
        const auto& r = responses[static_cast<size_t>(s)][i];
        e += r.real() * mean_e + r.imag() * mean_o -
             std::fabs(r.real() * mean_o - r.imag() * mean_e);
      }
      energy_total.data[i] += std::max(e - t_o, 0.0);
      amp_total.data[i] += sum_amp[i];
    }
  }

  PcMap out;
  out.values = Tensor({h, w, 1});
  for (size_t i = 0; i < n; ++i)
    out.values.data[i] =
        std::clamp(energy_total.data[i] / (amp_total.data[i] + kEps), 0.0, 1.0);
  out.params_digest = cfg.digest();
  return out;
}

}  // namespace osmid::pc
