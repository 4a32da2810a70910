#include "osmid/matching/matching.hpp"

#include <Eigen/Dense>
#include <Eigen/SVD>

#include <algorithm>
#include <cmath>
#include <random>

#include "osmid/core/rng.hpp"

namespace osmid::matching {

MatchSet mutual_nn_match(const descriptor::DescriptorSet& d_opt,
                         const descriptor::DescriptorSet& d_sar) {
  MatchSet out;
  const int n = d_opt.size(), m = d_sar.size();
  if (n == 0 || m == 0) return out;
  if (d_opt.dim() != d_sar.dim())
    throw std::invalid_argument("mutual_nn_match: descriptor dims differ");

  using RowMat = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
  Eigen::Map<const RowMat> a(d_opt.vectors.data.data(), n, d_opt.dim());
  Eigen::Map<const RowMat> b(d_sar.vectors.data.data(), m, d_sar.dim());
  RowMat sims = a * b.transpose();

  std::vector<int> best_for_opt(static_cast<size_t>(n));
  std::vector<int> best_for_sar(static_cast<size_t>(m));
  for (int i = 0; i < n; ++i) {
    int bi = 0;
    for (int j = 1; j < m; ++j)
      if (sims(i, j) > sims(i, bi)) bi = j;
    best_for_opt[static_cast<size_t>(i)] = bi;
  }
  for (int j = 0; j < m; ++j) {
    int bj = 0;
    for (int i = 1; i < n; ++i)
      if (sims(i, j) > sims(bj, j)) bj = i;
    best_for_sar[static_cast<size_t>(j)] = bj;
  }
  for (int i = 0; i < n; ++i) {
    const int j = best_for_opt[static_cast<size_t>(i)];
    if (best_for_sar[static_cast<size_t>(j)] == i)
      out.pairs.push_back({i, j, sims(i, j)});
  }
  std::stable_sort(out.pairs.begin(), out.pairs.end(),
                   [](const Match& x, const Match& y) { return x.similarity > y.similarity; });
  out.optical_tile_id = "";
  out.sar_tile_id = "";
  return out;
}

namespace {

// Normalized DLT from point correspondences.
std::optional<data::Homography> dlt(const std::vector<std::pair<double, double>>& src,
                                    const std::vector<std::pair<double, double>>& dst) {
  const size_t n = src.size();
  if (n < 4) return std::nullopt;

  auto normalize = [](const std::vector<std::pair<double, double>>& pts,
                      Eigen::Matrix3d& t) {
    double mx = 0, my = 0;
    for (auto& p : pts) {
      mx += p.first;
      my += p.second;
    }
    mx /= static_cast<double>(pts.size());
    my /= static_cast<double>(pts.size());
    double dist = 0;
    for (auto& p : pts) dist += std::hypot(p.first - mx, p.second - my);
    dist /= static_cast<double>(pts.size());
    if (dist < 1e-12) return false;
    const double s = std::sqrt(2.0) / dist;
    t << s, 0, -s * mx, 0, s, -s * my, 0, 0, 1;
    return true;
  };

  Eigen::Matrix3d ts, td;
  if (!normalize(src, ts) || !normalize(dst, td)) return std::nullopt;

  Eigen::MatrixXd a(2 * static_cast<Eigen::Index>(n), 9);
  for (size_t i = 0; i < n; ++i) {
    const double x = ts(0, 0) * src[i].first + ts(0, 2);
    const double y = ts(1, 1) * src[i].second + ts(1, 2);
    const double u = td(0, 0) * dst[i].first + td(0, 2);
    const double v = td(1, 1) * dst[i].second + td(1, 2);
    a.row(2 * static_cast<Eigen::Index>(i)) << -x, -y, -1, 0, 0, 0, u * x, u * y, u;
    a.row(2 * static_cast<Eigen::Index>(i) + 1) << 0, 0, 0, -x, -y, -1, v * x, v * y, v;
  }
  Eigen::JacobiSVD<Eigen::MatrixXd> svd(a, Eigen::ComputeFullV);
  Eigen::VectorXd hv = svd.matrixV().col(8);
  Eigen::Matrix3d hn;
  hn << hv(0), hv(1), hv(2), hv(3), hv(4), hv(5), hv(6), hv(7), hv(8);
  Eigen::Matrix3d h = td.inverse() * hn * ts;
  if (std::fabs(h(2, 2)) < 1e-12) return std::nullopt;
  h /= h(2, 2);
  std::array<double, 9> arr{h(0, 0), h(0, 1), h(0, 2), h(1, 0), h(1, 1),
                            h(1, 2), h(2, 0), h(2, 1), h(2, 2)};
  data::Homography out = data::Homography::from_array(arr);
  if (!out.invertible()) return std::nullopt;
  return out;
}

bool collinear(const std::vector<std::pair<double, double>>& pts) {
  for (size_t i = 0; i < pts.size(); ++i)
    for (size_t j = i + 1; j < pts.size(); ++j)
      for (size_t k = j + 1; k < pts.size(); ++k) {
        const double area = (pts[j].first - pts[i].first) * (pts[k].second - pts[i].second) -
                            (pts[k].first - pts[i].first) * (pts[j].second - pts[i].second);
        if (std::fabs(area) < 1e-6) return true;
      }
  return false;
}

}  // namespace

std::optional<HomographyEstimate> estimate_homography(
    const MatchSet& matches, const std::vector<features::Keypoint>& kp_o,
    const std::vector<features::Keypoint>& kp_s, const RansacConfig& cfg) {
  const size_t n = matches.pairs.size();
  if (n < 4) return std::nullopt;

  std::vector<std::pair<double, double>> src(n), dst(n);
  for (size_t i = 0; i < n; ++i) {
    const auto& m = matches.pairs[i];
    src[i] = {kp_o[static_cast<size_t>(m.opt_index)].x, kp_o[static_cast<size_t>(m.opt_index)].y};
    dst[i] = {kp_s[static_cast<size_t>(m.sar_index)].x, kp_s[static_cast<size_t>(m.sar_index)].y};
  }

  auto rng = make_rng({cfg.seed, 0x72616e73ull});
  std::uniform_int_distribution<size_t> pick(0, n - 1);
  const double thr2 = cfg.threshold_px * cfg.threshold_px;

  std::vector<bool> best_mask(n, false);
  int best_count = 0;
  bool any_hypothesis = false;

  for (int iter = 0; iter < cfg.max_iters; ++iter) {
    size_t idx[4];
    idx[0] = pick(rng);
    do { idx[1] = pick(rng); } while (idx[1] == idx[0]);
    do { idx[2] = pick(rng); } while (idx[2] == idx[0] || idx[2] == idx[1]);
    do { idx[3] = pick(rng); } while (idx[3] == idx[0] || idx[3] == idx[1] || idx[3] == idx[2]);

    std::vector<std::pair<double, double>> s4, d4;
    for (size_t k : idx) {
      s4.push_back(src[k]);
      d4.push_back(dst[k]);
    }
    if (collinear(s4) || collinear(d4)) continue;
    auto h = dlt(s4, d4);
    if (!h) continue;
    any_hypothesis = true;

    int count = 0;
    std::vector<bool> mask(n, false);
    for (size_t i = 0; i < n; ++i) {
      auto [px, py] = h->apply(src[i].first, src[i].second);
      const double dx = px - dst[i].first, dy = py - dst[i].second;
      if (dx * dx + dy * dy < thr2) {
        mask[i] = true;
        ++count;
      }
    }
    if (count > best_count) {
      best_count = count;
      best_mask = mask;
    }
  }
  if (!any_hypothesis || best_count < 4) return std::nullopt;

  // refit on the inliers
  std::vector<std::pair<double, double>> si, di;
  for (size_t i = 0; i < n; ++i)
    if (best_mask[i]) {
      si.push_back(src[i]);
      di.push_back(dst[i]);
    }
  auto refined = dlt(si, di);
  if (!refined) return std::nullopt;

  HomographyEstimate est;
  est.h = *refined;
  est.inlier_mask = best_mask;
  est.inlier_count = best_count;
  return est;
}

PairMetrics evaluate_pair(const MatchSet& matches,
                          const std::vector<features::Keypoint>& kp_o,
                          const std::vector<features::Keypoint>& kp_s,
                          const data::Homography& h_gt, double eps_px) {
  PairMetrics pm;
  pm.tile_id = matches.optical_tile_id;
  double sq_sum = 0.0;
  for (const auto& m : matches.pairs) {
    const auto& po = kp_o[static_cast<size_t>(m.opt_index)];
    const auto& ps = kp_s[static_cast<size_t>(m.sar_index)];
    auto [gx, gy] = h_gt.apply(po.x, po.y);
    const double err = std::hypot(gx - ps.x, gy - ps.y);
    if (err < eps_px) {
      ++pm.ncm;
      sq_sum += err * err;
    }
  }
  if (pm.ncm >= 10) {
    pm.success = true;
    pm.excluded = false;
    pm.rmse = std::sqrt(sq_sum / pm.ncm);
  } else {
    pm.success = false;
    pm.excluded = true;
    pm.rmse = 20.0;
  }
  return pm;
}

EvalReport aggregate_report(std::vector<PairMetrics> metrics,
                            const std::string& config_digest) {
  if (metrics.empty())
    throw std::invalid_argument("aggregate_report: empty metrics list");
  std::stable_sort(metrics.begin(), metrics.end(),
                   [](const PairMetrics& a, const PairMetrics& b) {
                     return a.tile_id < b.tile_id;
                   });
  EvalReport rep;
  rep.config_digest = config_digest;
  int n_success = 0, n_included = 0;
  double ncm_sum = 0, rmse_sum = 0;
  for (const auto& m : metrics) {
    if (m.success) ++n_success;
    if (!m.excluded) {
      ++n_included;
      ncm_sum += m.ncm;
      rmse_sum += m.rmse;
    }
  }
  rep.sr_percent = 100.0 * n_success / static_cast<double>(metrics.size());
  if (n_included > 0) {
    rep.mean_ncm = ncm_sum / n_included;
    rep.mean_rmse = rmse_sum / n_included;
  } else {
    rep.mean_ncm = std::nan("");
    rep.mean_rmse = std::nan("");
  }
  rep.per_pair = std::move(metrics);
  return rep;
}

}  // namespace osmid::matching
