#include "osmid/descriptor/descriptor.hpp"

#include <algorithm>
#include <cmath>
#include <random>
#include <stdexcept>

#include "osmid/core/rng.hpp"
#include "osmid/data/warp.hpp"

namespace osmid::descriptor {

using ad::Var;

DescriptorProjection DescriptorProjection::make(nn::ParamStore& ps,
                                                const std::string& prefix,
                                                int in_channels, int out_dim,
                                                uint64_t seed) {
  DescriptorProjection d;
  d.proj = nn::Linear::make(ps, prefix + ".proj", in_channels, out_dim, seed);
  d.out_dim = out_dim;
  return d;
}

Var sample_descriptor_rows(ad::Tape& tape, Var fused_map,
                           const DescriptorProjection& proj,
                           const std::vector<features::Keypoint>& keypoints,
                           int unified_divisor, int tile_w, int tile_h,
                           std::vector<features::Keypoint>* kept, int* dropped) {
  std::vector<std::pair<double, double>> pts;  // (x, y) in map cells
  int n_dropped = 0;
  if (kept) kept->clear();
  for (const auto& kp : keypoints) {
    if (kp.x < 0.0 || kp.y < 0.0 || kp.x >= tile_w || kp.y >= tile_h) {
      ++n_dropped;
      continue;
    }
    // pixel centre -> map cell coordinate (half-cell convention)
    pts.emplace_back((kp.x + 0.5) / unified_divisor - 0.5,
                     (kp.y + 0.5) / unified_divisor - 0.5);
    if (kept) kept->push_back(kp);
  }
  if (dropped) *dropped = n_dropped;
  if (pts.empty()) {
    return ad::constant(tape, Tensor({0, proj.out_dim}));
  }
  Var rows = ad::sample_bilinear_points(fused_map, pts);
  Var projected = proj.proj(tape, rows);
  return ad::l2_normalize_rows(projected);
}

DescriptorSet sample_descriptors(const fusion::FusedMap& fused,
                                 const DescriptorProjection& proj,
                                 const std::vector<features::Keypoint>& keypoints,
                                 int tile_w, int tile_h, data::Modality modality,
                                 int* dropped) {
  ad::Tape tape;
  DescriptorSet out;
  out.modality = modality;
  Var rows = sample_descriptor_rows(tape, ad::constant(tape, fused.fmap), proj,
                                    keypoints, fused.unified_divisor, tile_w,
                                    tile_h, &out.keypoints, dropped);
  out.vectors = rows.value();
  return out;
}

Var info_nce_graph(ad::Tape& tape, Var d_opt, Var d_sar, double tau,
                   bool symmetrize) {
  if (tau <= 0.0) throw std::invalid_argument("info_nce: tau must be > 0");
  if (d_opt.shape() != d_sar.shape())
    throw std::invalid_argument("info_nce: descriptor sets must be row-aligned");
  if (d_opt.dim(0) < 1) throw std::invalid_argument("info_nce: need n >= 1");
  // rows are unit norm, so the product is cosine similarity
  Var sims = ad::scale(ad::matmul_nt(d_opt, d_sar), 1.0 / tau);
  Var loss = ad::mean_all(ad::sub(ad::row_logsumexp(sims), ad::take_diag(sims)));
  if (symmetrize) {
    Var sims_t = ad::scale(ad::matmul_nt(d_sar, d_opt), 1.0 / tau);
    Var rev = ad::mean_all(ad::sub(ad::row_logsumexp(sims_t), ad::take_diag(sims_t)));
    loss = ad::scale(ad::add(loss, rev), 0.5);
  }
  return loss;
}

double info_nce(const DescriptorSet& d_opt, const DescriptorSet& d_sar, double tau,
                bool symmetrize) {
  if (d_opt.size() != d_sar.size() || d_opt.dim() != d_sar.dim())
    throw std::invalid_argument("info_nce: descriptor sets must be row-aligned");
  ad::Tape tape;
  Var a = ad::constant(tape, d_opt.vectors);
  Var b = ad::constant(tape, d_sar.vectors);
  return info_nce_graph(tape, a, b, tau, symmetrize).scalar();
}

std::optional<TrainingBatch> build_training_batch(
    const data::PairSample& pair, const std::vector<features::Keypoint>& keypoints_opt,
    const data::Homography& h_gt, int n_max, uint64_t aug_seed) {
  const int h = pair.optical.height(), w = pair.optical.width();

  auto rng = make_rng({aug_seed, 0x617567ull});
  std::uniform_real_distribution<double> rot(-10.0, 10.0);
  std::uniform_real_distribution<double> sc(0.8, 1.0);
  const double theta = rot(rng) * M_PI / 180.0;
  const double scale = sc(rng);
  const data::Homography aug =
      data::Homography::similarity_about(w / 2.0, h / 2.0, theta, scale);

  std::vector<features::Keypoint> sorted = keypoints_opt;
  std::stable_sort(sorted.begin(), sorted.end(),
                   [](const auto& a, const auto& b) { return a.score > b.score; });

  TrainingBatch batch;
  batch.augmentation = aug;
  for (const auto& kp : sorted) {
    auto [ax, ay] = aug.apply(kp.x, kp.y);
    auto [sx, sy] = h_gt.apply(kp.x, kp.y);
    if (ax < 0 || ay < 0 || ax >= w || ay >= h) continue;
    if (sx < 0 || sy < 0 || sx >= w || sy >= h) continue;
    batch.optical_points.push_back({ax, ay, kp.score});
    batch.sar_points.push_back({sx, sy, kp.score});
  }
  // the survivor minimum applies before the n_max cap
  if (batch.optical_points.size() < 16) return std::nullopt;
  if (static_cast<int>(batch.optical_points.size()) > n_max) {
    batch.optical_points.resize(static_cast<size_t>(n_max));
    batch.sar_points.resize(static_cast<size_t>(n_max));
  }

  batch.augmented_optical = pair.optical;
  batch.augmented_optical.pixels =
      data::warp_image(pair.optical.pixels, aug.inverse(), h, w);
  batch.augmented_optical.tile_id = pair.optical.tile_id + "-aug";
  return batch;
}

}  // namespace osmid::descriptor
