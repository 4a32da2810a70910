#pragma once

#include <optional>
#include <vector>

#include "osmid/ad/ops.hpp"
#include "osmid/data/tile.hpp"
#include "osmid/features/keypoint.hpp"
#include "osmid/fusion/msaa.hpp"
#include "osmid/nn/module.hpp"

namespace osmid::descriptor {

struct DescriptorSet {
  Tensor vectors;  // [n,d], unit L2 rows
  std::vector<features::Keypoint> keypoints;
  data::Modality modality = data::Modality::optical;

  int size() const { return vectors.numel() == 0 ? 0 : vectors.dim(0); }
  int dim() const { return vectors.numel() == 0 ? 0 : vectors.dim(1); }
};

// Learnable linear map from fused channels to descriptor space.
struct DescriptorProjection {
  nn::Linear proj;
  int out_dim = 128;

  static DescriptorProjection make(nn::ParamStore& ps, const std::string& prefix,
                                   int in_channels, int out_dim, uint64_t seed);
};

// Bilinear sampling of the fused map at keypoint pixel coordinates
// (scaled by the unified divisor), projection to d dims, L2 row norm.
// Out-of-bounds keypoints are dropped and counted.
ad::Var sample_descriptor_rows(ad::Tape& tape, ad::Var fused_map,
                               const DescriptorProjection& proj,
                               const std::vector<features::Keypoint>& keypoints,
                               int unified_divisor, int tile_w, int tile_h,
                               std::vector<features::Keypoint>* kept,
                               int* dropped);

DescriptorSet sample_descriptors(const fusion::FusedMap& fused,
                                 const DescriptorProjection& proj,
                                 const std::vector<features::Keypoint>& keypoints,
                                 int tile_w, int tile_h,
                                 data::Modality modality, int* dropped = nullptr);

// Temperature-scaled contrastive loss over row-aligned descriptor sets;
// negatives are the other SAR descriptors of the same batch.
ad::Var info_nce_graph(ad::Tape& tape, ad::Var d_opt, ad::Var d_sar, double tau,
                       bool symmetrize = false);
double info_nce(const DescriptorSet& d_opt, const DescriptorSet& d_sar, double tau,
                bool symmetrize = false);

struct TrainingBatch {
  data::ImageTile augmented_optical;
  data::Homography augmentation;  // original-optical -> augmented frame
  std::vector<features::Keypoint> optical_points;  // in the augmented frame
  std::vector<features::Keypoint> sar_points;      // in the SAR frame
};

// Applies a random rotation/scale augmentation to the optical tile and
// transfers detected keypoints into both frames; returns nothing when
// fewer than 16 correspondences survive.
std::optional<TrainingBatch> build_training_batch(
    const data::PairSample& pair, const std::vector<features::Keypoint>& keypoints_opt,
    const data::Homography& h_gt, int n_max, uint64_t aug_seed);

}  // namespace osmid::descriptor
