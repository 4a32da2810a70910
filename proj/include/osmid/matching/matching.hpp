#pragma once

#include <optional>
#include <string>
#include <vector>

#include "osmid/data/geometry.hpp"
#include "osmid/descriptor/descriptor.hpp"

namespace osmid::matching {

struct Match {
  int opt_index = 0;
  int sar_index = 0;
  double similarity = 0.0;  // cosine, in [-1, 1]
};

struct MatchSet {
  std::vector<Match> pairs;  // sorted by descending similarity
  std::string optical_tile_id, sar_tile_id;
};

// Keeps (i,j) iff each is the other's nearest neighbour under cosine
// similarity; injective on both sides by construction.
MatchSet mutual_nn_match(const descriptor::DescriptorSet& d_opt,
                         const descriptor::DescriptorSet& d_sar);

struct RansacConfig {
  double threshold_px = 3.0;
  int max_iters = 2000;
  uint64_t seed = 0;
};

struct HomographyEstimate {
  data::Homography h;
  std::vector<bool> inlier_mask;  // over matches
  int inlier_count = 0;
};

// 4-point DLT hypotheses under RANSAC, least-squares refit on inliers.
// Returns nothing when under 4 matches or every sample was degenerate.
std::optional<HomographyEstimate> estimate_homography(
    const MatchSet& matches, const std::vector<features::Keypoint>& kp_o,
    const std::vector<features::Keypoint>& kp_s, const RansacConfig& cfg);

struct PairMetrics {
  std::string tile_id;
  int ncm = 0;
  double rmse = 0.0;
  bool success = false;
  bool excluded = false;
};

// A match is correct iff |h_gt(p_o) - p_s| < eps_px. Fewer than 10
// correct matches marks the pair failed with rmse pinned to 20 and the
// pair excluded from aggregate means.
PairMetrics evaluate_pair(const MatchSet& matches,
                          const std::vector<features::Keypoint>& kp_o,
                          const std::vector<features::Keypoint>& kp_s,
                          const data::Homography& h_gt, double eps_px);

struct EvalReport {
  double sr_percent = 0.0;
  double mean_ncm = 0.0;   // over non-excluded pairs; NaN when none
  double mean_rmse = 0.0;  // over non-excluded pairs; NaN when none
  std::vector<PairMetrics> per_pair;
  std::string config_digest;
};

EvalReport aggregate_report(std::vector<PairMetrics> metrics,
                            const std::string& config_digest = "");

}  // namespace osmid::matching
