#pragma once

#include <vector>

#include "osmid/features/keypoint.hpp"
#include "osmid/pc/phase_congruency.hpp"

namespace osmid::pc {

struct FastConfig {
  double threshold = 0.08;  // real-valued intensity threshold on [0,1] maps
  int nms_radius = 4;
  int max_keypoints = 1000;
};

// FAST segment test (16-pixel circle, contiguous arc of 9) on the PC map
// with real-valued thresholding; corner score is the sum of arc excesses;
// greedy non-max suppression by descending score.
std::vector<features::Keypoint> detect_fast(const PcMap& pc, double threshold,
                                            int nms_radius, int max_keypoints);

inline std::vector<features::Keypoint> detect_fast(const PcMap& pc,
                                                   const FastConfig& cfg) {
  return detect_fast(pc, cfg.threshold, cfg.nms_radius, cfg.max_keypoints);
}

}  // namespace osmid::pc
