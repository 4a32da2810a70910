#pragma once

#include <optional>

#include "osmid/config/run_config.hpp"
#include "osmid/descriptor/stage2.hpp"
#include "osmid/matching/matching.hpp"

namespace osmid::pipeline {

struct MatchOutcome {
  std::vector<features::Keypoint> kp_opt, kp_sar;
  descriptor::DescriptorSet desc_opt, desc_sar;
  matching::MatchSet matches;
  std::optional<matching::HomographyEstimate> estimate;
  std::optional<matching::PairMetrics> metrics;
  double seconds_detect = 0, seconds_describe = 0, seconds_match = 0;
};

// Full per-pair flow: PC-FAST detection independently on each modality,
// feature extraction, fusion, descriptor sampling, mutual-NN matching,
// robust estimation, and (with ground truth) the evaluation metrics.
MatchOutcome match_pair(descriptor::MatcherModel& model,
                        const data::PairSample& pair,
                        const config::EvalConfig& eval_cfg,
                        bool with_ground_truth = true);

struct DatasetEval {
  matching::EvalReport report;
  std::vector<MatchOutcome> outcomes;  // aligned with pair order
  double seconds_total = 0;
};

DatasetEval evaluate_dataset(descriptor::MatcherModel& model,
                             const std::vector<data::PairSample>& pairs,
                             const config::EvalConfig& eval_cfg, int workers);

}  // namespace osmid::pipeline
