#include "osmid/pipeline/pipeline.hpp"

#include <atomic>
#include <chrono>
#include <thread>

#include "osmid/pc/fast.hpp"

namespace osmid::pipeline {

namespace {
double seconds_since(std::chrono::steady_clock::time_point t0) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}
}  // namespace

MatchOutcome match_pair(descriptor::MatcherModel& model,
                        const data::PairSample& pair,
                        const config::EvalConfig& eval_cfg, bool with_ground_truth) {
  const descriptor::Stage2Config& cfg = model.config();
  MatchOutcome out;

  // keypoints are detected independently per modality; ground truth is
  // never consulted at inference
  auto t0 = std::chrono::steady_clock::now();
  pc::PcMap pc_opt = pc::compute_pc_map(pair.optical, cfg.pc);
  pc::PcMap pc_sar = pc::compute_pc_map(pair.sar, cfg.pc);
  out.kp_opt = pc::detect_fast(pc_opt, cfg.fast);
  out.kp_sar = pc::detect_fast(pc_sar, cfg.fast);
  out.seconds_detect = seconds_since(t0);

  t0 = std::chrono::steady_clock::now();
  out.desc_opt = model.describe_optical(pair.optical, out.kp_opt);
  features::FeaturePyramid taps = model.extract_taps(pair);
  out.desc_sar = model.describe_sar(taps, out.kp_sar, pair.sar.width(), pair.sar.height());
  out.seconds_describe = seconds_since(t0);

  t0 = std::chrono::steady_clock::now();
  out.matches = matching::mutual_nn_match(out.desc_opt, out.desc_sar);
  out.matches.optical_tile_id = pair.optical.tile_id;
  out.matches.sar_tile_id = pair.sar.tile_id;
  out.estimate = matching::estimate_homography(out.matches, out.desc_opt.keypoints,
                                               out.desc_sar.keypoints, eval_cfg.ransac);
  if (with_ground_truth) {
    out.metrics = matching::evaluate_pair(out.matches, out.desc_opt.keypoints,
                                          out.desc_sar.keypoints, pair.h_gt,
                                          eval_cfg.eps_px);
    out.metrics->tile_id = pair.optical.tile_id;
  }
  out.seconds_match = seconds_since(t0);
  return out;
}

DatasetEval evaluate_dataset(descriptor::MatcherModel& model,
                             const std::vector<data::PairSample>& pairs,
                             const config::EvalConfig& eval_cfg, int workers) {
  DatasetEval ev;
  ev.outcomes.resize(pairs.size());
  const auto t0 = std::chrono::steady_clock::now();

  std::atomic<size_t> next{0};
  auto worker = [&] {
    for (;;) {
      const size_t i = next.fetch_add(1);
      if (i >= pairs.size()) return;
      ev.outcomes[i] = match_pair(model, pairs[i], eval_cfg, true);
    }
  };
  const int n_workers = std::max(1, std::min<int>(workers, static_cast<int>(pairs.size())));
  if (n_workers == 1) {
    worker();
  } else {
    std::vector<std::thread> threads;
    for (int i = 0; i < n_workers; ++i) threads.emplace_back(worker);
    for (auto& t : threads) t.join();
  }

  std::vector<matching::PairMetrics> metrics;
  metrics.reserve(pairs.size());
  for (const auto& o : ev.outcomes) metrics.push_back(*o.metrics);
  ev.report = matching::aggregate_report(std::move(metrics));
  ev.seconds_total = seconds_since(t0);
  return ev;
}

}  // namespace osmid::pipeline
