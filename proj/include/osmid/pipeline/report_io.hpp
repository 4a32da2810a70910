#pragma once

#include <string>
#include <vector>

#include "osmid/data/tile.hpp"
#include "osmid/pipeline/pipeline.hpp"

namespace osmid::pipeline {

// EvalReport serialization: JSON (full) and CSV (one row per pair).
void write_report_json(const std::string& path, const matching::EvalReport& report,
                       double eps_px, const std::string& label,
                       double seconds_total = 0.0);
void write_report_csv(const std::string& path, const matching::EvalReport& report);

struct LoadedReport {
  std::string label;
  double sr_percent = 0, mean_ncm = 0, mean_rmse = 0;
  double eps_px = 0;
  std::vector<double> per_pair_rmse;  // included pairs only
};
LoadedReport load_report_json(const std::string& path);

// Side-by-side raster with connecting lines for the correct matches
// (all matches when no ground truth is available).
void write_match_visualization(const std::string& path, const data::PairSample& pair,
                               const MatchOutcome& outcome, double eps_px,
                               bool have_ground_truth);

// Comparison table (rows: label, SR, NCM, RMSE) plus an eps mismatch
// warning column; returns the CSV text that was written.
std::string write_comparison_table(const std::string& path,
                                   const std::vector<LoadedReport>& reports);

void write_rmse_histogram(const std::string& path,
                          const std::vector<LoadedReport>& reports);
void write_sr_bar_chart(const std::string& path,
                        const std::vector<LoadedReport>& reports);

}  // namespace osmid::pipeline
