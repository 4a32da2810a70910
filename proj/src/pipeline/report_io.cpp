#include "osmid/pipeline/report_io.hpp"

#include <json.hpp>
#include <opencv2/imgcodecs.hpp>
#include <opencv2/imgproc.hpp>

#include <cmath>
#include <fstream>
#include <sstream>

using nlohmann::json;

namespace osmid::pipeline {

namespace {
json nan_to_null(double v) {
  if (std::isnan(v)) return nullptr;
  return v;
}
}  // namespace

void write_report_json(const std::string& path, const matching::EvalReport& report,
                       double eps_px, const std::string& label, double seconds_total) {
  json j;
  j["label"] = label;
  j["sr_percent"] = report.sr_percent;
  j["mean_ncm"] = nan_to_null(report.mean_ncm);
  j["mean_rmse"] = nan_to_null(report.mean_rmse);
  j["eps_px"] = eps_px;
  j["config_digest"] = report.config_digest;
  j["wall_clock_seconds"] = seconds_total;
  json rows = json::array();
  for (const auto& m : report.per_pair) {
    rows.push_back({{"tile_id", m.tile_id},
                    {"ncm", m.ncm},
                    {"rmse", m.rmse},
                    {"success", m.success},
                    {"excluded", m.excluded}});
  }
  j["per_pair"] = rows;
  std::ofstream os(path);
  os << j.dump(2) << "\n";
  if (!os) throw std::runtime_error("cannot write report: " + path);
}

void write_report_csv(const std::string& path, const matching::EvalReport& report) {
  std::ofstream os(path);
  os << "tile_id,ncm,rmse,success\n";
  for (const auto& m : report.per_pair)
    os << m.tile_id << "," << m.ncm << "," << m.rmse << "," << (m.success ? 1 : 0)
       << "\n";
  if (!os) throw std::runtime_error("cannot write report csv: " + path);
}

LoadedReport load_report_json(const std::string& path) {
  std::ifstream is(path);
  if (!is) throw std::runtime_error("cannot open report: " + path);
  json j = json::parse(is);
  LoadedReport r;
  r.label = j.value("label", path);
  r.sr_percent = j.at("sr_percent").get<double>();
  r.mean_ncm = j.at("mean_ncm").is_null() ? std::nan("") : j.at("mean_ncm").get<double>();
  r.mean_rmse = j.at("mean_rmse").is_null() ? std::nan("") : j.at("mean_rmse").get<double>();
  r.eps_px = j.value("eps_px", 0.0);
  for (const auto& row : j.at("per_pair"))
    if (!row.at("excluded").get<bool>()) r.per_pair_rmse.push_back(row.at("rmse").get<double>());
  return r;
}

namespace {
cv::Mat tile_to_bgr(const data::ImageTile& tile) {
  const int h = tile.height(), w = tile.width();
  cv::Mat img(h, w, CV_8UC3);
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < w; ++x) {
      double r, g, b;
      if (tile.channels() == 3) {
        r = tile.pixels.at3(y, x, 0);
        g = tile.pixels.at3(y, x, 1);
        b = tile.pixels.at3(y, x, 2);
      } else {
        r = g = b = tile.pixels.at3(y, x, 0);
      }
      img.at<cv::Vec3b>(y, x) = cv::Vec3b(static_cast<uchar>(b * 255),
                                          static_cast<uchar>(g * 255),
                                          static_cast<uchar>(r * 255));
    }
  return img;
}
}  // namespace

void write_match_visualization(const std::string& path, const data::PairSample& pair,
                               const MatchOutcome& outcome, double eps_px,
                               bool have_ground_truth) {
  cv::Mat left = tile_to_bgr(pair.optical);
  cv::Mat right = tile_to_bgr(pair.sar);
  const int h = std::max(left.rows, right.rows);
  cv::Mat canvas(h, left.cols + right.cols, CV_8UC3, cv::Scalar(0, 0, 0));
  left.copyTo(canvas(cv::Rect(0, 0, left.cols, left.rows)));
  right.copyTo(canvas(cv::Rect(left.cols, 0, right.cols, right.rows)));

  const cv::Scalar green(0, 200, 0);
  for (const auto& m : outcome.matches.pairs) {
    const auto& po = outcome.desc_opt.keypoints[static_cast<size_t>(m.opt_index)];
    const auto& ps = outcome.desc_sar.keypoints[static_cast<size_t>(m.sar_index)];
    if (have_ground_truth) {
      auto [gx, gy] = pair.h_gt.apply(po.x, po.y);
      if (std::hypot(gx - ps.x, gy - ps.y) >= eps_px) continue;  // correct only
    }
    const cv::Point a(static_cast<int>(po.x), static_cast<int>(po.y));
    const cv::Point b(static_cast<int>(ps.x) + left.cols, static_cast<int>(ps.y));
    cv::circle(canvas, a, 2, green, -1);
    cv::circle(canvas, b, 2, green, -1);
    cv::line(canvas, a, b, green, 1);
  }
  if (!cv::imwrite(path, canvas))
    throw std::runtime_error("cannot write visualization: " + path);
}

std::string write_comparison_table(const std::string& path,
                                   const std::vector<LoadedReport>& reports) {
  bool eps_mismatch = false;
  for (size_t i = 1; i < reports.size(); ++i)
    if (reports[i].eps_px != reports[0].eps_px) eps_mismatch = true;

  std::ostringstream os;
  os << "label,SR,NCM,RMSE" << (eps_mismatch ? ",warning" : "") << "\n";
  for (const auto& r : reports) {
    os << r.label << "," << r.sr_percent << ",";
    if (std::isnan(r.mean_ncm))
      os << "NA";
    else
      os << r.mean_ncm;
    os << ",";
    if (std::isnan(r.mean_rmse))
      os << "NA";
    else
      os << r.mean_rmse;
    if (eps_mismatch) os << ",eps_px differs across reports";
    os << "\n";
  }
  std::ofstream f(path);
  f << os.str();
  if (!f) throw std::runtime_error("cannot write table: " + path);
  return os.str();
}

void write_rmse_histogram(const std::string& path,
                          const std::vector<LoadedReport>& reports) {
  const int w = 640, h = 400, bins = 20;
  const double max_rmse = 4.0;
  cv::Mat canvas(h, w, CV_8UC3, cv::Scalar(255, 255, 255));
  const cv::Scalar colors[] = {{180, 80, 0}, {0, 140, 220}, {60, 160, 60}, {40, 40, 200}};
  int ci = 0;
  for (const auto& r : reports) {
    std::vector<int> hist(bins, 0);
    for (double v : r.per_pair_rmse) {
      int b = static_cast<int>(v / max_rmse * bins);
      b = std::min(std::max(b, 0), bins - 1);
      ++hist[static_cast<size_t>(b)];
    }
    const int maxc = std::max(1, *std::max_element(hist.begin(), hist.end()));
    const int bw = w / bins;
    for (int b = 0; b < bins; ++b) {
      const int bh = hist[static_cast<size_t>(b)] * (h - 40) / maxc;
      cv::rectangle(canvas, cv::Point(b * bw + 2 + ci * 3, h - 20 - bh),
                    cv::Point(b * bw + bw - 2 + ci * 3, h - 20),
                    colors[ci % 4], ci == 0 ? cv::FILLED : 2);
    }
    ++ci;
  }
  cv::line(canvas, {0, h - 20}, {w, h - 20}, {0, 0, 0}, 1);
  cv::putText(canvas, "per-pair RMSE (px), 0..4", {10, 20}, cv::FONT_HERSHEY_SIMPLEX,
              0.5, {0, 0, 0});
  if (!cv::imwrite(path, canvas))
    throw std::runtime_error("cannot write histogram: " + path);
}

void write_sr_bar_chart(const std::string& path,
                        const std::vector<LoadedReport>& reports) {
  const int w = 640, h = 400;
  cv::Mat canvas(h, w, CV_8UC3, cv::Scalar(255, 255, 255));
  const int n = static_cast<int>(reports.size());
  const int bw = w / std::max(1, n);
  for (int i = 0; i < n; ++i) {
    const int bh = static_cast<int>(reports[static_cast<size_t>(i)].sr_percent / 100.0 * (h - 60));
    cv::rectangle(canvas, cv::Point(i * bw + 10, h - 30 - bh),
                  cv::Point(i * bw + bw - 10, h - 30), cv::Scalar(60, 160, 60),
                  cv::FILLED);
    cv::putText(canvas, reports[static_cast<size_t>(i)].label, cv::Point(i * bw + 10, h - 10),
                cv::FONT_HERSHEY_SIMPLEX, 0.4, {0, 0, 0});
  }
  cv::putText(canvas, "SR (%)", {10, 20}, cv::FONT_HERSHEY_SIMPLEX, 0.5, {0, 0, 0});
  if (!cv::imwrite(path, canvas))
    throw std::runtime_error("cannot write bar chart: " + path);
}

}  // namespace osmid::pipeline
