#include <CLI11.hpp>

#include <filesystem>
#include <fstream>
#include <iostream>

#include "osmid/config/run_config.hpp"
#include "osmid/data/manifest.hpp"
#include "osmid/data/raster_io.hpp"
#include "osmid/data/synthetic.hpp"
#include "osmid/pipeline/pipeline.hpp"
#include "osmid/pipeline/report_io.hpp"

namespace fs = std::filesystem;
using namespace osmid;

namespace {

constexpr int kExitOk = 0;
constexpr int kExitUsage = 2;
constexpr int kExitMissingPrereq = 3;
constexpr int kExitTrainingAbort = 4;

struct CommonFlags {
  std::string config_path;
  uint64_t seed = 0;
  bool seed_set = false;
  std::string out;
  int workers = 0;
};

config::RunConfig resolve_config(const CommonFlags& flags) {
  config::RunConfig cfg;
  if (!flags.config_path.empty()) cfg = config::RunConfig::load(flags.config_path);
  if (flags.seed_set) {
    cfg.seed = flags.seed;
    cfg.stage1.seed = flags.seed;
    cfg.stage2.seed = flags.seed;
  }
  if (!flags.out.empty()) cfg.out_dir = flags.out;
  if (flags.workers > 0) cfg.workers = flags.workers;
  return cfg;
}

std::vector<data::PairSample> load_dataset(const std::string& root) {
  auto dirs = data::list_pair_dirs(root);
  if (dirs.empty()) throw std::runtime_error("no pairs found under " + root);
  std::vector<data::PairSample> pairs;
  pairs.reserve(dirs.size());
  for (const auto& d : dirs) pairs.push_back(data::read_pair(d));
  return pairs;
}

int cmd_synth(const CommonFlags& flags, int count, int size) {
  config::RunConfig cfg = resolve_config(flags);
  if (count >= 0) cfg.dataset_count = count;
  if (size >= 0) cfg.dataset_size = size;
  if (cfg.dataset_count < 1) {
    std::cerr << "synth: --count must be >= 1\n";
    return kExitUsage;
  }
  fs::create_directories(cfg.out_dir);
  if (!fs::exists(cfg.out_dir)) {
    std::cerr << "synth: cannot create output directory " << cfg.out_dir << "\n";
    return 1;
  }
  for (int i = 0; i < cfg.dataset_count; ++i) {
    data::PairSample pair = data::generate_synthetic_pair(
        seed_mix({cfg.seed, static_cast<uint64_t>(i)}), cfg.dataset_size);
    data::write_pair(data::pair_dir(cfg.out_dir, i), pair);
  }
  data::DatasetInfo info;
  info.count = cfg.dataset_count;
  info.seed = cfg.seed;
  info.size = cfg.dataset_size;
  info.digest = data::dataset_digest(cfg.out_dir);
  data::write_dataset_info(cfg.out_dir, info);
  cfg.save(cfg.out_dir + "/run_config.json");
  std::cout << "dataset: " << cfg.dataset_count << " pairs at " << cfg.dataset_size
            << "px\ndigest: " << info.digest << "\n";
  return kExitOk;
}

void append_csv_row(const std::string& path, const std::string& header,
                    const std::string& row) {
  const bool fresh = !fs::exists(path);
  std::ofstream os(path, std::ios::app);
  if (fresh) os << header << "\n";
  os << row << "\n";
}

int cmd_train_diffusion(const CommonFlags& flags, const std::string& data_dir,
                        const std::string& ckpt_out, int epochs, double lr,
                        bool resume) {
  config::RunConfig cfg = resolve_config(flags);
  if (epochs > 0) cfg.stage1.epochs = epochs;
  if (lr > 0) cfg.stage1.lr = lr;
  if (!fs::exists(data_dir + "/dataset.json")) {
    std::cerr << "train-diffusion: dataset not found at " << data_dir << "\n";
    return kExitMissingPrereq;
  }
  auto dataset = load_dataset(data_dir);

  std::unique_ptr<diffusion::DiffusionModel> model;
  if (resume && fs::exists(ckpt_out)) {
    model = diffusion::DiffusionModel::load(ckpt_out);
    std::cout << "resuming from epoch " << model->completed_epochs() << "\n";
  } else {
    model = std::make_unique<diffusion::DiffusionModel>(cfg.stage1);
  }
  const int remaining = cfg.stage1.epochs - model->completed_epochs();
  if (remaining <= 0) {
    std::cout << "nothing to do: checkpoint already trained for "
              << model->completed_epochs() << " epochs\n";
    return kExitOk;
  }

  const std::string log_path = ckpt_out + ".log.csv";
  cfg.save(ckpt_out + ".runconfig.json");
  try {
    train_stage1(*model, dataset, remaining, [&](int epoch, double loss) {
      model->save(ckpt_out);
      append_csv_row(log_path, "epoch,loss",
                     std::to_string(epoch) + "," + std::to_string(loss));
      std::cout << "epoch " << epoch << " loss " << loss << "\n";
    });
  } catch (const diffusion::TrainingAbort& e) {
    std::cerr << "training aborted: " << e.what() << "\n";
    return kExitTrainingAbort;
  }
  model->save(ckpt_out);
  std::cout << "stage-1 checkpoint: " << ckpt_out << "\n";
  return kExitOk;
}

int cmd_train_descriptors(const CommonFlags& flags, const std::string& data_dir,
                          const std::string& stage1_path, const std::string& ckpt_out,
                          int epochs, double lr, bool resume,
                          const std::string& val_dir) {
  config::RunConfig cfg = resolve_config(flags);
  if (epochs > 0) cfg.stage2.epochs = epochs;
  if (lr > 0) cfg.stage2.lr = lr;
  if (!fs::exists(data_dir + "/dataset.json")) {
    std::cerr << "train-descriptors: dataset not found at " << data_dir << "\n";
    return kExitMissingPrereq;
  }
  if (!fs::exists(stage1_path) || !fs::exists(stage1_path + ".json")) {
    std::cerr << "train-descriptors: stage-1 checkpoint missing: " << stage1_path
              << "\n";
    return kExitMissingPrereq;
  }
  auto dataset = load_dataset(data_dir);
  std::vector<data::PairSample> val_pairs;
  if (!val_dir.empty()) val_pairs = load_dataset(val_dir);

  std::unique_ptr<descriptor::MatcherModel> model;
  if (resume && fs::exists(ckpt_out)) {
    model = descriptor::MatcherModel::load(ckpt_out, stage1_path);
    std::cout << "resuming from epoch " << model->completed_epochs() << "\n";
  } else {
    auto stage1 = diffusion::DiffusionModel::load(stage1_path);
    model = std::make_unique<descriptor::MatcherModel>(cfg.stage2, std::move(stage1));
  }
  const int remaining = cfg.stage2.epochs - model->completed_epochs();
  if (remaining <= 0) {
    std::cout << "nothing to do: checkpoint already trained for "
              << model->completed_epochs() << " epochs\n";
    return kExitOk;
  }

  const std::string log_path = ckpt_out + ".log.csv";
  cfg.save(ckpt_out + ".runconfig.json");
  try {
    train_stage2(*model, dataset, remaining, [&](int epoch, double loss) {
      model->save(ckpt_out, stage1_path);
      std::string val = "NA,NA,NA";
      if (!val_pairs.empty()) {
        auto ev = pipeline::evaluate_dataset(*model, val_pairs, cfg.eval, cfg.workers);
        val = std::to_string(ev.report.sr_percent) + "," +
              std::to_string(ev.report.mean_ncm) + "," +
              std::to_string(ev.report.mean_rmse);
      }
      std::string betas;
      for (double b : model->current_betas(false)) betas += "," + std::to_string(b);
      for (double b : model->current_betas(true)) betas += "," + std::to_string(b);
      append_csv_row(log_path,
                     "epoch,loss,val_sr,val_ncm,val_rmse,beta_opt16,beta_opt4,beta_opt1,"
                     "beta_sar4,beta_sar2,beta_sar1",
                     std::to_string(epoch) + "," + std::to_string(loss) + "," + val + betas);
      std::cout << "epoch " << epoch << " loss " << loss << "\n";
    });
  } catch (const diffusion::TrainingAbort& e) {
    std::cerr << "training aborted (last-good checkpoint retained): " << e.what()
              << "\n";
    return kExitTrainingAbort;
  }
  model->save(ckpt_out, stage1_path);
  std::cout << "stage-2 checkpoint: " << ckpt_out << "\n";
  return kExitOk;
}

int run_matching(const CommonFlags& flags, const std::string& ckpt,
                 const std::string& data_dir, double eps_px, double tau, int t_star,
                 bool viz, bool require_gt, const std::string& optical_path,
                 const std::string& sar_path) {
  config::RunConfig cfg = resolve_config(flags);
  if (eps_px > 0) cfg.eval.eps_px = eps_px;
  if (!fs::exists(ckpt) || !fs::exists(ckpt + ".json")) {
    std::cerr << "match: checkpoint missing: " << ckpt << "\n";
    return kExitMissingPrereq;
  }
  auto model = descriptor::MatcherModel::load(ckpt);
  if (!flags.config_path.empty()) {
    // structural settings must agree with the checkpoint
    descriptor::MatcherModel probe(cfg.stage2,
                                   std::make_shared<diffusion::DiffusionModel>(cfg.stage1));
    if (probe.arch_digest() != model->arch_digest()) {
      std::cerr << "match: config/checkpoint digest mismatch: the provided config "
                   "describes a different architecture ("
                << probe.arch_digest() << " vs " << model->arch_digest()
                << "); pass a config matching the checkpoint or drop --config\n";
      return kExitMissingPrereq;
    }
  }
  if (tau > 0) {
    // matching-time tau only affects reported similarity scaling; recorded
    // for provenance
    cfg.stage2.tau = tau;
  }
  if (t_star > 0) model->set_t_star(t_star);

  fs::create_directories(cfg.out_dir);
  cfg.save(cfg.out_dir + "/run_config.json");

  // single raster pair without ground truth
  if (!optical_path.empty() || !sar_path.empty()) {
    if (optical_path.empty() || sar_path.empty()) {
      std::cerr << "match: need both --optical and --sar\n";
      return kExitUsage;
    }
    data::PairSample pair;
    pair.optical = data::load_tile(optical_path, data::Modality::optical);
    pair.sar = data::load_tile(sar_path, data::Modality::sar);
    pair.land_use.fill(0.0);  // prompt falls back to "others"
    pair.land_use[6] = 1.0;
    pair.prompt = prompt::build_prompt(pair.land_use,
                                       model->stage1().net().prompt_table());
    auto outcome = pipeline::match_pair(*model, pair, cfg.eval, false);
    std::ofstream os(cfg.out_dir + "/matches.csv");
    os << "opt_x,opt_y,sar_x,sar_y,similarity\n";
    for (const auto& m : outcome.matches.pairs) {
      const auto& po = outcome.desc_opt.keypoints[static_cast<size_t>(m.opt_index)];
      const auto& ps = outcome.desc_sar.keypoints[static_cast<size_t>(m.sar_index)];
      os << po.x << "," << po.y << "," << ps.x << "," << ps.y << "," << m.similarity
         << "\n";
    }
    if (viz)
      pipeline::write_match_visualization(cfg.out_dir + "/match.png", pair, outcome,
                                          cfg.eval.eps_px, false);
    std::cout << "matches: " << outcome.matches.pairs.size()
              << " (no ground truth, metrics omitted)\n";
    return kExitOk;
  }

  if (!fs::exists(data_dir + "/dataset.json") && !fs::exists(data_dir + "/manifest.json")) {
    std::cerr << "match: no dataset or pair at " << data_dir << "\n";
    return kExitMissingPrereq;
  }
  std::vector<data::PairSample> pairs;
  if (fs::exists(data_dir + "/manifest.json"))
    pairs.push_back(data::read_pair(data_dir));
  else
    pairs = load_dataset(data_dir);
  (void)require_gt;  // manifests always carry ground truth

  auto ev = pipeline::evaluate_dataset(*model, pairs, cfg.eval, cfg.workers);
  pipeline::write_report_json(cfg.out_dir + "/report.json", ev.report, cfg.eval.eps_px,
                              fs::path(data_dir).filename().string(), ev.seconds_total);
  pipeline::write_report_csv(cfg.out_dir + "/report.csv", ev.report);
  if (viz) {
    fs::create_directories(cfg.out_dir + "/viz");
    for (size_t i = 0; i < pairs.size(); ++i) {
      char name[32];
      std::snprintf(name, sizeof(name), "viz/%06zu.png", i);
      pipeline::write_match_visualization(cfg.out_dir + "/" + name, pairs[i],
                                          ev.outcomes[i], cfg.eval.eps_px, true);
    }
  }
  std::cout << "pairs: " << pairs.size() << "\nSR: " << ev.report.sr_percent
            << "%\nNCM: " << ev.report.mean_ncm << "\nRMSE: " << ev.report.mean_rmse
            << "\nreport: " << cfg.out_dir << "/report.json\n";
  return kExitOk;
}

int cmd_report(const std::vector<std::string>& report_paths, const std::string& out_dir) {
  std::vector<pipeline::LoadedReport> reports;
  for (const auto& p : report_paths) {
    if (!fs::exists(p)) {
      std::cerr << "report: missing input " << p << "\n";
      return kExitMissingPrereq;
    }
    reports.push_back(pipeline::load_report_json(p));
  }
  fs::create_directories(out_dir);
  const std::string table =
      pipeline::write_comparison_table(out_dir + "/comparison.csv", reports);
  pipeline::write_rmse_histogram(out_dir + "/rmse_hist.png", reports);
  pipeline::write_sr_bar_chart(out_dir + "/sr_bars.png", reports);
  std::cout << table;
  bool eps_mismatch = false;
  for (size_t i = 1; i < reports.size(); ++i)
    if (reports[i].eps_px != reports[0].eps_px) eps_mismatch = true;
  if (eps_mismatch)
    std::cerr << "warning: eps_px differs across reports; values are not directly "
                 "comparable\n";
  return kExitOk;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"osmid: optical-SAR matching with modality-invariant descriptors"};
  app.require_subcommand(1);

  CommonFlags flags;
  int count = -1, size = -1, epochs = 0, t_star = 0;
  double lr = 0, eps_px = 0, tau = 0;
  bool resume = false, viz = false;
  std::string data_dir, ckpt, stage1_path, val_dir, optical_path, sar_path;
  std::vector<std::string> report_paths;

  auto add_common = [&](CLI::App* cmd) {
    cmd->add_option("--config", flags.config_path, "JSON config file");
    cmd->add_option("--seed", flags.seed, "master seed")->each([&](const std::string&) {
      flags.seed_set = true;
    });
    cmd->add_option("--out", flags.out, "output directory or file");
    cmd->add_option("--workers", flags.workers, "parallel workers for matching");
  };

  CLI::App* synth = app.add_subcommand("synth", "generate a synthetic dataset");
  add_common(synth);
  synth->add_option("--count", count, "number of pairs");
  synth->add_option("--size", size, "tile size (px, multiple of 16)");

  CLI::App* td = app.add_subcommand("train-diffusion", "stage-1 training");
  add_common(td);
  td->add_option("--data", data_dir, "dataset directory")->required();
  td->add_option("--epochs", epochs, "epoch budget");
  td->add_option("--lr", lr, "learning rate");
  td->add_flag("--resume", resume, "continue from an existing checkpoint");

  CLI::App* ts = app.add_subcommand("train-descriptors", "stage-2 training");
  add_common(ts);
  ts->add_option("--data", data_dir, "dataset directory")->required();
  ts->add_option("--stage1", stage1_path, "stage-1 checkpoint")->required();
  ts->add_option("--epochs", epochs, "epoch budget");
  ts->add_option("--lr", lr, "learning rate");
  ts->add_option("--val-data", val_dir, "validation dataset for per-epoch stats");
  ts->add_flag("--resume", resume, "continue from an existing checkpoint");

  CLI::App* match = app.add_subcommand("match", "match a pair or dataset");
  add_common(match);
  match->add_option("--ckpt", ckpt, "stage-2 checkpoint")->required();
  match->add_option("--data", data_dir, "dataset or pair directory");
  match->add_option("--optical", optical_path, "optical raster (no ground truth)");
  match->add_option("--sar", sar_path, "SAR raster (no ground truth)");
  match->add_option("--eps-px", eps_px, "correct-match radius");
  match->add_option("--tau", tau, "softmax temperature (recorded)");
  match->add_option("--t-star", t_star, "extraction timestep");
  match->add_flag("--viz", viz, "write match visualizations");

  CLI::App* evaluate = app.add_subcommand("evaluate", "evaluate a dataset");
  add_common(evaluate);
  evaluate->add_option("--ckpt", ckpt, "stage-2 checkpoint")->required();
  evaluate->add_option("--data", data_dir, "dataset directory")->required();
  evaluate->add_option("--eps-px", eps_px, "correct-match radius");
  evaluate->add_option("--t-star", t_star, "extraction timestep");
  evaluate->add_flag("--viz", viz, "write match visualizations");

  CLI::App* report = app.add_subcommand("report", "merge reports into a table + plots");
  add_common(report);
  report->add_option("reports", report_paths, "report JSON files")->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return kExitUsage;
  }

  try {
    if (synth->parsed()) return cmd_synth(flags, count, size);
    if (td->parsed())
      return cmd_train_diffusion(flags, data_dir, flags.out.empty() ? "stage1.ckpt" : flags.out,
                                 epochs, lr, resume);
    if (ts->parsed())
      return cmd_train_descriptors(flags, data_dir, stage1_path,
                                   flags.out.empty() ? "stage2.ckpt" : flags.out, epochs,
                                   lr, resume, val_dir);
    if (match->parsed())
      return run_matching(flags, ckpt, data_dir, eps_px, tau, t_star, viz, false,
                          optical_path, sar_path);
    if (evaluate->parsed())
      return run_matching(flags, ckpt, data_dir, eps_px, tau, t_star, viz, true, "", "");
    if (report->parsed())
      return cmd_report(report_paths, flags.out.empty() ? "." : flags.out);
  } catch (const diffusion::TrainingAbort& e) {
    std::cerr << "training aborted: " << e.what() << "\n";
    return kExitTrainingAbort;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return kExitUsage;
}
