#include "osmid/descriptor/stage2.hpp"

#include <json.hpp>

#include <algorithm>
#include <cmath>
#include <fstream>
#include <limits>
#include <numeric>
#include <random>

#include "osmid/core/tensor_io.hpp"

using nlohmann::json;

namespace osmid::descriptor {

using ad::Var;

namespace {
constexpr uint64_t kTagOrder = 0x6f72646572ull;
constexpr uint64_t kTagAug = 0x617567ull;
constexpr uint64_t kTagFeat = 0x66656174ull;
}  // namespace

MatcherModel::MatcherModel(const Stage2Config& cfg,
                           std::shared_ptr<diffusion::DiffusionModel> stage1)
    : cfg_(cfg), stage1_(std::move(stage1)) {
  backbone_ = std::make_unique<optical::OpticalBackbone>(cfg.optical);
  const int c = cfg.optical.common_channels;
  const int base = stage1_->config().net.base_channels;
  const int tap_channels[3] = {4 * base, 2 * base, base};
  for (int i = 0; i < 3; ++i)
    sar_in_proj_.push_back(nn::Conv2d::make(
        params_, "sar_in.proj" + std::to_string(i), 1, 1, tap_channels[i], c, 1, 0,
        seed_mix({cfg.init_seed, 10 + static_cast<uint64_t>(i)})));
  msaa_opt_ = fusion::MsaaFusion::make(params_, "msaa_opt", 3, c,
                                       cfg.unified_divisor, seed_mix({cfg.init_seed, 1}));
  msaa_sar_ = fusion::MsaaFusion::make(params_, "msaa_sar", 3, c,
                                       cfg.unified_divisor, seed_mix({cfg.init_seed, 2}));
  cbam_opt_ = fusion::CbamRefine::make(params_, "cbam_opt", c, cfg.cbam_reduction,
                                       seed_mix({cfg.init_seed, 3}));
  cbam_sar_ = fusion::CbamRefine::make(params_, "cbam_sar", c, cfg.cbam_reduction,
                                       seed_mix({cfg.init_seed, 4}));
  proj_opt_ = DescriptorProjection::make(params_, "desc_opt", c, cfg.descriptor_dim,
                                         seed_mix({cfg.init_seed, 5}));
  proj_sar_ = DescriptorProjection::make(params_, "desc_sar", c, cfg.descriptor_dim,
                                         seed_mix({cfg.init_seed, 6}));
  opt_.lr = cfg.lr;
  opt_.weight_decay = cfg.weight_decay;
}

MatcherModel::BranchGraph MatcherModel::optical_graph(ad::Tape& tape,
                                                      const data::ImageTile& tile) {
  auto levels = backbone_->encode(tape, tile);
  std::vector<Var> lv(levels.begin(), levels.end());
  auto aligned = msaa_opt_.project_and_align(tape, lv, {16, 4, 1}, tile.height(),
                                             tile.width());
  auto [fused, beta] = msaa_opt_.aggregate(tape, aligned);
  auto gates = cbam_opt_.refine(tape, fused);
  return {gates.out, beta};
}

MatcherModel::BranchGraph MatcherModel::sar_graph(
    ad::Tape& tape, const features::FeaturePyramid& taps) {
  if (taps.levels.size() != 3)
    throw std::invalid_argument("sar_graph: expected 3 tap levels");
  std::vector<Var> lv;
  std::vector<int> divisors;
  for (size_t i = 0; i < 3; ++i) {
    Var raw = ad::constant(tape, taps.levels[i].fmap);
    lv.push_back(sar_in_proj_[i](tape, raw));
    divisors.push_back(taps.levels[i].scale_divisor);
  }
  const int input_h = taps.levels[2].fmap.dim(0) * taps.levels[2].scale_divisor;
  const int input_w = taps.levels[2].fmap.dim(1) * taps.levels[2].scale_divisor;
  auto aligned = msaa_sar_.project_and_align(tape, lv, divisors, input_h, input_w);
  auto [fused, beta] = msaa_sar_.aggregate(tape, aligned);
  auto gates = cbam_sar_.refine(tape, fused);
  return {gates.out, beta};
}

fusion::FusedMap MatcherModel::fuse_optical(const data::ImageTile& tile) {
  ad::Tape tape;
  auto g = optical_graph(tape, tile);
  fusion::FusedMap out;
  out.fmap = g.fused.value();
  out.beta = g.beta.value().data;
  out.unified_divisor = cfg_.unified_divisor;
  return out;
}

fusion::FusedMap MatcherModel::fuse_sar(const features::FeaturePyramid& taps) {
  ad::Tape tape;
  auto g = sar_graph(tape, taps);
  fusion::FusedMap out;
  out.fmap = g.fused.value();
  out.beta = g.beta.value().data;
  out.unified_divisor = cfg_.unified_divisor;
  return out;
}

features::FeaturePyramid MatcherModel::extract_taps(const data::PairSample& pair) {
  diffusion::Condition cond = diffusion::make_condition(
      pair.sar, pair.land_use, stage1_->net().prompt_table());
  return stage1_->extract_sar_features(
      cond, cfg_.t_star, seed_mix({cfg_.feature_noise_seed, kTagFeat}), nullptr);
}

DescriptorSet MatcherModel::describe_optical(const data::ImageTile& tile,
                                             const std::vector<features::Keypoint>& kps) {
  fusion::FusedMap fused = fuse_optical(tile);
  return sample_descriptors(fused, proj_opt_, kps, tile.width(), tile.height(),
                            data::Modality::optical);
}

DescriptorSet MatcherModel::describe_sar(const features::FeaturePyramid& taps,
                                         const std::vector<features::Keypoint>& kps,
                                         int tile_w, int tile_h) {
  fusion::FusedMap fused = fuse_sar(taps);
  return sample_descriptors(fused, proj_sar_, kps, tile_w, tile_h,
                            data::Modality::sar);
}

std::vector<double> MatcherModel::current_betas(bool sar_branch) {
  nn::Param& w = sar_branch ? params_.at("msaa_sar.w") : params_.at("msaa_opt.w");
  std::vector<double> beta(w.value.data.size());
  double mx = *std::max_element(w.value.data.begin(), w.value.data.end());
  double z = 0;
  for (size_t i = 0; i < beta.size(); ++i) {
    beta[i] = std::exp(w.value.data[i] - mx);
    z += beta[i];
  }
  for (double& b : beta) b /= z;
  return beta;
}

std::string MatcherModel::arch_digest() const {
  Digest d;
  d.update(cfg_.optical.common_channels);
  d.update(cfg_.optical.fine_c1);
  d.update(cfg_.optical.fine_c2);
  d.update(cfg_.optical.fine_c3);
  d.update(cfg_.optical.coarse_seed);
  d.update(cfg_.descriptor_dim);
  d.update(cfg_.unified_divisor);
  d.update(cfg_.cbam_reduction);
  d.update(cfg_.init_seed);
  d.update(stage1_->arch_digest());
  return d.hex();
}

void MatcherModel::save(const std::string& path, const std::string& stage1_path) const {
  TensorFile tf;
  auto dump = [&tf](const nn::ParamStore& ps, const std::string& ns) {
    for (const nn::Param* p : ps.all()) {
      tf.put(ns + "param." + p->name, p->value);
      if (p->trainable) {
        tf.put(ns + "adam_m." + p->name, p->m);
        tf.put(ns + "adam_v." + p->name, p->v);
      }
    }
  };
  dump(params_, "s2.");
  dump(backbone_->params(), "bb.");
  tf.save(path);

  json meta;
  meta["version"] = 1;
  meta["kind"] = "stage2";
  meta["config"] = {{"common_channels", cfg_.optical.common_channels},
                    {"fine_c1", cfg_.optical.fine_c1},
                    {"fine_c2", cfg_.optical.fine_c2},
                    {"fine_c3", cfg_.optical.fine_c3},
                    {"coarse_seed", cfg_.optical.coarse_seed},
                    {"fine_seed", cfg_.optical.fine_seed},
                    {"feature_cache_dir", cfg_.optical.feature_cache_dir},
                    {"descriptor_dim", cfg_.descriptor_dim},
                    {"tau", cfg_.tau},
                    {"symmetrize", cfg_.symmetrize},
                    {"unified_divisor", cfg_.unified_divisor},
                    {"cbam_reduction", cfg_.cbam_reduction},
                    {"n_max", cfg_.n_max_correspondences},
                    {"epochs", cfg_.epochs},
                    {"lr", cfg_.lr},
                    {"lr_final_factor", cfg_.lr_final_factor},
                    {"weight_decay", cfg_.weight_decay},
                    {"seed", cfg_.seed},
                    {"t_star", cfg_.t_star},
                    {"feature_noise_seed", cfg_.feature_noise_seed},
                    {"init_seed", cfg_.init_seed},
                    {"pc", {{"n_scales", cfg_.pc.n_scales},
                            {"n_orientations", cfg_.pc.n_orientations},
                            {"min_wavelength", cfg_.pc.min_wavelength},
                            {"scale_multiplier", cfg_.pc.scale_multiplier},
                            {"sigma_onf", cfg_.pc.sigma_onf},
                            {"noise_k", cfg_.pc.noise_k}}},
                    {"fast", {{"threshold", cfg_.fast.threshold},
                              {"nms_radius", cfg_.fast.nms_radius},
                              {"max_keypoints", cfg_.fast.max_keypoints}}}};
  meta["completed_epochs"] = completed_epochs_;
  meta["adam_t"] = opt_.t;
  meta["stage1_path"] = stage1_path;
  meta["stage1_arch_digest"] = stage1_->arch_digest();
  meta["stage1_params_digest"] = stage1_->net().params().digest();
  meta["coarse_digest"] = backbone_->freeze_report();
  meta["arch_digest"] = arch_digest();
  std::ofstream os(path + ".json");
  os << meta.dump(2) << "\n";
  if (!os) throw std::runtime_error("cannot write checkpoint sidecar for " + path);
}

std::unique_ptr<MatcherModel> MatcherModel::load(const std::string& path,
                                                 const std::string& stage1_override) {
  std::ifstream is(path + ".json");
  if (!is) throw std::runtime_error("checkpoint sidecar missing: " + path + ".json");
  json meta = json::parse(is);
  if (meta.value("kind", "") != "stage2")
    throw std::runtime_error("not a stage-2 checkpoint: " + path);

  const std::string s1path =
      stage1_override.empty() ? meta.at("stage1_path").get<std::string>() : stage1_override;
  auto stage1 = diffusion::DiffusionModel::load(s1path);
  if (stage1->arch_digest() != meta.at("stage1_arch_digest").get<std::string>())
    throw std::runtime_error("stage-1 checkpoint does not match the stage-2 reference");

  const auto& c = meta.at("config");
  Stage2Config cfg;
  cfg.optical.common_channels = c.at("common_channels").get<int>();
  cfg.optical.fine_c1 = c.at("fine_c1").get<int>();
  cfg.optical.fine_c2 = c.at("fine_c2").get<int>();
  cfg.optical.fine_c3 = c.at("fine_c3").get<int>();
  cfg.optical.coarse_seed = c.at("coarse_seed").get<uint64_t>();
  cfg.optical.fine_seed = c.at("fine_seed").get<uint64_t>();
  cfg.optical.feature_cache_dir = c.value("feature_cache_dir", "");
  cfg.descriptor_dim = c.at("descriptor_dim").get<int>();
  cfg.tau = c.at("tau").get<double>();
  cfg.symmetrize = c.at("symmetrize").get<bool>();
  cfg.unified_divisor = c.at("unified_divisor").get<int>();
  cfg.cbam_reduction = c.at("cbam_reduction").get<int>();
  cfg.n_max_correspondences = c.at("n_max").get<int>();
  cfg.epochs = c.at("epochs").get<int>();
  cfg.lr = c.at("lr").get<double>();
  cfg.lr_final_factor = c.at("lr_final_factor").get<double>();
  cfg.weight_decay = c.at("weight_decay").get<double>();
  cfg.seed = c.at("seed").get<uint64_t>();
  cfg.t_star = c.at("t_star").get<int>();
  cfg.feature_noise_seed = c.at("feature_noise_seed").get<uint64_t>();
  cfg.init_seed = c.at("init_seed").get<uint64_t>();
  cfg.pc.n_scales = c.at("pc").at("n_scales").get<int>();
  cfg.pc.n_orientations = c.at("pc").at("n_orientations").get<int>();
  cfg.pc.min_wavelength = c.at("pc").at("min_wavelength").get<double>();
  cfg.pc.scale_multiplier = c.at("pc").at("scale_multiplier").get<double>();
  cfg.pc.sigma_onf = c.at("pc").at("sigma_onf").get<double>();
  cfg.pc.noise_k = c.at("pc").at("noise_k").get<double>();
  cfg.fast.threshold = c.at("fast").at("threshold").get<double>();
  cfg.fast.nms_radius = c.at("fast").at("nms_radius").get<int>();
  cfg.fast.max_keypoints = c.at("fast").at("max_keypoints").get<int>();

  auto model = std::make_unique<MatcherModel>(cfg, std::move(stage1));
  TensorFile tf = TensorFile::load(path);
  auto restore = [&tf](nn::ParamStore& ps, const std::string& ns) {
    for (nn::Param* p : ps.all()) {
      const Tensor& v = tf.at(ns + "param." + p->name);
      if (v.shape != p->value.shape)
        throw std::runtime_error("checkpoint shape mismatch for " + p->name);
      p->value = v;
      if (p->trainable && tf.has(ns + "adam_m." + p->name)) {
        p->m = tf.at(ns + "adam_m." + p->name);
        p->v = tf.at(ns + "adam_v." + p->name);
      }
    }
  };
  restore(model->params_, "s2.");
  restore(model->backbone_->params(), "bb.");
  model->completed_epochs_ = meta.value("completed_epochs", 0);
  model->opt_.t = meta.value("adam_t", 0);
  return model;
}

Stage2Report train_stage2(MatcherModel& model,
                          const std::vector<data::PairSample>& dataset,
                          int epochs_to_run,
                          const std::function<void(int, double)>& on_epoch) {
  if (dataset.empty()) throw std::invalid_argument("train_stage2: empty dataset");
  const Stage2Config& cfg = model.config();

  Stage2Report report;
  report.stage1_digest_before = model.stage1().net().params().digest();
  report.coarse_digest_before = model.backbone().freeze_report();

  // Per-pair caches: diffusion taps (stage-1 frozen, probe noise fixed)
  // and keypoints detected on the original optical tile.
  std::vector<features::FeaturePyramid> taps(dataset.size());
  std::vector<std::vector<features::Keypoint>> kps(dataset.size());
  for (size_t i = 0; i < dataset.size(); ++i) {
    taps[i] = model.extract_taps(dataset[i]);
    pc::PcMap pcm = pc::compute_pc_map(dataset[i].optical, cfg.pc);
    kps[i] = pc::detect_fast(pcm, cfg.fast);
  }

  const int start_epoch = model.completed_epochs();
  for (int epoch = start_epoch; epoch < start_epoch + epochs_to_run; ++epoch) {
    // cosine decay from lr to lr * lr_final_factor over the planned budget
    const int horizon = std::max(1, cfg.epochs - 1);
    const double t = std::min(1.0, static_cast<double>(epoch) / horizon);
    const double lr_lo = cfg.lr * cfg.lr_final_factor;
    model.optimizer().lr = lr_lo + (cfg.lr - lr_lo) * 0.5 * (1.0 + std::cos(M_PI * t));

    std::vector<size_t> order(dataset.size());
    std::iota(order.begin(), order.end(), 0);
    auto orng = make_rng({cfg.seed, kTagOrder, static_cast<uint64_t>(epoch)});
    std::shuffle(order.begin(), order.end(), orng);

    double epoch_acc = 0.0;
    int steps = 0;
    for (size_t oi = 0; oi < order.size(); ++oi) {
      const size_t idx = order[oi];
      const auto& pair = dataset[idx];
      auto batch = build_training_batch(
          pair, kps[idx], pair.h_gt, cfg.n_max_correspondences,
          seed_mix({cfg.seed, kTagAug, static_cast<uint64_t>(epoch), static_cast<uint64_t>(idx)}));
      if (!batch) {
        ++report.skipped_pairs;
        continue;
      }

      ad::Tape tape;
      auto og = model.optical_graph(tape, batch->augmented_optical);
      auto sg = model.sar_graph(tape, taps[idx]);
      const int w = pair.optical.width(), h = pair.optical.height();
      Var d_opt = sample_descriptor_rows(tape, og.fused, model.optical_projection(),
                                         batch->optical_points, cfg.unified_divisor,
                                         w, h, nullptr, nullptr);
      Var d_sar = sample_descriptor_rows(tape, sg.fused, model.sar_projection(),
                                         batch->sar_points, cfg.unified_divisor,
                                         w, h, nullptr, nullptr);
      Var loss = info_nce_graph(tape, d_opt, d_sar, cfg.tau, cfg.symmetrize);
      const double loss_value = loss.scalar();
      if (!std::isfinite(loss_value))
        throw diffusion::TrainingAbort("stage-2 training: non-finite loss at epoch " +
                                       std::to_string(epoch));
      tape.backward(loss);
      model.optimizer().step({&model.params(), &model.backbone().params()}, tape);
      report.step_losses.push_back(loss_value);
      epoch_acc += loss_value;
      ++steps;
    }
    report.epoch_losses.push_back(steps > 0 ? epoch_acc / steps
                                            : std::numeric_limits<double>::quiet_NaN());
    report.beta_opt_per_epoch.push_back(model.current_betas(false));
    report.beta_sar_per_epoch.push_back(model.current_betas(true));
    model.set_completed_epochs(epoch + 1);
    if (on_epoch) on_epoch(epoch, report.epoch_losses.back());
  }

  report.stage1_digest_after = model.stage1().net().params().digest();
  report.coarse_digest_after = model.backbone().freeze_report();
  return report;
}

}  // namespace osmid::descriptor
