#include "osmid/diffusion/stage1.hpp"

#include <json.hpp>

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numeric>
#include <random>

#include "osmid/core/tensor_io.hpp"
#include "osmid/data/warp.hpp"

using nlohmann::json;

namespace osmid::diffusion {

namespace {
constexpr uint64_t kTagT = 0x745f64726177ull;
constexpr uint64_t kTagEps = 0x657073ull;
constexpr uint64_t kTagOrder = 0x6f72646572ull;
constexpr uint64_t kTagInit = 0x696e6974ull;
constexpr uint64_t kTagExtract = 0x78747261ull;

Tensor recenter(const Tensor& unit) {
  Tensor out = unit;
  for (double& v : out.data) v = 2.0 * v - 1.0;
  return out;
}
}  // namespace

double diffusion_loss(const NoisePredictFn& net, const Tensor& x0_unit,
                      const Condition& cond, const NoiseSchedule& sched,
                      uint64_t rng_seed) {
  Tensor x0 = recenter(x0_unit);
  auto trng = make_rng({rng_seed, kTagT});
  std::uniform_int_distribution<int> tdist(1, sched.T);
  const int t = tdist(trng);
  Tensor eps(x0.shape);
  auto erng = make_rng({rng_seed, kTagEps});
  fill_normal(eps, erng);
  Tensor x_t = forward_diffuse(x0, t, sched, eps);
  Tensor eps_hat = net(x_t, t, cond);
  if (!eps_hat.same_shape(eps))
    throw std::invalid_argument("diffusion_loss: prediction shape mismatch");
  if (!eps_hat.all_finite())
    throw std::runtime_error("diffusion_loss: non-finite network output at t=" +
                             std::to_string(t));
  double acc = 0.0;
  for (int64_t i = 0; i < eps.numel(); ++i) {
    const double d = eps[i] - eps_hat[i];
    acc += d * d;
  }
  return acc / static_cast<double>(eps.numel());
}

DiffusionModel::DiffusionModel(const Stage1Config& cfg)
    : cfg_(cfg),
      sched_(build_schedule(cfg.T, cfg.beta_start, cfg.beta_end)),
      net_(std::make_unique<DenoiserNet>(cfg.net)) {
  opt_.lr = cfg.lr;
  opt_.weight_decay = cfg.weight_decay;
}

std::string DiffusionModel::arch_digest() const {
  Digest d;
  d.update(cfg_.net.base_channels);
  d.update(cfg_.net.time_dim);
  d.update(cfg_.net.prompt_dim);
  d.update(cfg_.net.groups);
  d.update(cfg_.net.init_seed);
  d.update(cfg_.T);
  d.update(cfg_.beta_start);
  d.update(cfg_.beta_end);
  return d.hex();
}

void DiffusionModel::save(const std::string& path) const {
  TensorFile tf;
  for (const nn::Param* p : net_->params().all()) {
    tf.put("param." + p->name, p->value);
    if (p->trainable) {
      tf.put("adam_m." + p->name, p->m);
      tf.put("adam_v." + p->name, p->v);
    }
  }
  Tensor beta({cfg_.T});
  for (int t = 1; t <= cfg_.T; ++t) beta[t - 1] = sched_.beta_at(t);
  tf.put("schedule.beta", beta);
  tf.save(path);

  json meta;
  meta["version"] = 1;
  meta["kind"] = "stage1";
  meta["net"] = {{"base_channels", cfg_.net.base_channels},
                 {"time_dim", cfg_.net.time_dim},
                 {"prompt_dim", cfg_.net.prompt_dim},
                 {"groups", cfg_.net.groups},
                 {"init_seed", cfg_.net.init_seed},
                 {"train_base", cfg_.net.train_base}};
  meta["schedule"] = {{"T", cfg_.T}, {"beta_start", cfg_.beta_start}, {"beta_end", cfg_.beta_end}};
  meta["train"] = {{"epochs", cfg_.epochs},     {"lr", cfg_.lr},
                   {"weight_decay", cfg_.weight_decay}, {"batch_size", cfg_.batch_size},
                   {"seed", cfg_.seed}};
  meta["completed_epochs"] = completed_epochs_;
  meta["adam_t"] = opt_.t;
  meta["frozen_digest"] = net_->frozen_digest();
  meta["arch_digest"] = arch_digest();
  std::ofstream os(path + ".json");
  os << meta.dump(2) << "\n";
  if (!os) throw std::runtime_error("cannot write checkpoint sidecar for " + path);
}

std::unique_ptr<DiffusionModel> DiffusionModel::load(const std::string& path) {
  std::ifstream is(path + ".json");
  if (!is) throw std::runtime_error("checkpoint sidecar missing: " + path + ".json");
  json meta = json::parse(is);
  if (meta.value("kind", "") != "stage1")
    throw std::runtime_error("not a stage-1 checkpoint: " + path);

  Stage1Config cfg;
  cfg.net.base_channels = meta["net"]["base_channels"].get<int>();
  cfg.net.time_dim = meta["net"]["time_dim"].get<int>();
  cfg.net.prompt_dim = meta["net"]["prompt_dim"].get<int>();
  cfg.net.groups = meta["net"]["groups"].get<int>();
  cfg.net.init_seed = meta["net"]["init_seed"].get<uint64_t>();
  cfg.net.train_base = meta["net"]["train_base"].get<bool>();
  cfg.T = meta["schedule"]["T"].get<int>();
  cfg.beta_start = meta["schedule"]["beta_start"].get<double>();
  cfg.beta_end = meta["schedule"]["beta_end"].get<double>();
  cfg.epochs = meta["train"]["epochs"].get<int>();
  cfg.lr = meta["train"]["lr"].get<double>();
  cfg.weight_decay = meta["train"]["weight_decay"].get<double>();
  cfg.batch_size = meta["train"]["batch_size"].get<int>();
  cfg.seed = meta["train"]["seed"].get<uint64_t>();

  auto model = std::make_unique<DiffusionModel>(cfg);
  TensorFile tf = TensorFile::load(path);
  for (nn::Param* p : model->net().params().all()) {
    const Tensor& v = tf.at("param." + p->name);
    if (v.shape != p->value.shape)
      throw std::runtime_error("checkpoint shape mismatch for " + p->name);
    p->value = v;
    if (p->trainable && tf.has("adam_m." + p->name)) {
      p->m = tf.at("adam_m." + p->name);
      p->v = tf.at("adam_v." + p->name);
    }
  }
  model->completed_epochs_ = meta.value("completed_epochs", 0);
  model->opt_.t = meta.value("adam_t", 0);
  return model;
}

features::FeaturePyramid DiffusionModel::extract_sar_features(
    const Condition& cond, int t_star, uint64_t noise_seed, bool* untrained_warning) {
  if (t_star < 1 || t_star > sched_.T)
    throw std::out_of_range("extract_sar_features: t_star out of range");
  if (untrained_warning) *untrained_warning = !trained();

  const int h = cond.sar.dim(0), w = cond.sar.dim(1);
  Tensor noise({h, w, 1});
  auto rng = make_rng({noise_seed, kTagExtract});
  fill_normal(noise, rng);
  // marginal at t_star with x0 treated as zero
  const double s = std::sqrt(1.0 - sched_.alpha_bar_at(t_star));
  for (double& v : noise.data) v *= s;

  ad::Tape tape;
  DenoiserOutput out = net_->forward(tape, noise, t_star, cond, true);
  features::FeaturePyramid pyr;
  pyr.source = data::Modality::sar;
  pyr.levels.push_back({4, out.taps[0].value()});
  pyr.levels.push_back({2, out.taps[1].value()});
  pyr.levels.push_back({1, out.taps[2].value()});
  pyr.validate();
  return pyr;
}

Stage1Report train_stage1(DiffusionModel& model,
                          const std::vector<data::PairSample>& dataset,
                          int epochs_to_run,
                          const std::function<void(int, double)>& on_epoch) {
  if (dataset.empty()) throw std::invalid_argument("train_stage1: empty dataset");
  const Stage1Config& cfg = model.config();
  DenoiserNet& net = model.net();
  const NoiseSchedule& sched = model.schedule();

  Stage1Report report;
  report.frozen_digest_before = net.frozen_digest();

  auto sample_condition = [&](const data::PairSample& pair) {
    return make_condition(pair.sar, pair.land_use, net.prompt_table());
  };

  // pre-training reference loss for the divergence detector
  {
    double acc = 0.0;
    const int n = std::min<int>(8, static_cast<int>(dataset.size()));
    for (int i = 0; i < n; ++i) {
      const auto& pair = dataset[static_cast<size_t>(i)];
      Condition cond = sample_condition(pair);
      acc += diffusion_loss(
          [&](const Tensor& x_t, int t, const Condition& c) {
            return net.predict(x_t, t, c);
          },
          data::luminance(pair.optical.pixels), cond, sched,
          seed_mix({cfg.seed, kTagInit, static_cast<uint64_t>(i)}));
    }
    report.initial_loss = acc / std::max(1, std::min<int>(8, static_cast<int>(dataset.size())));
  }

  int diverged_epochs = 0;
  const int start_epoch = model.completed_epochs();
  for (int epoch = start_epoch; epoch < start_epoch + epochs_to_run; ++epoch) {
    std::vector<size_t> order(dataset.size());
    std::iota(order.begin(), order.end(), 0);
    auto orng = make_rng({cfg.seed, kTagOrder, static_cast<uint64_t>(epoch)});
    std::shuffle(order.begin(), order.end(), orng);

    double epoch_acc = 0.0;
    int steps = 0;
    for (size_t b = 0; b < order.size(); b += static_cast<size_t>(cfg.batch_size)) {
      ad::Tape tape;
      ad::Var loss;
      int in_batch = 0;
      for (size_t k = b; k < std::min(order.size(), b + static_cast<size_t>(cfg.batch_size)); ++k) {
        const auto& pair = dataset[order[k]];
        Tensor x0 = recenter(data::luminance(pair.optical.pixels));
        const uint64_t skey = seed_mix({cfg.seed, static_cast<uint64_t>(epoch),
                                        static_cast<uint64_t>(steps), static_cast<uint64_t>(k - b)});
        auto trng = make_rng({skey, kTagT});
        std::uniform_int_distribution<int> tdist(1, sched.T);
        const int t = tdist(trng);
        Tensor eps(x0.shape);
        auto erng = make_rng({skey, kTagEps});
        fill_normal(eps, erng);
        Tensor x_t = forward_diffuse(x0, t, sched, eps);

        Condition cond = sample_condition(pair);
        DenoiserOutput out = net.forward(tape, x_t, t, cond, true);
        ad::Var diff = ad::sub(out.eps_hat, ad::constant(tape, eps));
        ad::Var per = ad::mean_all(ad::mul(diff, diff));
        loss = (in_batch == 0) ? per : ad::add(loss, per);
        ++in_batch;
      }
      if (in_batch > 1) loss = ad::scale(loss, 1.0 / in_batch);
      const double loss_value = loss.scalar();
      if (!std::isfinite(loss_value))
        throw TrainingAbort("stage-1 training: non-finite loss at epoch " +
                            std::to_string(epoch));
      tape.backward(loss);
      model.optimizer().step(net.params(), tape);
      report.step_losses.push_back(loss_value);
      epoch_acc += loss_value;
      ++steps;
    }
    const double epoch_loss = epoch_acc / std::max(1, steps);
    report.epoch_losses.push_back(epoch_loss);
    model.set_completed_epochs(epoch + 1);
    if (on_epoch) on_epoch(epoch, epoch_loss);

    if (epoch_loss > cfg.divergence_factor * report.initial_loss) {
      if (++diverged_epochs >= cfg.divergence_patience)
        throw TrainingAbort(
            "stage-1 training diverged: epoch loss " + std::to_string(epoch_loss) +
            " exceeded " + std::to_string(cfg.divergence_factor) + "x initial loss " +
            std::to_string(report.initial_loss) + " for " +
            std::to_string(diverged_epochs) + " consecutive epochs");
    } else {
      diverged_epochs = 0;
    }
  }

  report.frozen_digest_after = net.frozen_digest();
  return report;
}

}  // namespace osmid::diffusion
