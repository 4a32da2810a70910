#pragma once

#include <functional>
#include <memory>
#include <string>
#include <vector>

#include "osmid/diffusion/denoiser.hpp"
#include "osmid/diffusion/schedule.hpp"
#include "osmid/nn/adamw.hpp"

namespace osmid::diffusion {

using NoisePredictFn =
    std::function<Tensor(const Tensor& x_t, int t, const Condition& cond)>;

// Noise-prediction objective: draws t uniformly from 1..T and a fresh
// Gaussian eps from the seed, recenters the [0,1] image to [-1,1], and
// returns mean squared error between eps and the prediction.
double diffusion_loss(const NoisePredictFn& net, const Tensor& x0_unit,
                      const Condition& cond, const NoiseSchedule& sched,
                      uint64_t rng_seed);

struct Stage1Config {
  DenoiserConfig net;
  int T = 200;
  double beta_start = 1e-4;
  double beta_end = 0.02;
  int epochs = 50;       // paper default; desk runs override
  double lr = 1e-5;      // paper default; desk runs override
  double weight_decay = 0.01;
  int batch_size = 2;
  uint64_t seed = 0;
  double divergence_factor = 10.0;
  int divergence_patience = 3;
};

struct TrainingAbort : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// Checkpointable stage-1 unit: denoiser parameters (with optimizer
// state), schedule constants, and the prompt table.
class DiffusionModel {
 public:
  explicit DiffusionModel(const Stage1Config& cfg);

  DenoiserNet& net() { return *net_; }
  const DenoiserNet& net() const { return *net_; }
  const NoiseSchedule& schedule() const { return sched_; }
  const Stage1Config& config() const { return cfg_; }
  nn::AdamW& optimizer() { return opt_; }

  bool trained() const { return completed_epochs_ > 0; }
  int completed_epochs() const { return completed_epochs_; }
  void set_completed_epochs(int e) { completed_epochs_ = e; }

  // Structural fingerprint; match-time configs must agree with it.
  std::string arch_digest() const;

  void save(const std::string& path) const;
  static std::unique_ptr<DiffusionModel> load(const std::string& path);

  // One denoiser pass on marginal-scaled seeded noise; returns the three
  // decoder taps ordered coarse to fine. Warns (via flag) when the
  // checkpoint is untrained but still returns features.
  features::FeaturePyramid extract_sar_features(const Condition& cond, int t_star,
                                                uint64_t noise_seed,
                                                bool* untrained_warning = nullptr);

 private:
  Stage1Config cfg_;
  NoiseSchedule sched_;
  std::unique_ptr<DenoiserNet> net_;
  nn::AdamW opt_;
  int completed_epochs_ = 0;
};

struct Stage1Report {
  double initial_loss = 0.0;
  std::vector<double> step_losses;
  std::vector<double> epoch_losses;
  std::string frozen_digest_before;
  std::string frozen_digest_after;
};

// Optimizes the noise-prediction objective with AdamW. The frozen branch
// never changes (asserted by digest in the report). Throws TrainingAbort
// when the divergence detector trips.
Stage1Report train_stage1(DiffusionModel& model,
                          const std::vector<data::PairSample>& dataset,
                          int epochs_to_run,
                          const std::function<void(int, double)>& on_epoch = {});

}  // namespace osmid::diffusion
