#pragma once

#include <cstdint>
#include <functional>
#include <string>
#include <vector>

#include "gase/instance.hpp"
#include "gase/model.hpp"
#include "gase/optim.hpp"

namespace gase {

struct TrainConfig {
  int n = 20;
  double capacity = -1;  // <= 0 selects the default for n
  int epochs = 10;
  int steps_per_epoch = 250;
  int batch_size = 64;
  double lr = 3e-4;
  double lr_decay = 0.96;
  double alpha = 0.05;  // t-test significance for baseline refresh
  double max_grad_norm = 0.0;  // global-norm clip; <= 0 disables (default off)
  int k = -1;           // encoder sample count; <= 0 -> ceil(0.5 n)
  ModelConfig model;
  std::uint64_t seed = 0;
  int workers = 1;
  int val_size = 512;
  std::string out_dir;  // empty: no log / checkpoint files

  void validate_or_throw() const;
  int resolved_k() const;
  double resolved_capacity() const;
};

// Desk preset: 16,000 instances x 10 epochs, batch 64.
TrainConfig desk_preset(int n);
// Full-scale budget: 128,000 instances x 200 epochs, batch 128.
TrainConfig full_preset(int n);

struct StepStats {
  double actor_mean = 0, baseline_mean = 0;
  double adv_mean = 0, adv_std = 0;
  double grad_norm = 0;
};

// One REINFORCE step: actor samples, baseline greedy-decodes, advantage
// weights the log-prob gradients (mean over the batch), Adam updates the
// actor only. sample_seeds supplies one action-sampling stream per item.
// When max_grad_norm > 0 the accumulated gradient is rescaled so its global
// L2 norm never exceeds it (the logged grad_norm is the pre-clip value).
StepStats reinforce_step(Model<float>& actor, Model<float>& baseline,
                         const std::vector<VrpInstance>& batch,
                         const std::vector<std::uint64_t>& sample_seeds,
                         AdamState<float>& opt, int k, int workers,
                         double max_grad_norm = 0.0);

struct EvalResult {
  std::vector<double> lengths;
  double mean_length = 0;
  double wall_seconds = 0;
};

// Greedy rollout per instance (running-statistics BN). k <= 0 uses each
// instance's default sample count, which is what cross-size inference needs.
EvalResult evaluate_greedy(const Model<float>& model,
                           const std::vector<VrpInstance>& instances, int k,
                           int workers);

struct TrainResult {
  Model<float> model;
  std::vector<double> val_history;  // index = epoch, [0] = untrained
  std::string log_path;
};

// Algorithm: per epoch, steps_per_epoch REINFORCE steps on fresh random
// batches; greedy validation of actor vs baseline; baseline refreshed when
// the one-sided paired t-test passes; learning rate decayed per epoch;
// checkpoint written per epoch when out_dir is set.
TrainResult train(const TrainConfig& cfg,
                  const std::function<void(const std::string&)>& progress = {});

}  // namespace gase
