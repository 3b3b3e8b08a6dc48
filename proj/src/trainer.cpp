#include "gase/trainer.hpp"

#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <string>

#include "gase/checkpoint.hpp"
#include "gase/decoder.hpp"
#include "gase/encoder.hpp"
#include "gase/parallel.hpp"
#include "gase/rng.hpp"
#include "gase/ttest.hpp"

namespace gase {

namespace {

// Seed-stream tags keep the generation, sampling and validation streams
// disjoint for a given run seed.
constexpr std::uint64_t kStreamInstance = 1;
constexpr std::uint64_t kStreamSample = 2;
constexpr std::uint64_t kStreamValidation = 3;

std::string fmt_double(double v) {
  char buf[40];
  std::snprintf(buf, sizeof(buf), "%.9g", v);
  return buf;
}

}  // namespace

void TrainConfig::validate_or_throw() const {
  if (n < 1) throw ArgumentError("train: n must be >= 1");
  if (epochs < 1) throw ArgumentError("train: epochs must be >= 1");
  if (steps_per_epoch < 1)
    throw ArgumentError("train: steps per epoch must be >= 1");
  if (batch_size < 1) throw ArgumentError("train: batch size must be >= 1");
  if (val_size < 2) throw ArgumentError("train: validation size must be >= 2");
  if (!(lr > 0)) throw ArgumentError("train: learning rate must be positive");
  if (!(alpha > 0 && alpha < 1))
    throw ArgumentError("train: alpha must be in (0, 1)");
  if (k > n) throw ArgumentError("train: sample count exceeds n");
}

int TrainConfig::resolved_k() const {
  return k > 0 ? k : default_sample_count(n);
}

double TrainConfig::resolved_capacity() const {
  return capacity > 0 ? capacity : default_capacity(n);
}

TrainConfig desk_preset(int n) {
  TrainConfig c;
  c.n = n;
  c.epochs = 10;
  c.steps_per_epoch = 250;
  c.batch_size = 64;
  // At this small budget the full-size model underfits badly; a narrower,
  // shallower network with a hotter, faster-decaying learning rate trains
  // to a much better policy in the same number of gradient steps.
  c.model.d_x = 64;
  c.model.layers = 2;
  c.lr = 6.5e-4;
  c.lr_decay = 0.9;
  return c;
}

TrainConfig full_preset(int n) {
  TrainConfig c;
  c.n = n;
  c.epochs = 200;
  c.steps_per_epoch = 1000;
  c.batch_size = 128;
  c.lr = 3e-4;
  c.lr_decay = 0.96;
  return c;
}

StepStats reinforce_step(Model<float>& actor, Model<float>& baseline,
                         const std::vector<VrpInstance>& batch,
                         const std::vector<std::uint64_t>& sample_seeds,
                         AdamState<float>& opt, int k, int workers,
                         double max_grad_norm) {
  if (batch.empty()) throw ArgumentError("reinforce_step: empty batch");
  if (sample_seeds.size() != batch.size())
    throw ArgumentError("reinforce_step: one sample seed per item required");
  int b = static_cast<int>(batch.size());

  std::vector<double> actor_len(b), base_len(b);
  std::vector<Model<float>> clones(static_cast<std::size_t>(
      std::min(workers < 1 ? 1 : workers, b)));

  parallel_chunks(b, workers, [&](int w, int begin, int end) {
    auto& local = clones[static_cast<std::size_t>(w)];
    local = actor.clone(true);
    auto base_local = baseline.clone(false);
    // Both rollouts run under per-forward statistics so the advantage
    // compares the two policies under the same normalization regime.
    EncodeOptions sample_opts{k, BnMode::Train, false, nullptr};
    EncodeOptions greedy_opts{k, BnMode::Train, false, nullptr};
    for (int i = begin; i < end; ++i) {
      Rng rng(sample_seeds[static_cast<std::size_t>(i)]);
      auto sampled =
          rollout(batch[static_cast<std::size_t>(i)], local, sample_opts,
                  RolloutMode::Sample, &rng);
      auto greedy = rollout(batch[static_cast<std::size_t>(i)], base_local,
                            greedy_opts, RolloutMode::Greedy);
      actor_len[static_cast<std::size_t>(i)] = sampled.solution.length;
      base_len[static_cast<std::size_t>(i)] = greedy.solution.length;
      double adv = sampled.solution.length - greedy.solution.length;
      auto loss =
          scale(sampled.log_prob, static_cast<float>(adv / b));
      backward(loss);
    }
  });

  actor.zero_grad();
  actor.ensure_grads();
  for (auto& c : clones) actor.accumulate_from(c);

  StepStats st;
  for (int i = 0; i < b; ++i) {
    st.actor_mean += actor_len[static_cast<std::size_t>(i)];
    st.baseline_mean += base_len[static_cast<std::size_t>(i)];
  }
  st.actor_mean /= b;
  st.baseline_mean /= b;
  st.adv_mean = st.actor_mean - st.baseline_mean;
  double sq = 0;
  for (int i = 0; i < b; ++i) {
    double d = actor_len[static_cast<std::size_t>(i)] -
               base_len[static_cast<std::size_t>(i)] - st.adv_mean;
    sq += d * d;
  }
  st.adv_std = std::sqrt(sq / b);
  st.grad_norm = actor.grad_norm();
  if (max_grad_norm > 0 && st.grad_norm > max_grad_norm) {
    auto s = static_cast<float>(max_grad_norm / st.grad_norm);
    for (auto& [name, t] : actor.params)
      for (auto& g : t.mutable_grad()) g *= s;
  }

  adam_step(actor.params, opt);
  actor.commit_bn();
  actor.zero_grad();
  return st;
}

EvalResult evaluate_greedy(const Model<float>& model,
                           const std::vector<VrpInstance>& instances, int k,
                           int workers) {
  EvalResult out;
  out.lengths.resize(instances.size());
  auto t0 = std::chrono::steady_clock::now();
  int n = static_cast<int>(instances.size());
  parallel_chunks(n, workers, [&](int, int begin, int end) {
    auto local = model.clone(false);
    for (int i = begin; i < end; ++i) {
      const auto& inst = instances[static_cast<std::size_t>(i)];
      int ki = k > 0 ? std::min(k, inst.n()) : default_sample_count(inst.n());
      EncodeOptions opts{ki, BnMode::Eval, false, nullptr};
      out.lengths[static_cast<std::size_t>(i)] =
          rollout(inst, local, opts, RolloutMode::Greedy).solution.length;
    }
  });
  auto t1 = std::chrono::steady_clock::now();
  out.wall_seconds = std::chrono::duration<double>(t1 - t0).count();
  if (!out.lengths.empty()) {
    double acc = 0;
    for (double v : out.lengths) acc += v;
    out.mean_length = acc / static_cast<double>(out.lengths.size());
  }
  return out;
}

TrainResult train(const TrainConfig& cfg,
                  const std::function<void(const std::string&)>& progress) {
  cfg.validate_or_throw();
  double capacity = cfg.resolved_capacity();
  int k = cfg.resolved_k();
  int workers = cfg.workers > 0 ? cfg.workers : default_workers();

  auto actor = Model<float>::init(cfg.model, derive_seed(cfg.seed, 0, 0, 0));
  auto baseline = actor.clone(false);
  AdamState<float> opt;
  opt.lr = static_cast<float>(cfg.lr);

  std::vector<VrpInstance> val;
  val.reserve(static_cast<std::size_t>(cfg.val_size));
  for (int i = 0; i < cfg.val_size; ++i)
    val.push_back(generate_random(
        cfg.n, derive_seed(cfg.seed, kStreamValidation, 0, i), capacity));

  std::ofstream log;
  TrainResult result;
  if (!cfg.out_dir.empty()) {
    std::filesystem::create_directories(cfg.out_dir);
    result.log_path = cfg.out_dir + "/train_log.jsonl";
    log.open(result.log_path, std::ios::trunc);
    if (!log) throw ArgumentError("train: cannot write " + result.log_path);
  }
  long tick = 0;  // monotone logical clock shared by all records

  auto say = [&](const std::string& line) {
    if (progress) progress(line);
  };

  auto validate = [&](Model<float>& m) {
    return evaluate_greedy(m, val, k, workers);
  };

  auto v0 = validate(actor);
  result.val_history.push_back(v0.mean_length);
  if (log)
    log << "{\"type\":\"epoch\",\"tick\":" << tick++ << ",\"epoch\":0"
        << ",\"val_actor\":" << fmt_double(v0.mean_length)
        << ",\"val_baseline\":" << fmt_double(v0.mean_length)
        << ",\"p_value\":1,\"baseline_updated\":false"
        << ",\"lr\":" << fmt_double(opt.lr) << "}\n";
  say("epoch 0 val " + fmt_double(v0.mean_length));

  std::vector<VrpInstance> batch(static_cast<std::size_t>(cfg.batch_size));
  std::vector<std::uint64_t> seeds(static_cast<std::size_t>(cfg.batch_size));

  for (int epoch = 1; epoch <= cfg.epochs; ++epoch) {
    for (int step = 0; step < cfg.steps_per_epoch; ++step) {
      for (int i = 0; i < cfg.batch_size; ++i) {
        std::uint64_t item = static_cast<std::uint64_t>(
            ((epoch - 1L) * cfg.steps_per_epoch + step) * cfg.batch_size + i);
        batch[static_cast<std::size_t>(i)] = generate_random(
            cfg.n, derive_seed(cfg.seed, kStreamInstance, item, 0), capacity);
        seeds[static_cast<std::size_t>(i)] =
            derive_seed(cfg.seed, kStreamSample, item, 0);
      }
      auto st = reinforce_step(actor, baseline, batch, seeds, opt, k, workers,
                               cfg.max_grad_norm);
      if (log)
        log << "{\"type\":\"step\",\"tick\":" << tick++
            << ",\"epoch\":" << epoch << ",\"step\":" << step
            << ",\"actor_len\":" << fmt_double(st.actor_mean)
            << ",\"baseline_len\":" << fmt_double(st.baseline_mean)
            << ",\"adv_mean\":" << fmt_double(st.adv_mean)
            << ",\"adv_std\":" << fmt_double(st.adv_std)
            << ",\"grad_norm\":" << fmt_double(st.grad_norm) << "}\n";
    }

    auto va = validate(actor);
    auto vb = validate(baseline);
    double p = paired_ttest_less(va.lengths, vb.lengths);
    bool refresh = p < cfg.alpha;
    if (refresh) baseline.copy_from(actor);
    result.val_history.push_back(va.mean_length);
    opt.lr *= static_cast<float>(cfg.lr_decay);

    if (log) {
      log << "{\"type\":\"epoch\",\"tick\":" << tick++
          << ",\"epoch\":" << epoch
          << ",\"val_actor\":" << fmt_double(va.mean_length)
          << ",\"val_baseline\":" << fmt_double(vb.mean_length)
          << ",\"p_value\":" << fmt_double(p)
          << ",\"baseline_updated\":" << (refresh ? "true" : "false")
          << ",\"lr\":" << fmt_double(opt.lr) << "}\n";
      log.flush();
    }
    say("epoch " + std::to_string(epoch) + " val " +
        fmt_double(va.mean_length) + " (baseline " +
        fmt_double(vb.mean_length) + ", p " + fmt_double(p) + ")");

    if (!cfg.out_dir.empty()) {
      CheckpointMeta meta{cfg.model, epoch, cfg.seed, cfg.n,
                          capacity,  k,     opt.lr};
      char name[32];
      std::snprintf(name, sizeof(name), "/epoch_%03d.ckpt", epoch);
      save_checkpoint(cfg.out_dir + name, actor, &opt, meta);
      save_checkpoint(cfg.out_dir + "/latest.ckpt", actor, &opt, meta);
    }
  }

  result.model = std::move(actor);
  return result;
}

}  // namespace gase
