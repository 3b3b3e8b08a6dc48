#pragma once

#include <cmath>
#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "gase/optim.hpp"
#include "gase/rng.hpp"
#include "gase/tensor.hpp"

namespace gase {

// Architecture hyperparameters. All parameter shapes depend only on these,
// never on the instance size, so one checkpoint serves any n at inference.
struct ModelConfig {
  int d_x = 128;   // embedding width
  int layers = 4;  // encoder residual layers
  int heads = 8;   // decoder attention heads
  double clip = 10.0;  // tanh logit clipping constant C

  bool operator==(const ModelConfig&) const = default;
};

// Every learnable tensor of encoder and decoder, keyed by name, plus the
// batch-norm running statistics.
template <typename T>
struct Model {
  ModelConfig cfg;
  std::map<std::string, Tensor<T>> params;
  std::map<std::string, BnStats<T>> bn;

  static Model init(const ModelConfig& cfg, std::uint64_t seed) {
    Model m;
    m.cfg = cfg;
    int d = cfg.d_x;
    std::uint64_t k = 0;
    auto mat = [&](const std::string& name, int rows, int cols) {
      m.params[name] = xavier_init<T>({rows, cols}, derive_seed(seed, 0xA11, k++));
    };
    auto bias = [&](const std::string& name, int len) {
      m.params[name] = Tensor<T>::zeros(1, len, true);
    };
    auto bnorm = [&](const std::string& name, int len) {
      auto gamma = Tensor<T>::zeros(1, len, true);
      for (auto& v : gamma.mutable_data()) v = T(1);
      m.params[name + ".gamma"] = gamma;
      m.params[name + ".beta"] = Tensor<T>::zeros(1, len, true);
      m.bn.emplace(name, BnStats<T>(len));
    };

    mat("enc.init.dp.W", d, 2);     bias("enc.init.dp.b", d);
    mat("enc.init.node.W", d, 3);   bias("enc.init.node.b", d);
    mat("enc.init.edge.W", d, 1);   bias("enc.init.edge.b", d);
    bnorm("enc.init.bn", d);
    bnorm("enc.init.edge_bn", d);
    for (int l = 0; l < cfg.layers; ++l) {
      std::string p = "enc.L" + std::to_string(l) + ".";
      mat(p + "Wq", d, d);
      mat(p + "Wk", d, d);
      mat(p + "Wv", d, d);
      bnorm(p + "bn", d);
    }
    mat("enc.read.W1", d, 2 * d);   bias("enc.read.b1", d);
    mat("enc.read.W2", d, d);       bias("enc.read.b2", d);
    mat("dec.Wc", d, 2 * d + 1);
    mat("dec.mha.Wq", d, d);
    mat("dec.mha.Wk", d, d);
    mat("dec.mha.Wv", d, d);
    mat("dec.mha.Wm", d, d);
    mat("dec.sh.Wq", d, d);
    mat("dec.sh.Wk", d, d);
    return m;
  }

  const Tensor<T>& p(const std::string& name) const {
    auto it = params.find(name);
    if (it == params.end()) throw ContractError("unknown parameter: " + name);
    return it->second;
  }

  BnStats<T>* stats(const std::string& name) {
    auto it = bn.find(name);
    if (it == bn.end()) throw ContractError("unknown batchnorm: " + name);
    return &it->second;
  }

  // Fresh leaves with copied values; grads cleared, BN staging cleared.
  Model clone(bool requires_grad) const {
    Model m;
    m.cfg = cfg;
    for (const auto& [name, t] : params)
      m.params[name] = t.detach(requires_grad);
    for (const auto& [name, s] : bn) {
      BnStats<T> copy(static_cast<int>(s.running_mean.size()));
      copy.running_mean = s.running_mean;
      copy.running_var = s.running_var;
      copy.momentum = s.momentum;
      m.bn.emplace(name, std::move(copy));
    }
    return m;
  }

  // theta^b <- theta: parameter values and running statistics.
  void copy_from(const Model& other) {
    for (auto& [name, t] : params)
      t.mutable_data() = other.params.at(name).data();
    for (auto& [name, s] : bn) {
      const auto& os = other.bn.at(name);
      s.running_mean = os.running_mean;
      s.running_var = os.running_var;
    }
  }

  void zero_grad() {
    for (auto& [name, t] : params) t.zero_grad();
  }

  // Ordered merge of a worker's gradient and staged-BN contributions.
  void accumulate_from(Model& worker) {
    for (auto& [name, t] : params) {
      const auto& wg = worker.params.at(name).grad();
      if (wg.empty()) continue;
      auto& g = t.node()->g();
      for (std::size_t i = 0; i < g.size(); ++i) g[i] += wg[i];
    }
    for (auto& [name, s] : bn) s.merge_staged(worker.bn.at(name));
  }

  void commit_bn() {
    for (auto& [name, s] : bn) s.commit();
  }

  // Ensures every parameter has an allocated (possibly zero) grad buffer.
  void ensure_grads() {
    for (auto& [name, t] : params) t.node()->g();
  }

  double grad_norm() const {
    double acc = 0.0;
    for (const auto& [name, t] : params)
      for (T g : t.grad()) acc += static_cast<double>(g) * g;
    return std::sqrt(acc);
  }
};

}  // namespace gase
