// End-to-end acceptance harness. Each criterion prints exactly one
// [PASS]/[FAIL] line; the process exits non-zero if any criterion fails.
//
// Heavier criteria (full desk-preset training runs) are executed after the
// cheap analytical checks so early failures surface quickly; the summary at
// the end is printed in criterion order.

#include <array>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iostream>
#include <sstream>
#include <string>
#include <vector>

#include <boost/math/distributions/students_t.hpp>

#include "gase/baselines.hpp"
#include "gase/checkpoint.hpp"
#include "gase/cvrplib.hpp"
#include "gase/decoder.hpp"
#include "gase/encoder.hpp"
#include "gase/instance.hpp"
#include "gase/trainer.hpp"
#include "gase/ttest.hpp"

using namespace gase;

namespace {

struct Criterion {
  std::string title;
  bool pass = false;
  std::string detail;
};

std::vector<Criterion> g_results(10);  // 1-based

void record(int idx, const std::string& title, bool pass,
            const std::string& detail) {
  g_results[static_cast<std::size_t>(idx)] = {title, pass, detail};
  std::cout << (pass ? "[PASS]" : "[FAIL]") << " criterion " << idx << ": "
            << title << " — " << detail << std::endl;
}

double now_seconds() {
  using clock = std::chrono::steady_clock;
  static const auto t0 = clock::now();
  return std::chrono::duration<double>(clock::now() - t0).count();
}

std::string work_dir() {
  auto p = std::filesystem::temp_directory_path() / "gase_acceptance";
  std::filesystem::create_directories(p);
  return p.string();
}

std::vector<char> read_bytes(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) return {};
  return std::vector<char>(std::istreambuf_iterator<char>(is),
                           std::istreambuf_iterator<char>());
}

// ---------------------------------------------------------------------------
// 1. Feasibility sweep: 10,000 sampled rollouts with untrained parameters.
// ---------------------------------------------------------------------------
void criterion_feasibility() {
  ModelConfig cfg;  // full-size defaults: d_x=128, L=4, H=8
  auto model = Model<float>::init(cfg, 20260826);
  Rng rng(31);
  int feasible = 0;
  const int total = 10000;
  for (int i = 0; i < total; ++i) {
    auto inst = generate_random(20, derive_seed(100, 1, 0, i));
    EncodeOptions opts{-1, BnMode::Eval, false, nullptr};
    auto r = rollout(inst, model, opts, RolloutMode::Sample, &rng);
    if (validate(inst, r.solution).feasible()) ++feasible;
  }
  std::ostringstream os;
  os << feasible << "/" << total << " sampled rollouts feasible";
  record(1, "feasibility sweep (10,000 untrained sampled rollouts, n=20)",
         feasible == total, os.str());
}

// ---------------------------------------------------------------------------
// 2. Gradient correctness: analytic vs central finite differences on the
//    advantage-weighted log-probability, 64-bit, 50 random parameters.
// ---------------------------------------------------------------------------
void criterion_gradients() {
  ModelConfig cfg;
  cfg.d_x = 16;
  cfg.layers = 2;
  cfg.heads = 2;
  auto model = Model<double>::init(cfg, 404);
  auto inst = generate_random(6, 505, 12.0);

  // Freeze the stochastic parts: actions from one sampled rollout and the
  // neighbour filters from the unperturbed forward pass. The surrogate then
  // becomes a smooth deterministic function of the parameters.
  Rng rng(7);
  EncodeOptions probe{3, BnMode::Train, false, nullptr};
  auto sampled = rollout(inst, model, probe, RolloutMode::Sample, &rng);
  auto filters = encode(inst, model, probe).filters;
  EncodeOptions fixed{3, BnMode::Train, false, &filters};
  double advantage =
      sampled.solution.length - nearest_neighbor(inst).length;
  if (std::abs(advantage) < 0.05) advantage = 0.5;  // keep the loss non-flat

  auto surrogate = [&]() {
    auto r = rollout_forced(inst, model, fixed, sampled.actions);
    return scale(r.log_prob, advantage);
  };

  auto loss = surrogate();
  for (auto& [name, t] : model.params) t.zero_grad();
  backward(loss);

  // 50 parameter coordinates drawn across all tensors.
  std::vector<std::string> names;
  for (const auto& [name, t] : model.params) names.push_back(name);
  Rng pick_rng(99);
  int checked = 0, ok = 0;
  double worst = 0;
  const double h = 1e-5;
  while (checked < 50) {
    const auto& name = names[static_cast<std::size_t>(
        pick_rng.uniform_int(0, static_cast<int>(names.size()) - 1))];
    auto& t = model.params.at(name);
    auto idx = static_cast<std::size_t>(
        pick_rng.uniform_int(0, static_cast<int>(t.size()) - 1));
    double analytic = t.grad().empty() ? 0.0 : t.grad()[idx];
    double orig = t.mutable_data()[idx];
    t.mutable_data()[idx] = orig + h;
    double up = surrogate().item();
    t.mutable_data()[idx] = orig - h;
    double down = surrogate().item();
    t.mutable_data()[idx] = orig;
    double fd = (up - down) / (2 * h);
    double denom = std::max({std::abs(fd), std::abs(analytic), 1e-8});
    double rel = std::abs(analytic - fd) / denom;
    // Central differences carry ~1e-9 absolute noise at h=1e-5, so a
    // coordinate whose true gradient is below that cannot certify a relative
    // tolerance; accept it on absolute agreement instead.
    bool coord_ok = rel <= 1e-4 || std::abs(analytic - fd) <= 1e-7;
    if (coord_ok) ++ok;
    if (rel > worst && std::abs(analytic - fd) > 1e-7) worst = rel;
    ++checked;
  }
  std::ostringstream os;
  os << ok << "/50 coordinates within 1e-4 relative (or 1e-7 absolute for "
        "near-zero gradients); worst uncovered rel err " << worst;
  record(2, "policy-gradient finite-difference check (d_x=16, L=2, H=2, n=6)",
         ok == 50, os.str());
}

// ---------------------------------------------------------------------------
// 3. Dense equivalence: with K = n the sparse encoder must reproduce an
//    independently coded unfiltered attention stack within 1e-6.
// ---------------------------------------------------------------------------
using Vec = std::vector<double>;
using Mat = std::vector<Vec>;

Vec matvec(const Tensor<double>& w, const Vec& x, const Tensor<double>* b) {
  Vec out(static_cast<std::size_t>(w.rows()), 0.0);
  for (int r = 0; r < w.rows(); ++r) {
    double acc = b ? b->data()[static_cast<std::size_t>(r)] : 0.0;
    for (int c = 0; c < w.cols(); ++c)
      acc += w.at(r, c) * x[static_cast<std::size_t>(c)];
    out[static_cast<std::size_t>(r)] = acc;
  }
  return out;
}

Vec bn_eval_row(const Vec& x, const Tensor<double>& gamma,
                const Tensor<double>& beta, const BnStats<double>& st) {
  Vec out(x.size());
  for (std::size_t f = 0; f < x.size(); ++f)
    out[f] = gamma.data()[f] * (x[f] - st.running_mean[f]) /
                 std::sqrt(st.running_var[f] + kBnEps) +
             beta.data()[f];
  return out;
}

double vdot(const Vec& a, const Vec& b) {
  double acc = 0;
  for (std::size_t i = 0; i < a.size(); ++i) acc += a[i] * b[i];
  return acc;
}

Vec vadd(const Vec& a, const Vec& b) {
  Vec out(a.size());
  for (std::size_t i = 0; i < a.size(); ++i) out[i] = a[i] + b[i];
  return out;
}

// Plain-loop dense attention stack coded straight from the definitions.
struct DenseStack {
  Model<double>& model;
  const VrpInstance& inst;

  Vec edge(double d_ij) const {
    Vec f = matvec(model.p("enc.init.edge.W"), {d_ij},
                   &model.p("enc.init.edge.b"));
    return bn_eval_row(f, model.p("enc.init.edge_bn.gamma"),
                       model.p("enc.init.edge_bn.beta"),
                       *model.stats("enc.init.edge_bn"));
  }

  Mat initial() const {
    Mat h;
    Vec depot = matvec(model.p("enc.init.dp.W"),
                       {inst.coords[0][0], inst.coords[0][1]},
                       &model.p("enc.init.dp.b"));
    h.push_back(bn_eval_row(depot, model.p("enc.init.bn.gamma"),
                            model.p("enc.init.bn.beta"),
                            *model.stats("enc.init.bn")));
    for (int i = 1; i <= inst.n(); ++i) {
      Vec cust = matvec(
          model.p("enc.init.node.W"),
          {inst.coords[static_cast<std::size_t>(i)][0],
           inst.coords[static_cast<std::size_t>(i)][1],
           inst.demands[static_cast<std::size_t>(i)] / inst.capacity},
          &model.p("enc.init.node.b"));
      h.push_back(bn_eval_row(cust, model.p("enc.init.bn.gamma"),
                              model.p("enc.init.bn.beta"),
                              *model.stats("enc.init.bn")));
    }
    return h;
  }

  Mat layer(const Mat& h, int l) const {
    int n = inst.n();
    int d = model.cfg.d_x;
    std::string p = "enc.L" + std::to_string(l) + ".";
    const auto& wq = model.p(p + "Wq");
    const auto& wk = model.p(p + "Wk");
    const auto& wv = model.p(p + "Wv");
    Mat out;
    for (int i = 0; i <= n; ++i) {
      Vec q = matvec(wq, h[static_cast<std::size_t>(i)], nullptr);
      Vec scores(static_cast<std::size_t>(n));
      for (int j = 1; j <= n; ++j) {
        Vec key = matvec(wk, vadd(h[static_cast<std::size_t>(j)],
                                  edge(inst.d(i, j))), nullptr);
        scores[static_cast<std::size_t>(j - 1)] = vdot(q, key) / std::sqrt(d);
      }
      double mx = scores[0];
      for (double s : scores) mx = std::max(mx, s);
      double z = 0;
      for (double s : scores) z += std::exp(s - mx);
      Vec agg(static_cast<std::size_t>(d), 0.0);
      for (int j = 1; j <= n; ++j) {
        double alpha =
            std::exp(scores[static_cast<std::size_t>(j - 1)] - mx) / z;
        Vec val = matvec(wv, vadd(h[static_cast<std::size_t>(j)],
                                  edge(inst.d(i, j))), nullptr);
        for (int f = 0; f < d; ++f)
          agg[static_cast<std::size_t>(f)] +=
              alpha * val[static_cast<std::size_t>(f)];
      }
      out.push_back(bn_eval_row(vadd(agg, h[static_cast<std::size_t>(i)]),
                                model.p(p + "bn.gamma"), model.p(p + "bn.beta"),
                                *model.stats(p + "bn")));
    }
    return out;
  }
};

void criterion_dense_equivalence() {
  ModelConfig cfg;
  cfg.d_x = 24;
  cfg.layers = 3;
  cfg.heads = 2;
  auto model = Model<double>::init(cfg, 606);
  double worst = 0;
  for (int trial = 0; trial < 3; ++trial) {
    auto inst = generate_random(7, 700 + trial, 15.0);
    EncodeOptions opts{inst.n(), BnMode::Eval, false, nullptr};
    auto enc = encode(inst, model, opts);

    DenseStack ref{model, inst};
    Mat h = ref.initial();
    for (int l = 0; l < cfg.layers; ++l) h = ref.layer(h, l);
    for (int i = 0; i <= inst.n(); ++i)
      for (int f = 0; f < cfg.d_x; ++f)
        worst = std::max(worst, std::abs(enc.node_embed.at(i, f) -
                                         h[static_cast<std::size_t>(i)]
                                          [static_cast<std::size_t>(f)]));
  }
  std::ostringstream os;
  os << "max |sparse(K=n) - dense| = " << worst;
  record(3, "K=n encoder equals an independent dense attention stack",
         worst <= 1e-6, os.str());
}

// ---------------------------------------------------------------------------
// 4. Masked-softmax law across 1,000 random decoder states.
// ---------------------------------------------------------------------------
void criterion_masked_softmax() {
  ModelConfig cfg;
  cfg.d_x = 16;
  cfg.layers = 2;
  cfg.heads = 2;
  auto model = Model<float>::init(cfg, 808);
  Rng rng(909);
  int checked = 0;
  int violations = 0;
  double worst_sum = 0;
  for (int trial = 0; trial < 200 && checked < 1000; ++trial) {
    auto inst = generate_random(8, 8000 + trial, 15.0);
    EncodeOptions opts{4, BnMode::Eval, false, nullptr};
    auto enc = encode(inst, model, opts);
    DecoderCache<float> cache(enc, model);
    auto s = DecoderState::initial(inst);
    while (!(s.all_served() && s.last_node == 0) && checked < 1000) {
      auto mask = feasibility_mask(s);
      auto c_m = build_context(enc, s, inst, model);
      auto c_s = mha_context(c_m, cache, mask, model);
      auto p = score_nodes(c_s, cache, mask, model);
      double sum = 0;
      std::vector<double> pd;
      for (std::size_t i = 0; i < p.size(); ++i) {
        double v = p.data()[i];
        if (!mask[i] && v != 0.0) ++violations;
        if (v < 0.0) ++violations;
        sum += v;
        pd.push_back(v);
      }
      worst_sum = std::max(worst_sum, std::abs(sum - 1.0));
      if (std::abs(sum - 1.0) > 1e-6) ++violations;
      ++checked;
      s = step(s, static_cast<int>(rng.sample(pd)), inst);
    }
  }
  std::ostringstream os;
  os << checked << " states, " << violations
     << " violations, worst |sum-1| = " << worst_sum;
  record(4, "masked probabilities: zeros on infeasible nodes, sum 1 ± 1e-6",
         checked >= 1000 && violations == 0, os.str());
}

// ---------------------------------------------------------------------------
// 7. Paired t-test against an independent statistics library.
// ---------------------------------------------------------------------------
double reference_p(const std::vector<double>& a, const std::vector<double>& b) {
  std::size_t n = a.size();
  double mean = 0;
  for (std::size_t i = 0; i < n; ++i) mean += a[i] - b[i];
  mean /= static_cast<double>(n);
  double ss = 0;
  for (std::size_t i = 0; i < n; ++i) {
    double d = a[i] - b[i] - mean;
    ss += d * d;
  }
  double var = ss / static_cast<double>(n - 1);
  if (var == 0.0) return mean < 0 ? 0.0 : 1.0;
  double t = mean / std::sqrt(var / static_cast<double>(n));
  boost::math::students_t dist(static_cast<double>(n - 1));
  return boost::math::cdf(dist, t);
}

void criterion_ttest() {
  Rng rng(1111);
  double worst = 0;
  for (int trial = 0; trial < 20; ++trial) {
    std::size_t n = static_cast<std::size_t>(rng.uniform_int(2, 40));
    std::vector<double> a(n), b(n);
    for (std::size_t i = 0; i < n; ++i) {
      a[i] = rng.uniform(5, 15);
      b[i] = a[i] + rng.uniform(-1, 1);
    }
    worst = std::max(worst,
                     std::abs(paired_ttest_less(a, b) - reference_p(a, b)));
  }
  std::ostringstream os;
  os << "20 randomized paired samples, worst |Δp| = " << worst;
  record(7, "one-sided paired t-test matches the reference computation",
         worst <= 1e-6, os.str());
}

// ---------------------------------------------------------------------------
// 9. Determinism: two CLI desk runs are byte-identical; save→load→rollout is
//    bit-identical. Returns the first run's directory for reuse by criterion 5.
// ---------------------------------------------------------------------------
std::string criterion_determinism() {
  std::string base = work_dir();
  std::string run1 = base + "/det_run1";
  std::string run2 = base + "/det_run2";
  std::filesystem::remove_all(run1);
  std::filesystem::remove_all(run2);

  auto launch = [&](const std::string& dir) {
    std::string cmd = std::string(GASE_CLI_PATH) +
                      " train --preset desk --seed 7 --n 8 --capacity 15"
                      " --out-dir " + dir + " > " + dir + ".stdout 2>&1";
    return std::system(cmd.c_str());
  };
  int rc1 = launch(run1);
  int rc2 = launch(run2);

  bool files_ok = rc1 == 0 && rc2 == 0;
  std::vector<std::string> compared;
  if (files_ok) {
    std::vector<std::string> names = {"train_log.jsonl", "latest.ckpt"};
    for (int e = 1; e <= 10; ++e) {
      char buf[32];
      std::snprintf(buf, sizeof buf, "epoch_%03d.ckpt", e);
      names.emplace_back(buf);
    }
    for (const auto& name : names) {
      auto a = read_bytes(run1 + "/" + name);
      auto b = read_bytes(run2 + "/" + name);
      if (a.empty() || a != b) {
        files_ok = false;
        compared.push_back(name + " differs");
      }
    }
  }

  // save -> load -> greedy rollout must be bit-identical to pre-save.
  bool roundtrip_ok = false;
  try {
    auto ck = load_checkpoint(run1 + "/latest.ckpt");
    auto inst = generate_random(8, 424242, 15.0);
    EncodeOptions opts{4, BnMode::Eval, false, nullptr};
    auto before = rollout(inst, ck.model, opts, RolloutMode::Greedy);
    std::string tmp = work_dir() + "/det_resave.ckpt";
    save_checkpoint(tmp, ck.model, nullptr, ck.meta);
    auto re = load_checkpoint(tmp);
    auto after = rollout(inst, re.model, opts, RolloutMode::Greedy);
    roundtrip_ok = before.solution.sequence == after.solution.sequence &&
                   before.solution.length == after.solution.length;
  } catch (const std::exception& e) {
    compared.push_back(std::string("roundtrip: ") + e.what());
  }

  std::ostringstream os;
  if (files_ok && roundtrip_ok) {
    os << "logs and checkpoints byte-identical across runs; "
          "save/load/rollout bit-identical";
  } else {
    os << "rc=(" << rc1 << "," << rc2 << ")";
    for (const auto& c : compared) os << "; " << c;
  }
  record(9, "determinism of desk training (seed 7, n=8) and checkpoint I/O",
         files_ok && roundtrip_ok, os.str());
  return run1;
}

// ---------------------------------------------------------------------------
// 5. Oracle gap at tiny scale: desk-trained n=8 model vs exact optima.
// ---------------------------------------------------------------------------
void criterion_oracle_gap(const std::string& ckpt_dir) {
  try {
    auto ck = load_checkpoint(ckpt_dir + "/latest.ckpt");
    std::vector<VrpInstance> held_out;
    for (int i = 0; i < 200; ++i)
      held_out.push_back(generate_random(8, derive_seed(13579, 9, 0, i), 15.0));
    auto eval = evaluate_greedy(ck.model, held_out, 4, 1);

    double gap_sum = 0, nn_sum = 0, opt_sum = 0, model_sum = 0;
    for (std::size_t i = 0; i < held_out.size(); ++i) {
      auto oracle = brute_force_optimal(held_out[i]);
      auto nn = nearest_neighbor(held_out[i]);
      gap_sum += (eval.lengths[i] - oracle.best_length) / oracle.best_length;
      nn_sum += nn.length;
      opt_sum += oracle.best_length;
      model_sum += eval.lengths[i];
    }
    double mean_gap = gap_sum / static_cast<double>(held_out.size());
    std::ostringstream os;
    os << "mean gap to optimum " << mean_gap * 100 << "% (model mean "
       << model_sum / 200 << ", optimal mean " << opt_sum / 200
       << ", nearest-neighbour mean " << nn_sum / 200 << ")";
    record(5, "trained n=8 greedy decoding within 10% of brute force",
           mean_gap <= 0.10, os.str());
  } catch (const std::exception& e) {
    record(5, "trained n=8 greedy decoding within 10% of brute force", false,
           e.what());
  }
}

// ---------------------------------------------------------------------------
// 8. CVRPLIB round-trip and the cross-size generalization harness.
// ---------------------------------------------------------------------------
void write_vrp(const std::string& path, const std::string& name, int n,
               int capacity, Rng& rng) {
  std::ofstream os(path);
  os << "NAME : " << name << "\n";
  os << "TYPE : CVRP\n";
  os << "DIMENSION : " << n + 1 << "\n";
  os << "EDGE_WEIGHT_TYPE : EUC_2D\n";
  os << "CAPACITY : " << capacity << "\n";
  os << "NODE_COORD_SECTION\n";
  for (int i = 1; i <= n + 1; ++i)
    os << i << " " << rng.uniform_int(0, 100) << " " << rng.uniform_int(0, 100)
       << "\n";
  os << "DEMAND_SECTION\n";
  os << "1 0\n";
  for (int i = 2; i <= n + 1; ++i) os << i << " " << rng.uniform_int(1, 9)
                                       << "\n";
  os << "DEPOT_SECTION\n1\n-1\nEOF\n";
}

void criterion_cvrplib() {
  bool parse_ok = false;
  std::string detail;
  try {
    auto inst = parse_cvrplib_file(std::string(GASE_DATA_DIR) +
                                   "/A-n32-k5.vrp");
    // Published optimal routes for this instance, customers numbered from 1.
    std::vector<std::vector<int>> routes = {
        {21, 31, 19, 17, 13, 7, 26},
        {12, 1, 16, 30},
        {27, 24},
        {29, 18, 8, 9, 22, 15, 10, 25, 5, 20},
        {14, 28, 11, 4, 23, 3, 2, 6}};
    std::vector<int> seq{0};
    for (const auto& r : routes) {
      for (int c : r) seq.push_back(c);
      seq.push_back(0);
    }
    double len = cvrplib_length(inst, seq);
    bool feasible = validate(inst, make_solution(inst, seq)).feasible();
    parse_ok = inst.n() == 31 && len == 784.0 && feasible;
    std::ostringstream os;
    os << "31 customers, optimal routes score " << len
       << " under integer-rounded distances";
    detail = os.str();
  } catch (const std::exception& e) {
    detail = e.what();
  }

  // Generalization harness: a 50-node-trained checkpoint on smaller library
  // files, a 100-node-trained checkpoint on larger ones. Gaps are reported
  // against the best known value when available (A-n32-k5) and the
  // nearest-neighbour construction otherwise; no tolerance is asserted at
  // this training budget.
  bool harness_ok = false;
  std::ostringstream hos;
  try {
    auto quick_train = [&](int n) {
      TrainConfig cfg = desk_preset(n);
      cfg.epochs = 1;
      cfg.steps_per_epoch = 2;
      cfg.batch_size = 4;
      cfg.val_size = 2;
      cfg.seed = 2026;
      cfg.model.d_x = 64;
      cfg.model.layers = 2;
      cfg.model.heads = 4;
      return train(cfg).model;
    };
    auto model50 = quick_train(50);
    auto model100 = quick_train(100);

    std::string dir = work_dir();
    Rng rng(321);
    std::vector<std::pair<std::string, double>> small_files = {
        {std::string(GASE_DATA_DIR) + "/A-n32-k5.vrp", 784.0}};
    for (int n : {30, 40}) {
      std::string p = dir + "/gen-n" + std::to_string(n) + ".vrp";
      write_vrp(p, "gen-n" + std::to_string(n), n, 30, rng);
      small_files.push_back({p, -1});
    }
    std::vector<std::pair<std::string, double>> large_files;
    for (int n : {60, 80}) {
      std::string p = dir + "/gen-n" + std::to_string(n) + ".vrp";
      write_vrp(p, "gen-n" + std::to_string(n), n, 50, rng);
      large_files.push_back({p, -1});
    }

    auto eval_files =
        [&](Model<float>& m,
            const std::vector<std::pair<std::string, double>>& files) {
          double gap_sum = 0;
          for (const auto& [path, best] : files) {
            auto inst = parse_cvrplib_file(path);
            EncodeOptions opts{-1, BnMode::Eval, false, nullptr};
            auto r = rollout(inst, m, opts, RolloutMode::Greedy);
            if (!validate(inst, r.solution).feasible())
              throw ContractError("infeasible solution on " + path);
            double len = cvrplib_length(inst, r.solution.sequence);
            double ref = best > 0
                             ? best
                             : cvrplib_length(
                                   inst, nearest_neighbor(inst).sequence);
            gap_sum += (len - ref) / ref;
          }
          return 100.0 * gap_sum / static_cast<double>(files.size());
        };
    double small_gap = eval_files(model50, small_files);
    double large_gap = eval_files(model100, large_files);
    hos << "; generalization avg gap: 50-trained on <50-node files "
        << small_gap << "%, 100-trained on >50-node files " << large_gap
        << "% (reported, not asserted)";
    harness_ok = true;
  } catch (const std::exception& e) {
    hos << "; harness failed: " << e.what();
  }

  record(8, "CVRPLIB A-n32-k5 optimum 784 reproduced; cross-size harness runs",
         parse_ok && harness_ok, detail + hos.str());
}

// ---------------------------------------------------------------------------
// 6. Training progress at desk scale on n=20.
// ---------------------------------------------------------------------------
void criterion_training_progress() {
  try {
    TrainConfig cfg = desk_preset(20);
    cfg.seed = 7;
    cfg.out_dir = work_dir() + "/desk_n20";
    std::filesystem::remove_all(cfg.out_dir);

    double last_report = now_seconds();
    auto result = train(cfg, [&](const std::string& line) {
      if (now_seconds() - last_report > 60) {
        std::cout << "  [train n=20] " << line << std::endl;
        last_report = now_seconds();
      }
    });

    double v0 = result.val_history.front();
    double vf = result.val_history.back();
    double reduction = (v0 - vf) / v0;

    // Nearest-neighbour mean over the same validation instances the trainer
    // uses (validation seed stream 3 of the run seed).
    double capacity = cfg.resolved_capacity();
    double nn_sum = 0;
    for (int i = 0; i < cfg.val_size; ++i) {
      auto inst =
          generate_random(cfg.n, derive_seed(cfg.seed, 3, 0, i), capacity);
      nn_sum += nearest_neighbor(inst).length;
    }
    double nn_mean = nn_sum / cfg.val_size;

    std::ostringstream os;
    os << "validation mean " << v0 << " -> " << vf << " ("
       << reduction * 100 << "% reduction), nearest-neighbour mean "
       << nn_mean;
    record(6, "desk training on n=20: >=15% reduction and below "
              "nearest-neighbour",
           reduction >= 0.15 && vf < nn_mean, os.str());
  } catch (const std::exception& e) {
    record(6, "desk training on n=20: >=15% reduction and below "
              "nearest-neighbour",
           false, e.what());
  }
}

}  // namespace

int main() {
  now_seconds();  // start the wall clock before any criterion runs
  std::cout << "acceptance harness starting (working dir: " << work_dir()
            << ")" << std::endl;

  criterion_ttest();            // 7
  criterion_masked_softmax();   // 4
  criterion_dense_equivalence();  // 3
  criterion_gradients();        // 2
  criterion_feasibility();      // 1
  std::string run_dir = criterion_determinism();  // 9 (trains n=8 twice)
  criterion_oracle_gap(run_dir);  // 5 (reuses the n=8 checkpoint)
  criterion_cvrplib();          // 8
  criterion_training_progress();  // 6 (longest)

  std::cout << "\n===== summary =====" << std::endl;
  bool all_pass = true;
  for (int i = 1; i <= 9; ++i) {
    const auto& c = g_results[static_cast<std::size_t>(i)];
    all_pass = all_pass && c.pass;
    std::cout << (c.pass ? "[PASS]" : "[FAIL]") << " criterion " << i << ": "
              << c.title << std::endl;
  }
  std::cout << "total wall time: " << now_seconds() << " s" << std::endl;
  return all_pass ? 0 : 1;
}
