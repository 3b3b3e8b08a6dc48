#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "json.hpp"

#include "gase/baselines.hpp"
#include "gase/checkpoint.hpp"
#include "gase/common.hpp"
#include "gase/cvrplib.hpp"
#include "gase/decoder.hpp"
#include "gase/instance.hpp"
#include "gase/parallel.hpp"
#include "gase/trainer.hpp"

namespace fs = std::filesystem;
using nlohmann::json;
using namespace gase;

namespace {

double now_since(const std::chrono::steady_clock::time_point& t0) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0)
      .count();
}

void write_manifest(const std::string& path, const json& manifest) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw ArgumentError("cannot write manifest: " + path);
  out << manifest.dump(2) << "\n";
}

// Flags > config file > preset defaults: a config value is applied only
// when the matching flag was not given on the command line.
void apply_config_file(CLI::App* cmd, const std::string& path, TrainConfig& tc,
                       double& k_rate) {
  std::ifstream in(path);
  if (!in) throw ArgumentError("cannot read config file: " + path);
  json cfg;
  try {
    cfg = json::parse(in);
  } catch (const json::exception& e) {
    throw ParseError(std::string("config file: ") + e.what(), 0);
  }
  auto unset = [&](const char* flag) {
    return cmd->get_option(flag)->count() == 0;
  };
  for (auto it = cfg.begin(); it != cfg.end(); ++it) {
    const std::string& key = it.key();
    const json& v = it.value();
    try {
      if (key == "n" && unset("--n")) tc.n = v.get<int>();
      else if (key == "capacity" && unset("--capacity")) tc.capacity = v.get<double>();
      else if (key == "epochs" && unset("--epochs")) tc.epochs = v.get<int>();
      else if (key == "steps" && unset("--steps")) tc.steps_per_epoch = v.get<int>();
      else if (key == "batch" && unset("--batch")) tc.batch_size = v.get<int>();
      else if (key == "lr" && unset("--lr")) tc.lr = v.get<double>();
      else if (key == "lr-decay" && unset("--lr-decay")) tc.lr_decay = v.get<double>();
      else if (key == "alpha" && unset("--alpha")) tc.alpha = v.get<double>();
      else if (key == "max-grad-norm" && unset("--max-grad-norm")) tc.max_grad_norm = v.get<double>();
      else if (key == "k-rate" && unset("--k-rate")) k_rate = v.get<double>();
      else if (key == "layers" && unset("--layers")) tc.model.layers = v.get<int>();
      else if (key == "heads" && unset("--heads")) tc.model.heads = v.get<int>();
      else if (key == "d-model" && unset("--d-model")) tc.model.d_x = v.get<int>();
      else if (key == "clip" && unset("--clip")) tc.model.clip = v.get<double>();
      else if (key == "seed" && unset("--seed")) tc.seed = v.get<std::uint64_t>();
      else if (key == "val-size" && unset("--val-size")) tc.val_size = v.get<int>();
      else if (key != "n" && key != "capacity" && key != "epochs" &&
               key != "steps" && key != "batch" && key != "lr" &&
               key != "lr-decay" && key != "alpha" && key != "k-rate" &&
               key != "max-grad-norm" &&
               key != "layers" && key != "heads" && key != "d-model" &&
               key != "clip" && key != "seed" && key != "val-size")
        throw ArgumentError("config file: unknown key '" + key + "'");
    } catch (const json::exception& e) {
      throw ParseError("config file key '" + key + "': " + e.what(), 0);
    }
  }
}

struct EvalRow {
  std::string name;
  int n = 0;
  double length = 0;
  double ref = -1;  // < 0 means unknown
  double seconds = 0;
};

void write_eval_csv(const std::string& path, const std::vector<EvalRow>& rows) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw ArgumentError("cannot write csv: " + path);
  out << "name,n,length,ref,gap_percent,seconds\n";
  char buf[256];
  for (const auto& r : rows) {
    if (r.ref > 0) {
      double gap = 100.0 * (r.length - r.ref) / r.ref;
      std::snprintf(buf, sizeof(buf), "%s,%d,%.9g,%.9g,%.9g,%.9g\n",
                    r.name.c_str(), r.n, r.length, r.ref, gap, r.seconds);
    } else {
      std::snprintf(buf, sizeof(buf), "%s,%d,%.9g,,,%.9g\n", r.name.c_str(),
                    r.n, r.length, r.seconds);
    }
    out << buf;
  }
}

// The printed table is rebuilt from the CSV on disk so the shipped
// per-instance records are authoritative, not an in-memory aggregate.
std::vector<EvalRow> read_eval_csv(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw LoadError("cannot reopen csv: " + path);
  std::string line;
  std::getline(in, line);  // header
  std::vector<EvalRow> rows;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    std::vector<std::string> cells;
    std::stringstream ss(line);
    std::string cell;
    while (std::getline(ss, cell, ',')) cells.push_back(cell);
    cells.resize(6);
    EvalRow r;
    r.name = cells[0];
    r.n = std::stoi(cells[1]);
    r.length = std::stod(cells[2]);
    r.ref = cells[3].empty() ? -1.0 : std::stod(cells[3]);
    r.seconds = cells[5].empty() ? 0.0 : std::stod(cells[5]);
    rows.push_back(std::move(r));
  }
  return rows;
}

void print_eval_table(const std::vector<EvalRow>& rows, double wall_seconds) {
  std::printf("%-24s %6s %12s %12s %9s\n", "instance", "n", "length", "ref",
              "gap(%)");
  double gap_sum = 0;
  int gap_count = 0;
  double len_sum = 0;
  for (const auto& r : rows) {
    len_sum += r.length;
    if (r.ref > 0) {
      double gap = 100.0 * (r.length - r.ref) / r.ref;
      gap_sum += gap;
      ++gap_count;
      std::printf("%-24s %6d %12.4f %12.4f %9.2f\n", r.name.c_str(), r.n,
                  r.length, r.ref, gap);
    } else {
      std::printf("%-24s %6d %12.4f %12s %9s\n", r.name.c_str(), r.n, r.length,
                  "-", "-");
    }
  }
  std::printf("%-24s %6zu %12.4f %12s %9s\n", "mean", rows.size(),
              rows.empty() ? 0.0 : len_sum / rows.size(), "",
              gap_count
                  ? (std::to_string(gap_sum / gap_count).substr(0, 7)).c_str()
                  : "-");
  if (gap_count)
    std::printf("average gap over %d referenced instances: %.2f%%\n",
                gap_count, gap_sum / gap_count);
  std::printf("total wall time: %.2f s\n", wall_seconds);
}

const char* kPalette[] = {"#e41a1c", "#377eb8", "#4daf4a", "#984ea3",
                          "#ff7f00", "#a65628", "#f781bf", "#17becf",
                          "#bcbd22", "#666666"};

void write_route_svg(const std::string& path, const VrpInstance& inst,
                     const Solution& sol) {
  const auto& pts = inst.raw_coords.empty() ? inst.coords : inst.raw_coords;
  double xmin = 1e300, xmax = -1e300, ymin = 1e300, ymax = -1e300;
  for (const auto& p : pts) {
    xmin = std::min(xmin, p[0]);
    xmax = std::max(xmax, p[0]);
    ymin = std::min(ymin, p[1]);
    ymax = std::max(ymax, p[1]);
  }
  double span = std::max({xmax - xmin, ymax - ymin, 1e-12});
  const double size = 640.0, pad = 20.0;
  auto px = [&](double x) { return pad + (x - xmin) / span * (size - 2 * pad); };
  auto py = [&](double y) {
    return size - pad - (y - ymin) / span * (size - 2 * pad);
  };
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw ArgumentError("cannot write svg: " + path);
  out << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << size
      << "\" height=\"" << size << "\">\n";
  out << "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n";
  for (std::size_t r = 0; r < sol.routes.size(); ++r) {
    const char* color = kPalette[r % (sizeof(kPalette) / sizeof(*kPalette))];
    out << "<polyline fill=\"none\" stroke=\"" << color
        << "\" stroke-width=\"1.5\" points=\"";
    out << px(pts[0][0]) << "," << py(pts[0][1]);
    for (int node : sol.routes[r])
      out << " " << px(pts[static_cast<std::size_t>(node)][0]) << ","
          << py(pts[static_cast<std::size_t>(node)][1]);
    out << " " << px(pts[0][0]) << "," << py(pts[0][1]) << "\"/>\n";
  }
  for (std::size_t i = 1; i < pts.size(); ++i)
    out << "<circle cx=\"" << px(pts[i][0]) << "\" cy=\"" << py(pts[i][1])
        << "\" r=\"3\" fill=\"#333\"/>\n";
  out << "<rect x=\"" << px(pts[0][0]) - 5 << "\" y=\"" << py(pts[0][1]) - 5
      << "\" width=\"10\" height=\"10\" fill=\"black\"/>\n";
  out << "</svg>\n";
}

std::vector<std::string> collect_vrp_files(const std::string& dir) {
  std::vector<std::string> files;
  for (const auto& e : fs::directory_iterator(dir))
    if (e.is_regular_file() && e.path().extension() == ".vrp")
      files.push_back(e.path().string());
  std::sort(files.begin(), files.end());
  if (files.empty())
    throw LoadError("no .vrp files in directory: " + dir);
  return files;
}

Solution greedy_solve(const VrpInstance& inst, Model<float>& model, int k) {
  int ki = k > 0 ? std::min(k, inst.n()) : default_sample_count(inst.n());
  EncodeOptions opts{ki, BnMode::Eval, false, nullptr};
  auto out = rollout(inst, model, opts, RolloutMode::Greedy);
  auto report = validate(inst, out.solution);
  if (!report.feasible())
    throw ContractError("greedy rollout produced infeasible solution: " +
                        report.violations.front());
  return out.solution;
}

int run(int argc, char** argv) {
  CLI::App app{"attention-based CVRP solver"};
  app.require_subcommand(1);
  int workers = default_workers();
  app.add_option("--workers", workers, "parallel workers")
      ->capture_default_str();

  // generate ---------------------------------------------------------------
  auto* gen = app.add_subcommand("generate", "write a random instance set");
  int g_n = 20, g_count = 1000;
  std::uint64_t g_seed = 1;
  double g_capacity = -1;
  std::string g_out;
  gen->add_option("--n", g_n, "customers per instance")->capture_default_str();
  gen->add_option("--count", g_count, "number of instances")
      ->capture_default_str();
  gen->add_option("--seed", g_seed, "random seed")->capture_default_str();
  gen->add_option("--capacity", g_capacity, "vehicle capacity (default by n)");
  gen->add_option("--out", g_out, "output .gvrp path")->required();

  // train ------------------------------------------------------------------
  auto* tr = app.add_subcommand("train", "train a model");
  std::string t_preset = "desk", t_out_dir, t_config;
  TrainConfig tc = desk_preset(20);
  double t_k_rate = -1;
  tr->add_option("--config", t_config, "JSON config file (flags override)");
  tr->add_option("--preset", t_preset, "desk | full")
      ->check(CLI::IsMember({"desk", "full"}))
      ->capture_default_str();
  tr->add_option("--n", tc.n, "customers per instance")->capture_default_str();
  tr->add_option("--capacity", tc.capacity, "vehicle capacity (default by n)");
  tr->add_option("--epochs", tc.epochs, "training epochs");
  tr->add_option("--steps", tc.steps_per_epoch, "steps per epoch");
  tr->add_option("--batch", tc.batch_size, "batch size");
  tr->add_option("--lr", tc.lr, "initial learning rate");
  tr->add_option("--lr-decay", tc.lr_decay, "per-epoch lr multiplier");
  tr->add_option("--alpha", tc.alpha, "t-test significance level");
  tr->add_option("--max-grad-norm", tc.max_grad_norm,
                 "global gradient-norm clip (<=0 disables)");
  tr->add_option("--k-rate", t_k_rate, "neighbour sample rate in (0,1]");
  tr->add_option("--layers", tc.model.layers, "encoder layers");
  tr->add_option("--heads", tc.model.heads, "decoder attention heads");
  tr->add_option("--d-model", tc.model.d_x, "embedding width");
  tr->add_option("--clip", tc.model.clip, "logit clipping constant");
  tr->add_option("--seed", tc.seed, "random seed")->capture_default_str();
  tr->add_option("--val-size", tc.val_size, "validation instances");
  tr->add_option("--out-dir", t_out_dir, "checkpoint/log directory")
      ->required();

  // evaluate ---------------------------------------------------------------
  auto* ev = app.add_subcommand("evaluate", "evaluate a checkpoint");
  std::string e_ckpt, e_instances, e_mode = "greedy", e_refs, e_csv;
  int e_k = -1;
  ev->add_option("--checkpoint", e_ckpt, "checkpoint file")->required();
  ev->add_option("--instances", e_instances,
                 ".gvrp set, .vrp file, or directory of .vrp files")
      ->required();
  ev->add_option("--mode", e_mode, "decoding mode")
      ->check(CLI::IsMember({"greedy"}))
      ->capture_default_str();
  ev->add_option("--refs", e_refs, "reference lengths, one per line");
  ev->add_option("--k", e_k, "neighbour sample count (default ceil(n/2))");
  ev->add_option("--out-csv", e_csv, "per-instance CSV output path");

  // solve ------------------------------------------------------------------
  auto* so = app.add_subcommand("solve", "solve one instance");
  std::string s_ckpt, s_vrp, s_set, s_plot;
  int s_index = 0, s_k = -1;
  so->add_option("--checkpoint", s_ckpt, "checkpoint file")->required();
  auto* s_vrp_opt = so->add_option("--vrp", s_vrp, "CVRPLIB .vrp file");
  auto* s_set_opt =
      so->add_option("--instances", s_set, ".gvrp set (with --instance)");
  so->add_option("--instance", s_index, "index into --instances")
      ->capture_default_str();
  so->add_option("--k", s_k, "neighbour sample count (default ceil(n/2))");
  so->add_option("--plot", s_plot, "route plot SVG output path");
  s_vrp_opt->excludes(s_set_opt);

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    int code = app.exit(e);
    return code == 0 ? 0 : 2;
  }

  auto t0 = std::chrono::steady_clock::now();

  if (*gen) {
    if (g_count < 1) throw ArgumentError("generate: --count must be >= 1");
    if (g_n < 1) throw ArgumentError("generate: --n must be >= 1");
    double cap = g_capacity > 0 ? g_capacity : default_capacity(g_n);
    std::vector<VrpInstance> set;
    set.reserve(static_cast<std::size_t>(g_count));
    for (int i = 0; i < g_count; ++i)
      set.push_back(generate_random(g_n, derive_seed(g_seed, 0, i), cap));
    save_instance_set(set, g_out);
    write_manifest(g_out + ".manifest.json",
                   {{"subcommand", "generate"},
                    {"config",
                     {{"n", g_n},
                      {"count", g_count},
                      {"capacity", cap},
                      {"seed", g_seed}}},
                    {"seed", g_seed},
                    {"outputs", {g_out}},
                    {"wall_seconds", now_since(t0)}});
    std::printf("wrote %d instances (n=%d, capacity=%g) to %s\n", g_count, g_n,
                cap, g_out.c_str());
    return 0;
  }

  if (*tr) {
    if (t_preset == "full") {
      auto p = full_preset(tc.n);
      if (tr->get_option("--epochs")->count() == 0) tc.epochs = p.epochs;
      if (tr->get_option("--steps")->count() == 0)
        tc.steps_per_epoch = p.steps_per_epoch;
      if (tr->get_option("--batch")->count() == 0) tc.batch_size = p.batch_size;
    }
    if (!t_config.empty()) apply_config_file(tr, t_config, tc, t_k_rate);
    if (tc.model.layers < 1) throw ArgumentError("train: --layers must be >= 1");
    if (tc.model.heads < 1) throw ArgumentError("train: --heads must be >= 1");
    if (tc.model.d_x < tc.model.heads || tc.model.d_x % tc.model.heads != 0)
      throw ArgumentError("train: --d-model must be a multiple of --heads");
    if (t_k_rate != -1) {
      if (t_k_rate <= 0 || t_k_rate > 1)
        throw ArgumentError("train: --k-rate must be in (0,1]");
      tc.k = std::max(1, static_cast<int>(std::ceil(t_k_rate * tc.n)));
    }
    tc.workers = workers;
    tc.out_dir = t_out_dir;
    fs::create_directories(t_out_dir);
    tc.validate_or_throw();

    auto result = train(tc, [](const std::string& line) {
      std::printf("%s\n", line.c_str());
      std::fflush(stdout);
    });
    write_manifest(
        t_out_dir + "/manifest.json",
        {{"subcommand", "train"},
         {"config",
          {{"preset", t_preset},
           {"n", tc.n},
           {"capacity", tc.resolved_capacity()},
           {"epochs", tc.epochs},
           {"steps_per_epoch", tc.steps_per_epoch},
           {"batch_size", tc.batch_size},
           {"lr", tc.lr},
           {"lr_decay", tc.lr_decay},
           {"alpha", tc.alpha},
           {"max_grad_norm", tc.max_grad_norm},
           {"k", tc.resolved_k()},
           {"layers", tc.model.layers},
           {"heads", tc.model.heads},
           {"d_model", tc.model.d_x},
           {"clip", tc.model.clip},
           {"val_size", tc.val_size},
           {"workers", workers}}},
         {"seed", tc.seed},
         {"outputs", {t_out_dir + "/latest.ckpt", result.log_path}},
         {"wall_seconds", now_since(t0)}});
    std::printf("final validation mean length: %.6f\n",
                result.val_history.back());
    return 0;
  }

  if (*ev) {
    auto ck = load_checkpoint(e_ckpt);
    std::vector<EvalRow> rows;
    bool cvrplib = false;
    std::vector<std::string> files;
    std::vector<VrpInstance> set;
    if (fs::is_directory(e_instances)) {
      cvrplib = true;
      files = collect_vrp_files(e_instances);
    } else if (fs::path(e_instances).extension() == ".vrp") {
      cvrplib = true;
      files = {e_instances};
    } else {
      set = load_instance_set(e_instances);
    }

    if (cvrplib) {
      for (const auto& f : files) {
        auto inst = parse_cvrplib_file(f);
        auto it0 = std::chrono::steady_clock::now();
        auto sol = greedy_solve(inst, ck.model, e_k);
        EvalRow r;
        r.name = inst.name.empty() ? fs::path(f).stem().string() : inst.name;
        r.n = inst.n();
        r.length = cvrplib_length(inst, sol.sequence);
        r.ref = inst.optimal_hint;
        r.seconds = now_since(it0);
        rows.push_back(std::move(r));
      }
    } else {
      std::vector<double> refs;
      if (!e_refs.empty()) {
        std::ifstream in(e_refs);
        if (!in) throw LoadError("cannot read refs: " + e_refs);
        double v;
        while (in >> v) refs.push_back(v);
        if (refs.size() != set.size())
          throw LoadError("refs count does not match instance set size");
      }
      for (std::size_t i = 0; i < set.size(); ++i) {
        auto it0 = std::chrono::steady_clock::now();
        auto sol = greedy_solve(set[i], ck.model, e_k);
        EvalRow r;
        r.name = set[i].name.empty() ? "inst_" + std::to_string(i)
                                     : set[i].name;
        r.n = set[i].n();
        r.length = sol.length;
        r.ref = refs.empty() ? -1.0 : refs[i];
        r.seconds = now_since(it0);
        rows.push_back(std::move(r));
      }
    }

    std::string csv = e_csv.empty() ? e_instances + ".eval.csv" : e_csv;
    write_eval_csv(csv, rows);
    auto reread = read_eval_csv(csv);
    double wall = now_since(t0);
    print_eval_table(reread, wall);
    write_manifest(csv + ".manifest.json",
                   {{"subcommand", "evaluate"},
                    {"config",
                     {{"checkpoint", e_ckpt},
                      {"instances", e_instances},
                      {"mode", e_mode},
                      {"refs", e_refs},
                      {"k", e_k},
                      {"workers", workers}}},
                    {"seed", ck.meta.seed},
                    {"outputs", {csv}},
                    {"wall_seconds", wall}});
    return 0;
  }

  if (*so) {
    if (s_vrp.empty() && s_set.empty())
      throw ArgumentError("solve: provide --vrp or --instances");
    auto ck = load_checkpoint(s_ckpt);
    VrpInstance inst;
    if (!s_vrp.empty()) {
      inst = parse_cvrplib_file(s_vrp);
    } else {
      auto all = load_instance_set(s_set);
      if (s_index < 0 || s_index >= static_cast<int>(all.size()))
        throw ArgumentError("solve: --instance out of range");
      inst = all[static_cast<std::size_t>(s_index)];
    }
    auto sol = greedy_solve(inst, ck.model, s_k);
    double recomputed = tour_length(inst, sol.sequence);
    if (std::abs(recomputed - sol.length) > 1e-6 * std::max(1.0, recomputed))
      throw ContractError("solve: route length mismatch on re-verification");
    for (std::size_t r = 0; r < sol.routes.size(); ++r) {
      std::printf("route %zu: 0", r + 1);
      for (int node : sol.routes[r]) std::printf(" %d", node);
      std::printf(" 0\n");
    }
    std::printf("total length: %.6f\n", recomputed);
    if (!inst.raw_coords.empty())
      std::printf("rounded-distance length: %.0f\n",
                  cvrplib_length(inst, sol.sequence));
    std::string manifest_base = s_plot.empty() ? "solve" : s_plot;
    if (!s_plot.empty()) {
      write_route_svg(s_plot, inst, sol);
      std::printf("wrote %s\n", s_plot.c_str());
    }
    write_manifest(manifest_base + ".manifest.json",
                   {{"subcommand", "solve"},
                    {"config",
                     {{"checkpoint", s_ckpt},
                      {"vrp", s_vrp},
                      {"instances", s_set},
                      {"instance", s_index},
                      {"k", s_k}}},
                    {"seed", ck.meta.seed},
                    {"outputs", s_plot.empty() ? json::array()
                                               : json::array({s_plot})},
                    {"wall_seconds", now_since(t0)}});
    return 0;
  }

  return 2;
}

}  // namespace

int main(int argc, char** argv) {
  try {
    return run(argc, argv);
  } catch (const ArgumentError& e) {
    std::fprintf(stderr, "argument error: %s\n", e.what());
    return 2;
  } catch (const ParseError& e) {
    std::fprintf(stderr, "parse error: %s\n", e.what());
    return 3;
  } catch (const LoadError& e) {
    std::fprintf(stderr, "load error: %s\n", e.what());
    return 3;
  } catch (const std::exception& e) {
    std::fprintf(stderr, "internal error: %s\n", e.what());
    return 4;
  }
}
