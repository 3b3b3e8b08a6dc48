#include "gase/baselines.hpp"

#include <algorithm>
#include <limits>
#include <numeric>

namespace gase {

namespace {

// Optimal split of a fixed customer order into capacity-feasible routes:
// best[k] = cheapest cost of serving the first k customers of the order.
double optimal_split(const VrpInstance& inst, const std::vector<int>& order,
                     std::vector<int>* split_points) {
  int n = static_cast<int>(order.size());
  constexpr double kInf = std::numeric_limits<double>::infinity();
  std::vector<double> best(n + 1, kInf);
  std::vector<int> from(n + 1, -1);
  best[0] = 0.0;
  for (int i = 0; i < n; ++i) {
    if (best[i] == kInf) continue;
    double load = 0.0, inner = 0.0;
    for (int j = i; j < n; ++j) {
      load += inst.demands[order[j]];
      if (load > inst.capacity + 1e-9) break;
      if (j > i) inner += inst.d(order[j - 1], order[j]);
      double cost = inst.d(0, order[i]) + inner + inst.d(order[j], 0);
      if (best[i] + cost < best[j + 1]) {
        best[j + 1] = best[i] + cost;
        from[j + 1] = i;
      }
    }
  }
  if (split_points) {
    split_points->clear();
    for (int k = n; k > 0; k = from[k]) split_points->push_back(from[k]);
    std::reverse(split_points->begin(), split_points->end());
  }
  return best[n];
}

std::vector<int> assemble_sequence(const std::vector<int>& order,
                                   const std::vector<int>& split_points) {
  std::vector<int> seq{0};
  std::size_t s = 0;
  for (int i = 0; i < static_cast<int>(order.size()); ++i) {
    if (s + 1 < split_points.size() &&
        i == split_points[s + 1])  // route boundary
      ++s, seq.push_back(0);
    seq.push_back(order[i]);
  }
  seq.push_back(0);
  return seq;
}

}  // namespace

OracleResult brute_force_optimal(const VrpInstance& inst) {
  int n = inst.n();
  if (n > 9)
    throw ArgumentError("brute_force_optimal: refusing n=" +
                        std::to_string(n) + " (> 9)");
  std::vector<int> order(n);
  std::iota(order.begin(), order.end(), 1);
  OracleResult best;
  best.best_length = std::numeric_limits<double>::infinity();
  std::vector<int> splits;
  do {
    ++best.nodes_expanded;
    double len = optimal_split(inst, order, nullptr);
    if (len < best.best_length) {
      best.best_length = len;
      optimal_split(inst, order, &splits);
      best.best_sequence = assemble_sequence(order, splits);
    }
  } while (std::next_permutation(order.begin(), order.end()));
  return best;
}

Solution nearest_neighbor(const VrpInstance& inst) {
  int n = inst.n();
  std::vector<bool> visited(n + 1, false);
  std::vector<int> seq{0};
  double cap = inst.capacity;
  int cur = 0;
  int served = 0;
  while (served < n) {
    int best = -1;
    double best_d = std::numeric_limits<double>::infinity();
    for (int i = 1; i <= n; ++i) {
      if (visited[i] || inst.demands[i] > cap + 1e-9) continue;
      if (inst.d(cur, i) < best_d) {
        best_d = inst.d(cur, i);
        best = i;
      }
    }
    if (best == -1) {  // nothing fits: restock at the depot
      seq.push_back(0);
      cur = 0;
      cap = inst.capacity;
      continue;
    }
    visited[best] = true;
    cap -= inst.demands[best];
    seq.push_back(best);
    cur = best;
    ++served;
  }
  seq.push_back(0);
  return make_solution(inst, seq);
}

}  // namespace gase
