#pragma once

#include <cstdint>

#include "gase/instance.hpp"

namespace gase {

struct OracleResult {
  std::vector<int> best_sequence;
  double best_length = 0.0;
  std::uint64_t nodes_expanded = 0;
};

// Exact minimum over all customer permutations with an optimal
// capacity-feasible split into depot-delimited routes (DP over split
// points per permutation). Refuses n > 9.
OracleResult brute_force_optimal(const VrpInstance& inst);

// Greedy: repeatedly visit the nearest feasible unvisited customer, return
// to the depot when none fits. Feasible by construction.
Solution nearest_neighbor(const VrpInstance& inst);

}  // namespace gase
