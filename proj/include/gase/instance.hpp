#pragma once

#include <array>
#include <cstdint>
#include <string>
#include <vector>

#include "gase/common.hpp"

namespace gase {

// A CVRP instance. Index 0 is always the depot. `coords` live in the unit
// square (the model's input distribution); CVRPLIB instances additionally
// keep their raw coordinates for reporting lengths under the library's
// rounded-integer distance convention.
struct VrpInstance {
  std::string name;
  std::vector<std::array<double, 2>> coords;  // (n+1) x 2, normalized
  std::vector<double> demands;                // demands[0] == 0
  double capacity = 0.0;
  std::vector<double> dist;  // (n+1)^2 row-major Euclidean distances

  std::vector<std::array<double, 2>> raw_coords;  // empty unless CVRPLIB
  double optimal_hint = -1.0;  // parsed from COMMENT when available

  int n() const { return static_cast<int>(coords.size()) - 1; }
  int num_nodes() const { return static_cast<int>(coords.size()); }
  double d(int i, int j) const {
    return dist[static_cast<std::size_t>(i) * num_nodes() + j];
  }

  void compute_distances();
};

// Ordered node sequence with depot returns, plus its route decomposition.
struct Solution {
  std::vector<int> sequence;             // starts (and ends) at depot 0
  std::vector<std::vector<int>> routes;  // customer indices per sub-route
  double length = 0.0;
};

struct ValidationReport {
  std::vector<std::string> violations;
  bool feasible() const { return violations.empty(); }
};

// Default Table-style capacities for the supported training sizes;
// returns <= 0 for sizes where the caller must supply one.
double default_capacity(int n);

// Uniform coords in [0,1]^2, integer demands in {1..9}, deterministic per
// seed. capacity <= 0 selects the default for n (error if none exists).
VrpInstance generate_random(int n, std::uint64_t seed, double capacity = -1.0);

// Total Euclidean length of `seq` including the final return to the depot.
double tour_length(const VrpInstance& inst, const std::vector<int>& seq);

// Builds routes + length from a raw sequence (no feasibility assumptions).
Solution make_solution(const VrpInstance& inst, const std::vector<int>& seq);

// Feasibility report: missing/duplicated customers, per-route capacity
// overflow, consecutive depot visits. Violations are data, not errors.
ValidationReport validate(const VrpInstance& inst, const Solution& sol);

// Instance-set binary format: magic "GVRP", version u32, count u32, then per
// instance n u32, capacity f32, (n+1)x2 f32 coords, (n+1) f32 demands; all
// little-endian.
void save_instance_set(const std::vector<VrpInstance>& set,
                       const std::string& path);
std::vector<VrpInstance> load_instance_set(const std::string& path);

}  // namespace gase
