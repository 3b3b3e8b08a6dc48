#include "gase/instance.hpp"

#include <cmath>
#include <cstring>
#include <fstream>
#include <set>

#include "gase/rng.hpp"

namespace gase {

void VrpInstance::compute_distances() {
  int m = num_nodes();
  dist.assign(static_cast<std::size_t>(m) * m, 0.0);
  for (int i = 0; i < m; ++i)
    for (int j = 0; j < m; ++j) {
      double dx = coords[i][0] - coords[j][0];
      double dy = coords[i][1] - coords[j][1];
      dist[static_cast<std::size_t>(i) * m + j] = std::sqrt(dx * dx + dy * dy);
    }
}

double default_capacity(int n) {
  switch (n) {
    case 20: return 30.0;
    case 50: return 40.0;
    case 100: return 50.0;
    default: return -1.0;
  }
}

VrpInstance generate_random(int n, std::uint64_t seed, double capacity) {
  if (n < 1) throw ArgumentError("generate_random: n must be >= 1");
  if (capacity <= 0.0) {
    capacity = default_capacity(n);
    if (capacity <= 0.0)
      throw ArgumentError("generate_random: no default capacity for n=" +
                          std::to_string(n) + "; supply one");
  }
  VrpInstance inst;
  inst.name = "rand-n" + std::to_string(n) + "-s" + std::to_string(seed);
  inst.capacity = capacity;
  inst.coords.resize(n + 1);
  inst.demands.assign(n + 1, 0.0);
  Rng rng(seed);
  for (int i = 0; i <= n; ++i) {
    inst.coords[i][0] = rng.next_double();
    inst.coords[i][1] = rng.next_double();
  }
  for (int i = 1; i <= n; ++i)
    inst.demands[i] = static_cast<double>(rng.uniform_int(1, 9));
  inst.compute_distances();
  return inst;
}

double tour_length(const VrpInstance& inst, const std::vector<int>& seq) {
  if (seq.empty() || seq.front() != 0)
    throw ArgumentError("tour_length: sequence must start at the depot");
  double len = 0.0;
  for (std::size_t i = 0; i + 1 < seq.size(); ++i) {
    if (seq[i] < 0 || seq[i] >= inst.num_nodes())
      throw ArgumentError("tour_length: node index out of range");
    len += inst.d(seq[i], seq[i + 1]);
  }
  if (seq.back() < 0 || seq.back() >= inst.num_nodes())
    throw ArgumentError("tour_length: node index out of range");
  len += inst.d(seq.back(), 0);  // return to depot
  return len;
}

Solution make_solution(const VrpInstance& inst, const std::vector<int>& seq) {
  Solution sol;
  sol.sequence = seq;
  if (!seq.empty() && seq.back() != 0) sol.sequence.push_back(0);
  std::vector<int> route;
  for (std::size_t i = 1; i < sol.sequence.size(); ++i) {
    int node = sol.sequence[i];
    if (node == 0) {
      if (!route.empty()) sol.routes.push_back(route);
      route.clear();
    } else {
      route.push_back(node);
    }
  }
  if (!route.empty()) sol.routes.push_back(route);
  sol.length = seq.empty() ? 0.0 : tour_length(inst, seq);
  return sol;
}

ValidationReport validate(const VrpInstance& inst, const Solution& sol) {
  ValidationReport report;
  int n = inst.n();
  std::vector<int> count(n + 1, 0);
  for (std::size_t i = 0; i < sol.sequence.size(); ++i) {
    int node = sol.sequence[i];
    if (node < 0 || node > n) {
      report.violations.push_back("node index out of range: " +
                                  std::to_string(node));
      continue;
    }
    count[node]++;
    if (i > 0 && node == 0 && sol.sequence[i - 1] == 0)
      report.violations.push_back("consecutive depot visits at position " +
                                  std::to_string(i));
  }
  for (int i = 1; i <= n; ++i) {
    if (count[i] == 0)
      report.violations.push_back("missing customer " + std::to_string(i));
    else if (count[i] > 1)
      report.violations.push_back("duplicated customer " + std::to_string(i) +
                                  " (" + std::to_string(count[i]) + " visits)");
  }
  for (std::size_t r = 0; r < sol.routes.size(); ++r) {
    double load = 0.0;
    for (int node : sol.routes[r])
      if (node >= 1 && node <= n) load += inst.demands[node];
    if (load > inst.capacity + 1e-9)
      report.violations.push_back(
          "route " + std::to_string(r) + " demand " + std::to_string(load) +
          " exceeds capacity " + std::to_string(inst.capacity));
  }
  return report;
}

namespace {

void put_u32(std::ostream& os, std::uint32_t v) {
  unsigned char b[4] = {static_cast<unsigned char>(v),
                        static_cast<unsigned char>(v >> 8),
                        static_cast<unsigned char>(v >> 16),
                        static_cast<unsigned char>(v >> 24)};
  os.write(reinterpret_cast<const char*>(b), 4);
}

void put_f32(std::ostream& os, float v) {
  std::uint32_t bits;
  std::memcpy(&bits, &v, 4);
  put_u32(os, bits);
}

std::uint32_t get_u32(std::istream& is) {
  unsigned char b[4];
  is.read(reinterpret_cast<char*>(b), 4);
  if (!is) throw LoadError("instance set: truncated file");
  return static_cast<std::uint32_t>(b[0]) | (static_cast<std::uint32_t>(b[1]) << 8) |
         (static_cast<std::uint32_t>(b[2]) << 16) |
         (static_cast<std::uint32_t>(b[3]) << 24);
}

float get_f32(std::istream& is) {
  std::uint32_t bits = get_u32(is);
  float v;
  std::memcpy(&v, &bits, 4);
  return v;
}

}  // namespace

void save_instance_set(const std::vector<VrpInstance>& set,
                       const std::string& path) {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw ArgumentError("cannot open for writing: " + path);
  os.write("GVRP", 4);
  put_u32(os, 1);  // version
  put_u32(os, static_cast<std::uint32_t>(set.size()));
  for (const auto& inst : set) {
    put_u32(os, static_cast<std::uint32_t>(inst.n()));
    put_f32(os, static_cast<float>(inst.capacity));
    for (const auto& c : inst.coords) {
      put_f32(os, static_cast<float>(c[0]));
      put_f32(os, static_cast<float>(c[1]));
    }
    for (double q : inst.demands) put_f32(os, static_cast<float>(q));
  }
  if (!os) throw ArgumentError("write failed: " + path);
}

std::vector<VrpInstance> load_instance_set(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw LoadError("cannot open instance set: " + path);
  char magic[4];
  is.read(magic, 4);
  if (!is || std::memcmp(magic, "GVRP", 4) != 0)
    throw LoadError("instance set: bad magic in " + path);
  std::uint32_t version = get_u32(is);
  if (version != 1)
    throw LoadError("instance set: unsupported version " +
                    std::to_string(version));
  std::uint32_t count = get_u32(is);
  std::vector<VrpInstance> set;
  set.reserve(count);
  for (std::uint32_t k = 0; k < count; ++k) {
    VrpInstance inst;
    std::uint32_t n = get_u32(is);
    inst.capacity = get_f32(is);
    inst.coords.resize(n + 1);
    inst.demands.resize(n + 1);
    for (auto& c : inst.coords) {
      c[0] = get_f32(is);
      c[1] = get_f32(is);
    }
    for (auto& q : inst.demands) q = get_f32(is);
    inst.name = "set-" + std::to_string(k);
    inst.compute_distances();
    set.push_back(std::move(inst));
  }
  return set;
}

}  // namespace gase
