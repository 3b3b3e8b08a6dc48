#include "gase/cvrplib.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <map>
#include <sstream>

namespace gase {

namespace {

std::string trim(const std::string& s) {
  auto b = s.find_first_not_of(" \t\r\n");
  if (b == std::string::npos) return "";
  auto e = s.find_last_not_of(" \t\r\n");
  return s.substr(b, e - b + 1);
}

}  // namespace

VrpInstance parse_cvrplib(const std::string& text) {
  std::istringstream in(text);
  std::string line;
  int line_no = 0;

  std::string name, edge_weight_type;
  int dimension = -1;
  double capacity = -1.0;
  double optimal_hint = -1.0;
  std::map<int, std::array<double, 2>> coords;
  std::map<int, double> demands;
  int depot_id = -1;
  bool saw_coords = false, saw_demands = false;

  enum class Section { Header, Coords, Demands, Depot } section = Section::Header;

  while (std::getline(in, line)) {
    ++line_no;
    std::string t = trim(line);
    if (t.empty()) continue;
    if (t == "EOF") break;

    if (section == Section::Header || t.find(':') != std::string::npos ||
        t.rfind("NODE_COORD_SECTION", 0) == 0 ||
        t.rfind("DEMAND_SECTION", 0) == 0 || t.rfind("DEPOT_SECTION", 0) == 0) {
      if (t.rfind("NODE_COORD_SECTION", 0) == 0) {
        section = Section::Coords;
        saw_coords = true;
        continue;
      }
      if (t.rfind("DEMAND_SECTION", 0) == 0) {
        section = Section::Demands;
        saw_demands = true;
        continue;
      }
      if (t.rfind("DEPOT_SECTION", 0) == 0) {
        section = Section::Depot;
        continue;
      }
      auto colon = t.find(':');
      if (colon != std::string::npos) {
        std::string key = trim(t.substr(0, colon));
        std::string val = trim(t.substr(colon + 1));
        if (key == "NAME") name = val;
        else if (key == "DIMENSION") dimension = std::stoi(val);
        else if (key == "CAPACITY") capacity = std::stod(val);
        else if (key == "EDGE_WEIGHT_TYPE") edge_weight_type = val;
        else if (key == "COMMENT") {
          auto pos = val.find("Optimal value:");
          if (pos != std::string::npos) {
            std::string rest = val.substr(pos + 14);
            rest.erase(std::remove(rest.begin(), rest.end(), ')'), rest.end());
            try { optimal_hint = std::stod(rest); } catch (...) {}
          }
        }
        continue;
      }
    }

    std::istringstream ls(t);
    if (section == Section::Coords) {
      int id; double x, y;
      if (!(ls >> id >> x >> y))
        throw ParseError("malformed NODE_COORD_SECTION entry", line_no);
      coords[id] = {x, y};
    } else if (section == Section::Demands) {
      int id; double q;
      if (!(ls >> id >> q))
        throw ParseError("malformed DEMAND_SECTION entry", line_no);
      demands[id] = q;
    } else if (section == Section::Depot) {
      int id;
      if (!(ls >> id)) throw ParseError("malformed DEPOT_SECTION entry", line_no);
      if (id == -1) { section = Section::Header; continue; }
      if (depot_id != -1)
        throw ParseError("multiple depots are not supported", line_no);
      depot_id = id;
    } else {
      throw ParseError("unexpected content outside any section: " + t, line_no);
    }
  }

  if (edge_weight_type != "EUC_2D")
    throw ParseError("unsupported EDGE_WEIGHT_TYPE '" + edge_weight_type +
                         "' (only EUC_2D)", line_no);
  if (!saw_coords) throw ParseError("missing NODE_COORD_SECTION", line_no);
  if (!saw_demands) throw ParseError("missing DEMAND_SECTION", line_no);
  if (capacity <= 0) throw ParseError("missing or invalid CAPACITY", line_no);
  if (depot_id == -1) throw ParseError("missing DEPOT_SECTION", line_no);
  if (dimension > 0 && static_cast<int>(coords.size()) != dimension)
    throw ParseError("DIMENSION disagrees with coordinate count", line_no);
  if (coords.size() != demands.size())
    throw ParseError("coordinate and demand counts disagree", line_no);
  if (!coords.count(depot_id))
    throw ParseError("depot id has no coordinates", line_no);

  // Reorder so the depot is index 0, remaining nodes in ascending id order.
  std::vector<int> order{depot_id};
  for (const auto& [id, c] : coords)
    if (id != depot_id) order.push_back(id);

  VrpInstance inst;
  inst.name = name;
  inst.capacity = capacity;
  inst.optimal_hint = optimal_hint;
  inst.raw_coords.resize(order.size());
  inst.demands.resize(order.size());
  for (std::size_t i = 0; i < order.size(); ++i) {
    inst.raw_coords[i] = coords[order[i]];
    inst.demands[i] = demands[order[i]];
  }
  if (inst.demands[0] != 0.0)
    throw ParseError("depot demand must be zero", line_no);

  // Unit-square copy for model input: shift to the bounding-box origin and
  // divide by the larger side, keeping the aspect ratio.
  double min_x = 1e300, min_y = 1e300, max_x = -1e300, max_y = -1e300;
  for (const auto& c : inst.raw_coords) {
    min_x = std::min(min_x, c[0]);
    max_x = std::max(max_x, c[0]);
    min_y = std::min(min_y, c[1]);
    max_y = std::max(max_y, c[1]);
  }
  double span = std::max(max_x - min_x, max_y - min_y);
  if (span <= 0) span = 1.0;
  inst.coords.resize(order.size());
  for (std::size_t i = 0; i < order.size(); ++i) {
    inst.coords[i][0] = (inst.raw_coords[i][0] - min_x) / span;
    inst.coords[i][1] = (inst.raw_coords[i][1] - min_y) / span;
  }
  inst.compute_distances();
  return inst;
}

VrpInstance parse_cvrplib_file(const std::string& path) {
  std::ifstream is(path);
  if (!is) throw LoadError("cannot open: " + path);
  std::ostringstream ss;
  ss << is.rdbuf();
  return parse_cvrplib(ss.str());
}

double cvrplib_length(const VrpInstance& inst, const std::vector<int>& seq) {
  if (inst.raw_coords.empty())
    throw ContractError("cvrplib_length: instance has no raw coordinates");
  if (seq.empty() || seq.front() != 0)
    throw ArgumentError("cvrplib_length: sequence must start at the depot");
  auto edge = [&](int i, int j) {
    double dx = inst.raw_coords[i][0] - inst.raw_coords[j][0];
    double dy = inst.raw_coords[i][1] - inst.raw_coords[j][1];
    // TSPLIB nint: half always rounds up.
    return std::floor(std::sqrt(dx * dx + dy * dy) + 0.5);
  };
  double len = 0.0;
  for (std::size_t i = 0; i + 1 < seq.size(); ++i) len += edge(seq[i], seq[i + 1]);
  len += edge(seq.back(), 0);
  return len;
}

}  // namespace gase
