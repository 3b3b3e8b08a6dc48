#pragma once

#include <string>
#include <vector>

#include "gase/instance.hpp"

namespace gase {

// Parses a CVRPLIB .vrp file (EDGE_WEIGHT_TYPE EUC_2D). The depot is moved
// to index 0; raw coordinates are preserved and a copy scaled into the unit
// square (single scale factor, geometry preserved) feeds the model.
VrpInstance parse_cvrplib(const std::string& text);

VrpInstance parse_cvrplib_file(const std::string& path);

// Tour length under the CVRPLIB convention: Euclidean distance on the raw
// coordinates rounded to the nearest integer per edge. Published optima
// (Table-style values like 784 for A-n32-k5) are only reproducible this way.
double cvrplib_length(const VrpInstance& inst, const std::vector<int>& seq);

}  // namespace gase
