#pragma once

#include <stdexcept>
#include <string>

namespace gase {

// Shape disagreement between tensor operands.
struct DimensionError : std::runtime_error {
  explicit DimensionError(const std::string& msg) : std::runtime_error(msg) {}
};

// API misuse: precondition violated by the caller.
struct ContractError : std::runtime_error {
  explicit ContractError(const std::string& msg) : std::runtime_error(msg) {}
};

// Bad user-supplied argument (CLI flags, out-of-range sizes).
struct ArgumentError : std::runtime_error {
  explicit ArgumentError(const std::string& msg) : std::runtime_error(msg) {}
};

// A state from which no feasible action exists (fully masked softmax slice).
struct InfeasibleStateError : std::runtime_error {
  explicit InfeasibleStateError(const std::string& msg)
      : std::runtime_error(msg) {}
};

// Malformed input file; carries the 1-based line number when known.
struct ParseError : std::runtime_error {
  int line;
  ParseError(const std::string& msg, int line_no)
      : std::runtime_error(msg + " (line " + std::to_string(line_no) + ")"),
        line(line_no) {}
};

// Checkpoint / instance-set deserialization failure.
struct LoadError : std::runtime_error {
  explicit LoadError(const std::string& msg) : std::runtime_error(msg) {}
};

}  // namespace gase
