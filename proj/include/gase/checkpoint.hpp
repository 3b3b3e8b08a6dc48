#pragma once

#include <cstdint>
#include <string>

#include "gase/model.hpp"
#include "gase/optim.hpp"

namespace gase {

// Run bookkeeping stored alongside the tensors.
struct CheckpointMeta {
  ModelConfig cfg;
  int epoch = 0;
  std::uint64_t seed = 0;
  int n = 0;            // training problem size
  double capacity = 0;  // training capacity
  int k = 0;            // encoder sample count used in training
  double lr = 0;        // learning rate at save time
};

// Checkpoint file format (all integers little-endian):
//   magic "GASE", u32 version, u32 tensor count,
//   per tensor: u16 name length, UTF-8 name, u8 ndim, u32 dims..., f32 data,
//   trailing CRC32 over every preceding byte.
void save_checkpoint(const std::string& path, const Model<float>& model,
                     const AdamState<float>* opt, const CheckpointMeta& meta);

struct Checkpoint {
  Model<float> model;
  AdamState<float> opt;
  bool has_opt = false;
  CheckpointMeta meta;
};

// Loads and validates a checkpoint. When `expected` is given, its
// (d_x, layers, heads) signature must match the file or the load is
// rejected naming the first offending tensor.
Checkpoint load_checkpoint(const std::string& path,
                           const ModelConfig* expected = nullptr);

}  // namespace gase
