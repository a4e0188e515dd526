#pragma once

#include <cstdint>
#include <limits>
#include <string>
#include <vector>

#include "infnet/schema.hpp"
#include "infnet/tensor.hpp"
#include "infnet/train_config.hpp"

namespace infnet {

inline constexpr std::uint32_t kCheckpointVersion = 1;

struct NamedBuffer {
  std::string name;
  Shape shape;
  std::vector<double> data;
};

/// Complete training state: schema, config, parameters, optimizer moments,
/// and loop counters. save/load round-trips bit-identically and a resumed
/// run continues exactly where the saved one stopped.
struct Checkpoint {
  FeatureSchema schema;
  TrainConfig config;
  std::vector<NamedBuffer> params;
  // Adam first/second moments or the Adagrad accumulator (second list empty).
  std::vector<NamedBuffer> opt_m;
  std::vector<NamedBuffer> opt_v;
  std::uint64_t opt_steps = 0;
  std::uint64_t global_step = 0;
  std::uint64_t epoch = 0;
  std::uint64_t evals_done = 0;
  std::uint64_t stale_evals = 0;
  double best_metric = -std::numeric_limits<double>::infinity();
};

/// Binary layout: magic, version, payload, fnv1a-64 trailer. All integers
/// and doubles little-endian.
void save_checkpoint(const std::string& path, const Checkpoint& ckpt);

/// Throws IoError on missing/corrupt/truncated files or version mismatch.
Checkpoint load_checkpoint(const std::string& path);

}  // namespace infnet
