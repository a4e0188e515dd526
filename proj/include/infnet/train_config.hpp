#pragma once

#include <cstdint>
#include <string>

#include "infnet/error.hpp"
#include "infnet/options.hpp"

namespace infnet {

enum class OptimizerKind { adam, adagrad };

inline std::string to_string(OptimizerKind k) {
  return k == OptimizerKind::adam ? "adam" : "adagrad";
}

inline OptimizerKind optimizer_from_string(const std::string& s) {
  if (s == "adam") return OptimizerKind::adam;
  if (s == "adagrad") return OptimizerKind::adagrad;
  throw ConfigError("unknown optimizer '" + s + "' (expected adam or adagrad)");
}

struct TrainConfig {
  std::size_t batch_size = 4096;
  double learning_rate = 1e-3;
  OptimizerKind optimizer = OptimizerKind::adam;
  double l2_weight = 0.0;
  double dropout = 0.0;
  std::size_t num_blocks = 2;
  std::size_t num_heads = 1;
  std::size_t d_k = 0;  // 0 = embed_dim / num_heads
  std::size_t patience = 5;
  std::size_t max_epochs = 30;
  std::uint64_t seed = 42;
  Ablation ablation = Ablation::full;
  bool grad_clip = true;
  double grad_clip_norm = 10.0;

  /// Enforces the declared value domains. The learning rate additionally
  /// admits 0 so a frozen run can exercise the early-stopping contract.
  void validate() const;
};

}  // namespace infnet
