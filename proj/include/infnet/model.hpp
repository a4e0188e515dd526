#pragma once

#include <span>
#include <vector>

#include "infnet/block.hpp"
#include "infnet/features.hpp"
#include "infnet/heads.hpp"
#include "infnet/options.hpp"
#include "infnet/schema.hpp"

namespace infnet {

struct ModelConfig {
  std::size_t num_blocks = 2;
  std::size_t num_heads = 1;
  std::size_t d_k = 0;  // 0 = embed_dim / num_heads
  Ablation ablation = Ablation::full;
};

/// The full network: tokenizer parameters, N blocks, prediction heads, and
/// the proxy readout used when task tokens are ablated. Copies share
/// parameter storage.
class Model {
 public:
  static Model init(FeatureSchema schema, ModelConfig config, std::uint64_t seed);

  const FeatureSchema& schema() const { return schema_; }
  const ModelConfig& config() const { return config_; }

  /// Same parameters, different ablation mode. full -> full is the
  /// identity.
  Model with_ablation(Ablation mode) const;

  /// Trainable parameters for the current mode, in a stable order. Removed
  /// components do not contribute parameters.
  std::vector<Tensor> parameters() const;

  /// Per-task probabilities (1x1 tensors) for one example.
  std::vector<Tensor> forward_example(Tape& tape, const Example& ex,
                                      const ForwardOptions& opts = {},
                                      std::vector<BlockTrace>* traces = nullptr) const;

  /// Mean weighted multi-task objective over the batch.
  Tensor batch_loss(Tape& tape, std::span<const Example> batch,
                    const ForwardOptions& opts = {}) const;

  /// Evaluation-mode probabilities, one row per example.
  std::vector<std::vector<double>> predict_batch(std::span<const Example> batch) const;

  EmbeddingTables& tables() { return tables_; }
  const EmbeddingTables& tables() const { return tables_; }
  std::vector<BlockParams>& blocks() { return blocks_; }
  const std::vector<BlockParams>& blocks() const { return blocks_; }
  HeadParams& heads() { return heads_; }
  const HeadParams& heads() const { return heads_; }

 private:
  FeatureSchema schema_;
  ModelConfig config_;
  EmbeddingTables tables_;
  std::vector<BlockParams> blocks_;
  HeadParams heads_;
  // Per-task affine readout over the final concatenated proxies; consumed
  // by the heads only when task tokens are removed.
  std::vector<Tensor> readout_w_;  // (m+F)*d x d per task
  std::vector<Tensor> readout_b_;  // 1 x d per task
};

}  // namespace infnet
