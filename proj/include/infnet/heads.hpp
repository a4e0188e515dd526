#pragma once

#include <vector>

#include "infnet/options.hpp"
#include "infnet/schema.hpp"
#include "infnet/tensor.hpp"

namespace infnet {

/// Per-task prediction heads. One hidden layer of width d with ReLU, then a
/// single logit and a sigmoid; same architecture per task, separate
/// parameters. task_weights are the per-task loss weights (default 1).
struct HeadParams {
  struct TaskHead {
    Tensor w1;  // d x d
    Tensor b1;  // 1 x d
    Tensor w2;  // d x 1
    Tensor b2;  // 1 x 1
  };
  std::vector<TaskHead> heads;
  std::vector<double> task_weights;

  static HeadParams init(const FeatureSchema& schema, Rng& rng);
  void append_params(std::vector<Tensor>& out) const;
};

/// y^_i = sigmoid(MLP_i(row i of task_final)); every output is strictly
/// inside (0, 1).
std::vector<Tensor> predict(Tape& tape, const Tensor& task_final,
                            const HeadParams& params,
                            const ForwardOptions& opts = {});

/// -[y ln p + (1-y) ln(1-p)] with p clamped to [1e-12, 1-1e-12] before the
/// logs. Gradient is zero in the clamped region, matching the value.
Tensor bce(Tape& tape, const Tensor& prob, int label);

/// Batch objective: per example, sum of weight_i * bce_i over unmasked
/// tasks; then the mean over examples. Masked tasks contribute neither loss
/// nor gradient. Throws DataError when no (example, task) pair is unmasked.
Tensor multi_task_loss(Tape& tape,
                       const std::vector<std::vector<Tensor>>& probs,
                       const std::vector<std::vector<int>>& labels,
                       const std::vector<std::vector<std::uint8_t>>& masks,
                       const std::vector<double>& weights);

}  // namespace infnet
