#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "infnet/checkpoint.hpp"
#include "infnet/model.hpp"
#include "infnet/train_config.hpp"

namespace infnet {

struct EvalResult {
  std::vector<double> auc;   // per task
  std::vector<double> gauc;  // per task
  double mean_auc = 0.0;     // unweighted mean over tasks
};

struct HistoryRow {
  std::uint64_t step = 0;  // optimizer steps completed at this evaluation
  double loss = 0.0;       // mean training loss over the epoch (incl. L2)
  std::vector<double> auc;
  std::vector<double> gauc;
};

struct TrainResult {
  Checkpoint best;
  Checkpoint final_state;
  std::vector<HistoryRow> history;
};

/// Optimizer moments, one slot per parameter (same order as the parameter
/// list). Adam uses m and v; Adagrad keeps its accumulator in m.
struct OptimizerState {
  OptimizerKind kind = OptimizerKind::adam;
  std::uint64_t steps = 0;
  std::vector<std::vector<double>> m;
  std::vector<std::vector<double>> v;

  static OptimizerState init(OptimizerKind kind, const std::vector<Tensor>& params);
};

/// Bias-corrected Adam update from the parameters' current gradients.
void adam_step(std::vector<Tensor>& params, OptimizerState& state, double lr,
               double beta1 = 0.9, double beta2 = 0.999, double eps = 1e-8);

void adagrad_step(std::vector<Tensor>& params, OptimizerState& state, double lr,
                  double eps = 1e-10);

double global_grad_norm(const std::vector<Tensor>& params);

/// Scales every gradient by max_norm/norm when the global norm exceeds it.
void clip_grad_norm(std::vector<Tensor>& params, double max_norm);

/// Per-task AUC and gAUC on a labeled split (evaluation mode, no dropout).
EvalResult evaluate_model(const Model& model, const std::vector<Example>& examples);

/// Mini-batch training with per-epoch validation, patience-based early
/// stopping on mean validation AUC, and full-state checkpoints. Resuming
/// from a checkpoint replays the identical trajectory of an uninterrupted
/// run with the same seed.
TrainResult train_model(Model& model, const TrainConfig& config,
                        const std::vector<Example>& train_set,
                        const std::vector<Example>& val_set,
                        const Checkpoint* resume = nullptr);

/// Rebuilds a model from a checkpoint (schema, config, parameter values).
Model model_from_checkpoint(const Checkpoint& ckpt);

/// Copies checkpoint parameter values into an existing model by name.
/// Throws ConfigError when names or shapes disagree.
void restore_params(Model& model, const Checkpoint& ckpt);

/// Tab-separated history table: step, loss, then per-task AUC and gAUC.
void write_history_file(const std::string& path,
                        const std::vector<HistoryRow>& history);

std::string format_history(const std::vector<HistoryRow>& history);

}  // namespace infnet
