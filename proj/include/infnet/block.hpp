#pragma once

#include <span>
#include <string>
#include <utility>
#include <vector>

#include "infnet/features.hpp"
#include "infnet/options.hpp"
#include "infnet/tensor.hpp"

namespace infnet {

/// Projections for one cross-attention instance. Heads partition the value
/// width: each head projects queries/keys to d_k and values to d/heads, and
/// head outputs are concatenated. The single-head default uses d_k = d.
struct AttentionParams {
  std::size_t d_k = 0;
  std::vector<Tensor> w_q;  // d x d_k per head
  std::vector<Tensor> w_k;  // d x d_k per head
  std::vector<Tensor> w_v;  // d x (d/heads) per head

  static AttentionParams init(std::size_t d, std::size_t d_k, std::size_t heads,
                              Rng& rng, const std::string& prefix);
  void append_params(std::vector<Tensor>& out) const;
};

/// Gate MLP of one token family: flattened proxies -> hidden d (ReLU) ->
/// d gate logits.
struct GateParams {
  Tensor w1, b1, w2, b2;

  static GateParams init(std::size_t proxy_rows, std::size_t d, Rng& rng,
                         const std::string& prefix);
  void append_params(std::vector<Tensor>& out) const;
};

/// Parameters of one block: eight independent cross-attention instances
/// (none shared, none shared across blocks) plus three gates.
struct BlockParams {
  AttentionParams cat_from_seq;     // queries C~, keys/values S
  AttentionParams cat_from_task;    // queries C~, keys/values T
  AttentionParams seq_from_cat;     // queries S~, keys/values C
  AttentionParams seq_from_task;    // queries S~, keys/values T
  AttentionParams shared_from_cat;  // queries T~, keys/values C
  AttentionParams shared_from_seq;  // queries T~, keys/values S
  AttentionParams task_from_cat;    // queries T,  keys/values C
  AttentionParams task_from_seq;    // queries T,  keys/values S
  GateParams cat_gate;
  GateParams seq_gate;
  GateParams task_gate;

  static BlockParams init(const FeatureSchema& schema, std::size_t d_k,
                          std::size_t heads, Rng& rng, std::size_t block_index);
  void append_params(std::vector<Tensor>& out, Ablation mode) const;
};

/// Softmax weights of one cross-attention call, per head, for inspection.
struct AttentionTrace {
  std::string flow;
  std::size_t query_rows = 0;
  std::size_t key_cols = 0;
  std::vector<std::vector<double>> head_probs;  // row-major q x k per head
};

struct BlockTrace {
  std::vector<AttentionTrace> attention;
};

/// softmax((Q Wq)(K Wk)^T / sqrt(d_k)) (V Wv). Masked key columns receive
/// exactly zero weight; with every key masked the result is a zero matrix
/// and nothing flows (or backpropagates) from the source.
Tensor cross_attention(Tape& tape, const Tensor& queries, const Tensor& keys,
                       const Tensor& values, const AttentionParams& params,
                       const Mask* key_mask, const ForwardOptions& opts = {},
                       AttentionTrace* trace = nullptr);

/// X * sigmoid(MLP(flatten(X~))) with the length-d gate broadcast over rows.
Tensor pgu(Tape& tape, const Tensor& tokens, const Tensor& proxies,
           const GateParams& params, const ForwardOptions& opts = {});

// Heterogeneous flows. Each reads only layer-l state and adds the identity
// term, so the three can be evaluated in any order.
Tensor flow_to_categorical(Tape& tape, const TokenSet& state,
                           const BlockParams& params, Ablation mode,
                           const ForwardOptions& opts = {},
                           BlockTrace* trace = nullptr);
Tensor flow_to_sequence(Tape& tape, const TokenSet& state,
                        const BlockParams& params, Ablation mode,
                        const ForwardOptions& opts = {},
                        BlockTrace* trace = nullptr);
/// Returns {T~ next, T^ intermediate}. The two branches use disjoint
/// parameters.
std::pair<Tensor, Tensor> flow_to_task(Tape& tape, const TokenSet& state,
                                       const BlockParams& params, Ablation mode,
                                       const ForwardOptions& opts = {},
                                       BlockTrace* trace = nullptr);

/// One block: heterogeneous stage (all reads from layer l), then gated
/// within-type refinement. Gates are conditioned on the layer-l proxies.
TokenSet block_forward(Tape& tape, const TokenSet& state, const BlockParams& params,
                       Ablation mode = Ablation::full,
                       const ForwardOptions& opts = {}, BlockTrace* trace = nullptr);

/// N sequential blocks with per-block parameters.
TokenSet stack_forward(Tape& tape, TokenSet state,
                       std::span<const BlockParams> blocks,
                       Ablation mode = Ablation::full,
                       const ForwardOptions& opts = {},
                       std::vector<BlockTrace>* traces = nullptr);

}  // namespace infnet
