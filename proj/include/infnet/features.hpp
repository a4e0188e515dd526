#pragma once

#include <utility>
#include <vector>

#include "infnet/options.hpp"
#include "infnet/schema.hpp"
#include "infnet/tensor.hpp"

namespace infnet {

/// The six token matrices handed between blocks, all sharing column width d.
/// Padded rows of seq are zero and flagged off in seq_mask, which attention
/// and pooling both respect.
struct TokenSet {
  Tensor cat;          // M x d
  Tensor cat_proxy;    // m x d
  Tensor seq;          // L x d
  Tensor seq_proxy;    // F x d
  Tensor task;         // N_task x d
  Tensor task_proxy;   // N_s x d
  Mask seq_mask;       // length L
};

/// Learnable input-stage parameters: per-field and per-behavior embedding
/// tables, the categorical proxy MLP, the sequence projection, and the task
/// token matrices.
struct EmbeddingTables {
  std::vector<Tensor> cat_tables;  // V_j x d each
  std::vector<Tensor> seq_tables;  // W_a x d each
  Tensor phi_cat_w1;               // (M*d) x (m*d)
  Tensor phi_cat_b1;               // 1 x (m*d)
  Tensor phi_cat_w2;               // (m*d) x (m*d)
  Tensor phi_cat_b2;               // 1 x (m*d)
  Tensor phi_seq_w;                // d x d
  Tensor phi_seq_b;                // 1 x d
  Tensor task_tokens;              // N_task x d
  Tensor shared_task_tokens;       // N_s x d

  static EmbeddingTables init(const FeatureSchema& schema, std::uint64_t seed);

  /// Appends parameters in a stable order. include_task drops the task
  /// token matrices (the no-task-token variant trains without them).
  void append_params(std::vector<Tensor>& out, bool include_task) const;
};

/// Learnable task and shared task token matrices, uniform(-1/sqrt(d),
/// 1/sqrt(d)). Same seed, same bytes.
std::pair<Tensor, Tensor> init_task_tokens(const FeatureSchema& schema,
                                           std::uint64_t seed);

/// Row j is table_j[v_j]. Lookups carry row-sparse gradients.
Tensor embed_categorical(Tape& tape, const Example& ex,
                         const EmbeddingTables& tables,
                         const FeatureSchema& schema);

/// reshape(phi_cat(flatten(C)), m x d); phi_cat is a one-hidden-layer ReLU
/// MLP of width m*d.
Tensor build_categorical_proxies(Tape& tape, const Tensor& cat,
                                 const EmbeddingTables& tables,
                                 const FeatureSchema& schema,
                                 const ForwardOptions& opts = {});

/// Per-behavior embedding with tail-keeping truncation and zero right
/// padding, concatenated in behavior order. The mask flags real rows.
std::pair<Tensor, Mask> embed_sequences(Tape& tape, const Example& ex,
                                        const EmbeddingTables& tables,
                                        const FeatureSchema& schema);

/// Row a = sum over real rows of block a of phi_seq(s); phi_seq is a single
/// affine map. Empty behaviors pool to zero rows.
Tensor build_sequence_proxies(Tape& tape, const Tensor& seq, const Mask& seq_mask,
                              const EmbeddingTables& tables,
                              const FeatureSchema& schema);

/// Full layer-0 token set for one example.
TokenSet tokenize(Tape& tape, const Example& ex, const EmbeddingTables& tables,
                  const FeatureSchema& schema, const ForwardOptions& opts = {});

}  // namespace infnet
