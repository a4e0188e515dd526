#include "infnet/features.hpp"

#include <cmath>

namespace infnet {

namespace {

Tensor maybe_dropout(Tape& tape, const Tensor& x, const ForwardOptions& opts) {
  if (!opts.dropout_active()) return x;
  return tape.dropout(x, opts.dropout, *opts.dropout_rng);
}

}  // namespace

std::pair<Tensor, Tensor> init_task_tokens(const FeatureSchema& schema,
                                           std::uint64_t seed) {
  const double bound = 1.0 / std::sqrt(static_cast<double>(schema.embed_dim));
  Rng rng(derive_seed(seed, Stream::init, 0));
  Tensor task = Tensor::uniform_param({schema.num_tasks, schema.embed_dim}, -bound,
                                      bound, rng, "task_tokens");
  Tensor shared = Tensor::uniform_param({schema.num_shared_tokens, schema.embed_dim},
                                        -bound, bound, rng, "shared_task_tokens");
  return {task, shared};
}

EmbeddingTables EmbeddingTables::init(const FeatureSchema& schema,
                                      std::uint64_t seed) {
  schema.validate();
  const std::size_t d = schema.embed_dim;
  const std::size_t m = schema.num_cat_proxies;
  const double bound = 1.0 / std::sqrt(static_cast<double>(d));
  Rng rng(derive_seed(seed, Stream::init, 1));

  EmbeddingTables t;
  for (std::size_t j = 0; j < schema.num_fields; ++j) {
    t.cat_tables.push_back(Tensor::uniform_param(
        {schema.cardinalities[j], d}, -bound, bound, rng,
        "cat_table." + std::to_string(j)));
  }
  for (std::size_t a = 0; a < schema.num_behaviors; ++a) {
    t.seq_tables.push_back(Tensor::uniform_param(
        {schema.seq_vocabs[a], d}, -bound, bound, rng,
        "seq_table." + std::to_string(a)));
  }
  const std::size_t flat_in = schema.num_fields * d;
  const std::size_t flat_out = m * d;
  t.phi_cat_w1 = Tensor::uniform_param({flat_in, flat_out}, -bound, bound, rng,
                                       "phi_cat.w1");
  // ReLU hidden biases start slightly positive so no unit is born dead.
  t.phi_cat_b1 = Tensor::parameter({1, flat_out}, std::vector<double>(flat_out, 0.1),
                                   "phi_cat.b1");
  t.phi_cat_w2 = Tensor::uniform_param({flat_out, flat_out}, -bound, bound, rng,
                                       "phi_cat.w2");
  t.phi_cat_b2 = Tensor::parameter({1, flat_out}, std::vector<double>(flat_out, 0.0),
                                   "phi_cat.b2");
  t.phi_seq_w = Tensor::uniform_param({d, d}, -bound, bound, rng, "phi_seq.w");
  t.phi_seq_b = Tensor::parameter({1, d}, std::vector<double>(d, 0.0), "phi_seq.b");

  auto [task, shared] = init_task_tokens(schema, seed);
  t.task_tokens = task;
  t.shared_task_tokens = shared;
  return t;
}

void EmbeddingTables::append_params(std::vector<Tensor>& out,
                                    bool include_task) const {
  for (const Tensor& t : cat_tables) out.push_back(t);
  for (const Tensor& t : seq_tables) out.push_back(t);
  out.push_back(phi_cat_w1);
  out.push_back(phi_cat_b1);
  out.push_back(phi_cat_w2);
  out.push_back(phi_cat_b2);
  out.push_back(phi_seq_w);
  out.push_back(phi_seq_b);
  if (include_task) {
    out.push_back(task_tokens);
    out.push_back(shared_task_tokens);
  }
}

Tensor embed_categorical(Tape& tape, const Example& ex,
                         const EmbeddingTables& tables,
                         const FeatureSchema& schema) {
  if (ex.categorical.size() != schema.num_fields) {
    throw DataError("embed_categorical: expected " +
                    std::to_string(schema.num_fields) + " values, got " +
                    std::to_string(ex.categorical.size()));
  }
  std::vector<Tensor> rows;
  rows.reserve(schema.num_fields);
  for (std::size_t j = 0; j < schema.num_fields; ++j) {
    const std::size_t v = ex.categorical[j];
    if (v < 1 || v > schema.cardinalities[j]) {
      throw DataError("embed_categorical: field " + std::to_string(j) + " value " +
                      std::to_string(v) + " outside [1, " +
                      std::to_string(schema.cardinalities[j]) + "]");
    }
    rows.push_back(tape.lookup_rows(tables.cat_tables[j], {v - 1}));
  }
  return tape.concat_rows(rows);
}

Tensor build_categorical_proxies(Tape& tape, const Tensor& cat,
                                 const EmbeddingTables& tables,
                                 const FeatureSchema& schema,
                                 const ForwardOptions& opts) {
  const std::size_t d = schema.embed_dim;
  Tensor flat = tape.reshape(cat, {1, schema.num_fields * d});
  Tensor hidden = tape.relu(
      tape.add_rowwise(tape.matmul(flat, tables.phi_cat_w1), tables.phi_cat_b1));
  hidden = maybe_dropout(tape, hidden, opts);
  Tensor out =
      tape.add_rowwise(tape.matmul(hidden, tables.phi_cat_w2), tables.phi_cat_b2);
  return tape.reshape(out, {schema.num_cat_proxies, d});
}

std::pair<Tensor, Mask> embed_sequences(Tape& tape, const Example& ex,
                                        const EmbeddingTables& tables,
                                        const FeatureSchema& schema) {
  if (ex.sequences.size() != schema.num_behaviors) {
    throw DataError("embed_sequences: expected " +
                    std::to_string(schema.num_behaviors) + " sequences, got " +
                    std::to_string(ex.sequences.size()));
  }
  const std::size_t d = schema.embed_dim;
  std::vector<Tensor> blocks;
  Mask mask;
  mask.reserve(schema.total_seq_len());
  for (std::size_t a = 0; a < schema.num_behaviors; ++a) {
    const std::size_t cap = schema.max_lens[a];
    const auto& items = ex.sequences[a];
    for (std::size_t item : items) {
      if (item < 1 || item > schema.seq_vocabs[a]) {
        throw DataError("embed_sequences: behavior " + std::to_string(a) + " item " +
                        std::to_string(item) + " outside [1, " +
                        std::to_string(schema.seq_vocabs[a]) + "]");
      }
    }
    // Truncation keeps the tail: the most recent interactions.
    const std::size_t keep = std::min(items.size(), cap);
    std::vector<std::size_t> idx;
    idx.reserve(keep);
    for (std::size_t i = items.size() - keep; i < items.size(); ++i) {
      idx.push_back(items[i] - 1);
    }
    if (keep > 0) {
      Tensor looked = tape.lookup_rows(tables.seq_tables[a], idx);
      if (keep < cap) {
        blocks.push_back(tape.concat_rows({looked, Tensor::zeros({cap - keep, d})}));
      } else {
        blocks.push_back(looked);
      }
    } else {
      blocks.push_back(Tensor::zeros({cap, d}));
    }
    for (std::size_t i = 0; i < cap; ++i) mask.push_back(i < keep ? 1 : 0);
  }
  return {tape.concat_rows(blocks), mask};
}

Tensor build_sequence_proxies(Tape& tape, const Tensor& seq, const Mask& seq_mask,
                              const EmbeddingTables& tables,
                              const FeatureSchema& schema) {
  if (seq.rows() != schema.total_seq_len()) {
    throw ShapeError("build_sequence_proxies: sequence rows " +
                     std::to_string(seq.rows()) + " do not match schema L " +
                     std::to_string(schema.total_seq_len()));
  }
  if (seq_mask.size() != seq.rows()) {
    throw ShapeError("build_sequence_proxies: mask length mismatch");
  }
  // Projection first, masked pooling second: padded rows must not pick up
  // the bias term.
  Tensor projected =
      tape.add_rowwise(tape.matmul(seq, tables.phi_seq_w), tables.phi_seq_b);
  std::vector<Tensor> pooled;
  pooled.reserve(schema.num_behaviors);
  std::size_t offset = 0;
  for (std::size_t a = 0; a < schema.num_behaviors; ++a) {
    const std::size_t cap = schema.max_lens[a];
    Tensor block = tape.slice_rows(projected, offset, offset + cap);
    Mask block_mask(seq_mask.begin() + offset, seq_mask.begin() + offset + cap);
    pooled.push_back(tape.sum_rows_masked(block, block_mask));
    offset += cap;
  }
  return tape.concat_rows(pooled);
}

TokenSet tokenize(Tape& tape, const Example& ex, const EmbeddingTables& tables,
                  const FeatureSchema& schema, const ForwardOptions& opts) {
  TokenSet s;
  s.cat = embed_categorical(tape, ex, tables, schema);
  s.cat_proxy = build_categorical_proxies(tape, s.cat, tables, schema, opts);
  auto [seq, mask] = embed_sequences(tape, ex, tables, schema);
  s.seq = seq;
  s.seq_mask = std::move(mask);
  s.seq_proxy = build_sequence_proxies(tape, s.seq, s.seq_mask, tables, schema);
  s.task = tables.task_tokens;
  s.task_proxy = tables.shared_task_tokens;
  return s;
}

}  // namespace infnet
