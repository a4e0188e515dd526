#include "infnet/model.hpp"

#include <cmath>

namespace infnet {

Model Model::init(FeatureSchema schema, ModelConfig config, std::uint64_t seed) {
  schema.validate();
  if (config.num_blocks < 1) throw ConfigError("model: need at least one block");
  Model m;
  m.schema_ = std::move(schema);
  m.config_ = config;
  m.tables_ = EmbeddingTables::init(m.schema_, seed);

  Rng rng(derive_seed(seed, Stream::init, 2));
  for (std::size_t l = 0; l < config.num_blocks; ++l) {
    m.blocks_.push_back(
        BlockParams::init(m.schema_, config.d_k, config.num_heads, rng, l));
  }
  m.heads_ = HeadParams::init(m.schema_, rng);

  const std::size_t d = m.schema_.embed_dim;
  const std::size_t readout_in =
      (m.schema_.num_cat_proxies + m.schema_.num_behaviors) * d;
  const double bound = 1.0 / std::sqrt(static_cast<double>(d));
  for (std::size_t i = 0; i < m.schema_.num_tasks; ++i) {
    m.readout_w_.push_back(Tensor::uniform_param(
        {readout_in, d}, -bound, bound, rng, "readout." + std::to_string(i) + ".w"));
    m.readout_b_.push_back(Tensor::parameter(
        {1, d}, std::vector<double>(d, 0.0), "readout." + std::to_string(i) + ".b"));
  }
  return m;
}

Model Model::with_ablation(Ablation mode) const {
  Model m = *this;
  m.config_.ablation = mode;
  return m;
}

// The trainable set is the reachable set. Heads consume only the final task
// tokens (final proxies too, when task tokens are ablated), and gates read
// the layer-l proxies, so flows near the top of the stack cannot influence
// the loss: a block-l categorical/sequence proxy update first gates tokens
// in block l+1 and those tokens first reach a task flow in block l+2.
// Parameters outside the reachable set stay at their seeded values and are
// excluded from optimization, checkpoints and gradient audits.
std::vector<Tensor> Model::parameters() const {
  const Ablation mode = config_.ablation;
  const std::size_t n = blocks_.size();
  std::vector<Tensor> out;

  const bool tables_live = mode != Ablation::no_heterogeneous;
  const bool phi_live = mode == Ablation::no_task_tokens ||
                        (mode == Ablation::full && n >= 2);
  const bool task_tokens_live = mode != Ablation::no_task_tokens;
  const bool shared_live =
      mode == Ablation::full || mode == Ablation::no_heterogeneous;

  if (tables_live) {
    for (const Tensor& t : tables_.cat_tables) out.push_back(t);
    for (const Tensor& t : tables_.seq_tables) out.push_back(t);
  }
  if (phi_live) {
    out.push_back(tables_.phi_cat_w1);
    out.push_back(tables_.phi_cat_b1);
    out.push_back(tables_.phi_cat_w2);
    out.push_back(tables_.phi_cat_b2);
    out.push_back(tables_.phi_seq_w);
    out.push_back(tables_.phi_seq_b);
  }
  if (task_tokens_live) out.push_back(tables_.task_tokens);
  if (shared_live) out.push_back(tables_.shared_task_tokens);

  for (std::size_t l = 0; l < n; ++l) {
    const BlockParams& b = blocks_[l];
    switch (mode) {
      case Ablation::full:
        if (l + 3 <= n) {
          b.cat_from_seq.append_params(out);
          b.cat_from_task.append_params(out);
          b.seq_from_cat.append_params(out);
          b.seq_from_task.append_params(out);
        }
        if (l + 2 <= n) {
          b.shared_from_cat.append_params(out);
          b.shared_from_seq.append_params(out);
        }
        b.task_from_cat.append_params(out);
        b.task_from_seq.append_params(out);
        if (l + 2 <= n) {
          b.cat_gate.append_params(out);
          b.seq_gate.append_params(out);
        }
        b.task_gate.append_params(out);
        break;
      case Ablation::no_task_tokens:
        b.cat_from_seq.append_params(out);
        b.seq_from_cat.append_params(out);
        if (l + 2 <= n) {
          b.cat_gate.append_params(out);
          b.seq_gate.append_params(out);
        }
        break;
      case Ablation::no_homogeneous:
        b.task_from_cat.append_params(out);
        b.task_from_seq.append_params(out);
        break;
      case Ablation::no_heterogeneous:
        b.task_gate.append_params(out);
        break;
    }
  }
  if (mode == Ablation::no_task_tokens) {
    for (std::size_t i = 0; i < readout_w_.size(); ++i) {
      out.push_back(readout_w_[i]);
      out.push_back(readout_b_[i]);
    }
  }
  heads_.append_params(out);
  return out;
}

std::vector<Tensor> Model::forward_example(Tape& tape, const Example& ex,
                                           const ForwardOptions& opts,
                                           std::vector<BlockTrace>* traces) const {
  const Ablation mode = config_.ablation;
  TokenSet state = tokenize(tape, ex, tables_, schema_, opts);
  state = stack_forward(tape, std::move(state), blocks_, mode, opts, traces);

  if (mode == Ablation::no_task_tokens) {
    // Heads read a per-task affine image of the final proxies.
    const std::size_t d = schema_.embed_dim;
    Tensor flat = tape.concat_cols(
        {tape.reshape(state.cat_proxy, {1, schema_.num_cat_proxies * d}),
         tape.reshape(state.seq_proxy, {1, schema_.num_behaviors * d})});
    std::vector<Tensor> rows;
    rows.reserve(schema_.num_tasks);
    for (std::size_t i = 0; i < schema_.num_tasks; ++i) {
      rows.push_back(tape.add_rowwise(tape.matmul(flat, readout_w_[i]),
                                      readout_b_[i]));
    }
    Tensor task_final = tape.concat_rows(rows);
    return predict(tape, task_final, heads_, opts);
  }
  return predict(tape, state.task, heads_, opts);
}

Tensor Model::batch_loss(Tape& tape, std::span<const Example> batch,
                         const ForwardOptions& opts) const {
  std::vector<std::vector<Tensor>> probs;
  std::vector<std::vector<int>> labels;
  std::vector<std::vector<std::uint8_t>> masks;
  probs.reserve(batch.size());
  for (const Example& ex : batch) {
    probs.push_back(forward_example(tape, ex, opts));
    labels.push_back(ex.labels);
    masks.push_back(ex.label_mask);
  }
  return multi_task_loss(tape, probs, labels, masks, heads_.task_weights);
}

std::vector<std::vector<double>> Model::predict_batch(
    std::span<const Example> batch) const {
  std::vector<std::vector<double>> out;
  out.reserve(batch.size());
  for (const Example& ex : batch) {
    Tape tape;
    std::vector<Tensor> probs = forward_example(tape, ex, ForwardOptions{});
    std::vector<double> row;
    row.reserve(probs.size());
    for (const Tensor& p : probs) row.push_back(p.values()[0]);
    out.push_back(std::move(row));
  }
  return out;
}

}  // namespace infnet
