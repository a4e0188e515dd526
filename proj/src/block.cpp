#include "infnet/block.hpp"

#include <cmath>

namespace infnet {

namespace {

Tensor maybe_dropout(Tape& tape, const Tensor& x, const ForwardOptions& opts) {
  if (!opts.dropout_active()) return x;
  return tape.dropout(x, opts.dropout, *opts.dropout_rng);
}

bool all_masked(const Mask& mask) {
  for (auto b : mask) {
    if (b) return false;
  }
  return true;
}

}  // namespace

AttentionParams AttentionParams::init(std::size_t d, std::size_t d_k,
                                      std::size_t heads, Rng& rng,
                                      const std::string& prefix) {
  if (heads == 0) throw ConfigError("attention: head count must be >= 1");
  if (d % heads != 0) {
    throw ConfigError("attention: embedding dim " + std::to_string(d) +
                      " not divisible by " + std::to_string(heads) + " heads");
  }
  if (d_k == 0) d_k = d / heads;
  const double bound = 1.0 / std::sqrt(static_cast<double>(d));
  const std::size_t d_v = d / heads;
  AttentionParams p;
  p.d_k = d_k;
  for (std::size_t h = 0; h < heads; ++h) {
    const std::string hp = heads == 1 ? prefix : prefix + ".h" + std::to_string(h);
    p.w_q.push_back(Tensor::uniform_param({d, d_k}, -bound, bound, rng, hp + ".wq"));
    p.w_k.push_back(Tensor::uniform_param({d, d_k}, -bound, bound, rng, hp + ".wk"));
    p.w_v.push_back(Tensor::uniform_param({d, d_v}, -bound, bound, rng, hp + ".wv"));
  }
  return p;
}

void AttentionParams::append_params(std::vector<Tensor>& out) const {
  for (std::size_t h = 0; h < w_q.size(); ++h) {
    out.push_back(w_q[h]);
    out.push_back(w_k[h]);
    out.push_back(w_v[h]);
  }
}

GateParams GateParams::init(std::size_t proxy_rows, std::size_t d, Rng& rng,
                            const std::string& prefix) {
  const double bound = 1.0 / std::sqrt(static_cast<double>(d));
  GateParams p;
  p.w1 = Tensor::uniform_param({proxy_rows * d, d}, -bound, bound, rng, prefix + ".w1");
  p.b1 = Tensor::parameter({1, d}, std::vector<double>(d, 0.1), prefix + ".b1");
  p.w2 = Tensor::uniform_param({d, d}, -bound, bound, rng, prefix + ".w2");
  p.b2 = Tensor::parameter({1, d}, std::vector<double>(d, 0.0), prefix + ".b2");
  return p;
}

void GateParams::append_params(std::vector<Tensor>& out) const {
  out.push_back(w1);
  out.push_back(b1);
  out.push_back(w2);
  out.push_back(b2);
}

BlockParams BlockParams::init(const FeatureSchema& schema, std::size_t d_k,
                              std::size_t heads, Rng& rng,
                              std::size_t block_index) {
  const std::size_t d = schema.embed_dim;
  const std::string pre = "block" + std::to_string(block_index) + ".";
  BlockParams p;
  p.cat_from_seq = AttentionParams::init(d, d_k, heads, rng, pre + "cat_from_seq");
  p.cat_from_task = AttentionParams::init(d, d_k, heads, rng, pre + "cat_from_task");
  p.seq_from_cat = AttentionParams::init(d, d_k, heads, rng, pre + "seq_from_cat");
  p.seq_from_task = AttentionParams::init(d, d_k, heads, rng, pre + "seq_from_task");
  p.shared_from_cat = AttentionParams::init(d, d_k, heads, rng, pre + "shared_from_cat");
  p.shared_from_seq = AttentionParams::init(d, d_k, heads, rng, pre + "shared_from_seq");
  p.task_from_cat = AttentionParams::init(d, d_k, heads, rng, pre + "task_from_cat");
  p.task_from_seq = AttentionParams::init(d, d_k, heads, rng, pre + "task_from_seq");
  p.cat_gate = GateParams::init(schema.num_cat_proxies, d, rng, pre + "cat_gate");
  p.seq_gate = GateParams::init(schema.num_behaviors, d, rng, pre + "seq_gate");
  p.task_gate = GateParams::init(schema.num_shared_tokens, d, rng, pre + "task_gate");
  return p;
}

void BlockParams::append_params(std::vector<Tensor>& out, Ablation mode) const {
  const bool with_task = mode != Ablation::no_task_tokens;
  const bool with_hetero = mode != Ablation::no_heterogeneous;
  const bool with_homo = mode != Ablation::no_homogeneous;
  if (with_hetero) {
    cat_from_seq.append_params(out);
    if (with_task) cat_from_task.append_params(out);
    seq_from_cat.append_params(out);
    if (with_task) {
      seq_from_task.append_params(out);
      shared_from_cat.append_params(out);
      shared_from_seq.append_params(out);
      task_from_cat.append_params(out);
      task_from_seq.append_params(out);
    }
  }
  if (with_homo) {
    cat_gate.append_params(out);
    seq_gate.append_params(out);
    if (with_task) task_gate.append_params(out);
  }
}

Tensor cross_attention(Tape& tape, const Tensor& queries, const Tensor& keys,
                       const Tensor& values, const AttentionParams& params,
                       const Mask* key_mask, const ForwardOptions& opts,
                       AttentionTrace* trace) {
  if (keys.rows() != values.rows()) {
    throw ShapeError("cross_attention: keys " + shape_str(keys.shape()) +
                     " and values " + shape_str(values.shape()) +
                     " disagree on row count");
  }
  if (key_mask && key_mask->size() != keys.rows()) {
    throw ShapeError("cross_attention: mask length does not match key count");
  }
  const std::size_t q = queries.rows();
  const std::size_t d = values.cols();
  if (trace) {
    trace->query_rows = q;
    trace->key_cols = keys.rows();
    trace->head_probs.clear();
  }

  // An empty source contributes nothing: zero output, zero gradient.
  if (key_mask && all_masked(*key_mask)) {
    if (trace) {
      trace->head_probs.assign(params.w_q.size(),
                               std::vector<double>(q * keys.rows(), 0.0));
    }
    return Tensor::zeros({q, d});
  }

  const double inv_sqrt_dk = 1.0 / std::sqrt(static_cast<double>(params.d_k));
  std::vector<Tensor> head_outputs;
  head_outputs.reserve(params.w_q.size());
  for (std::size_t h = 0; h < params.w_q.size(); ++h) {
    Tensor qp = tape.matmul(queries, params.w_q[h]);
    Tensor kp = tape.matmul(keys, params.w_k[h]);
    Tensor logits = tape.scale(tape.matmul_nt(qp, kp), inv_sqrt_dk);
    Tensor probs = key_mask ? tape.softmax_rows(logits, *key_mask)
                            : tape.softmax_rows(logits);
    if (trace) trace->head_probs.push_back(probs.values());
    head_outputs.push_back(tape.matmul(probs, tape.matmul(values, params.w_v[h])));
  }
  Tensor out = head_outputs.size() == 1 ? head_outputs[0]
                                        : tape.concat_cols(head_outputs);
  return maybe_dropout(tape, out, opts);
}

Tensor pgu(Tape& tape, const Tensor& tokens, const Tensor& proxies,
           const GateParams& params, const ForwardOptions& opts) {
  const std::size_t flat = proxies.rows() * proxies.cols();
  if (params.w1.rows() != flat) {
    throw ShapeError("pgu: gate expects flattened proxy length " +
                     std::to_string(params.w1.rows()) + ", got " +
                     std::to_string(flat));
  }
  Tensor flat_proxy = tape.reshape(proxies, {1, flat});
  Tensor hidden = tape.relu(
      tape.add_rowwise(tape.matmul(flat_proxy, params.w1), params.b1));
  hidden = maybe_dropout(tape, hidden, opts);
  Tensor gate_logits = tape.add_rowwise(tape.matmul(hidden, params.w2), params.b2);
  Tensor gate = tape.sigmoid(gate_logits);
  return tape.mul_rowwise(tokens, gate);
}

namespace {

AttentionTrace* next_trace(BlockTrace* trace, const char* flow) {
  if (!trace) return nullptr;
  trace->attention.push_back(AttentionTrace{flow, 0, 0, {}});
  return &trace->attention.back();
}

}  // namespace

Tensor flow_to_categorical(Tape& tape, const TokenSet& state,
                           const BlockParams& params, Ablation mode,
                           const ForwardOptions& opts, BlockTrace* trace) {
  if (mode == Ablation::no_heterogeneous) return state.cat_proxy;
  Tensor acc = tape.add(
      state.cat_proxy,
      cross_attention(tape, state.cat_proxy, state.seq, state.seq,
                      params.cat_from_seq, &state.seq_mask, opts,
                      next_trace(trace, "cat_from_seq")));
  if (mode == Ablation::no_task_tokens) return acc;
  return tape.add(acc, cross_attention(tape, state.cat_proxy, state.task,
                                       state.task, params.cat_from_task, nullptr,
                                       opts, next_trace(trace, "cat_from_task")));
}

Tensor flow_to_sequence(Tape& tape, const TokenSet& state,
                        const BlockParams& params, Ablation mode,
                        const ForwardOptions& opts, BlockTrace* trace) {
  if (mode == Ablation::no_heterogeneous) return state.seq_proxy;
  Tensor acc = tape.add(
      state.seq_proxy,
      cross_attention(tape, state.seq_proxy, state.cat, state.cat,
                      params.seq_from_cat, nullptr, opts,
                      next_trace(trace, "seq_from_cat")));
  if (mode == Ablation::no_task_tokens) return acc;
  return tape.add(acc, cross_attention(tape, state.seq_proxy, state.task,
                                       state.task, params.seq_from_task, nullptr,
                                       opts, next_trace(trace, "seq_from_task")));
}

std::pair<Tensor, Tensor> flow_to_task(Tape& tape, const TokenSet& state,
                                       const BlockParams& params, Ablation mode,
                                       const ForwardOptions& opts,
                                       BlockTrace* trace) {
  if (mode == Ablation::no_task_tokens) {
    throw Error("flow_to_task: task tokens are removed in this mode");
  }
  if (mode == Ablation::no_heterogeneous) return {state.task_proxy, state.task};
  Tensor shared_next = tape.add(
      state.task_proxy,
      tape.add(cross_attention(tape, state.task_proxy, state.cat, state.cat,
                               params.shared_from_cat, nullptr, opts,
                               next_trace(trace, "shared_from_cat")),
               cross_attention(tape, state.task_proxy, state.seq, state.seq,
                               params.shared_from_seq, &state.seq_mask, opts,
                               next_trace(trace, "shared_from_seq"))));
  Tensor task_hat = tape.add(
      state.task,
      tape.add(cross_attention(tape, state.task, state.cat, state.cat,
                               params.task_from_cat, nullptr, opts,
                               next_trace(trace, "task_from_cat")),
               cross_attention(tape, state.task, state.seq, state.seq,
                               params.task_from_seq, &state.seq_mask, opts,
                               next_trace(trace, "task_from_seq"))));
  return {shared_next, task_hat};
}

TokenSet block_forward(Tape& tape, const TokenSet& state, const BlockParams& params,
                       Ablation mode, const ForwardOptions& opts,
                       BlockTrace* trace) {
  const bool with_task = mode != Ablation::no_task_tokens;

  // Heterogeneous stage: every flow reads layer-l tensors only.
  Tensor cat_proxy_next = flow_to_categorical(tape, state, params, mode, opts, trace);
  Tensor seq_proxy_next = flow_to_sequence(tape, state, params, mode, opts, trace);
  Tensor shared_next;
  Tensor task_hat;
  if (with_task) {
    auto [sn, th] = flow_to_task(tape, state, params, mode, opts, trace);
    shared_next = sn;
    task_hat = th;
  }

  // Homogeneous stage: gates are conditioned on the layer-l proxies.
  TokenSet next;
  if (mode == Ablation::no_homogeneous) {
    next.cat = state.cat;
    next.seq = state.seq;
    if (with_task) next.task = task_hat;
  } else {
    next.cat = pgu(tape, state.cat, state.cat_proxy, params.cat_gate, opts);
    next.seq = pgu(tape, state.seq, state.seq_proxy, params.seq_gate, opts);
    if (with_task) {
      next.task = pgu(tape, task_hat, state.task_proxy, params.task_gate, opts);
    }
  }
  next.cat_proxy = cat_proxy_next;
  next.seq_proxy = seq_proxy_next;
  if (with_task) {
    next.task_proxy = shared_next;
  } else {
    next.task = state.task;
    next.task_proxy = state.task_proxy;
  }
  next.seq_mask = state.seq_mask;
  return next;
}

TokenSet stack_forward(Tape& tape, TokenSet state,
                       std::span<const BlockParams> blocks, Ablation mode,
                       const ForwardOptions& opts,
                       std::vector<BlockTrace>* traces) {
  if (blocks.empty()) throw ConfigError("stack_forward: need at least one block");
  for (const BlockParams& b : blocks) {
    BlockTrace* t = nullptr;
    if (traces) {
      traces->push_back(BlockTrace{});
      t = &traces->back();
    }
    state = block_forward(tape, state, b, mode, opts, t);
  }
  return state;
}

}  // namespace infnet
