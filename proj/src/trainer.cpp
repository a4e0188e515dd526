#include "infnet/trainer.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <numeric>
#include <unordered_map>

#include "infnet/metrics.hpp"

namespace infnet {

void TrainConfig::validate() const {
  if (batch_size < 1) throw ConfigError("train: batch_size must be >= 1");
  const double lr_domain[] = {0.0, 1e-4, 3e-4, 1e-3};
  if (std::find(std::begin(lr_domain), std::end(lr_domain), learning_rate) ==
      std::end(lr_domain)) {
    throw ConfigError("train: learning_rate must be one of {0, 1e-4, 3e-4, 1e-3}");
  }
  const double l2_domain[] = {0.0, 1e-7, 1e-6, 1e-5};
  if (std::find(std::begin(l2_domain), std::end(l2_domain), l2_weight) ==
      std::end(l2_domain)) {
    throw ConfigError("train: l2_weight must be one of {0, 1e-7, 1e-6, 1e-5}");
  }
  const double dropout_domain[] = {0.0, 0.1, 0.2};
  if (std::find(std::begin(dropout_domain), std::end(dropout_domain), dropout) ==
      std::end(dropout_domain)) {
    throw ConfigError("train: dropout must be one of {0.0, 0.1, 0.2}");
  }
  if (num_blocks < 1) throw ConfigError("train: num_blocks must be >= 1");
  if (num_heads < 1) throw ConfigError("train: num_heads must be >= 1");
  if (patience < 1) throw ConfigError("train: patience must be >= 1");
  if (max_epochs < 1) throw ConfigError("train: max_epochs must be >= 1");
  if (grad_clip && !(grad_clip_norm > 0.0)) {
    throw ConfigError("train: grad_clip_norm must be positive");
  }
}

OptimizerState OptimizerState::init(OptimizerKind kind,
                                    const std::vector<Tensor>& params) {
  OptimizerState st;
  st.kind = kind;
  st.m.reserve(params.size());
  for (const Tensor& p : params) st.m.emplace_back(p.size(), 0.0);
  if (kind == OptimizerKind::adam) {
    st.v.reserve(params.size());
    for (const Tensor& p : params) st.v.emplace_back(p.size(), 0.0);
  }
  return st;
}

void adam_step(std::vector<Tensor>& params, OptimizerState& state, double lr,
               double beta1, double beta2, double eps) {
  if (state.m.size() != params.size() || state.v.size() != params.size()) {
    throw Error("adam_step: moment buffers do not match parameter list");
  }
  state.steps += 1;
  const double t = static_cast<double>(state.steps);
  const double bc1 = 1.0 - std::pow(beta1, t);
  const double bc2 = 1.0 - std::pow(beta2, t);
  for (std::size_t k = 0; k < params.size(); ++k) {
    const std::vector<double>& g = params[k].grad();
    std::vector<double>& theta = params[k].mutable_values();
    std::vector<double>& m = state.m[k];
    std::vector<double>& v = state.v[k];
    for (std::size_t i = 0; i < theta.size(); ++i) {
      m[i] = beta1 * m[i] + (1.0 - beta1) * g[i];
      v[i] = beta2 * v[i] + (1.0 - beta2) * g[i] * g[i];
      const double m_hat = m[i] / bc1;
      const double v_hat = v[i] / bc2;
      theta[i] -= lr * m_hat / (std::sqrt(v_hat) + eps);
    }
  }
}

void adagrad_step(std::vector<Tensor>& params, OptimizerState& state, double lr,
                  double eps) {
  if (state.m.size() != params.size()) {
    throw Error("adagrad_step: accumulator does not match parameter list");
  }
  state.steps += 1;
  for (std::size_t k = 0; k < params.size(); ++k) {
    const std::vector<double>& g = params[k].grad();
    std::vector<double>& theta = params[k].mutable_values();
    std::vector<double>& acc = state.m[k];
    for (std::size_t i = 0; i < theta.size(); ++i) {
      acc[i] += g[i] * g[i];
      theta[i] -= lr * g[i] / (std::sqrt(acc[i]) + eps);
    }
  }
}

double global_grad_norm(const std::vector<Tensor>& params) {
  double sq = 0.0;
  for (const Tensor& p : params) {
    for (double g : p.grad()) sq += g * g;
  }
  return std::sqrt(sq);
}

void clip_grad_norm(std::vector<Tensor>& params, double max_norm) {
  const double norm = global_grad_norm(params);
  if (norm <= max_norm || norm == 0.0) return;
  const double s = max_norm / norm;
  for (Tensor& p : params) {
    for (double& x : p.mutable_grad()) x *= s;
  }
}

EvalResult evaluate_model(const Model& model, const std::vector<Example>& examples) {
  const std::size_t n_task = model.schema().num_tasks;
  const auto probs = model.predict_batch(examples);
  EvalResult res;
  for (std::size_t i = 0; i < n_task; ++i) {
    std::vector<ScoredLabel> scored;
    scored.reserve(examples.size());
    for (std::size_t e = 0; e < examples.size(); ++e) {
      if (!examples[e].label_mask[i]) continue;
      scored.push_back({probs[e][i], examples[e].labels[i], examples[e].user_id});
    }
    res.auc.push_back(auc(scored));
    res.gauc.push_back(gauc(scored));
  }
  res.mean_auc =
      std::accumulate(res.auc.begin(), res.auc.end(), 0.0) / static_cast<double>(n_task);
  return res;
}

namespace {

Checkpoint snapshot(const Model& model, const TrainConfig& cfg,
                    const std::vector<Tensor>& params, const OptimizerState& opt,
                    std::uint64_t global_step, std::uint64_t epoch,
                    std::uint64_t evals_done, std::uint64_t stale_evals,
                    double best_metric) {
  Checkpoint c;
  c.schema = model.schema();
  c.config = cfg;
  for (const Tensor& p : params) {
    c.params.push_back({p.name(), p.shape(), p.values()});
  }
  for (std::size_t k = 0; k < params.size(); ++k) {
    c.opt_m.push_back({params[k].name(), params[k].shape(), opt.m[k]});
    if (opt.kind == OptimizerKind::adam) {
      c.opt_v.push_back({params[k].name(), params[k].shape(), opt.v[k]});
    }
  }
  c.opt_steps = opt.steps;
  c.global_step = global_step;
  c.epoch = epoch;
  c.evals_done = evals_done;
  c.stale_evals = stale_evals;
  c.best_metric = best_metric;
  return c;
}

std::unordered_map<std::string, const NamedBuffer*> index_buffers(
    const std::vector<NamedBuffer>& buffers) {
  std::unordered_map<std::string, const NamedBuffer*> map;
  for (const auto& b : buffers) map[b.name] = &b;
  return map;
}

double params_squared_norm(const std::vector<Tensor>& params) {
  double sq = 0.0;
  for (const Tensor& p : params) {
    for (double x : p.values()) sq += x * x;
  }
  return sq;
}

}  // namespace

void restore_params(Model& model, const Checkpoint& ckpt) {
  if (!model.schema().data_compatible(ckpt.schema) ||
      model.schema().embed_dim != ckpt.schema.embed_dim ||
      model.schema().num_cat_proxies != ckpt.schema.num_cat_proxies ||
      model.schema().num_shared_tokens != ckpt.schema.num_shared_tokens) {
    throw ConfigError("checkpoint: schema does not match the model");
  }
  std::vector<Tensor> params = model.parameters();
  if (params.size() != ckpt.params.size()) {
    throw ConfigError("checkpoint: parameter count mismatch (" +
                      std::to_string(ckpt.params.size()) + " stored vs " +
                      std::to_string(params.size()) + " in model)");
  }
  const auto map = index_buffers(ckpt.params);
  for (Tensor& p : params) {
    const auto it = map.find(p.name());
    if (it == map.end()) {
      throw ConfigError("checkpoint: missing parameter '" + p.name() + "'");
    }
    if (it->second->shape != p.shape()) {
      throw ConfigError("checkpoint: shape mismatch for '" + p.name() + "'");
    }
    p.mutable_values() = it->second->data;
  }
}

Model model_from_checkpoint(const Checkpoint& ckpt) {
  ModelConfig mc;
  mc.num_blocks = ckpt.config.num_blocks;
  mc.num_heads = ckpt.config.num_heads;
  mc.d_k = ckpt.config.d_k;
  mc.ablation = ckpt.config.ablation;
  Model model = Model::init(ckpt.schema, mc, ckpt.config.seed);
  restore_params(model, ckpt);
  return model;
}

TrainResult train_model(Model& model, const TrainConfig& cfg,
                        const std::vector<Example>& train_set,
                        const std::vector<Example>& val_set,
                        const Checkpoint* resume) {
  if (train_set.empty() || val_set.empty()) {
    throw DataError("train: empty train or validation split");
  }
  std::vector<Tensor> params = model.parameters();
  OptimizerState opt = OptimizerState::init(cfg.optimizer, params);

  std::uint64_t global_step = 0, start_epoch = 0, evals_done = 0, stale = 0;
  double best_metric = -std::numeric_limits<double>::infinity();

  if (resume) {
    restore_params(model, *resume);
    if (resume->config.optimizer != cfg.optimizer) {
      throw ConfigError("resume: optimizer kind differs from checkpoint");
    }
    const auto m_map = index_buffers(resume->opt_m);
    const auto v_map = index_buffers(resume->opt_v);
    for (std::size_t k = 0; k < params.size(); ++k) {
      const auto it = m_map.find(params[k].name());
      if (it == m_map.end()) {
        throw ConfigError("resume: missing optimizer state for '" + params[k].name() + "'");
      }
      opt.m[k] = it->second->data;
      if (cfg.optimizer == OptimizerKind::adam) {
        const auto vt = v_map.find(params[k].name());
        if (vt == v_map.end()) {
          throw ConfigError("resume: missing second moment for '" + params[k].name() + "'");
        }
        opt.v[k] = vt->second->data;
      }
    }
    opt.steps = resume->opt_steps;
    global_step = resume->global_step;
    start_epoch = resume->epoch;
    evals_done = resume->evals_done;
    stale = resume->stale_evals;
    best_metric = resume->best_metric;
  }

  TrainResult result;
  bool have_best = false;

  for (std::uint64_t epoch = start_epoch; epoch < cfg.max_epochs; ++epoch) {
    std::vector<std::size_t> order(train_set.size());
    std::iota(order.begin(), order.end(), 0);
    Rng shuffle_rng(derive_seed(cfg.seed, Stream::shuffle, epoch));
    shuffle_rng.shuffle(order);

    double loss_sum = 0.0;
    std::size_t batches = 0;
    std::vector<Example> batch;
    batch.reserve(cfg.batch_size);
    for (std::size_t pos = 0; pos < order.size(); pos += cfg.batch_size) {
      batch.clear();
      const std::size_t end = std::min(order.size(), pos + cfg.batch_size);
      for (std::size_t i = pos; i < end; ++i) batch.push_back(train_set[order[i]]);

      Rng dropout_rng(derive_seed(cfg.seed, Stream::dropout, global_step));
      ForwardOptions opts;
      opts.training = true;
      opts.dropout = cfg.dropout;
      opts.dropout_rng = &dropout_rng;

      for (Tensor& p : params) p.zero_grad();
      Tape tape;
      Tensor loss = model.batch_loss(tape, batch, opts);
      tape.backward(loss);

      double loss_value = loss.values()[0];
      if (cfg.l2_weight > 0.0) {
        loss_value += cfg.l2_weight * params_squared_norm(params);
        for (Tensor& p : params) {
          auto& g = p.mutable_grad();
          const auto& th = p.values();
          for (std::size_t i = 0; i < g.size(); ++i) g[i] += 2.0 * cfg.l2_weight * th[i];
        }
      }
      if (!std::isfinite(loss_value) || !std::isfinite(global_grad_norm(params))) {
        throw DivergenceError("training diverged: non-finite loss or gradient at step " +
                              std::to_string(global_step + 1));
      }
      if (cfg.grad_clip) clip_grad_norm(params, cfg.grad_clip_norm);
      if (cfg.optimizer == OptimizerKind::adam) {
        adam_step(params, opt, cfg.learning_rate);
      } else {
        adagrad_step(params, opt, cfg.learning_rate);
      }
      ++global_step;
      loss_sum += loss_value;
      ++batches;
    }

    const EvalResult ev = evaluate_model(model, val_set);
    HistoryRow row;
    row.step = global_step;
    row.loss = loss_sum / static_cast<double>(batches);
    row.auc = ev.auc;
    row.gauc = ev.gauc;
    result.history.push_back(row);
    ++evals_done;

    if (ev.mean_auc > best_metric) {
      best_metric = ev.mean_auc;
      stale = 0;
      result.best = snapshot(model, cfg, params, opt, global_step, epoch + 1,
                             evals_done, stale, best_metric);
      have_best = true;
    } else {
      ++stale;
      if (stale >= cfg.patience) {
        result.final_state = snapshot(model, cfg, params, opt, global_step,
                                      epoch + 1, evals_done, stale, best_metric);
        if (!have_best) result.best = result.final_state;
        return result;
      }
    }
  }

  result.final_state =
      snapshot(model, cfg, params, opt, global_step, cfg.max_epochs, evals_done,
               stale, best_metric);
  if (!have_best) result.best = result.final_state;
  return result;
}

namespace {

std::string fmt_double(double v) {
  char buf[64];
  const auto res = std::to_chars(buf, buf + sizeof(buf), v);
  return std::string(buf, res.ptr);
}

}  // namespace

std::string format_history(const std::vector<HistoryRow>& history) {
  std::string out = "step\tloss";
  const std::size_t n_task = history.empty() ? 0 : history.front().auc.size();
  for (std::size_t i = 0; i < n_task; ++i) out += "\tauc_" + std::to_string(i);
  for (std::size_t i = 0; i < n_task; ++i) out += "\tgauc_" + std::to_string(i);
  out += '\n';
  for (const HistoryRow& r : history) {
    out += std::to_string(r.step);
    out += '\t';
    out += fmt_double(r.loss);
    for (double a : r.auc) {
      out += '\t';
      out += fmt_double(a);
    }
    for (double g : r.gauc) {
      out += '\t';
      out += fmt_double(g);
    }
    out += '\n';
  }
  return out;
}

void write_history_file(const std::string& path,
                        const std::vector<HistoryRow>& history) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot open '" + path + "' for writing");
  out << format_history(history);
  if (!out) throw IoError("write failed for '" + path + "'");
}

}  // namespace infnet
