#include "infnet/heads.hpp"

#include <cmath>

namespace infnet {

namespace {

constexpr double kProbClamp = 1e-12;

Tensor maybe_dropout(Tape& tape, const Tensor& x, const ForwardOptions& opts) {
  if (!opts.dropout_active()) return x;
  return tape.dropout(x, opts.dropout, *opts.dropout_rng);
}

}  // namespace

HeadParams HeadParams::init(const FeatureSchema& schema, Rng& rng) {
  const std::size_t d = schema.embed_dim;
  const double bound = 1.0 / std::sqrt(static_cast<double>(d));
  HeadParams p;
  for (std::size_t i = 0; i < schema.num_tasks; ++i) {
    const std::string pre = "head." + std::to_string(i);
    TaskHead h;
    h.w1 = Tensor::uniform_param({d, d}, -bound, bound, rng, pre + ".w1");
    h.b1 = Tensor::parameter({1, d}, std::vector<double>(d, 0.1), pre + ".b1");
    h.w2 = Tensor::uniform_param({d, 1}, -bound, bound, rng, pre + ".w2");
    h.b2 = Tensor::parameter({1, 1}, {0.0}, pre + ".b2");
    p.heads.push_back(std::move(h));
  }
  p.task_weights.assign(schema.num_tasks, 1.0);
  return p;
}

void HeadParams::append_params(std::vector<Tensor>& out) const {
  for (const TaskHead& h : heads) {
    out.push_back(h.w1);
    out.push_back(h.b1);
    out.push_back(h.w2);
    out.push_back(h.b2);
  }
}

std::vector<Tensor> predict(Tape& tape, const Tensor& task_final,
                            const HeadParams& params, const ForwardOptions& opts) {
  if (task_final.rows() != params.heads.size()) {
    throw ShapeError("predict: " + std::to_string(task_final.rows()) +
                     " task rows but " + std::to_string(params.heads.size()) +
                     " heads");
  }
  std::vector<Tensor> out;
  out.reserve(params.heads.size());
  for (std::size_t i = 0; i < params.heads.size(); ++i) {
    const auto& h = params.heads[i];
    Tensor row = tape.slice_rows(task_final, i, i + 1);
    Tensor hidden = tape.relu(tape.add_rowwise(tape.matmul(row, h.w1), h.b1));
    hidden = maybe_dropout(tape, hidden, opts);
    Tensor logit = tape.add_rowwise(tape.matmul(hidden, h.w2), h.b2);
    out.push_back(tape.sigmoid(logit));
  }
  return out;
}

Tensor bce(Tape& tape, const Tensor& prob, int label) {
  if (prob.size() != 1) {
    throw ShapeError("bce: probability must be a single element, got " +
                     shape_str(prob.shape()));
  }
  if (label != 0 && label != 1) {
    throw DataError("bce: label must be 0 or 1, got " + std::to_string(label));
  }
  const double p_raw = prob.values()[0];
  const double p = std::min(std::max(p_raw, kProbClamp), 1.0 - kProbClamp);
  const double y = static_cast<double>(label);
  const double value = -(y * std::log(p) + (1.0 - y) * std::log(1.0 - p));
  const bool clamped = p_raw != p;
  return tape.custom(
      {1}, {value}, {prob},
      [p, y, clamped](const std::vector<double>& g) {
        std::vector<double> gp(1, 0.0);
        if (!clamped) gp[0] = g[0] * (p - y) / (p * (1.0 - p));
        return std::vector<std::vector<double>>{gp};
      });
}

Tensor multi_task_loss(Tape& tape,
                       const std::vector<std::vector<Tensor>>& probs,
                       const std::vector<std::vector<int>>& labels,
                       const std::vector<std::vector<std::uint8_t>>& masks,
                       const std::vector<double>& weights) {
  const std::size_t batch = probs.size();
  if (batch == 0) throw DataError("multi_task_loss: empty batch");
  if (labels.size() != batch || masks.size() != batch) {
    throw ShapeError("multi_task_loss: batch size mismatch across inputs");
  }
  for (double w : weights) {
    if (!(w > 0.0)) throw ConfigError("multi_task_loss: task weights must be positive");
  }

  Tensor total;
  std::size_t terms = 0;
  for (std::size_t e = 0; e < batch; ++e) {
    const std::size_t n_task = weights.size();
    if (probs[e].size() != n_task || labels[e].size() != n_task ||
        masks[e].size() != n_task) {
      throw ShapeError("multi_task_loss: example " + std::to_string(e) +
                       " has wrong task count");
    }
    for (std::size_t i = 0; i < n_task; ++i) {
      if (!masks[e][i]) continue;
      Tensor term = tape.scale(bce(tape, probs[e][i], labels[e][i]), weights[i]);
      total = total.defined() ? tape.add(total, term) : term;
      ++terms;
    }
  }
  if (terms == 0) {
    throw DataError("multi_task_loss: every task is masked in the batch, no signal");
  }
  return tape.scale(total, 1.0 / static_cast<double>(batch));
}

}  // namespace infnet
