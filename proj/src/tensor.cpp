#include "infnet/tensor.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <sstream>
#include <unordered_set>
#include <utility>

namespace infnet {

std::size_t numel(const Shape& s) {
  std::size_t n = 1;
  for (std::size_t e : s) n *= e;
  return n;
}

std::string shape_str(const Shape& s) {
  std::ostringstream os;
  os << '[';
  for (std::size_t i = 0; i < s.size(); ++i) {
    if (i) os << 'x';
    os << s[i];
  }
  os << ']';
  return os.str();
}

namespace {

using detail::Node;

std::shared_ptr<Node> make_leaf(Shape shape, std::vector<double> values,
                                bool needs_grad, std::string name) {
  if (shape.empty()) throw ShapeError("tensor shape must have at least one extent");
  for (std::size_t e : shape) {
    if (e == 0) throw ShapeError("tensor extents must be positive, got " + shape_str(shape));
  }
  if (numel(shape) != values.size()) {
    throw ShapeError("value count " + std::to_string(values.size()) +
                     " does not match shape " + shape_str(shape));
  }
  auto n = std::make_shared<Node>();
  n->shape = std::move(shape);
  n->value = std::move(values);
  n->needs_grad = needs_grad;
  n->is_param = needs_grad;
  n->name = std::move(name);
  if (needs_grad) n->grad.assign(n->value.size(), 0.0);
  return n;
}

void require_rank2(const Tensor& t, const char* op) {
  if (t.rank() != 2) {
    throw ShapeError(std::string(op) + ": expected a rank-2 tensor, got " +
                     shape_str(t.shape()));
  }
}

void require_same_shape(const Tensor& a, const Tensor& b, const char* op) {
  if (a.shape() != b.shape()) {
    throw ShapeError(std::string(op) + ": shape mismatch " + shape_str(a.shape()) +
                     " vs " + shape_str(b.shape()));
  }
}

inline std::vector<double>* grad_buf(const std::shared_ptr<Node>& n) {
  return n->needs_grad ? &n->grad : nullptr;
}

}  // namespace

Tensor Tensor::parameter(Shape shape, std::vector<double> values, std::string name) {
  return Tensor(make_leaf(std::move(shape), std::move(values), true, std::move(name)));
}

Tensor Tensor::constant(Shape shape, std::vector<double> values) {
  return Tensor(make_leaf(std::move(shape), std::move(values), false, {}));
}

Tensor Tensor::zeros(Shape shape) {
  std::vector<double> v(numel(shape), 0.0);
  return Tensor(make_leaf(std::move(shape), std::move(v), false, {}));
}

Tensor Tensor::uniform_param(Shape shape, double lo, double hi, Rng& rng,
                             std::string name) {
  std::vector<double> v(numel(shape));
  for (double& x : v) x = rng.uniform(lo, hi);
  return Tensor(make_leaf(std::move(shape), std::move(v), true, std::move(name)));
}

std::size_t Tensor::rows() const {
  require_rank2(*this, "rows");
  return node_->shape[0];
}

std::size_t Tensor::cols() const {
  require_rank2(*this, "cols");
  return node_->shape[1];
}

std::vector<double>& Tensor::mutable_values() {
  if (node_->owner != nullptr) {
    throw Error("mutable_values: tape outputs are immutable");
  }
  return node_->value;
}

const std::vector<double>& Tensor::grad() const {
  if (!node_->needs_grad) throw Error("grad: tensor does not carry a gradient");
  return node_->grad;
}

std::vector<double>& Tensor::mutable_grad() {
  if (node_->owner != nullptr) throw Error("mutable_grad: tape outputs are immutable");
  if (!node_->needs_grad) throw Error("mutable_grad: tensor does not carry a gradient");
  return node_->grad;
}

void Tensor::zero_grad() {
  if (node_->needs_grad) std::fill(node_->grad.begin(), node_->grad.end(), 0.0);
}

Tensor Tape::record(Shape shape, std::vector<double> value,
                    std::vector<Tensor> inputs,
                    std::function<void(Node&)> bw) {
  for (std::size_t e : shape) {
    if (e == 0) throw ShapeError("op produced an empty extent: " + shape_str(shape));
  }
  auto n = std::make_shared<Node>();
  n->shape = std::move(shape);
  n->value = std::move(value);
  n->owner = this;
  n->inputs.reserve(inputs.size());
  for (const Tensor& t : inputs) {
    if (!t.defined()) throw Error("op input is an undefined tensor");
    if (t.node_->owner != nullptr && t.node_->owner != this) {
      throw Error("op input belongs to a different tape");
    }
    n->needs_grad = n->needs_grad || t.node_->needs_grad;
    n->inputs.push_back(t.node_);
  }
  if (n->needs_grad) {
    n->grad.assign(n->value.size(), 0.0);
    n->backward = std::move(bw);
  }
  nodes_.push_back(n);
  return Tensor(std::move(n));
}

// ---------------------------------------------------------------------------
// elementwise
// ---------------------------------------------------------------------------

Tensor Tape::add(const Tensor& a, const Tensor& b) {
  require_same_shape(a, b, "add");
  std::vector<double> out(a.size());
  const auto& av = a.values();
  const auto& bv = b.values();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = av[i] + bv[i];
  return record(a.shape(), std::move(out), {a, b}, [](Node& self) {
    for (int k = 0; k < 2; ++k) {
      if (auto* g = grad_buf(self.inputs[k])) {
        for (std::size_t i = 0; i < self.grad.size(); ++i) (*g)[i] += self.grad[i];
      }
    }
  });
}

Tensor Tape::mul(const Tensor& a, const Tensor& b) {
  require_same_shape(a, b, "mul");
  std::vector<double> out(a.size());
  const auto& av = a.values();
  const auto& bv = b.values();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = av[i] * bv[i];
  return record(a.shape(), std::move(out), {a, b}, [](Node& self) {
    const auto& av = self.inputs[0]->value;
    const auto& bv = self.inputs[1]->value;
    if (auto* g = grad_buf(self.inputs[0])) {
      for (std::size_t i = 0; i < self.grad.size(); ++i) (*g)[i] += self.grad[i] * bv[i];
    }
    if (auto* g = grad_buf(self.inputs[1])) {
      for (std::size_t i = 0; i < self.grad.size(); ++i) (*g)[i] += self.grad[i] * av[i];
    }
  });
}

Tensor Tape::scale(const Tensor& x, double c) {
  std::vector<double> out(x.size());
  const auto& xv = x.values();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = xv[i] * c;
  return record(x.shape(), std::move(out), {x}, [c](Node& self) {
    if (auto* g = grad_buf(self.inputs[0])) {
      for (std::size_t i = 0; i < self.grad.size(); ++i) (*g)[i] += self.grad[i] * c;
    }
  });
}

Tensor Tape::relu(const Tensor& x) {
  std::vector<double> out(x.size());
  const auto& xv = x.values();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = xv[i] > 0.0 ? xv[i] : 0.0;
  return record(x.shape(), std::move(out), {x}, [](Node& self) {
    if (auto* g = grad_buf(self.inputs[0])) {
      const auto& xv = self.inputs[0]->value;
      for (std::size_t i = 0; i < self.grad.size(); ++i) {
        if (xv[i] > 0.0) (*g)[i] += self.grad[i];
      }
    }
  });
}

namespace {

// Stable logistic, clamped away from {0, 1} so downstream logs and gate
// invariants hold even for extreme inputs.
double stable_sigmoid(double x) {
  double y;
  if (x >= 0.0) {
    y = 1.0 / (1.0 + std::exp(-x));
  } else {
    double e = std::exp(x);
    y = e / (1.0 + e);
  }
  constexpr double lo = 1e-300;
  constexpr double hi = 1.0 - 1e-16;
  if (y < lo) y = lo;
  if (y > hi) y = hi;
  return y;
}

}  // namespace

Tensor Tape::sigmoid(const Tensor& x) {
  std::vector<double> out(x.size());
  const auto& xv = x.values();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = stable_sigmoid(xv[i]);
  return record(x.shape(), std::move(out), {x}, [](Node& self) {
    if (auto* g = grad_buf(self.inputs[0])) {
      const auto& y = self.value;
      for (std::size_t i = 0; i < self.grad.size(); ++i) {
        (*g)[i] += self.grad[i] * y[i] * (1.0 - y[i]);
      }
    }
  });
}

// ---------------------------------------------------------------------------
// matrix
// ---------------------------------------------------------------------------

Tensor Tape::matmul(const Tensor& a, const Tensor& b) {
  require_rank2(a, "matmul");
  require_rank2(b, "matmul");
  const std::size_t m = a.rows(), k = a.cols(), n = b.cols();
  if (b.rows() != k) {
    throw ShapeError("matmul: inner extents differ, " + shape_str(a.shape()) +
                     " vs " + shape_str(b.shape()));
  }
  std::vector<double> out(m * n, 0.0);
  const auto& av = a.values();
  const auto& bv = b.values();
  for (std::size_t i = 0; i < m; ++i) {
    for (std::size_t kk = 0; kk < k; ++kk) {
      const double aik = av[i * k + kk];
      const double* brow = &bv[kk * n];
      double* crow = &out[i * n];
      for (std::size_t j = 0; j < n; ++j) crow[j] += aik * brow[j];
    }
  }
  return record({m, n}, std::move(out), {a, b}, [m, k, n](Node& self) {
    const auto& av = self.inputs[0]->value;
    const auto& bv = self.inputs[1]->value;
    if (auto* ga = grad_buf(self.inputs[0])) {
      // dA = dC * B^T
      for (std::size_t i = 0; i < m; ++i) {
        for (std::size_t kk = 0; kk < k; ++kk) {
          const double* grow = &self.grad[i * n];
          const double* brow = &bv[kk * n];
          double acc = 0.0;
          for (std::size_t j = 0; j < n; ++j) acc += grow[j] * brow[j];
          (*ga)[i * k + kk] += acc;
        }
      }
    }
    if (auto* gb = grad_buf(self.inputs[1])) {
      // dB = A^T * dC
      for (std::size_t i = 0; i < m; ++i) {
        for (std::size_t kk = 0; kk < k; ++kk) {
          const double aik = av[i * k + kk];
          const double* grow = &self.grad[i * n];
          double* brow = &(*gb)[kk * n];
          for (std::size_t j = 0; j < n; ++j) brow[j] += aik * grow[j];
        }
      }
    }
  });
}

Tensor Tape::matmul_nt(const Tensor& a, const Tensor& b) {
  require_rank2(a, "matmul_nt");
  require_rank2(b, "matmul_nt");
  const std::size_t m = a.rows(), k = a.cols(), n = b.rows();
  if (b.cols() != k) {
    throw ShapeError("matmul_nt: inner extents differ, " + shape_str(a.shape()) +
                     " vs " + shape_str(b.shape()));
  }
  std::vector<double> out(m * n);
  const auto& av = a.values();
  const auto& bv = b.values();
  for (std::size_t i = 0; i < m; ++i) {
    for (std::size_t j = 0; j < n; ++j) {
      const double* arow = &av[i * k];
      const double* brow = &bv[j * k];
      double acc = 0.0;
      for (std::size_t kk = 0; kk < k; ++kk) acc += arow[kk] * brow[kk];
      out[i * n + j] = acc;
    }
  }
  return record({m, n}, std::move(out), {a, b}, [m, k, n](Node& self) {
    const auto& av = self.inputs[0]->value;
    const auto& bv = self.inputs[1]->value;
    if (auto* ga = grad_buf(self.inputs[0])) {
      // dA = dC * B
      for (std::size_t i = 0; i < m; ++i) {
        for (std::size_t j = 0; j < n; ++j) {
          const double gij = self.grad[i * n + j];
          const double* brow = &bv[j * k];
          double* arow = &(*ga)[i * k];
          for (std::size_t kk = 0; kk < k; ++kk) arow[kk] += gij * brow[kk];
        }
      }
    }
    if (auto* gb = grad_buf(self.inputs[1])) {
      // dB = dC^T * A
      for (std::size_t i = 0; i < m; ++i) {
        for (std::size_t j = 0; j < n; ++j) {
          const double gij = self.grad[i * n + j];
          const double* arow = &av[i * k];
          double* brow = &(*gb)[j * k];
          for (std::size_t kk = 0; kk < k; ++kk) brow[kk] += gij * arow[kk];
        }
      }
    }
  });
}

Tensor Tape::softmax_rows(const Tensor& x) { return softmax_rows(x, Mask{}); }

Tensor Tape::softmax_rows(const Tensor& x, const Mask& key_mask) {
  require_rank2(x, "softmax_rows");
  const std::size_t m = x.rows(), n = x.cols();
  const bool masked = !key_mask.empty();
  if (masked) {
    if (key_mask.size() != n) {
      throw ShapeError("softmax_rows: mask length " + std::to_string(key_mask.size()) +
                       " does not match column count " + std::to_string(n));
    }
    bool any = false;
    for (auto b : key_mask) any = any || (b != 0);
    if (!any) throw Error("softmax_rows: every key is masked");
  }
  std::vector<double> out(m * n, 0.0);
  const auto& xv = x.values();
  for (std::size_t i = 0; i < m; ++i) {
    const double* row = &xv[i * n];
    double mx = -std::numeric_limits<double>::infinity();
    for (std::size_t j = 0; j < n; ++j) {
      if (!masked || key_mask[j]) mx = std::max(mx, row[j]);
    }
    double sum = 0.0;
    double* orow = &out[i * n];
    for (std::size_t j = 0; j < n; ++j) {
      if (!masked || key_mask[j]) {
        orow[j] = std::exp(row[j] - mx);
        sum += orow[j];
      }
    }
    for (std::size_t j = 0; j < n; ++j) orow[j] /= sum;
  }
  return record({m, n}, std::move(out), {x}, [m, n](Node& self) {
    if (auto* g = grad_buf(self.inputs[0])) {
      // dx_j = p_j * (g_j - sum_k p_k g_k); masked entries have p == 0.
      for (std::size_t i = 0; i < m; ++i) {
        const double* p = &self.value[i * n];
        const double* go = &self.grad[i * n];
        double dot = 0.0;
        for (std::size_t j = 0; j < n; ++j) dot += p[j] * go[j];
        double* gi = &(*g)[i * n];
        for (std::size_t j = 0; j < n; ++j) gi[j] += p[j] * (go[j] - dot);
      }
    }
  });
}

Tensor Tape::add_rowwise(const Tensor& x, const Tensor& row) {
  require_rank2(x, "add_rowwise");
  require_rank2(row, "add_rowwise");
  const std::size_t m = x.rows(), n = x.cols();
  if (row.rows() != 1 || row.cols() != n) {
    throw ShapeError("add_rowwise: row must be 1x" + std::to_string(n) + ", got " +
                     shape_str(row.shape()));
  }
  std::vector<double> out(m * n);
  const auto& xv = x.values();
  const auto& rv = row.values();
  for (std::size_t i = 0; i < m; ++i)
    for (std::size_t j = 0; j < n; ++j) out[i * n + j] = xv[i * n + j] + rv[j];
  return record({m, n}, std::move(out), {x, row}, [m, n](Node& self) {
    if (auto* gx = grad_buf(self.inputs[0])) {
      for (std::size_t i = 0; i < m * n; ++i) (*gx)[i] += self.grad[i];
    }
    if (auto* gr = grad_buf(self.inputs[1])) {
      for (std::size_t i = 0; i < m; ++i)
        for (std::size_t j = 0; j < n; ++j) (*gr)[j] += self.grad[i * n + j];
    }
  });
}

Tensor Tape::mul_rowwise(const Tensor& x, const Tensor& row) {
  require_rank2(x, "mul_rowwise");
  require_rank2(row, "mul_rowwise");
  const std::size_t m = x.rows(), n = x.cols();
  if (row.rows() != 1 || row.cols() != n) {
    throw ShapeError("mul_rowwise: row must be 1x" + std::to_string(n) + ", got " +
                     shape_str(row.shape()));
  }
  std::vector<double> out(m * n);
  const auto& xv = x.values();
  const auto& rv = row.values();
  for (std::size_t i = 0; i < m; ++i)
    for (std::size_t j = 0; j < n; ++j) out[i * n + j] = xv[i * n + j] * rv[j];
  return record({m, n}, std::move(out), {x, row}, [m, n](Node& self) {
    const auto& xv = self.inputs[0]->value;
    const auto& rv = self.inputs[1]->value;
    if (auto* gx = grad_buf(self.inputs[0])) {
      for (std::size_t i = 0; i < m; ++i)
        for (std::size_t j = 0; j < n; ++j) (*gx)[i * n + j] += self.grad[i * n + j] * rv[j];
    }
    if (auto* gr = grad_buf(self.inputs[1])) {
      for (std::size_t i = 0; i < m; ++i)
        for (std::size_t j = 0; j < n; ++j) (*gr)[j] += self.grad[i * n + j] * xv[i * n + j];
    }
  });
}

// ---------------------------------------------------------------------------
// structure
// ---------------------------------------------------------------------------

Tensor Tape::reshape(const Tensor& x, Shape shape) {
  if (numel(shape) != x.size()) {
    throw ShapeError("reshape: element count mismatch, " + shape_str(x.shape()) +
                     " -> " + shape_str(shape));
  }
  std::vector<double> out = x.values();
  return record(std::move(shape), std::move(out), {x}, [](Node& self) {
    if (auto* g = grad_buf(self.inputs[0])) {
      for (std::size_t i = 0; i < self.grad.size(); ++i) (*g)[i] += self.grad[i];
    }
  });
}

Tensor Tape::flatten(const Tensor& x) { return reshape(x, {x.size()}); }

Tensor Tape::concat_rows(const std::vector<Tensor>& parts) {
  if (parts.empty()) throw ShapeError("concat_rows: no parts");
  const std::size_t n = parts[0].cols();
  std::size_t m = 0;
  for (const Tensor& p : parts) {
    require_rank2(p, "concat_rows");
    if (p.cols() != n) {
      throw ShapeError("concat_rows: column mismatch " + shape_str(p.shape()) +
                       " vs expected width " + std::to_string(n));
    }
    m += p.rows();
  }
  std::vector<double> out;
  out.reserve(m * n);
  for (const Tensor& p : parts)
    out.insert(out.end(), p.values().begin(), p.values().end());
  std::vector<Tensor> ins(parts.begin(), parts.end());
  return record({m, n}, std::move(out), std::move(ins), [](Node& self) {
    std::size_t off = 0;
    for (auto& in : self.inputs) {
      const std::size_t cnt = in->value.size();
      if (auto* g = grad_buf(in)) {
        for (std::size_t i = 0; i < cnt; ++i) (*g)[i] += self.grad[off + i];
      }
      off += cnt;
    }
  });
}

Tensor Tape::concat_cols(const std::vector<Tensor>& parts) {
  if (parts.empty()) throw ShapeError("concat_cols: no parts");
  const std::size_t m = parts[0].rows();
  std::size_t n = 0;
  for (const Tensor& p : parts) {
    require_rank2(p, "concat_cols");
    if (p.rows() != m) {
      throw ShapeError("concat_cols: row mismatch " + shape_str(p.shape()) +
                       " vs expected height " + std::to_string(m));
    }
    n += p.cols();
  }
  std::vector<double> out(m * n);
  std::size_t off = 0;
  for (const Tensor& p : parts) {
    const std::size_t pc = p.cols();
    for (std::size_t i = 0; i < m; ++i)
      for (std::size_t j = 0; j < pc; ++j) out[i * n + off + j] = p(i, j);
    off += pc;
  }
  std::vector<Tensor> ins(parts.begin(), parts.end());
  return record({m, n}, std::move(out), std::move(ins), [m, n](Node& self) {
    std::size_t off = 0;
    for (auto& in : self.inputs) {
      const std::size_t pc = in->shape[1];
      if (auto* g = grad_buf(in)) {
        for (std::size_t i = 0; i < m; ++i)
          for (std::size_t j = 0; j < pc; ++j)
            (*g)[i * pc + j] += self.grad[i * n + off + j];
      }
      off += pc;
    }
  });
}

Tensor Tape::slice_rows(const Tensor& x, std::size_t begin, std::size_t end) {
  require_rank2(x, "slice_rows");
  const std::size_t m = x.rows(), n = x.cols();
  if (begin >= end || end > m) {
    throw ShapeError("slice_rows: invalid range [" + std::to_string(begin) + ", " +
                     std::to_string(end) + ") for " + shape_str(x.shape()));
  }
  const std::size_t cnt = end - begin;
  std::vector<double> out(x.values().begin() + begin * n,
                          x.values().begin() + end * n);
  return record({cnt, n}, std::move(out), {x}, [begin, n](Node& self) {
    if (auto* g = grad_buf(self.inputs[0])) {
      for (std::size_t i = 0; i < self.grad.size(); ++i)
        (*g)[begin * n + i] += self.grad[i];
    }
  });
}

// ---------------------------------------------------------------------------
// reductions
// ---------------------------------------------------------------------------

Tensor Tape::sum_rows(const Tensor& x) {
  require_rank2(x, "sum_rows");
  const std::size_t m = x.rows(), n = x.cols();
  std::vector<double> out(n, 0.0);
  const auto& xv = x.values();
  for (std::size_t i = 0; i < m; ++i)
    for (std::size_t j = 0; j < n; ++j) out[j] += xv[i * n + j];
  return record({1, n}, std::move(out), {x}, [m, n](Node& self) {
    if (auto* g = grad_buf(self.inputs[0])) {
      for (std::size_t i = 0; i < m; ++i)
        for (std::size_t j = 0; j < n; ++j) (*g)[i * n + j] += self.grad[j];
    }
  });
}

Tensor Tape::sum_rows_masked(const Tensor& x, const Mask& row_mask) {
  require_rank2(x, "sum_rows_masked");
  const std::size_t m = x.rows(), n = x.cols();
  if (row_mask.size() != m) {
    throw ShapeError("sum_rows_masked: mask length " + std::to_string(row_mask.size()) +
                     " does not match row count " + std::to_string(m));
  }
  std::vector<double> out(n, 0.0);
  const auto& xv = x.values();
  for (std::size_t i = 0; i < m; ++i) {
    if (!row_mask[i]) continue;
    for (std::size_t j = 0; j < n; ++j) out[j] += xv[i * n + j];
  }
  Mask mask = row_mask;
  return record({1, n}, std::move(out), {x}, [mask, m, n](Node& self) {
    if (auto* g = grad_buf(self.inputs[0])) {
      for (std::size_t i = 0; i < m; ++i) {
        if (!mask[i]) continue;
        for (std::size_t j = 0; j < n; ++j) (*g)[i * n + j] += self.grad[j];
      }
    }
  });
}

Tensor Tape::mean(const Tensor& x) {
  const std::size_t cnt = x.size();
  double acc = 0.0;
  for (double v : x.values()) acc += v;
  return record({1}, {acc / static_cast<double>(cnt)}, {x}, [cnt](Node& self) {
    if (auto* g = grad_buf(self.inputs[0])) {
      const double gv = self.grad[0] / static_cast<double>(cnt);
      for (std::size_t i = 0; i < cnt; ++i) (*g)[i] += gv;
    }
  });
}

// ---------------------------------------------------------------------------
// gather / dropout / custom
// ---------------------------------------------------------------------------

Tensor Tape::lookup_rows(const Tensor& table, const std::vector<std::size_t>& rows) {
  require_rank2(table, "lookup_rows");
  if (rows.empty()) throw ShapeError("lookup_rows: no rows requested");
  const std::size_t v = table.rows(), d = table.cols();
  for (std::size_t r : rows) {
    if (r >= v) {
      throw ShapeError("lookup_rows: index " + std::to_string(r) +
                       " out of range for table " + shape_str(table.shape()));
    }
  }
  std::vector<double> out(rows.size() * d);
  const auto& tv = table.values();
  for (std::size_t i = 0; i < rows.size(); ++i)
    std::copy_n(&tv[rows[i] * d], d, &out[i * d]);
  std::vector<std::size_t> idx = rows;
  return record({rows.size(), d}, std::move(out), {table}, [idx, d](Node& self) {
    if (auto* g = grad_buf(self.inputs[0])) {
      for (std::size_t i = 0; i < idx.size(); ++i)
        for (std::size_t j = 0; j < d; ++j)
          (*g)[idx[i] * d + j] += self.grad[i * d + j];
    }
  });
}

Tensor Tape::dropout(const Tensor& x, double rate, Rng& rng) {
  if (rate == 0.0) return x;
  if (rate < 0.0 || rate >= 1.0) {
    throw Error("dropout: rate must be in [0, 1), got " + std::to_string(rate));
  }
  const double keep_scale = 1.0 / (1.0 - rate);
  std::vector<double> mask(x.size());
  for (double& mv : mask) mv = rng.uniform() < rate ? 0.0 : keep_scale;
  std::vector<double> out(x.size());
  const auto& xv = x.values();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = xv[i] * mask[i];
  return record(x.shape(), std::move(out), {x}, [mask](Node& self) {
    if (auto* g = grad_buf(self.inputs[0])) {
      for (std::size_t i = 0; i < self.grad.size(); ++i)
        (*g)[i] += self.grad[i] * mask[i];
    }
  });
}

Tensor Tape::custom(
    Shape shape, std::vector<double> value, std::vector<Tensor> inputs,
    std::function<std::vector<std::vector<double>>(const std::vector<double>&)> vjp) {
  if (numel(shape) != value.size()) {
    throw ShapeError("custom: value count does not match shape " + shape_str(shape));
  }
  return record(std::move(shape), std::move(value), std::move(inputs),
                [vjp = std::move(vjp)](Node& self) {
                  auto gs = vjp(self.grad);
                  if (gs.size() != self.inputs.size()) {
                    throw Error("custom: vjp returned wrong gradient count");
                  }
                  for (std::size_t k = 0; k < gs.size(); ++k) {
                    if (auto* g = grad_buf(self.inputs[k])) {
                      if (gs[k].size() != g->size()) {
                        throw Error("custom: vjp gradient size mismatch");
                      }
                      for (std::size_t i = 0; i < g->size(); ++i) (*g)[i] += gs[k][i];
                    }
                  }
                });
}

// ---------------------------------------------------------------------------
// backward
// ---------------------------------------------------------------------------

void Tape::backward(const Tensor& loss) {
  if (!loss.defined()) throw Error("backward: undefined loss");
  if (loss.size() != 1) {
    throw ShapeError("backward: loss must be a single element, got " +
                     shape_str(loss.shape()));
  }
  const Node* root = loss.node_.get();
  if (root->owner != this) throw Error("backward: loss was not produced by this tape");

  // Tape-node gradients are per-call scratch; leaf gradients accumulate.
  for (auto& n : nodes_) {
    if (n->needs_grad) std::fill(n->grad.begin(), n->grad.end(), 0.0);
  }

  std::unordered_set<const Node*> reachable;
  std::vector<const Node*> stack{root};
  while (!stack.empty()) {
    const Node* n = stack.back();
    stack.pop_back();
    if (!reachable.insert(n).second) continue;
    for (const auto& in : n->inputs) {
      if (in->owner == this && in->needs_grad) stack.push_back(in.get());
    }
  }

  loss.node_->grad[0] += 1.0;
  for (auto it = nodes_.rbegin(); it != nodes_.rend(); ++it) {
    Node& n = **it;
    if (!n.needs_grad || !n.backward) continue;
    if (!reachable.count(&n)) continue;
    n.backward(n);
  }
}

}  // namespace infnet
