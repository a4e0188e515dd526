#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <memory>
#include <string>
#include <vector>

#include "infnet/error.hpp"
#include "infnet/rng.hpp"

namespace infnet {

using Shape = std::vector<std::size_t>;

/// Per-position validity flags (1 = real token, 0 = padding).
using Mask = std::vector<std::uint8_t>;

std::size_t numel(const Shape& s);
std::string shape_str(const Shape& s);

class Tape;

namespace detail {

struct Node {
  Shape shape;
  std::vector<double> value;
  std::vector<double> grad;  // allocated iff needs_grad
  bool needs_grad = false;
  bool is_param = false;
  const Tape* owner = nullptr;  // null for leaves
  std::string name;             // parameters only
  std::vector<std::shared_ptr<Node>> inputs;
  std::function<void(Node&)> backward;
};

}  // namespace detail

/// Dense f64 tensor. A Tensor is a shared handle to an immutable value plus
/// an optional gradient buffer; copies alias the same storage. Values are
/// written once by the op that produces them. Parameters are the only
/// tensors mutated afterwards (by the optimizer, between tapes).
class Tensor {
 public:
  Tensor() = default;

  /// Trainable leaf. Gradients accumulate across backward calls until
  /// zero_grad().
  static Tensor parameter(Shape shape, std::vector<double> values,
                          std::string name = {});

  /// Non-trainable leaf.
  static Tensor constant(Shape shape, std::vector<double> values);

  static Tensor zeros(Shape shape);

  /// Parameter filled with uniform(lo, hi) draws.
  static Tensor uniform_param(Shape shape, double lo, double hi, Rng& rng,
                              std::string name = {});

  bool defined() const { return node_ != nullptr; }
  const Shape& shape() const { return node_->shape; }
  std::size_t rank() const { return node_->shape.size(); }
  std::size_t size() const { return node_->value.size(); }
  std::size_t rows() const;
  std::size_t cols() const;

  const std::vector<double>& values() const { return node_->value; }

  /// Mutable access to a leaf's values (optimizer updates, grad-check
  /// nudges). Forbidden on tape outputs.
  std::vector<double>& mutable_values();

  bool needs_grad() const { return node_->needs_grad; }
  bool is_param() const { return node_->is_param; }
  const std::vector<double>& grad() const;
  /// Mutable gradient of a leaf (clipping, weight decay). Forbidden on tape
  /// outputs.
  std::vector<double>& mutable_grad();
  void zero_grad();

  const std::string& name() const { return node_->name; }

  double operator()(std::size_t i) const { return node_->value[i]; }
  double operator()(std::size_t i, std::size_t j) const {
    return node_->value[i * cols() + j];
  }

 private:
  explicit Tensor(std::shared_ptr<detail::Node> n) : node_(std::move(n)) {}
  std::shared_ptr<detail::Node> node_;
  friend class Tape;
};

/// Records ops in execution order (a Wengert list) and replays their
/// backward rules in reverse. Creation order is topological by
/// construction: an op's inputs always exist before the op itself.
///
/// Tapes are single-threaded. Concurrent evaluation is allowed only with
/// one tape per thread; parameters may be shared read-only.
class Tape {
 public:
  Tape() = default;
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  // ---- elementwise ----
  Tensor add(const Tensor& a, const Tensor& b);
  Tensor mul(const Tensor& a, const Tensor& b);
  Tensor scale(const Tensor& x, double c);
  Tensor relu(const Tensor& x);
  Tensor sigmoid(const Tensor& x);

  // ---- matrix ----
  Tensor matmul(const Tensor& a, const Tensor& b);
  /// a * transpose(b); both arguments row-major, shapes m x k and n x k.
  Tensor matmul_nt(const Tensor& a, const Tensor& b);
  Tensor softmax_rows(const Tensor& x);
  /// Softmax over columns whose mask bit is set; masked columns get exactly
  /// zero probability and zero gradient. At least one bit must be set.
  Tensor softmax_rows(const Tensor& x, const Mask& key_mask);
  /// x[i,j] + row[0,j]
  Tensor add_rowwise(const Tensor& x, const Tensor& row);
  /// x[i,j] * row[0,j]
  Tensor mul_rowwise(const Tensor& x, const Tensor& row);

  // ---- structure ----
  Tensor reshape(const Tensor& x, Shape shape);
  Tensor flatten(const Tensor& x);
  Tensor concat_rows(const std::vector<Tensor>& parts);
  Tensor concat_cols(const std::vector<Tensor>& parts);
  Tensor slice_rows(const Tensor& x, std::size_t begin, std::size_t end);

  // ---- reductions ----
  Tensor sum_rows(const Tensor& x);
  /// Column sums over rows with a set mask bit; all-clear mask gives zeros.
  Tensor sum_rows_masked(const Tensor& x, const Mask& row_mask);
  Tensor mean(const Tensor& x);

  // ---- gather ----
  /// Row gather: out[i] = table[rows[i]]. Gradient is row-sparse; repeated
  /// indices accumulate.
  Tensor lookup_rows(const Tensor& table, const std::vector<std::size_t>& rows);

  /// Inverted dropout: kept entries scaled by 1/(1-rate). rate 0 returns x.
  Tensor dropout(const Tensor& x, double rate, Rng& rng);

  /// Generic recorded op. vjp receives the output gradient and returns one
  /// gradient buffer per input (same element counts as the inputs).
  Tensor custom(
      Shape shape, std::vector<double> value, std::vector<Tensor> inputs,
      std::function<std::vector<std::vector<double>>(
          const std::vector<double>& out_grad)> vjp);

  /// Seeds d(loss)/d(loss) = 1 and sweeps recorded ops in reverse. loss must
  /// be a single-element tensor produced by this tape. Tape-node gradients
  /// are reset per call; leaf gradients accumulate across calls.
  void backward(const Tensor& loss);

  std::size_t size() const { return nodes_.size(); }

 private:
  Tensor record(Shape shape, std::vector<double> value,
                std::vector<Tensor> inputs,
                std::function<void(detail::Node&)> bw);
  std::vector<std::shared_ptr<detail::Node>> nodes_;
};

}  // namespace infnet
