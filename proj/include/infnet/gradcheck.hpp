#pragma once

#include <functional>
#include <string>
#include <vector>

#include "infnet/tensor.hpp"

namespace infnet {

struct GradCheckReport {
  double max_rel_error = 0.0;
  bool pass = false;
  std::size_t entries_checked = 0;
  std::string worst_entry;  // "<param>[i]" of the largest discrepancy
};

using TensorFn = std::function<Tensor(Tape&, const Tensor&)>;

/// Compares the recorded backward of proj(f(x)) against central finite
/// differences, entry by entry. proj is a fixed random linear functional, so
/// a single scalar check exercises the whole output. x must be a parameter
/// leaf. f is evaluated twice up front; a value mismatch means f is not
/// deterministic and raises an error.
///
/// Relative error uses max(1, |analytic|, |numeric|) in the denominator,
/// which degrades to an absolute tolerance for near-zero gradients.
GradCheckReport grad_check(const TensorFn& f, const Tensor& x, double eps,
                           double tol);

/// Same check for d(loss)/d(p) over every parameter p. loss_fn reads the
/// parameters ambiently (a model forward, typically).
GradCheckReport grad_check_params(const std::function<Tensor(Tape&)>& loss_fn,
                                  const std::vector<Tensor>& params, double eps,
                                  double tol);

}  // namespace infnet
