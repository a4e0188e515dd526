#include "infnet/gradcheck.hpp"

#include <cmath>

namespace infnet {

namespace {

// Fixed projection weights make the scalarized loss sensitive to every
// output entry without depending on call order.
Tensor projection_for(const Tensor& y) {
  Rng rng(0x70726f6au);
  std::vector<double> w(y.size());
  for (double& v : w) v = rng.uniform(-1.0, 1.0);
  return Tensor::constant(y.shape(), std::move(w));
}

double projected(const TensorFn& f, const Tensor& x, const Tensor& w) {
  Tape t;
  Tensor y = f(t, x);
  double acc = 0.0;
  for (std::size_t i = 0; i < y.size(); ++i) acc += y.values()[i] * w.values()[i];
  return acc;
}

double rel_error(double a, double b) {
  return std::fabs(a - b) / std::max({1.0, std::fabs(a), std::fabs(b)});
}

}  // namespace

GradCheckReport grad_check(const TensorFn& f, const Tensor& x, double eps,
                           double tol) {
  if (!x.is_param()) throw Error("grad_check: x must be a parameter leaf");

  Tape probe;
  Tensor y1 = f(probe, x);
  {
    Tape probe2;
    Tensor y2 = f(probe2, x);
    if (y1.shape() != y2.shape() || y1.values() != y2.values()) {
      throw Error("grad_check: f is not deterministic (repeated evaluation differs)");
    }
  }
  Tensor w = projection_for(y1);

  // Analytic gradient of the projected scalar.
  Tensor xc = x;
  xc.zero_grad();
  std::vector<double> analytic;
  {
    Tape t;
    Tensor y = f(t, xc);
    Tensor loss = t.scale(t.mean(t.mul(y, w)), static_cast<double>(y.size()));
    t.backward(loss);
    analytic = xc.grad();
  }

  GradCheckReport report;
  report.entries_checked = x.size();
  std::vector<double>& xs = xc.mutable_values();
  for (std::size_t i = 0; i < xs.size(); ++i) {
    const double orig = xs[i];
    xs[i] = orig + eps;
    const double up = projected(f, xc, w);
    xs[i] = orig - eps;
    const double down = projected(f, xc, w);
    xs[i] = orig;
    const double numeric = (up - down) / (2.0 * eps);
    const double err = rel_error(analytic[i], numeric);
    if (err > report.max_rel_error) {
      report.max_rel_error = err;
      report.worst_entry = "x[" + std::to_string(i) + "]";
    }
  }
  report.pass = report.max_rel_error <= tol;
  return report;
}

GradCheckReport grad_check_params(const std::function<Tensor(Tape&)>& loss_fn,
                                  const std::vector<Tensor>& params, double eps,
                                  double tol) {
  auto eval = [&loss_fn]() {
    Tape t;
    Tensor loss = loss_fn(t);
    if (loss.size() != 1) throw Error("grad_check_params: loss must be scalar");
    return loss.values()[0];
  };
  const double l1 = eval();
  if (l1 != eval()) {
    throw Error("grad_check_params: loss_fn is not deterministic");
  }

  for (const Tensor& p : params) {
    Tensor pc = p;
    pc.zero_grad();
  }
  std::vector<std::vector<double>> analytic;
  {
    Tape t;
    Tensor loss = loss_fn(t);
    t.backward(loss);
    for (const Tensor& p : params) analytic.push_back(p.grad());
  }

  GradCheckReport report;
  for (std::size_t k = 0; k < params.size(); ++k) {
    Tensor p = params[k];
    std::vector<double>& vals = p.mutable_values();
    report.entries_checked += vals.size();
    for (std::size_t i = 0; i < vals.size(); ++i) {
      const double orig = vals[i];
      vals[i] = orig + eps;
      const double up = eval();
      vals[i] = orig - eps;
      const double down = eval();
      vals[i] = orig;
      const double numeric = (up - down) / (2.0 * eps);
      const double err = rel_error(analytic[k][i], numeric);
      if (err > report.max_rel_error) {
        report.max_rel_error = err;
        const std::string label = p.name().empty() ? "param" + std::to_string(k) : p.name();
        report.worst_entry = label + "[" + std::to_string(i) + "]";
      }
    }
  }
  report.pass = report.max_rel_error <= tol;
  return report;
}

}  // namespace infnet
