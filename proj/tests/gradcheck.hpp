#pragma once
// Central finite-difference gradient checking against the analytic backward
// passes, run on double instantiations of the layers.

#include <functional>

#include "scve/tensor.hpp"

namespace scve::testing {

// Relative error with a 1e-4 absolute floor: central differences at h = 1e-5
// carry ~5e-10 of cancellation noise, so entries below ~5e-6 cannot satisfy a
// pure relative bound no matter how exact the analytic gradient is. Above the
// floor this is plain relative error.
inline double rel_err(double a, double b) {
  const double denom = std::max({std::fabs(a), std::fabs(b), 1e-4});
  return std::fabs(a - b) / denom;
}

// Perturbs every element of `subject`, re-evaluates `loss`, and returns the
// worst relative error against `analytic`.
inline double max_grad_err(Tensor2<double>& subject, const Tensor2<double>& analytic,
                           const std::function<double()>& loss, double h = 1e-5) {
  if (subject.rows != analytic.rows || subject.cols != analytic.cols)
    throw_data("gradcheck: analytic gradient shape mismatch");
  double worst = 0.0;
  for (std::size_t i = 0; i < subject.v.size(); ++i) {
    const double keep = subject.v[i];
    subject.v[i] = keep + h;
    const double up = loss();
    subject.v[i] = keep - h;
    const double down = loss();
    subject.v[i] = keep;
    const double fd = (up - down) / (2.0 * h);
    worst = std::max(worst, rel_err(fd, analytic.v[i]));
  }
  return worst;
}

inline Tensor2<double> random_tensor(int rows, int cols, Rng& rng, double scale = 1.0) {
  Tensor2<double> t(rows, cols);
  for (auto& x : t.v) x = rng.normal(0.0, scale);
  return t;
}

// sum(out (*) weights): a scalar objective with a dense, non-degenerate
// gradient for every output element.
inline double weighted_sum(const Tensor2<double>& out, const Tensor2<double>& w) {
  double acc = 0.0;
  for (std::size_t i = 0; i < out.v.size(); ++i) acc += out.v[i] * w.v[i];
  return acc;
}

}  // namespace scve::testing
