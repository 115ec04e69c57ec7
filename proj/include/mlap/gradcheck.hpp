#pragma once

#include <algorithm>
#include <cmath>
#include <functional>
#include <vector>

#include "mlap/tensor.hpp"

namespace mlap {

// Compares analytic gradients against central finite differences.
// f must be deterministic across calls (run models in eval mode or with
// dropout 0) and must build its computation on the tape it receives.
// Returns max over parameter entries of
//   |analytic - numeric| / max(1, |analytic|, |numeric|).
inline double grad_check(const std::function<Tensor(Tape&)>& f, std::vector<Tensor> params,
                         double fd_step = 1e-5) {
  for (Tensor& p : params) p.zero_grad();
  {
    Tape tape;
    Tensor loss = f(tape);
    tape.backward(loss);
  }
  std::vector<std::vector<double>> analytic;
  for (Tensor& p : params)
    analytic.emplace_back(p.grad(), p.grad() + p.size());

  double max_err = 0.0;
  for (size_t k = 0; k < params.size(); ++k) {
    Tensor& p = params[k];
    for (size_t i = 0; i < p.size(); ++i) {
      const double saved = p.data()[i];
      p.data()[i] = saved + fd_step;
      double lo, hi;
      {
        Tape tape;
        hi = f(tape).item();
      }
      p.data()[i] = saved - fd_step;
      {
        Tape tape;
        lo = f(tape).item();
      }
      p.data()[i] = saved;
      const double numeric = (hi - lo) / (2.0 * fd_step);
      const double a = analytic[k][i];
      const double err = std::abs(a - numeric) / std::max({1.0, std::abs(a), std::abs(numeric)});
      max_err = std::max(max_err, err);
    }
  }
  return max_err;
}

}  // namespace mlap
