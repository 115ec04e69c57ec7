#pragma once

#include <string>
#include <vector>

#include "mlap/error.hpp"
#include "mlap/tensor.hpp"

namespace mlap {

// Adam with bias correction. beta1/beta2/eps are the defaults of the
// original method; the step counter t is shared across all parameters.
class AdamState {
 public:
  explicit AdamState(const std::vector<Tensor>& params) {
    for (const Tensor& p : params) {
      m_.emplace_back(p.size(), 0.0);
      v_.emplace_back(p.size(), 0.0);
    }
  }

  void step(std::vector<Tensor>& params, double lr) {
    if (params.size() != m_.size()) throw UsageError("adam_step: parameter count changed");
    ++t_;
    const double bc1 = 1.0 - std::pow(beta1_, t_);
    const double bc2 = 1.0 - std::pow(beta2_, t_);
    for (size_t k = 0; k < params.size(); ++k) {
      Tensor& p = params[k];
      if (p.size() != m_[k].size()) throw UsageError("adam_step: parameter shape changed");
      double* w = p.data();
      double* g = p.grad();
      double* m = m_[k].data();
      double* v = v_[k].data();
      const size_t n = p.size();
      for (size_t i = 0; i < n; ++i) {
        m[i] = beta1_ * m[i] + (1.0 - beta1_) * g[i];
        v[i] = beta2_ * v[i] + (1.0 - beta2_) * g[i] * g[i];
        const double mhat = m[i] / bc1;
        const double vhat = v[i] / bc2;
        w[i] -= lr * mhat / (std::sqrt(vhat) + eps_);
        g[i] = 0.0;
      }
    }
  }

  long step_count() const { return t_; }

 private:
  static constexpr double beta1_ = 0.9;
  static constexpr double beta2_ = 0.999;
  static constexpr double eps_ = 1e-8;
  std::vector<std::vector<double>> m_, v_;
  long t_ = 0;
};

inline void adam_step(std::vector<Tensor>& params, AdamState& state, double lr) {
  state.step(params, lr);
}

}  // namespace mlap
