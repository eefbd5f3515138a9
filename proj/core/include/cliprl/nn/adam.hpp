#pragma once

#include <cmath>
#include <vector>

#include "cliprl/nn/parameter.hpp"

namespace cliprl::nn {

struct AdamOptions {
  double learning_rate = 1e-4;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
};

// Adam with bias-corrected moment estimates. Moments are kept in double so that
// float and double models follow the same update arithmetic.
template <typename T>
class Adam {
 public:
  Adam(ParameterRefs<T> params, AdamOptions options) : params_(std::move(params)), opt_(options) {
    for (const auto* p : params_) {
      m_.emplace_back(p->size(), 0.0);
      v_.emplace_back(p->size(), 0.0);
    }
  }

  void step() {
    ++t_;
    const double c1 = 1.0 - std::pow(opt_.beta1, static_cast<double>(t_));
    const double c2 = 1.0 - std::pow(opt_.beta2, static_cast<double>(t_));
    for (std::size_t k = 0; k < params_.size(); ++k) {
      auto& p = *params_[k];
      auto& m = m_[k];
      auto& v = v_[k];
      for (std::size_t i = 0; i < p.size(); ++i) {
        const double g = static_cast<double>(p.grad[i]);
        m[i] = opt_.beta1 * m[i] + (1.0 - opt_.beta1) * g;
        v[i] = opt_.beta2 * v[i] + (1.0 - opt_.beta2) * g * g;
        const double mhat = m[i] / c1;
        const double vhat = v[i] / c2;
        p.value[i] = static_cast<T>(static_cast<double>(p.value[i]) -
                                    opt_.learning_rate * mhat / (std::sqrt(vhat) + opt_.eps));
      }
    }
  }

  long steps() const noexcept { return t_; }
  const AdamOptions& options() const noexcept { return opt_; }

 private:
  ParameterRefs<T> params_;
  AdamOptions opt_;
  std::vector<std::vector<double>> m_;
  std::vector<std::vector<double>> v_;
  long t_ = 0;
};

}  // namespace cliprl::nn
