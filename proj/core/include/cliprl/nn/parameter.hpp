#pragma once

#include <cmath>
#include <cstddef>
#include <functional>
#include <numeric>
#include <string>
#include <vector>

#include "cliprl/random.hpp"

namespace cliprl::nn {

// A trainable array with its accumulated gradient.
template <typename T>
struct Parameter {
  std::string name;
  std::vector<int> shape;
  std::vector<T> value;
  std::vector<T> grad;

  Parameter() = default;
  Parameter(std::string n, std::vector<int> s) : name(std::move(n)), shape(std::move(s)) {
    const auto count = static_cast<std::size_t>(
        std::accumulate(shape.begin(), shape.end(), std::size_t{1}, std::multiplies<>()));
    value.assign(count, T(0));
    grad.assign(count, T(0));
  }

  std::size_t size() const noexcept { return value.size(); }
  void zero_grad() { std::fill(grad.begin(), grad.end(), T(0)); }
};

enum class Init {
  kZeros,
  kHeUniform,     // bound sqrt(6 / fan_in); for layers followed by ReLU
  kLecunUniform,  // bound sqrt(3 / fan_in); for linear outputs
};

template <typename T>
void initialize(Parameter<T>& p, Init kind, std::size_t fan_in, Rng& rng) {
  if (kind == Init::kZeros || fan_in == 0) {
    std::fill(p.value.begin(), p.value.end(), T(0));
    return;
  }
  const double bound = kind == Init::kHeUniform ? std::sqrt(6.0 / static_cast<double>(fan_in))
                                                : std::sqrt(3.0 / static_cast<double>(fan_in));
  for (auto& v : p.value) v = static_cast<T>(rng.uniform(-bound, bound));
}

template <typename T>
using ParameterRefs = std::vector<Parameter<T>*>;

template <typename T>
void zero_grads(const ParameterRefs<T>& params) {
  for (auto* p : params) p->zero_grad();
}

template <typename T>
double grad_norm(const ParameterRefs<T>& params) {
  double sq = 0.0;
  for (const auto* p : params)
    for (T g : p->grad) sq += static_cast<double>(g) * static_cast<double>(g);
  return std::sqrt(sq);
}

// Rescales all gradients so their joint L2 norm is at most max_norm. Returns the pre-clip norm.
template <typename T>
double clip_grad_norm(const ParameterRefs<T>& params, double max_norm) {
  const double norm = grad_norm(params);
  if (max_norm > 0.0 && norm > max_norm) {
    const T scale = static_cast<T>(max_norm / (norm + 1e-12));
    for (auto* p : params)
      for (auto& g : p->grad) g *= scale;
  }
  return norm;
}

}  // namespace cliprl::nn
