#pragma once

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <functional>
#include <string>
#include <unistd.h>

#include "cliprl/random.hpp"
#include "cliprl/tensor.hpp"

namespace cliprl::testing {

inline Mask random_mask(Rng& rng, int h, int w, int k) {
  Mask m(h, w);
  for (auto& v : m.labels) v = rng.uniform_int(0, k - 1);
  return m;
}

template <typename T>
Tensor<T> random_tensor(Rng& rng, int c, int h, int w, double lo = -1.0, double hi = 1.0) {
  Tensor<T> t(c, h, w);
  for (auto& v : t.values()) v = static_cast<T>(rng.uniform(lo, hi));
  return t;
}

// |a - b| / max(|a|, |b|, floor)
inline double rel_error(double a, double b, double floor = 1e-6) {
  return std::abs(a - b) / std::max({std::abs(a), std::abs(b), floor});
}

// ||a - b|| / max(||a||, ||b||, floor)
inline double vector_rel_error(const std::vector<double>& a, const std::vector<double>& b, double floor = 1e-12) {
  double diff = 0, na = 0, nb = 0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    diff += (a[i] - b[i]) * (a[i] - b[i]);
    na += a[i] * a[i];
    nb += b[i] * b[i];
  }
  return std::sqrt(diff) / std::max({std::sqrt(na), std::sqrt(nb), floor});
}

// Central difference of f w.r.t. x[i] with step h; x is restored afterwards.
template <typename T>
double central_difference(std::vector<T>& x, std::size_t i, double h, const std::function<double()>& f) {
  const T saved = x[i];
  x[i] = static_cast<T>(static_cast<double>(saved) + h);
  const double up = f();
  x[i] = static_cast<T>(static_cast<double>(saved) - h);
  const double down = f();
  x[i] = saved;
  return (up - down) / (2.0 * h);
}

// Fresh empty directory under the system temp dir, removed on destruction.
class TempDir {
 public:
  explicit TempDir(const std::string& tag) {
    static int counter = 0;
    path_ = std::filesystem::temp_directory_path() /
            ("cliprl_" + tag + "_" + std::to_string(::getpid()) + "_" + std::to_string(counter++));
    std::filesystem::remove_all(path_);
    std::filesystem::create_directories(path_);
  }
  ~TempDir() {
    std::error_code ec;
    std::filesystem::remove_all(path_, ec);
  }
  TempDir(const TempDir&) = delete;
  TempDir& operator=(const TempDir&) = delete;
  const std::filesystem::path& path() const noexcept { return path_; }

 private:
  std::filesystem::path path_;
};

}  // namespace cliprl::testing
