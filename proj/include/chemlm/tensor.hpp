// Copyright 2026 the chemlm authors
// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cmath>
#include <cstdint>
#include <map>
#include <numeric>
#include <stdexcept>
#include <string>
#include <vector>

namespace chemlm {

struct ShapeMismatch : std::runtime_error {
  using std::runtime_error::runtime_error;
};
struct NonFiniteValue : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// Dense row-major tensor of doubles.
struct Tensor {
  std::vector<int> shape;
  std::vector<double> v;

  Tensor() = default;
  explicit Tensor(std::vector<int> s) : shape(std::move(s)) {
    v.assign(static_cast<std::size_t>(numel()), 0.0);
  }

  long long numel() const {
    long long n = 1;
    for (int d : shape) n *= d;
    return n;
  }

  double& at2(int i, int j) { return v[static_cast<std::size_t>(i) * shape[1] + j]; }
  double at2(int i, int j) const { return v[static_cast<std::size_t>(i) * shape[1] + j]; }

  bool same_shape(const Tensor& o) const { return shape == o.shape; }
};

using ParamMap = std::map<std::string, Tensor>;

inline void check_finite(const Tensor& t, const std::string& name) {
  for (double x : t.v)
    if (!std::isfinite(x)) throw NonFiniteValue("non-finite value in " + name);
}

inline ParamMap zeros_like(const ParamMap& params) {
  ParamMap out;
  for (const auto& [name, t] : params) out.emplace(name, Tensor(t.shape));
  return out;
}

}  // namespace chemlm
