// Copyright 2026 the chemlm authors
// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cmath>

#include "chemlm/tensor.hpp"

namespace chemlm {

struct AdamHyper {
  double lr = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
};

struct AdamState {
  ParamMap m;
  ParamMap v;
  long long step = 0;

  static AdamState init(const ParamMap& params) {
    return AdamState{zeros_like(params), zeros_like(params), 0};
  }
};

// Standard Adam with bias correction.
inline void adam_step(ParamMap& params, const ParamMap& grads, AdamState& state,
                      const AdamHyper& hyper) {
  ++state.step;
  const double bc1 = 1.0 - std::pow(hyper.beta1, static_cast<double>(state.step));
  const double bc2 = 1.0 - std::pow(hyper.beta2, static_cast<double>(state.step));
  for (auto& [name, p] : params) {
    auto git = grads.find(name);
    if (git == grads.end() || !git->second.same_shape(p))
      throw ShapeMismatch("adam_step: gradient missing or misshapen for " + name);
    Tensor& m = state.m.at(name);
    Tensor& v = state.v.at(name);
    const Tensor& g = git->second;
    for (std::size_t i = 0; i < p.v.size(); ++i) {
      m.v[i] = hyper.beta1 * m.v[i] + (1.0 - hyper.beta1) * g.v[i];
      v.v[i] = hyper.beta2 * v.v[i] + (1.0 - hyper.beta2) * g.v[i] * g.v[i];
      double mhat = m.v[i] / bc1;
      double vhat = v.v[i] / bc2;
      p.v[i] -= hyper.lr * mhat / (std::sqrt(vhat) + hyper.eps);
    }
  }
}

}  // namespace chemlm
