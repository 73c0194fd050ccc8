// Copyright 2026 the chemlm authors
// SPDX-License-Identifier: Apache-2.0
//
// Fingerprint baseline: Morgan-style bits into an L2-regularized logistic
// classifier trained by full-batch gradient descent.
#pragma once

#include <cmath>
#include <vector>

#include "chemlm/datapipe.hpp"
#include "chemlm/metrics.hpp"
#include "chemlm/molgraph.hpp"

namespace chemlm {

struct LinearModel {
  std::vector<double> weights;  // fingerprint width
  double bias = 0.0;
  double l2 = 0.0;
};

struct BaselineHyper {
  double l2 = 1e-4;
  double learning_rate = 0.5;
  double grad_tolerance = 1e-6;
  long long max_iterations = 5000;
};

namespace baseline_detail {

inline std::vector<double> features(const std::string& smiles, int radius, int width) {
  Fingerprint fp = morgan_fingerprint(parse_smiles(smiles), radius, width);
  std::vector<double> x(static_cast<std::size_t>(width), 0.0);
  for (int i = 0; i < width; ++i)
    if (fp.test(i)) x[i] = 1.0;
  return x;
}

inline double sigmoid(double z) {
  return z >= 0 ? 1.0 / (1.0 + std::exp(-z)) : std::exp(z) / (1.0 + std::exp(z));
}

}  // namespace baseline_detail

// Mean logistic loss + L2 penalty on weights (bias unpenalized).
inline double logistic_loss(const LinearModel& m, const std::vector<std::vector<double>>& xs,
                            const std::vector<int>& ys) {
  double loss = 0.0;
  for (std::size_t i = 0; i < xs.size(); ++i) {
    double z = m.bias;
    for (std::size_t k = 0; k < m.weights.size(); ++k) z += m.weights[k] * xs[i][k];
    // -log p(y|x) in a numerically stable form
    loss += std::max(z, 0.0) - z * ys[i] + std::log1p(std::exp(-std::abs(z)));
  }
  loss /= static_cast<double>(xs.size());
  for (double w : m.weights) loss += 0.5 * m.l2 * w * w;
  return loss;
}

inline void logistic_gradient(const LinearModel& m, const std::vector<std::vector<double>>& xs,
                              const std::vector<int>& ys, std::vector<double>& gw, double& gb) {
  gw.assign(m.weights.size(), 0.0);
  gb = 0.0;
  const double inv_n = 1.0 / static_cast<double>(xs.size());
  for (std::size_t i = 0; i < xs.size(); ++i) {
    double z = m.bias;
    for (std::size_t k = 0; k < m.weights.size(); ++k) z += m.weights[k] * xs[i][k];
    double err = (baseline_detail::sigmoid(z) - ys[i]) * inv_n;
    gb += err;
    for (std::size_t k = 0; k < m.weights.size(); ++k)
      if (xs[i][k] != 0.0) gw[k] += err * xs[i][k];
  }
  for (std::size_t k = 0; k < m.weights.size(); ++k) gw[k] += m.l2 * m.weights[k];
}

struct BaselineResult {
  LinearModel model;
  double test_roc_auc = 0.0;
  double test_prc_auc = 0.0;
  long long iterations = 0;
};

inline BaselineResult train_baseline(const TaskDataset& task, const SplitIndices& split,
                                     int radius, int width, const BaselineHyper& hyper) {
  if (split.train.empty() || split.test.empty())
    throw EmptySplit("baseline requires non-empty train and test partitions");
  std::vector<std::vector<double>> xs;
  std::vector<int> ys;
  for (std::size_t i : split.train) {
    xs.push_back(baseline_detail::features(task.records[i].smiles, radius, width));
    ys.push_back(task.records[i].label);
  }
  LinearModel m;
  m.weights.assign(static_cast<std::size_t>(width), 0.0);
  m.l2 = hyper.l2;

  BaselineResult res;
  std::vector<double> gw;
  double gb = 0.0;
  for (long long it = 0; it < hyper.max_iterations; ++it) {
    logistic_gradient(m, xs, ys, gw, gb);
    double norm2 = gb * gb;
    for (double g : gw) norm2 += g * g;
    res.iterations = it + 1;
    if (std::sqrt(norm2) < hyper.grad_tolerance) break;
    for (std::size_t k = 0; k < m.weights.size(); ++k)
      m.weights[k] -= hyper.learning_rate * gw[k];
    m.bias -= hyper.learning_rate * gb;
  }

  ScoredLabels sl;
  for (std::size_t i : split.test) {
    auto x = baseline_detail::features(task.records[i].smiles, radius, width);
    double z = m.bias;
    for (std::size_t k = 0; k < x.size(); ++k) z += m.weights[k] * x[k];
    sl.scores.push_back(baseline_detail::sigmoid(z));
    sl.labels.push_back(task.records[i].label);
  }
  res.model = std::move(m);
  try {
    res.test_roc_auc = roc_auc(sl);
    res.test_prc_auc = prc_auc(sl);
  } catch (const std::runtime_error&) {
    res.test_roc_auc = 0.5;
    res.test_prc_auc = 0.0;
  }
  return res;
}

}  // namespace chemlm
