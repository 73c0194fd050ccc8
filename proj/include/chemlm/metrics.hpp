// Copyright 2026 the chemlm authors
// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <algorithm>
#include <stdexcept>
#include <vector>

namespace chemlm {

struct DegenerateLabels : std::runtime_error {
  using std::runtime_error::runtime_error;
};
struct NoPositives : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct ScoredLabels {
  std::vector<double> scores;
  std::vector<int> labels;  // {0,1}
};

// Mann-Whitney formulation: P(score_pos > score_neg) + 0.5 * P(tie),
// computed via midranks in O(n log n).
inline double roc_auc(const ScoredLabels& sl) {
  const std::size_t n = sl.scores.size();
  if (n != sl.labels.size()) throw std::invalid_argument("scores/labels length mismatch");
  long long pos = 0, neg = 0;
  for (int l : sl.labels) (l ? pos : neg)++;
  if (pos == 0 || neg == 0) throw DegenerateLabels("roc_auc needs both classes");
  std::vector<std::size_t> order(n);
  for (std::size_t i = 0; i < n; ++i) order[i] = i;
  std::sort(order.begin(), order.end(),
            [&](std::size_t a, std::size_t b) { return sl.scores[a] < sl.scores[b]; });
  double rank_sum_pos = 0.0;
  std::size_t i = 0;
  while (i < n) {
    std::size_t j = i;
    while (j < n && sl.scores[order[j]] == sl.scores[order[i]]) ++j;
    double midrank = 0.5 * static_cast<double>(i + 1 + j);  // ranks are 1-based
    for (std::size_t k = i; k < j; ++k)
      if (sl.labels[order[k]]) rank_sum_pos += midrank;
    i = j;
  }
  double u = rank_sum_pos - static_cast<double>(pos) * (static_cast<double>(pos) + 1.0) / 2.0;
  return u / (static_cast<double>(pos) * static_cast<double>(neg));
}

// Area under the precision-recall step curve: descending-score sweep with
// tie groups processed atomically (non-interpolated, average-precision
// style).
inline double prc_auc(const ScoredLabels& sl) {
  const std::size_t n = sl.scores.size();
  if (n != sl.labels.size()) throw std::invalid_argument("scores/labels length mismatch");
  long long pos = 0;
  for (int l : sl.labels) pos += l;
  if (pos == 0) throw NoPositives("prc_auc needs at least one positive");
  std::vector<std::size_t> order(n);
  for (std::size_t i = 0; i < n; ++i) order[i] = i;
  std::sort(order.begin(), order.end(),
            [&](std::size_t a, std::size_t b) { return sl.scores[a] > sl.scores[b]; });
  double area = 0.0;
  long long tp = 0, fp = 0;
  std::size_t i = 0;
  while (i < n) {
    std::size_t j = i;
    long long tp_group = 0, fp_group = 0;
    while (j < n && sl.scores[order[j]] == sl.scores[order[i]]) {
      (sl.labels[order[j]] ? tp_group : fp_group)++;
      ++j;
    }
    long long prev_tp = tp;
    tp += tp_group;
    fp += fp_group;
    if (tp_group > 0) {
      double precision = static_cast<double>(tp) / static_cast<double>(tp + fp);
      double delta_recall = static_cast<double>(tp - prev_tp) / static_cast<double>(pos);
      area += precision * delta_recall;
    }
    i = j;
  }
  return area;
}

}  // namespace chemlm
