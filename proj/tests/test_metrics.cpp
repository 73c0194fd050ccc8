// Copyright 2026 the chemlm authors
// SPDX-License-Identifier: Apache-2.0
#include <doctest.h>

#include "chemlm/metrics.hpp"
#include "chemlm/rng.hpp"
#include "fixtures.hpp"

using namespace chemlm;

TEST_CASE("roc_auc worked example") {
  ScoredLabels sl{{0.1, 0.4, 0.35, 0.8}, {0, 0, 1, 1}};
  CHECK(roc_auc(sl) == doctest::Approx(0.75).epsilon(1e-12));
}

TEST_CASE("roc_auc endpoints and ties") {
  CHECK(roc_auc({{0.1, 0.9}, {0, 1}}) == doctest::Approx(1.0));
  CHECK(roc_auc({{0.9, 0.1}, {0, 1}}) == doctest::Approx(0.0));
  // all scores equal: chance level
  CHECK(roc_auc({{0.5, 0.5, 0.5, 0.5}, {0, 1, 0, 1}}) == doctest::Approx(0.5));
}

TEST_CASE("roc_auc errors") {
  CHECK_THROWS_AS(roc_auc({{0.1, 0.2}, {1, 1}}), DegenerateLabels);
  CHECK_THROWS_AS(roc_auc({{0.1, 0.2}, {0, 0}}), DegenerateLabels);
  CHECK_THROWS_AS(roc_auc({{0.1}, {0, 1}}), std::invalid_argument);
}

TEST_CASE("roc_auc matches brute force on random data") {
  Rng rng(71);
  for (int trial = 0; trial < 300; ++trial) {
    std::size_t n = rand_below(rng, 60) + 2;
    ScoredLabels sl;
    bool has_pos = false, has_neg = false;
    for (std::size_t i = 0; i < n; ++i) {
      // quantize so ties happen often
      sl.scores.push_back(static_cast<double>(rand_below(rng, 8)) / 8.0);
      int l = static_cast<int>(rand_below(rng, 2));
      sl.labels.push_back(l);
      (l ? has_pos : has_neg) = true;
    }
    if (!has_pos || !has_neg) continue;
    double fast = roc_auc(sl);
    double slow = fixtures::roc_auc_bruteforce(sl);
    CHECK(fast == doctest::Approx(slow).epsilon(1e-12));
  }
}

TEST_CASE("prc_auc worked example") {
  ScoredLabels sl{{0.1, 0.4, 0.35, 0.8}, {0, 0, 1, 1}};
  // 0.8 -> precision 1 at recall 1/2; 0.35 -> precision 2/3 at recall 1
  CHECK(prc_auc(sl) == doctest::Approx(0.5 + 2.0 / 3.0 * 0.5).epsilon(1e-12));
}

TEST_CASE("prc_auc bounds and properties") {
  // perfect ranking gives area 1
  CHECK(prc_auc({{0.9, 0.8, 0.2, 0.1}, {1, 1, 0, 0}}) == doctest::Approx(1.0));
  // all-positive degenerates to 1 regardless of scores
  CHECK(prc_auc({{0.3, 0.7}, {1, 1}}) == doctest::Approx(1.0));
  CHECK_THROWS_AS(prc_auc({{0.3, 0.7}, {0, 0}}), NoPositives);
  CHECK_THROWS_AS(prc_auc({{0.1}, {0, 1}}), std::invalid_argument);

  Rng rng(11);
  for (int trial = 0; trial < 200; ++trial) {
    std::size_t n = rand_below(rng, 50) + 2;
    ScoredLabels sl;
    long long pos = 0;
    for (std::size_t i = 0; i < n; ++i) {
      sl.scores.push_back(static_cast<double>(rand_below(rng, 6)) / 6.0);
      int l = static_cast<int>(rand_below(rng, 2));
      pos += l;
      sl.labels.push_back(l);
    }
    if (pos == 0) continue;
    double a = prc_auc(sl);
    CHECK(a >= 0.0);
    CHECK(a <= 1.0 + 1e-12);
    // baseline: area is at least reachable prevalence at full recall
    // (last group precision) so never 0 when positives exist
    CHECK(a > 0.0);
  }
}

TEST_CASE("tie group atomicity") {
  // one tie group containing both classes; sweep must not split it
  ScoredLabels sl{{0.5, 0.5, 0.1}, {1, 0, 0}};
  // group {0.5,0.5}: tp 1 fp 1, precision 1/2 at recall 1
  CHECK(prc_auc(sl) == doctest::Approx(0.5));
  CHECK(roc_auc(sl) == doctest::Approx(fixtures::roc_auc_bruteforce(sl)).epsilon(1e-12));
}

TEST_CASE("metric invariance to input order") {
  Rng rng(3);
  ScoredLabels sl;
  for (int i = 0; i < 100; ++i) {
    sl.scores.push_back(rand_unit(rng));
    sl.labels.push_back(static_cast<int>(rand_below(rng, 2)));
  }
  sl.labels[0] = 1;
  sl.labels[1] = 0;
  double r0 = roc_auc(sl), p0 = prc_auc(sl);
  std::vector<std::size_t> perm(sl.scores.size());
  for (std::size_t i = 0; i < perm.size(); ++i) perm[i] = i;
  seeded_shuffle(perm, rng);
  ScoredLabels sh;
  for (auto i : perm) {
    sh.scores.push_back(sl.scores[i]);
    sh.labels.push_back(sl.labels[i]);
  }
  CHECK(roc_auc(sh) == doctest::Approx(r0).epsilon(1e-12));
  CHECK(prc_auc(sh) == doctest::Approx(p0).epsilon(1e-12));
}
