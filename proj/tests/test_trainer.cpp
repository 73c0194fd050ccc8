// Copyright 2026 the chemlm authors
// SPDX-License-Identifier: Apache-2.0
#include <doctest.h>

#include "chemlm/trainer.hpp"
#include "fixtures.hpp"

using namespace chemlm;

namespace {

TrainRunConfig small_run(std::uint64_t seed) {
  TrainRunConfig cfg;
  cfg.seed = seed;
  cfg.epochs = 3;
  cfg.batch_size = 16;
  cfg.max_len = 32;
  cfg.model.n_layers = 2;
  cfg.model.n_heads = 2;
  cfg.model.d_model = 16;
  cfg.model.d_ff = 32;
  cfg.model.max_positions = 32;
  cfg.model.dropout_rate = 0.0;
  return cfg;
}

}  // namespace

TEST_CASE("runlog jsonl round trip") {
  RunLog log;
  EpochRecord a;
  a.epoch = 0;
  a.train_loss = 3.25;
  a.wall_seconds = 0.5;
  EpochRecord b;
  b.epoch = 1;
  b.train_loss = 2.5;
  b.valid_loss = 2.75;
  b.valid_roc_auc = 0.875;
  b.valid_prc_auc = 0.625;
  b.wall_seconds = 0.25;
  log.epochs = {a, b};
  log.best_epoch = 1;
  std::string text = runlog_to_jsonl(log);
  RunLog back = runlog_from_jsonl(text);
  CHECK(back.best_epoch == 1);
  REQUIRE(back.epochs.size() == 2);
  CHECK_FALSE(back.epochs[0].valid_roc_auc.has_value());
  CHECK(back.epochs[1].valid_roc_auc == 0.875);
  CHECK(back.epochs[1].train_loss == 2.5);
  CHECK(runlog_to_jsonl(back) == text);
}

TEST_CASE("pretrain reduces loss and tracks the best epoch") {
  auto corpus = fixtures::fixture_corpus(60, 101);
  auto tok = train_regex_tokenizer(corpus);
  TrainRunConfig cfg = small_run(1);
  cfg.epochs = 5;
  PretrainResult res = pretrain(corpus, tok, cfg);
  REQUIRE(res.log.epochs.size() == 5);
  CHECK(res.log.epochs.back().train_loss < res.log.epochs.front().train_loss);
  // best epoch is the argmin of train loss (first minimum wins)
  int argmin = 0;
  for (int e = 1; e < 5; ++e)
    if (res.log.epochs[e].train_loss < res.log.epochs[argmin].train_loss) argmin = e;
  CHECK(res.log.best_epoch == argmin);
  CHECK(res.best.config.vocab_size == tok.vocab.size());
  CHECK(res.last.step > 0);
  CHECK_THROWS_AS(pretrain({}, tok, cfg), EmptyCorpus);
}

TEST_CASE("pretrain is seed-deterministic") {
  auto corpus = fixtures::fixture_corpus(40, 103);
  auto tok = train_regex_tokenizer(corpus);
  PretrainResult a = pretrain(corpus, tok, small_run(7));
  PretrainResult b = pretrain(corpus, tok, small_run(7));
  PretrainResult c = pretrain(corpus, tok, small_run(8));
  CHECK(a.last.params.at("embed.token").v == b.last.params.at("embed.token").v);
  CHECK(a.log.epochs[0].train_loss == b.log.epochs[0].train_loss);
  CHECK(a.last.params.at("embed.token").v != c.last.params.at("embed.token").v);
}

TEST_CASE("evaluate_classifier emits probabilities") {
  auto task = fixtures::nitrogen_task(40, 107);
  Corpus corpus;
  for (const auto& r : task.records) corpus.push_back(r.smiles);
  auto tok = train_regex_tokenizer(corpus);
  ModelConfig mc = small_run(0).model;
  mc.vocab_size = tok.vocab.size();
  TransformerModel model(mc, 9);
  std::vector<std::size_t> idx(task.records.size());
  for (std::size_t i = 0; i < idx.size(); ++i) idx[i] = i;
  ScoredLabels sl = evaluate_classifier(model, tok, task, idx, 32, 8);
  REQUIRE(sl.scores.size() == idx.size());
  for (double p : sl.scores) {
    CHECK(p >= 0.0);
    CHECK(p <= 1.0);
  }
}

TEST_CASE("finetune learns the synthetic task") {
  auto task = fixtures::nitrogen_task(300, 109);
  Corpus corpus;
  for (const auto& r : task.records) corpus.push_back(r.smiles);
  auto tok = train_regex_tokenizer(corpus);
  SplitIndices split = scaffold_split(task);

  TrainRunConfig cfg = small_run(3);
  cfg.epochs = 25;
  cfg.patience = 6;
  cfg.adam.lr = 1e-3;
  cfg.model.d_model = 32;
  cfg.model.d_ff = 64;
  ModelConfig mc = cfg.model;
  mc.vocab_size = tok.vocab.size();
  Checkpoint start{mc, init_params(mc, 3), std::nullopt, 0};
  FinetuneResult res = finetune(start, tok, task, split, cfg);
  CHECK(res.test_roc_auc > 0.8);
  REQUIRE(!res.log.epochs.empty());
  // best epoch holds the max validation roc, earliest on ties
  double best = -1.0;
  int best_e = -1;
  for (const auto& r : res.log.epochs)
    if (*r.valid_roc_auc > best) {
      best = *r.valid_roc_auc;
      best_e = r.epoch;
    }
  CHECK(res.log.best_epoch == best_e);
  // early stopping respects patience
  CHECK(static_cast<int>(res.log.epochs.size()) <=
        std::min({cfg.epochs, cfg.finetune_epoch_cap, best_e + 1 + cfg.patience}));
}

TEST_CASE("finetune input validation") {
  auto task = fixtures::nitrogen_task(30, 113);
  Corpus corpus;
  for (const auto& r : task.records) corpus.push_back(r.smiles);
  auto tok = train_regex_tokenizer(corpus);
  TrainRunConfig cfg = small_run(5);
  ModelConfig mc = cfg.model;
  mc.vocab_size = tok.vocab.size();
  Checkpoint start{mc, init_params(mc, 5), std::nullopt, 0};

  SplitIndices empty;
  CHECK_THROWS_AS(finetune(start, tok, task, empty, cfg), EmptySplit);

  ModelConfig wrong = mc;
  wrong.vocab_size = mc.vocab_size + 1;
  Checkpoint bad{wrong, init_params(wrong, 5), std::nullopt, 0};
  SplitIndices split;
  split.train = {0, 1};
  split.valid = {2};
  split.test = {3};
  CHECK_THROWS_AS(finetune(bad, tok, task, split, cfg), ConfigMismatch);
}

TEST_CASE("finetune is seed-deterministic") {
  auto task = fixtures::nitrogen_task(60, 127);
  Corpus corpus;
  for (const auto& r : task.records) corpus.push_back(r.smiles);
  auto tok = train_regex_tokenizer(corpus);
  SplitIndices split = scaffold_split(task);
  TrainRunConfig cfg = small_run(11);
  cfg.epochs = 3;
  ModelConfig mc = cfg.model;
  mc.vocab_size = tok.vocab.size();
  Checkpoint start{mc, init_params(mc, 11), std::nullopt, 0};
  FinetuneResult a = finetune(start, tok, task, split, cfg);
  FinetuneResult b = finetune(start, tok, task, split, cfg);
  CHECK(a.test_roc_auc == b.test_roc_auc);
  CHECK(a.best.params.at("cls.w").v == b.best.params.at("cls.w").v);
}

TEST_CASE("scaling_experiment reports deltas against the smallest subset") {
  auto task = fixtures::nitrogen_task(80, 131);
  Corpus corpus = fixtures::fixture_corpus(40, 137);
  for (const auto& r : task.records) corpus.push_back(r.smiles);
  auto tok = train_regex_tokenizer(corpus);
  SplitIndices split = scaffold_split(task);
  TrainRunConfig pre = small_run(13);
  pre.epochs = 1;
  TrainRunConfig fine = small_run(13);
  fine.epochs = 2;
  auto subs = subset(corpus, {20, 40});
  ScalingReport rep = scaling_experiment(subs, tok, task, split, pre, fine);
  REQUIRE(rep.rows.size() == 2);
  CHECK(rep.rows[0].subset_size == 20);
  CHECK(rep.rows[1].subset_size == 40);
  CHECK(rep.rows[0].delta_roc_auc == 0.0);
  CHECK(rep.rows[1].delta_roc_auc ==
        doctest::Approx(rep.rows[1].test_roc_auc - rep.rows[0].test_roc_auc));
  CHECK_THROWS_AS(scaling_experiment({corpus}, tok, task, split, pre, fine),
                  std::invalid_argument);
}
