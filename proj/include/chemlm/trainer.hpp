// Copyright 2026 the chemlm authors
// SPDX-License-Identifier: Apache-2.0
//
// Training orchestration: MLM pretraining epochs, classification finetuning
// with early stopping on validation ROC-AUC, and the scaling-ladder
// experiment.
#pragma once

#include <chrono>
#include <cmath>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "chemlm/checkpoint.hpp"
#include "chemlm/datapipe.hpp"
#include "chemlm/metrics.hpp"
#include "chemlm/model.hpp"
#include "chemlm/optimizer.hpp"
#include "chemlm/tokenize.hpp"

namespace chemlm {

struct TrainRunConfig {
  int epochs = 10;          // pretraining default
  int finetune_epoch_cap = 25;
  int patience = 3;
  std::uint64_t seed = 0;
  int batch_size = 16;
  int max_len = 64;
  AdamHyper adam;
  MlmConfig mlm;
  ModelConfig model;
};

struct EpochRecord {
  int epoch = 0;
  double train_loss = 0.0;
  std::optional<double> valid_loss;
  std::optional<double> valid_roc_auc;
  std::optional<double> valid_prc_auc;
  double wall_seconds = 0.0;
};

struct RunLog {
  std::vector<EpochRecord> epochs;
  int best_epoch = -1;
};

inline nlohmann::json epoch_to_json(const EpochRecord& r) {
  nlohmann::json j = {{"epoch", r.epoch},
                      {"train_loss", r.train_loss},
                      {"wall_seconds", r.wall_seconds}};
  j["valid_loss"] = r.valid_loss ? nlohmann::json(*r.valid_loss) : nlohmann::json();
  j["valid_roc_auc"] = r.valid_roc_auc ? nlohmann::json(*r.valid_roc_auc) : nlohmann::json();
  j["valid_prc_auc"] = r.valid_prc_auc ? nlohmann::json(*r.valid_prc_auc) : nlohmann::json();
  return j;
}

inline EpochRecord epoch_from_json(const nlohmann::json& j) {
  EpochRecord r;
  r.epoch = j.at("epoch").get<int>();
  r.train_loss = j.at("train_loss").get<double>();
  r.wall_seconds = j.at("wall_seconds").get<double>();
  auto opt = [&](const char* key) -> std::optional<double> {
    if (j.at(key).is_null()) return std::nullopt;
    return j.at(key).get<double>();
  };
  r.valid_loss = opt("valid_loss");
  r.valid_roc_auc = opt("valid_roc_auc");
  r.valid_prc_auc = opt("valid_prc_auc");
  return r;
}

// Line-delimited JSON: one line per epoch, then a trailer with best_epoch.
inline std::string runlog_to_jsonl(const RunLog& log) {
  std::string out;
  for (const auto& r : log.epochs) out += epoch_to_json(r).dump() + "\n";
  out += nlohmann::json{{"best_epoch", log.best_epoch}}.dump() + "\n";
  return out;
}

inline RunLog runlog_from_jsonl(const std::string& text) {
  RunLog log;
  std::size_t start = 0;
  while (start < text.size()) {
    auto end = text.find('\n', start);
    if (end == std::string::npos) end = text.size();
    std::string line = text.substr(start, end - start);
    start = end + 1;
    if (line.empty()) continue;
    auto j = nlohmann::json::parse(line);
    if (j.contains("best_epoch")) log.best_epoch = j.at("best_epoch").get<int>();
    else log.epochs.push_back(epoch_from_json(j));
  }
  return log;
}

namespace detail {

inline std::vector<TokenSequence> encode_corpus(const Corpus& corpus, const Tokenizer& tok,
                                                int max_len, long long* skipped = nullptr) {
  std::vector<TokenSequence> out;
  out.reserve(corpus.size());
  for (const auto& s : corpus) {
    try {
      out.push_back(tok.encode(s, max_len));
    } catch (const TokenizationGap&) {
      if (skipped) ++*skipped;
    }
  }
  return out;
}

inline double now_seconds() {
  return std::chrono::duration<double>(std::chrono::steady_clock::now().time_since_epoch())
      .count();
}

}  // namespace detail

struct PretrainResult {
  Checkpoint best;
  Checkpoint last;
  RunLog log;
};

// Dynamic-masked MLM pretraining: masking is re-randomized every epoch.
inline PretrainResult pretrain(const Corpus& corpus, const Tokenizer& tokenizer,
                               const TrainRunConfig& cfg) {
  if (corpus.empty()) throw EmptyCorpus("pretrain: empty corpus");
  ModelConfig mc = cfg.model;
  mc.vocab_size = tokenizer.vocab.size();
  TransformerModel model(mc, cfg.seed);
  AdamState opt = AdamState::init(model.params);
  auto seqs = detail::encode_corpus(corpus, tokenizer, cfg.max_len);
  if (seqs.empty()) throw EmptyCorpus("pretrain: no tokenizable strings in corpus");

  PretrainResult res;
  double best_loss = 1e300;
  Rng dropout_rng(cfg.seed ^ 0x5eedD20ULL);
  for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
    double t0 = detail::now_seconds();
    std::uint64_t epoch_seed = hash_combine(cfg.seed, static_cast<std::uint64_t>(epoch));
    auto examples = make_mlm_examples(seqs, tokenizer.vocab, cfg.mlm, epoch_seed);
    std::vector<std::size_t> order(examples.size());
    for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
    Rng shuffle_rng(hash_combine(epoch_seed, 0x0badf00dULL));
    seeded_shuffle(order, shuffle_rng);

    double loss_sum = 0.0;
    long long loss_batches = 0;
    for (std::size_t b0 = 0; b0 < order.size(); b0 += cfg.batch_size) {
      std::size_t b1 = std::min(order.size(), b0 + cfg.batch_size);
      Batch batch;
      batch.size = static_cast<int>(b1 - b0);
      batch.length = cfg.max_len;
      std::vector<int> labels;
      for (std::size_t i = b0; i < b1; ++i) {
        const auto& ex = examples[order[i]];
        batch.ids.insert(batch.ids.end(), ex.input_ids.begin(), ex.input_ids.end());
        batch.mask.insert(batch.mask.end(), ex.attention_mask.begin(),
                          ex.attention_mask.end());
        labels.insert(labels.end(), ex.labels.begin(), ex.labels.end());
      }
      try {
        auto [loss, grads] =
            model.loss_and_grads(batch, labels, TaskMode::Mlm, true, &dropout_rng);
        adam_step(model.params, grads, opt, cfg.adam);
        loss_sum += loss;
        ++loss_batches;
      } catch (const AllPositionsIgnored&) {
        // batch drew no masked positions; skip it
      }
    }
    EpochRecord rec;
    rec.epoch = epoch;
    rec.train_loss = loss_batches ? loss_sum / static_cast<double>(loss_batches) : 0.0;
    rec.wall_seconds = detail::now_seconds() - t0;
    res.log.epochs.push_back(rec);
    if (rec.train_loss < best_loss && loss_batches) {
      best_loss = rec.train_loss;
      res.log.best_epoch = epoch;
      res.best = Checkpoint{mc, model.params, opt, static_cast<long long>(opt.step)};
    }
  }
  res.last = Checkpoint{mc, model.params, opt, static_cast<long long>(opt.step)};
  if (res.log.best_epoch < 0) res.best = res.last;
  return res;
}

// Scores every listed record with P(label=1) from the classifier head.
inline ScoredLabels evaluate_classifier(const TransformerModel& model, const Tokenizer& tokenizer,
                                        const TaskDataset& task,
                                        const std::vector<std::size_t>& indices, int max_len,
                                        int batch_size) {
  ScoredLabels sl;
  for (std::size_t b0 = 0; b0 < indices.size(); b0 += batch_size) {
    std::size_t b1 = std::min(indices.size(), b0 + batch_size);
    std::vector<TokenSequence> seqs;
    for (std::size_t i = b0; i < b1; ++i)
      seqs.push_back(tokenizer.encode(task.records[indices[i]].smiles, max_len));
    auto out = model.forward_classify(Batch::from_sequences(seqs));
    for (std::size_t i = b0; i < b1; ++i) {
      const double* row = &out.logits[(i - b0) * 2];
      double m = std::max(row[0], row[1]);
      double p1 = std::exp(row[1] - m) / (std::exp(row[0] - m) + std::exp(row[1] - m));
      sl.scores.push_back(p1);
      sl.labels.push_back(task.records[indices[i]].label);
    }
  }
  return sl;
}

struct FinetuneResult {
  Checkpoint best;
  RunLog log;
  double test_roc_auc = 0.0;
  double test_prc_auc = 0.0;
};

// Finetunes the encoder + classification head; early stopping on validation
// ROC-AUC (ties favor the earlier epoch); test metrics from the best epoch.
inline FinetuneResult finetune(const Checkpoint& start, const Tokenizer& tokenizer,
                               const TaskDataset& task, const SplitIndices& split,
                               const TrainRunConfig& cfg) {
  if (split.train.empty() || split.valid.empty() || split.test.empty())
    throw EmptySplit("finetune requires non-empty train/valid/test partitions");
  if (start.config.vocab_size != tokenizer.vocab.size())
    throw ConfigMismatch("checkpoint vocab size does not match tokenizer");
  TransformerModel model(start.config, start.params);
  AdamState opt = AdamState::init(model.params);
  Rng dropout_rng(cfg.seed ^ 0xf17e707eULL);

  FinetuneResult res;
  double best_roc = -1.0;
  ParamMap best_params = model.params;
  int since_best = 0;
  const int cap = std::min(cfg.epochs, cfg.finetune_epoch_cap);
  for (int epoch = 0; epoch < cap; ++epoch) {
    double t0 = detail::now_seconds();
    std::vector<std::size_t> order = split.train;
    Rng shuffle_rng(hash_combine(cfg.seed, static_cast<std::uint64_t>(epoch)));
    seeded_shuffle(order, shuffle_rng);
    double loss_sum = 0.0;
    long long batches = 0;
    for (std::size_t b0 = 0; b0 < order.size(); b0 += cfg.batch_size) {
      std::size_t b1 = std::min(order.size(), b0 + cfg.batch_size);
      std::vector<TokenSequence> seqs;
      std::vector<int> labels;
      for (std::size_t i = b0; i < b1; ++i) {
        seqs.push_back(tokenizer.encode(task.records[order[i]].smiles, cfg.max_len));
        labels.push_back(task.records[order[i]].label);
      }
      auto [loss, grads] = model.loss_and_grads(Batch::from_sequences(seqs), labels,
                                                TaskMode::Classify, true, &dropout_rng);
      adam_step(model.params, grads, opt, cfg.adam);
      loss_sum += loss;
      ++batches;
    }
    auto valid_sl = evaluate_classifier(model, tokenizer, task, split.valid, cfg.max_len,
                                        cfg.batch_size);
    double roc, prc;
    try {
      roc = roc_auc(valid_sl);
      prc = prc_auc(valid_sl);
    } catch (const std::runtime_error&) {
      roc = 0.5;  // degenerate single-class validation split
      prc = 0.0;
    }
    EpochRecord rec;
    rec.epoch = epoch;
    rec.train_loss = batches ? loss_sum / static_cast<double>(batches) : 0.0;
    rec.valid_roc_auc = roc;
    rec.valid_prc_auc = prc;
    rec.wall_seconds = detail::now_seconds() - t0;
    res.log.epochs.push_back(rec);
    if (roc > best_roc) {
      best_roc = roc;
      res.log.best_epoch = epoch;
      best_params = model.params;
      since_best = 0;
    } else {
      ++since_best;
      if (since_best >= cfg.patience) break;
    }
  }
  res.best = Checkpoint{start.config, best_params, std::nullopt, 0};
  TransformerModel best_model(start.config, best_params);
  auto test_sl =
      evaluate_classifier(best_model, tokenizer, task, split.test, cfg.max_len, cfg.batch_size);
  try {
    res.test_roc_auc = roc_auc(test_sl);
    res.test_prc_auc = prc_auc(test_sl);
  } catch (const std::runtime_error&) {
    res.test_roc_auc = 0.5;
    res.test_prc_auc = 0.0;
  }
  return res;
}

struct ScalingRow {
  std::size_t subset_size = 0;
  double test_roc_auc = 0.0;
  double test_prc_auc = 0.0;
  double delta_roc_auc = 0.0;  // vs. smallest subset
  double delta_prc_auc = 0.0;
};

struct ScalingReport {
  std::vector<ScalingRow> rows;
};

// Pretrain on each nested subset, finetune on a fixed task, report AUCs and
// deltas against the smallest subset.
inline ScalingReport scaling_experiment(const std::vector<Corpus>& subsets,
                                        const Tokenizer& tokenizer, const TaskDataset& task,
                                        const SplitIndices& split, const TrainRunConfig& pre_cfg,
                                        const TrainRunConfig& fine_cfg) {
  if (subsets.size() < 2) throw std::invalid_argument("scaling_experiment needs >= 2 subsets");
  ScalingReport rep;
  for (const auto& sub : subsets) {
    auto pre = pretrain(sub, tokenizer, pre_cfg);
    auto fine = finetune(pre.last, tokenizer, task, split, fine_cfg);
    ScalingRow row;
    row.subset_size = sub.size();
    row.test_roc_auc = fine.test_roc_auc;
    row.test_prc_auc = fine.test_prc_auc;
    rep.rows.push_back(row);
  }
  for (auto& row : rep.rows) {
    row.delta_roc_auc = row.test_roc_auc - rep.rows.front().test_roc_auc;
    row.delta_prc_auc = row.test_prc_auc - rep.rows.front().test_prc_auc;
  }
  return rep;
}

}  // namespace chemlm
