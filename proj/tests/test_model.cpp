// Copyright 2026 the chemlm authors
// SPDX-License-Identifier: Apache-2.0
#include <doctest.h>

#include <cstdio>
#include <filesystem>

#include "chemlm/checkpoint.hpp"
#include "chemlm/model.hpp"
#include "chemlm/optimizer.hpp"
#include "fixtures.hpp"

using namespace chemlm;

namespace {

ModelConfig tiny_config(int vocab) {
  ModelConfig c;
  c.n_layers = 2;
  c.n_heads = 2;
  c.d_model = 8;
  c.d_ff = 16;
  c.vocab_size = vocab;
  c.max_positions = 32;
  c.dropout_rate = 0.0;
  return c;
}

struct TinySetup {
  Tokenizer tok;
  TransformerModel model;
  Batch batch;
};

TinySetup tiny_setup(std::uint64_t seed, int max_len = 12) {
  auto corpus = fixtures::fixture_corpus(30, 61);
  TinySetup s{train_regex_tokenizer(corpus), TransformerModel{}, Batch{}};
  s.model = TransformerModel(tiny_config(s.tok.vocab.size()), seed);
  std::vector<TokenSequence> seqs;
  for (int i = 0; i < 3; ++i)
    seqs.push_back(encode_for_model(s.tok.tokenize(corpus[i]), s.tok.vocab, max_len));
  s.batch = Batch::from_sequences(seqs);
  return s;
}

// Central finite difference of the scalar loss with respect to one weight.
double numeric_grad(TransformerModel& m, const Batch& b, const std::vector<int>& labels,
                    TaskMode mode, const std::string& tensor, std::size_t idx) {
  const double eps = 1e-5;
  double& w = m.params.at(tensor).v[idx];
  const double orig = w;
  w = orig + eps;
  double lp = m.loss_and_grads(b, labels, mode).first;
  w = orig - eps;
  double lm = m.loss_and_grads(b, labels, mode).first;
  w = orig;
  return (lp - lm) / (2.0 * eps);
}

}  // namespace

TEST_CASE("config validation and json round trip") {
  ModelConfig c = tiny_config(20);
  CHECK_NOTHROW(c.validate());
  CHECK(c.attention_mechanisms() == 4);
  ModelConfig back = config_from_json(config_to_json(c));
  CHECK(back == c);

  ModelConfig bad = c;
  bad.d_model = 10;  // not divisible by 2 heads? 10 % 2 == 0, use 3 heads
  bad.n_heads = 3;
  CHECK_THROWS_AS(bad.validate(), ShapeMismatch);
  bad = c;
  bad.vocab_size = 0;
  CHECK_THROWS_AS(bad.validate(), ShapeMismatch);
  bad = c;
  bad.max_positions = 1024;
  CHECK_THROWS_AS(bad.validate(), ShapeMismatch);
}

TEST_CASE("gelu matches its derivative numerically") {
  for (double x : {-3.0, -1.0, -0.1, 0.0, 0.5, 2.0}) {
    double eps = 1e-6;
    double num = (nn::gelu(x + eps) - nn::gelu(x - eps)) / (2 * eps);
    CHECK(nn::gelu_grad(x) == doctest::Approx(num).epsilon(1e-6));
  }
  CHECK(nn::gelu(0.0) == 0.0);
  CHECK(nn::gelu(10.0) == doctest::Approx(10.0));
}

TEST_CASE("init_params shapes and init statistics") {
  ModelConfig c = tiny_config(20);
  ParamMap p = init_params(c, 7);
  CHECK(p.at("embed.token").shape == std::vector<int>{20, 8});
  CHECK(p.at("embed.position").shape == std::vector<int>{32, 8});
  CHECK(p.at("layer1.ffn.w1").shape == std::vector<int>{8, 16});
  CHECK(p.at("mlm.w").shape == std::vector<int>{8, 20});
  CHECK(p.at("cls.w").shape == std::vector<int>{8, 2});
  for (double g : p.at("layer0.ln1.gamma").v) CHECK(g == 1.0);
  for (double b : p.at("layer0.attn.bq").v) CHECK(b == 0.0);
  // truncation bound
  for (double w : p.at("embed.token").v) CHECK(std::abs(w) <= 2.0 * kInitStd);
  // seeded determinism
  ParamMap q = init_params(c, 7);
  CHECK(p.at("embed.token").v == q.at("embed.token").v);
  ParamMap r = init_params(c, 8);
  CHECK(p.at("embed.token").v != r.at("embed.token").v);
}

TEST_CASE("batch construction") {
  TokenSequence a{{2, 5, 3, 0}, {1, 1, 1, 0}, false};
  TokenSequence b{{2, 6, 7, 3}, {1, 1, 1, 1}, false};
  Batch batch = Batch::from_sequences({a, b});
  CHECK(batch.size == 2);
  CHECK(batch.length == 4);
  TokenSequence ragged{{2, 3}, {1, 1}, false};
  CHECK_THROWS_AS(Batch::from_sequences({a, ragged}), ShapeMismatch);
}

TEST_CASE("attention rows are stochastic and capture is trimmed") {
  auto s = tiny_setup(11);
  auto out = s.model.forward_mlm(s.batch, true);
  REQUIRE(out.attention.size() ==
          static_cast<std::size_t>(s.model.cfg.attention_mechanisms()));
  int real = 0;
  for (int j = 0; j < s.batch.length; ++j) real += s.batch.mask[j];
  for (const auto& rec : out.attention) {
    CHECK(rec.matrix.size() == static_cast<std::size_t>(real));
    for (const auto& row : rec.matrix) {
      double sum = 0.0;
      for (double a : row) {
        CHECK(a >= 0.0);
        sum += a;
      }
      CHECK(sum == doctest::Approx(1.0).epsilon(1e-9));
    }
  }
}

TEST_CASE("forward rejects bad input") {
  auto s = tiny_setup(13);
  Batch bad = s.batch;
  bad.ids[1] = s.model.cfg.vocab_size;  // out of range
  CHECK_THROWS_AS(s.model.forward_mlm(bad), ShapeMismatch);

  std::vector<TokenSequence> long_seq{
      TokenSequence{std::vector<int>(40, 0), std::vector<int>(40, 1), false}};
  CHECK_THROWS_AS(s.model.forward_mlm(Batch::from_sequences(long_seq)), ShapeMismatch);
}

TEST_CASE("mlm gradients match finite differences") {
  auto s = tiny_setup(17);
  std::vector<int> labels(s.batch.ids.size(), kIgnoreLabel);
  // mask a few real positions
  Rng rng(3);
  for (std::size_t i = 0; i < labels.size(); ++i)
    if (s.batch.mask[i] == 1 && rand_below(rng, 3) == 0) labels[i] = s.batch.ids[i];
  auto [loss, grads] = s.model.loss_and_grads(s.batch, labels, TaskMode::Mlm);
  CHECK(loss > 0.0);
  Rng pick(9);
  for (const auto& [name, g] : grads) {
    // probe two random coordinates per tensor
    for (int probe = 0; probe < 2; ++probe) {
      std::size_t idx = rand_below(pick, g.v.size());
      double num = numeric_grad(s.model, s.batch, labels, TaskMode::Mlm, name, idx);
      double ana = g.v[idx];
      // floor the denominator at the finite-difference noise scale so
      // near-zero coordinates are held to an absolute 1e-8 instead of
      // amplifying roundoff
      double denom = std::max({std::abs(num), std::abs(ana), 1e-3});
      CHECK(std::abs(num - ana) / denom <= 1e-5);
    }
  }
}

TEST_CASE("classify gradients match finite differences") {
  auto s = tiny_setup(19);
  std::vector<int> labels = {1, 0, 1};
  auto [loss, grads] = s.model.loss_and_grads(s.batch, labels, TaskMode::Classify);
  CHECK(loss > 0.0);
  Rng pick(29);
  for (const auto& [name, g] : grads) {
    for (int probe = 0; probe < 2; ++probe) {
      std::size_t idx = rand_below(pick, g.v.size());
      double num = numeric_grad(s.model, s.batch, labels, TaskMode::Classify, name, idx);
      double ana = g.v[idx];
      // floor the denominator at the finite-difference noise scale so
      // near-zero coordinates are held to an absolute 1e-8 instead of
      // amplifying roundoff
      double denom = std::max({std::abs(num), std::abs(ana), 1e-3});
      CHECK(std::abs(num - ana) / denom <= 1e-5);
    }
  }
}

TEST_CASE("mlm with nothing to predict throws") {
  auto s = tiny_setup(23);
  std::vector<int> labels(s.batch.ids.size(), kIgnoreLabel);
  CHECK_THROWS_AS(s.model.loss_and_grads(s.batch, labels, TaskMode::Mlm), AllPositionsIgnored);
  CHECK_THROWS_AS(s.model.loss_and_grads(s.batch, {1, 0}, TaskMode::Classify), ShapeMismatch);
}

TEST_CASE("padding does not leak into real positions") {
  auto corpus = fixtures::fixture_corpus(30, 61);
  auto tok = train_regex_tokenizer(corpus);
  TransformerModel model(tiny_config(tok.vocab.size()), 31);

  auto short_seq = encode_for_model(tok.tokenize(corpus[0]), tok.vocab, 12);
  auto long_seq = encode_for_model(tok.tokenize(corpus[0]), tok.vocab, 20);
  Batch bs = Batch::from_sequences({short_seq});
  Batch bl = Batch::from_sequences({long_seq});

  auto cs = model.forward_classify(bs);
  auto cl = model.forward_classify(bl);
  CHECK(cs.logits[0] == doctest::Approx(cl.logits[0]).epsilon(1e-12));
  CHECK(cs.logits[1] == doctest::Approx(cl.logits[1]).epsilon(1e-12));

  auto ms = model.forward_mlm(bs);
  auto ml = model.forward_mlm(bl);
  const int V = model.cfg.vocab_size;
  for (int i = 0; i < 12; ++i) {
    if (bs.mask[i] == 0) continue;
    for (int k = 0; k < V; ++k)
      CHECK(ms.logits[static_cast<std::size_t>(i) * V + k] ==
            doctest::Approx(ml.logits[static_cast<std::size_t>(i) * V + k]).epsilon(1e-12));
  }
}

TEST_CASE("all-pad row stays finite") {
  auto s = tiny_setup(37);
  std::vector<TokenSequence> seqs{
      TokenSequence{std::vector<int>(8, kPadId), std::vector<int>(8, 0), false}};
  Batch b = Batch::from_sequences(seqs);
  auto out = s.model.forward_classify(b);
  for (double x : out.logits) CHECK(std::isfinite(x));
  // and gradients flow without NaN
  auto [loss, grads] = s.model.loss_and_grads(b, {0}, TaskMode::Classify);
  CHECK(std::isfinite(loss));
  for (const auto& [name, t] : grads) CHECK_NOTHROW(check_finite(t, name));
}

TEST_CASE("dropout is active only in training mode") {
  auto s = tiny_setup(41);
  s.model.cfg.dropout_rate = 0.5;
  Rng r1(1), r2(2);
  auto a = s.model.forward_mlm(s.batch, false, true, &r1);
  auto b = s.model.forward_mlm(s.batch, false, true, &r2);
  CHECK(a.logits != b.logits);
  auto c = s.model.forward_mlm(s.batch, false, false, &r1);
  auto d = s.model.forward_mlm(s.batch);
  CHECK(c.logits == d.logits);
}

TEST_CASE("adam optimizes a quadratic and is deterministic") {
  ParamMap p;
  p.emplace("x", Tensor({1, 3}));
  p.at("x").v = {5.0, -4.0, 2.0};
  AdamState st = AdamState::init(p);
  AdamHyper hy;
  hy.lr = 0.1;
  for (int it = 0; it < 400; ++it) {
    ParamMap g = zeros_like(p);
    for (int k = 0; k < 3; ++k) g.at("x").v[k] = 2.0 * p.at("x").v[k];
    adam_step(p, g, st, hy);
  }
  for (double x : p.at("x").v) CHECK(std::abs(x) < 1e-3);
  CHECK(st.step == 400);

  ParamMap bad_grads;
  bad_grads.emplace("x", Tensor({1, 2}));
  CHECK_THROWS_AS(adam_step(p, bad_grads, st, hy), ShapeMismatch);
}

TEST_CASE("checkpoint round trip is bit-exact") {
  auto path = (std::filesystem::temp_directory_path() / "chemlm_ck.bin").string();
  ModelConfig c = tiny_config(25);
  Checkpoint ck;
  ck.config = c;
  ck.params = init_params(c, 3);
  ck.optimizer = AdamState::init(ck.params);
  ck.optimizer->step = 5;
  ck.optimizer->m.at("mlm.w").v[0] = 0.25;
  ck.step = 42;
  save_checkpoint(path, ck);
  Checkpoint back = load_checkpoint(path, c);
  CHECK(back.config == c);
  CHECK(back.step == 42);
  REQUIRE(back.optimizer.has_value());
  CHECK(back.optimizer->step == 5);
  CHECK(back.optimizer->m.at("mlm.w").v == ck.optimizer->m.at("mlm.w").v);
  for (const auto& [name, t] : ck.params) CHECK(back.params.at(name).v == t.v);
  std::remove(path.c_str());
}

TEST_CASE("checkpoint without optimizer state") {
  auto path = (std::filesystem::temp_directory_path() / "chemlm_ck2.bin").string();
  ModelConfig c = tiny_config(25);
  Checkpoint ck{c, init_params(c, 4), std::nullopt, 1};
  save_checkpoint(path, ck);
  Checkpoint back = load_checkpoint(path);
  CHECK_FALSE(back.optimizer.has_value());
  std::remove(path.c_str());
}

TEST_CASE("checkpoint corruption and mismatch are typed errors") {
  auto path = (std::filesystem::temp_directory_path() / "chemlm_ck3.bin").string();
  ModelConfig c = tiny_config(25);
  Checkpoint ck{c, init_params(c, 5), std::nullopt, 0};
  save_checkpoint(path, ck);

  ModelConfig other = c;
  other.d_ff = 32;
  CHECK_THROWS_AS(load_checkpoint(path, other), ConfigMismatch);

  // flip the magic
  {
    std::fstream f(path, std::ios::in | std::ios::out | std::ios::binary);
    f.put('X');
  }
  CHECK_THROWS_AS(load_checkpoint(path), CorruptCheckpoint);

  // truncate the payload
  save_checkpoint(path, ck);
  auto sz = std::filesystem::file_size(path);
  std::filesystem::resize_file(path, sz - 16);
  CHECK_THROWS_AS(load_checkpoint(path), CorruptCheckpoint);

  CHECK_THROWS_AS(load_checkpoint("/no/such/file.bin"), IoFailure);
  std::remove(path.c_str());
}
