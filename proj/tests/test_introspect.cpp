// Copyright 2026 the chemlm authors
// SPDX-License-Identifier: Apache-2.0
#include <doctest.h>

#include "chemlm/introspect.hpp"
#include "fixtures.hpp"

using namespace chemlm;

namespace {

struct Setup {
  Tokenizer tok;
  TransformerModel model;
};

Setup make_setup(std::uint64_t seed) {
  auto corpus = fixtures::fixture_corpus(40, 151);
  Setup s{train_regex_tokenizer(corpus), TransformerModel{}};
  ModelConfig mc;
  mc.n_layers = 2;
  mc.n_heads = 2;
  mc.d_model = 16;
  mc.d_ff = 32;
  mc.max_positions = 64;
  mc.dropout_rate = 0.0;
  mc.vocab_size = s.tok.vocab.size();
  s.model = TransformerModel(mc, seed);
  return s;
}

}  // namespace

TEST_CASE("token_spans tile the input") {
  std::string input = "CC(=O)O";
  auto spans = token_spans(input, regex_tokenize(input));
  REQUIRE(spans.size() == 9);  // bos + 7 tokens + eos
  CHECK(spans.front() == std::pair<int, int>{0, 0});
  CHECK(spans.back() == std::pair<int, int>{7, 7});
  int pos = 0;
  for (std::size_t i = 1; i + 1 < spans.size(); ++i) {
    CHECK(spans[i].first == pos);
    pos = spans[i].second;
  }
  CHECK(pos == static_cast<int>(input.size()));

  auto bracket = token_spans("C[C@@H]N", regex_tokenize("C[C@@H]N"));
  CHECK(bracket[2] == std::pair<int, int>{1, 7});  // the bracket atom is one token
}

TEST_CASE("export_attention covers all mechanisms and aligns tokens") {
  Setup s = make_setup(3);
  std::string mol = "CC(=O)O";
  AttentionExport ex = export_attention(s.model, s.tok, mol);
  CHECK(ex.input == mol);
  REQUIRE(ex.attention.size() == 4);  // 2 layers x 2 heads
  CHECK(ex.tokens.size() == regex_tokenize(mol).size() + 2);
  CHECK(ex.tokens.front() == kBosToken);
  CHECK(ex.tokens.back() == kEosToken);
  CHECK(ex.spans.size() == ex.tokens.size());
  for (const auto& rec : ex.attention) {
    REQUIRE(rec.matrix.size() == ex.tokens.size());
    for (const auto& row : rec.matrix) {
      double sum = 0.0;
      for (double a : row) sum += a;
      CHECK(sum == doctest::Approx(1.0).epsilon(1e-9));
    }
  }
}

TEST_CASE("export_attention layer and head selection") {
  Setup s = make_setup(5);
  AttentionExport one = export_attention(s.model, s.tok, "CCO", 1, 0);
  REQUIRE(one.attention.size() == 1);
  CHECK(one.attention[0].layer == 1);
  CHECK(one.attention[0].head == 0);
  AttentionExport layer = export_attention(s.model, s.tok, "CCO", 0, -1);
  CHECK(layer.attention.size() == 2);
}

TEST_CASE("attention export json schema") {
  Setup s = make_setup(7);
  AttentionExport ex = export_attention(s.model, s.tok, "C=O");
  nlohmann::json j = attention_export_to_json(ex);
  CHECK(j.at("input") == "C=O");
  CHECK(j.at("tokens").size() == 5);
  CHECK(j.at("spans").size() == 5);
  REQUIRE(j.at("attention").size() == 4);
  const auto& rec = j.at("attention")[0];
  CHECK(rec.contains("layer"));
  CHECK(rec.contains("head"));
  CHECK(rec.at("matrix").size() == 5);
  // deterministic serialization
  AttentionExport ex2 = export_attention(s.model, s.tok, "C=O");
  CHECK(attention_export_to_json(ex2).dump() == j.dump());
}

TEST_CASE("bracket_diagnostic matches parentheses") {
  Setup s = make_setup(9);
  AttentionExport ex = export_attention(s.model, s.tok, "CC(=O)C(N)O");
  auto diags = bracket_diagnostic(ex);
  REQUIRE(diags.size() == ex.attention.size());
  for (const auto& d : diags) {
    CHECK(d.pair_count == 2);
    CHECK(d.mean_close_to_open >= 0.0);
    CHECK(d.mean_close_to_open <= 1.0);
  }
  // hand check against the first matrix: tokens are
  // <s> C C ( = O ) C ( N ) O </s>; pairs are (6,3) and (10,8)
  double expect =
      0.5 * (ex.attention[0].matrix[6][3] + ex.attention[0].matrix[10][8]);
  CHECK(diags[0].mean_close_to_open == doctest::Approx(expect).epsilon(1e-12));

  AttentionExport plain = export_attention(s.model, s.tok, "CCO");
  for (const auto& d : bracket_diagnostic(plain)) {
    CHECK(d.pair_count == 0);
    CHECK(d.mean_close_to_open == 0.0);
  }
}

TEST_CASE("attention heatmap svg is well formed") {
  Setup s = make_setup(11);
  AttentionExport ex = export_attention(s.model, s.tok, "C[C@@H](N)O");
  std::string svg = attention_heatmap_svg(ex.attention[0], ex.tokens);
  CHECK(svg.rfind("<svg", 0) == 0);
  CHECK(svg.find("</svg>") != std::string::npos);
  // one rect per matrix cell
  std::size_t rects = 0, at = 0;
  while ((at = svg.find("<rect", at)) != std::string::npos) {
    ++rects;
    at += 5;
  }
  std::size_t n = ex.attention[0].matrix.size();
  CHECK(rects == n * n);
  // sentinel labels are escaped, never raw
  CHECK(svg.find("&lt;s&gt;") != std::string::npos);
  CHECK(svg.find("<s>") == std::string::npos);
  // deterministic
  CHECK(attention_heatmap_svg(ex.attention[0], ex.tokens) == svg);
}

TEST_CASE("export truncates overlong molecules at max_positions") {
  Setup s = make_setup(13);
  std::string mol(200, 'C');  // 200 tokens + sentinels > 64 positions
  AttentionExport ex = export_attention(s.model, s.tok, mol);
  CHECK(ex.tokens.size() == 64);
  CHECK(ex.spans.size() == 64);
  for (const auto& rec : ex.attention) CHECK(rec.matrix.size() == 64);
}
