// Copyright 2026 the chemlm authors
// SPDX-License-Identifier: Apache-2.0
//
// Structured attention export: per-molecule matrices aligned to tokens,
// static SVG heatmaps, and the bracket-closure diagnostic.
#pragma once

#include <algorithm>
#include <string>
#include <vector>

#include <json.hpp>

#include "chemlm/model.hpp"
#include "chemlm/tokenize.hpp"

namespace chemlm {

struct AttentionExport {
  std::string input;
  std::vector<std::string> tokens;              // with bos/eos sentinels
  std::vector<std::pair<int, int>> spans;       // [start, end) into input, per token
  std::vector<AttentionRecord> attention;
};

// Character spans of regex tokens tile the input exactly; bos/eos map to
// empty spans at the string edges.
inline std::vector<std::pair<int, int>> token_spans(const std::string& input,
                                                    const std::vector<std::string>& raw_tokens) {
  std::vector<std::pair<int, int>> spans;
  spans.push_back({0, 0});  // bos
  int pos = 0;
  for (const auto& t : raw_tokens) {
    spans.push_back({pos, pos + static_cast<int>(t.size())});
    pos += static_cast<int>(t.size());
  }
  spans.push_back({pos, pos});  // eos
  return spans;
}

inline nlohmann::json attention_export_to_json(const AttentionExport& ex) {
  nlohmann::json j;
  j["input"] = ex.input;
  j["tokens"] = ex.tokens;
  nlohmann::json spans = nlohmann::json::array();
  for (auto [a, b] : ex.spans) spans.push_back({a, b});
  j["spans"] = std::move(spans);
  nlohmann::json att = nlohmann::json::array();
  for (const auto& rec : ex.attention)
    att.push_back({{"layer", rec.layer}, {"head", rec.head}, {"matrix", rec.matrix}});
  j["attention"] = std::move(att);
  return j;
}

// Mean attention mass flowing from each ")" token to its matching "(",
// reported per head. Matching is computed on the token stream.
struct BracketDiagnostic {
  int layer = 0;
  int head = 0;
  double mean_close_to_open = 0.0;  // averaged over ")" tokens; 0 when none
  int pair_count = 0;
};

inline std::vector<BracketDiagnostic> bracket_diagnostic(const AttentionExport& ex) {
  std::vector<int> open_stack;
  std::vector<std::pair<int, int>> pairs;  // (close index, open index) in token space
  for (int i = 0; i < static_cast<int>(ex.tokens.size()); ++i) {
    if (ex.tokens[i] == "(") open_stack.push_back(i);
    if (ex.tokens[i] == ")" && !open_stack.empty()) {
      pairs.push_back({i, open_stack.back()});
      open_stack.pop_back();
    }
  }
  std::vector<BracketDiagnostic> out;
  for (const auto& rec : ex.attention) {
    BracketDiagnostic d;
    d.layer = rec.layer;
    d.head = rec.head;
    d.pair_count = static_cast<int>(pairs.size());
    double sum = 0.0;
    int used = 0;
    const int n = static_cast<int>(rec.matrix.size());
    for (auto [close, open] : pairs) {
      if (close < n && open < n) {
        sum += rec.matrix[close][open];
        ++used;
      }
    }
    d.mean_close_to_open = used ? sum / used : 0.0;
    out.push_back(d);
  }
  return out;
}

// Standalone SVG heatmap with token labels on both axes.
inline std::string attention_heatmap_svg(const AttentionRecord& rec,
                                         const std::vector<std::string>& tokens) {
  const int n = static_cast<int>(rec.matrix.size());
  const int cell = 22, margin = 70;
  const int size = margin + n * cell + 10;
  auto esc = [](const std::string& s) {
    std::string o;
    for (char c : s) {
      if (c == '<') o += "&lt;";
      else if (c == '>') o += "&gt;";
      else if (c == '&') o += "&amp;";
      else o += c;
    }
    return o;
  };
  std::string svg = "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" + std::to_string(size) +
                    "\" height=\"" + std::to_string(size) + "\">\n";
  svg += "<text x=\"4\" y=\"14\" font-size=\"11\">layer " + std::to_string(rec.layer) +
         " head " + std::to_string(rec.head) + "</text>\n";
  for (int i = 0; i < n; ++i) {
    for (int j = 0; j < n; ++j) {
      double a = std::clamp(rec.matrix[i][j], 0.0, 1.0);
      int shade = static_cast<int>(255.0 * (1.0 - a));
      svg += "<rect x=\"" + std::to_string(margin + j * cell) + "\" y=\"" +
             std::to_string(margin + i * cell) + "\" width=\"" + std::to_string(cell) +
             "\" height=\"" + std::to_string(cell) + "\" fill=\"rgb(" + std::to_string(shade) +
             "," + std::to_string(shade) + ",255)\"/>\n";
    }
  }
  for (int i = 0; i < n && i < static_cast<int>(tokens.size()); ++i) {
    std::string t = esc(tokens[i]);
    svg += "<text x=\"" + std::to_string(margin - 6) + "\" y=\"" +
           std::to_string(margin + i * cell + cell / 2 + 4) +
           "\" font-size=\"10\" text-anchor=\"end\">" + t + "</text>\n";
    svg += "<text x=\"" + std::to_string(margin + i * cell + cell / 2) + "\" y=\"" +
           std::to_string(margin - 6) + "\" font-size=\"10\" text-anchor=\"middle\">" + t +
           "</text>\n";
  }
  svg += "</svg>\n";
  return svg;
}

// Runs the model over one molecule (regex tokenization) and collects every
// requested layer/head matrix; layer/head < 0 selects all.
inline AttentionExport export_attention(const TransformerModel& model, const Tokenizer& tokenizer,
                                        const std::string& molecule, int layer_sel = -1,
                                        int head_sel = -1) {
  auto raw = regex_tokenize(molecule);
  int max_len = std::min(model.cfg.max_positions, static_cast<int>(raw.size()) + 2);
  TokenSequence seq = encode_for_model(raw, tokenizer.vocab, std::max(3, max_len));
  Batch batch = Batch::from_sequences({seq});
  auto out = model.forward_mlm(batch, true);
  AttentionExport ex;
  ex.input = molecule;
  ex.tokens.push_back(kBosToken);
  for (const auto& t : raw) ex.tokens.push_back(t);
  ex.tokens.push_back(kEosToken);
  if (seq.overflow) ex.tokens.resize(static_cast<std::size_t>(seq.real_length()));
  ex.spans = token_spans(molecule, raw);
  if (seq.overflow) ex.spans.resize(ex.tokens.size());
  for (auto& rec : out.attention) {
    if (layer_sel >= 0 && rec.layer != layer_sel) continue;
    if (head_sel >= 0 && rec.head != head_sel) continue;
    ex.attention.push_back(std::move(rec));
  }
  return ex;
}

}  // namespace chemlm
