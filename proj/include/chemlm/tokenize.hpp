// Copyright 2026 the chemlm authors
// SPDX-License-Identifier: Apache-2.0
//
// The two tokenization strategies behind one interface: a regex-style
// SMILES tokenizer and a trainable character-level byte-pair encoder.
#pragma once

#include <algorithm>
#include <cstdint>
#include <map>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

#include <json.hpp>

namespace chemlm {

struct TokenizationGap : std::runtime_error {
  using std::runtime_error::runtime_error;
};
struct EmptyCorpus : std::runtime_error {
  using std::runtime_error::runtime_error;
};
struct VocabError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// The published reaction-SMILES tokenization pattern, pinned verbatim.
// The scanner below implements exactly this alternation; tests cross-check
// it against a regex engine running this constant.
inline constexpr const char* kSmilesTokenPattern =
    R"((\[[^\]]+]|Br?|Cl?|N|O|S|P|F|I|b|c|n|o|s|p|\(|\)|\.|=|#|-|\+|\\|\/|:|~|@|\?|>|\*|\$|%[0-9]{2}|[0-9]))";

// Lossless SMILES tokenization: every character of the input is consumed by
// exactly one token, or TokenizationGap is thrown.
inline std::vector<std::string> regex_tokenize(std::string_view s) {
  std::vector<std::string> out;
  std::size_t i = 0;
  auto gap = [&](std::size_t at) {
    throw TokenizationGap("no token match at offset " + std::to_string(at) + " in \"" +
                          std::string(s) + "\"");
  };
  while (i < s.size()) {
    char c = s[i];
    if (c == '[') {
      auto close = s.find(']', i + 1);
      if (close == std::string_view::npos || close == i + 1) gap(i);
      out.emplace_back(s.substr(i, close - i + 1));
      i = close + 1;
    } else if (c == 'B') {
      if (i + 1 < s.size() && s[i + 1] == 'r') {
        out.emplace_back("Br");
        i += 2;
      } else {
        out.emplace_back("B");
        ++i;
      }
    } else if (c == 'C') {
      if (i + 1 < s.size() && s[i + 1] == 'l') {
        out.emplace_back("Cl");
        i += 2;
      } else {
        out.emplace_back("C");
        ++i;
      }
    } else if (c == '%') {
      if (i + 2 < s.size() && s[i + 1] >= '0' && s[i + 1] <= '9' && s[i + 2] >= '0' &&
          s[i + 2] <= '9') {
        out.emplace_back(s.substr(i, 3));
        i += 3;
      } else {
        gap(i);
      }
    } else {
      static constexpr std::string_view singles = "NOSPFIbcnosp().=#-+\\/:~@?>*$0123456789";
      if (singles.find(c) != std::string_view::npos) {
        out.emplace_back(1, c);
        ++i;
      } else {
        gap(i);
      }
    }
  }
  return out;
}

// Reserved special-token ids; stable across checkpoints.
inline constexpr int kPadId = 0;
inline constexpr int kUnkId = 1;
inline constexpr int kBosId = 2;
inline constexpr int kEosId = 3;
inline constexpr int kMaskId = 4;
inline constexpr int kNumSpecialTokens = 5;
inline constexpr int kMaxVocabSize = 52000;

inline const char* kPadToken = "<pad>";
inline const char* kUnkToken = "<unk>";
inline const char* kBosToken = "<s>";
inline const char* kEosToken = "</s>";
inline const char* kMaskToken = "<mask>";

struct Vocab {
  std::map<std::string, int> token_to_id;
  std::vector<std::string> id_to_token;

  Vocab() {
    for (const char* t : {kPadToken, kUnkToken, kBosToken, kEosToken, kMaskToken}) add(t);
  }

  int add(const std::string& token) {
    auto it = token_to_id.find(token);
    if (it != token_to_id.end()) return it->second;
    if (static_cast<int>(id_to_token.size()) >= kMaxVocabSize)
      throw VocabError("vocab size cap exceeded");
    int id = static_cast<int>(id_to_token.size());
    token_to_id.emplace(token, id);
    id_to_token.push_back(token);
    return id;
  }

  int size() const { return static_cast<int>(id_to_token.size()); }

  int id_or_unk(const std::string& token) const {
    auto it = token_to_id.find(token);
    return it == token_to_id.end() ? kUnkId : it->second;
  }

  const std::string& token(int id) const {
    if (id < 0 || id >= size()) throw VocabError("token id out of range");
    return id_to_token[id];
  }

  bool is_special(int id) const { return id < kNumSpecialTokens; }
};

using MergePair = std::pair<std::string, std::string>;

struct BpeMerges {
  std::vector<MergePair> merges;  // training priority order
};

// Builds a vocab from already-tokenized text (regex tokenizer path): tokens
// ordered by descending frequency, ties by token string.
inline Vocab build_vocab(const std::vector<std::vector<std::string>>& token_streams,
                         int max_size = kMaxVocabSize) {
  std::map<std::string, long long> counts;
  for (const auto& toks : token_streams)
    for (const auto& t : toks) ++counts[t];
  std::vector<std::pair<long long, std::string>> order;
  order.reserve(counts.size());
  for (const auto& [t, c] : counts) order.push_back({-c, t});
  std::sort(order.begin(), order.end());
  Vocab v;
  for (const auto& [negc, t] : order) {
    if (v.size() >= max_size) break;
    v.add(t);
  }
  return v;
}

namespace detail {

// Replaces every (leftmost-first, non-overlapping) occurrence of the pair.
inline void apply_merge(std::vector<std::string>& seq, const MergePair& m) {
  std::vector<std::string> out;
  out.reserve(seq.size());
  std::size_t i = 0;
  while (i < seq.size()) {
    if (i + 1 < seq.size() && seq[i] == m.first && seq[i + 1] == m.second) {
      out.push_back(m.first + m.second);
      i += 2;
    } else {
      out.push_back(std::move(seq[i]));
      ++i;
    }
  }
  seq = std::move(out);
}

}  // namespace detail

// Character-level BPE training. Greedy highest-count pair per round; ties
// broken by lexicographically smallest (left, right). Deterministic.
inline std::pair<Vocab, BpeMerges> bpe_train(const std::vector<std::string>& corpus,
                                             int target_vocab_size) {
  if (corpus.empty()) throw EmptyCorpus("bpe_train: empty corpus");
  std::vector<std::vector<std::string>> seqs;
  seqs.reserve(corpus.size());
  std::map<std::string, long long> base;
  for (const auto& s : corpus) {
    std::vector<std::string> seq;
    seq.reserve(s.size());
    for (char c : s) {
      seq.emplace_back(1, c);
      ++base[seq.back()];
    }
    seqs.push_back(std::move(seq));
  }
  Vocab vocab;
  for (const auto& [t, c] : base) vocab.add(t);
  if (target_vocab_size <= vocab.size())
    throw VocabError("target vocab size must exceed base alphabet + specials");

  BpeMerges merges;
  while (vocab.size() < target_vocab_size) {
    std::map<MergePair, long long> pair_counts;
    for (const auto& seq : seqs)
      for (std::size_t i = 0; i + 1 < seq.size(); ++i)
        ++pair_counts[{seq[i], seq[i + 1]}];
    if (pair_counts.empty()) break;
    MergePair best;
    long long best_count = 0;
    for (const auto& [p, c] : pair_counts) {
      if (c > best_count) {  // map order = lexicographic, first max wins ties
        best = p;
        best_count = c;
      }
    }
    if (best_count < 2) break;  // no pair worth a vocab slot
    merges.merges.push_back(best);
    vocab.add(best.first + best.second);
    for (auto& seq : seqs) detail::apply_merge(seq, best);
  }
  return {std::move(vocab), std::move(merges)};
}

// Applies merges in priority order until fixed point. Tokens not in the
// vocab are kept as raw characters and map to unk at id-conversion time.
inline std::vector<std::string> bpe_encode(std::string_view s, const BpeMerges& merges) {
  std::vector<std::string> seq;
  seq.reserve(s.size());
  for (char c : s) seq.emplace_back(1, c);
  for (const auto& m : merges.merges) detail::apply_merge(seq, m);
  return seq;
}

struct TokenSequence {
  std::vector<int> ids;
  std::vector<int> attention_mask;
  bool overflow = false;

  int real_length() const {
    int n = 0;
    for (int m : attention_mask) n += m;
    return n;
  }
};

inline constexpr int kMaxSequenceLength = 512;

// Adds bos/eos, truncates to max_len (overflow flag), pads with pad id.
inline TokenSequence encode_for_model(const std::vector<std::string>& tokens, const Vocab& vocab,
                                      int max_len) {
  if (max_len < 3) throw std::invalid_argument("max_len must be >= 3");
  TokenSequence ts;
  ts.ids.reserve(max_len);
  ts.ids.push_back(kBosId);
  std::size_t keep = tokens.size();
  if (static_cast<int>(tokens.size()) > max_len - 2) {
    keep = static_cast<std::size_t>(max_len - 2);
    ts.overflow = true;
  }
  for (std::size_t i = 0; i < keep; ++i) ts.ids.push_back(vocab.id_or_unk(tokens[i]));
  ts.ids.push_back(kEosId);
  ts.attention_mask.assign(ts.ids.size(), 1);
  while (static_cast<int>(ts.ids.size()) < max_len) {
    ts.ids.push_back(kPadId);
    ts.attention_mask.push_back(0);
  }
  return ts;
}

// One tokenizer surface over both strategies. A tokenizer with no merges is
// the regex strategy.
struct Tokenizer {
  enum class Kind { Regex, Bpe };
  Kind kind = Kind::Regex;
  Vocab vocab;
  BpeMerges merges;

  std::vector<std::string> tokenize(std::string_view s) const {
    return kind == Kind::Regex ? regex_tokenize(s) : bpe_encode(s, merges);
  }

  TokenSequence encode(std::string_view s, int max_len) const {
    return encode_for_model(tokenize(s), vocab, max_len);
  }
};

inline Tokenizer train_regex_tokenizer(const std::vector<std::string>& corpus,
                                       int max_vocab = kMaxVocabSize) {
  if (corpus.empty()) throw EmptyCorpus("train_regex_tokenizer: empty corpus");
  std::vector<std::vector<std::string>> streams;
  streams.reserve(corpus.size());
  for (const auto& s : corpus) streams.push_back(regex_tokenize(s));
  Tokenizer t;
  t.kind = Tokenizer::Kind::Regex;
  t.vocab = build_vocab(streams, max_vocab);
  return t;
}

inline Tokenizer train_bpe_tokenizer(const std::vector<std::string>& corpus, int target_vocab) {
  auto [vocab, merges] = bpe_train(corpus, target_vocab);
  Tokenizer t;
  t.kind = Tokenizer::Kind::Bpe;
  t.vocab = std::move(vocab);
  t.merges = std::move(merges);
  return t;
}

// --- serialization (one UTF-8 JSON document, bit-exact round trip) ---

inline nlohmann::json tokenizer_to_json(const Tokenizer& t) {
  nlohmann::json j;
  j["version"] = 1;
  j["special_tokens"] = {{"pad", kPadToken},
                         {"unk", kUnkToken},
                         {"bos", kBosToken},
                         {"eos", kEosToken},
                         {"mask", kMaskToken}};
  nlohmann::json vocab = nlohmann::json::object();
  for (const auto& [tok, id] : t.vocab.token_to_id) vocab[tok] = id;
  j["vocab"] = std::move(vocab);
  nlohmann::json merges = nlohmann::json::array();
  for (const auto& [l, r] : t.merges.merges) merges.push_back({l, r});
  j["merges"] = std::move(merges);
  return j;
}

inline Tokenizer tokenizer_from_json(const nlohmann::json& j) {
  if (!j.contains("version") || j.at("version").get<int>() != 1)
    throw VocabError("unsupported tokenizer file version");
  Tokenizer t;
  std::vector<std::pair<int, std::string>> by_id;
  for (const auto& [tok, id] : j.at("vocab").items())
    by_id.push_back({id.get<int>(), tok});
  std::sort(by_id.begin(), by_id.end());
  Vocab v;
  for (const auto& [id, tok] : by_id) {
    if (id < kNumSpecialTokens) {
      if (v.token(id) != tok) throw VocabError("special token mismatch in tokenizer file");
      continue;
    }
    if (v.add(tok) != id) throw VocabError("non-contiguous vocab ids in tokenizer file");
  }
  t.vocab = std::move(v);
  for (const auto& m : j.at("merges"))
    t.merges.merges.push_back({m.at(0).get<std::string>(), m.at(1).get<std::string>()});
  t.kind = t.merges.merges.empty() ? Tokenizer::Kind::Regex : Tokenizer::Kind::Bpe;
  return t;
}

}  // namespace chemlm
