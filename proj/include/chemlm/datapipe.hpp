// Copyright 2026 the chemlm authors
// SPDX-License-Identifier: Apache-2.0
//
// Corpus curation, task ingestion, scaffold splitting and MLM example
// generation.
#pragma once

#include <algorithm>
#include <fstream>
#include <map>
#include <optional>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include "chemlm/molgraph.hpp"
#include "chemlm/rng.hpp"
#include "chemlm/tokenize.hpp"

namespace chemlm {

struct IoFailure : std::runtime_error {
  using std::runtime_error::runtime_error;
};
struct SizeExceedsCorpus : std::runtime_error {
  using std::runtime_error::runtime_error;
};
struct EmptyDataset : std::runtime_error {
  using std::runtime_error::runtime_error;
};
struct EmptySplit : std::runtime_error {
  using std::runtime_error::runtime_error;
};

using Corpus = std::vector<std::string>;  // one molecule string per line

inline Corpus read_lines(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoFailure("cannot open " + path);
  Corpus out;
  std::string line;
  while (std::getline(in, line)) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    out.push_back(line);
  }
  return out;
}

inline void write_lines(const std::string& path, const Corpus& lines) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoFailure("cannot open " + path + " for writing");
  for (const auto& l : lines) out << l << '\n';
  if (!out) throw IoFailure("write failed: " + path);
}

enum class DedupMode { ExactString, CanonicalKey };

// Trim, drop empties, dedup, seeded global shuffle. With canonical-key
// dedup, parseable strings that share a canonical graph collapse to the
// first occurrence; unparseable strings fall back to exact-string identity.
inline Corpus curate(const Corpus& in, std::uint64_t seed,
                     DedupMode mode = DedupMode::ExactString) {
  Corpus kept;
  std::map<std::string, bool> seen;
  for (const auto& raw : in) {
    std::string s = raw;
    auto b = s.find_first_not_of(" \t");
    auto e = s.find_last_not_of(" \t");
    s = (b == std::string::npos) ? "" : s.substr(b, e - b + 1);
    if (s.empty()) continue;
    std::string key = s;
    if (mode == DedupMode::CanonicalKey) {
      try {
        key = "k:" + canonical_key(parse_smiles(s));
      } catch (const SmilesError&) {
        key = "s:" + s;
      }
    }
    if (seen.emplace(key, true).second) kept.push_back(s);
  }
  Rng rng(seed);
  seeded_shuffle(kept, rng);
  return kept;
}

// Nested prefix subsets of an already-shuffled corpus.
inline std::vector<Corpus> subset(const Corpus& c, const std::vector<std::size_t>& sizes) {
  std::vector<Corpus> out;
  for (std::size_t n : sizes) {
    if (n > c.size())
      throw SizeExceedsCorpus("subset size " + std::to_string(n) + " exceeds corpus of " +
                              std::to_string(c.size()));
    out.emplace_back(c.begin(), c.begin() + static_cast<std::ptrdiff_t>(n));
  }
  return out;
}

struct TaskDataset {
  struct Record {
    std::string smiles;
    int label = 0;  // binary
  };
  std::vector<Record> records;
  std::string task_name;
  long long dropped_rows = 0;
};

namespace detail {

inline std::vector<std::string> split_csv_line(const std::string& line) {
  std::vector<std::string> out;
  std::string cur;
  bool quoted = false;
  for (std::size_t i = 0; i < line.size(); ++i) {
    char c = line[i];
    if (quoted) {
      if (c == '"') {
        if (i + 1 < line.size() && line[i + 1] == '"') {
          cur += '"';
          ++i;
        } else {
          quoted = false;
        }
      } else {
        cur += c;
      }
    } else if (c == '"') {
      quoted = true;
    } else if (c == ',') {
      out.push_back(cur);
      cur.clear();
    } else {
      cur += c;
    }
  }
  out.push_back(cur);
  return out;
}

}  // namespace detail

// Task CSV: header row with a "smiles" column and one label column chosen
// by name. Rows with missing/non-binary labels or unparseable SMILES are
// dropped and counted.
inline TaskDataset load_task_csv(const std::vector<std::string>& lines,
                                 const std::string& label_column) {
  if (lines.empty()) throw EmptyDataset("empty task CSV");
  auto header = detail::split_csv_line(lines[0]);
  int smiles_col = -1, label_col = -1;
  for (int i = 0; i < static_cast<int>(header.size()); ++i) {
    if (header[i] == "smiles") smiles_col = i;
    if (header[i] == label_column) label_col = i;
  }
  if (smiles_col < 0) throw IoFailure("task CSV has no 'smiles' column");
  if (label_col < 0) throw IoFailure("task CSV has no '" + label_column + "' column");
  TaskDataset ds;
  ds.task_name = label_column;
  for (std::size_t r = 1; r < lines.size(); ++r) {
    if (lines[r].empty()) continue;
    auto cells = detail::split_csv_line(lines[r]);
    if (static_cast<int>(cells.size()) <= std::max(smiles_col, label_col)) {
      ++ds.dropped_rows;
      continue;
    }
    const std::string& smi = cells[smiles_col];
    const std::string& lab = cells[label_col];
    if (lab != "0" && lab != "1") {
      ++ds.dropped_rows;
      continue;
    }
    try {
      parse_smiles(smi);
    } catch (const SmilesError&) {
      ++ds.dropped_rows;
      continue;
    }
    ds.records.push_back({smi, lab == "1" ? 1 : 0});
  }
  return ds;
}

struct SplitIndices {
  std::vector<std::size_t> train, valid, test;
};

// Scaffold split: group by Murcko scaffold key, sort groups by size
// descending (ties by key ascending), fill train to >= 80%, then valid to
// >= 90%, remainder to test. No scaffold spans two partitions.
inline SplitIndices scaffold_split(const TaskDataset& d, double train_frac = 0.8,
                                   double valid_frac = 0.1) {
  if (d.records.empty()) throw EmptyDataset("scaffold_split: empty dataset");
  std::map<std::string, std::vector<std::size_t>> groups;
  for (std::size_t i = 0; i < d.records.size(); ++i) {
    std::string key = scaffold_key(murcko_scaffold(parse_smiles(d.records[i].smiles)));
    groups[key].push_back(i);
  }
  std::vector<std::pair<std::string, std::vector<std::size_t>>> ordered(groups.begin(),
                                                                        groups.end());
  std::stable_sort(ordered.begin(), ordered.end(), [](const auto& a, const auto& b) {
    if (a.second.size() != b.second.size()) return a.second.size() > b.second.size();
    return a.first < b.first;
  });
  const double n = static_cast<double>(d.records.size());
  SplitIndices out;
  for (const auto& [key, members] : ordered) {
    if (static_cast<double>(out.train.size()) < train_frac * n)
      out.train.insert(out.train.end(), members.begin(), members.end());
    else if (static_cast<double>(out.train.size() + out.valid.size()) <
             (train_frac + valid_frac) * n)
      out.valid.insert(out.valid.end(), members.begin(), members.end());
    else
      out.test.insert(out.test.end(), members.begin(), members.end());
  }
  return out;
}

inline constexpr int kIgnoreLabel = -100;

struct MlmExample {
  std::vector<int> input_ids;  // after corruption
  std::vector<int> labels;     // original id at corrupted positions, else ignore
  std::vector<int> attention_mask;
};

struct MlmConfig {
  double mask_rate = 0.15;
  double mask_fraction = 0.8;    // of selected: replace with <mask>
  double random_fraction = 0.1;  // of selected: replace with random token
};

// Dynamic masking: each non-special position independently selected at
// mask_rate; selected positions split 80/10/10 mask/random/keep. Labels
// carry originals only at selected positions.
inline MlmExample make_mlm_example(const TokenSequence& seq, const Vocab& vocab,
                                   const MlmConfig& cfg, Rng& rng) {
  MlmExample ex;
  ex.input_ids = seq.ids;
  ex.attention_mask = seq.attention_mask;
  ex.labels.assign(seq.ids.size(), kIgnoreLabel);
  const int n_real_vocab = vocab.size() - kNumSpecialTokens;
  for (std::size_t i = 0; i < seq.ids.size(); ++i) {
    if (seq.attention_mask[i] == 0) continue;
    if (vocab.is_special(seq.ids[i])) continue;
    if (rand_unit(rng) >= cfg.mask_rate) continue;
    ex.labels[i] = seq.ids[i];
    double r = rand_unit(rng);
    if (r < cfg.mask_fraction) {
      ex.input_ids[i] = kMaskId;
    } else if (r < cfg.mask_fraction + cfg.random_fraction && n_real_vocab > 0) {
      ex.input_ids[i] =
          kNumSpecialTokens + static_cast<int>(rand_below(rng, static_cast<std::uint64_t>(n_real_vocab)));
    }  // else keep original
  }
  return ex;
}

inline std::vector<MlmExample> make_mlm_examples(const std::vector<TokenSequence>& seqs,
                                                 const Vocab& vocab, const MlmConfig& cfg,
                                                 std::uint64_t seed) {
  Rng rng(seed);
  std::vector<MlmExample> out;
  out.reserve(seqs.size());
  for (const auto& s : seqs) out.push_back(make_mlm_example(s, vocab, cfg, rng));
  return out;
}

}  // namespace chemlm
