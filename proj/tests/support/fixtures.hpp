// Copyright 2026 the chemlm authors
// SPDX-License-Identifier: Apache-2.0
//
// Deterministic fixture generators and independent oracles shared by the
// unit and acceptance suites.
#pragma once

#include <map>
#include <regex>
#include <set>
#include <string>
#include <vector>

#include "chemlm/datapipe.hpp"
#include "chemlm/metrics.hpp"
#include "chemlm/molgraph.hpp"
#include "chemlm/rng.hpp"
#include "chemlm/selfies.hpp"
#include "chemlm/tokenize.hpp"

namespace fixtures {

using chemlm::Rng;

// Grows a random valence-valid SMILES tree. Rings come from a fixed set of
// ring fragments so the strings stay grammatical.
inline std::string random_fragment(Rng& rng, int depth, int incoming = 1);

inline std::string random_chain_atom(Rng& rng, int* remaining_valence) {
  struct El {
    const char* sym;
    int valence;
  };
  static const El elems[] = {{"C", 4}, {"C", 4}, {"C", 4}, {"N", 3}, {"O", 2},
                             {"S", 2}, {"F", 1}, {"Cl", 1}, {"Br", 1}, {"P", 3}};
  const El& e = elems[chemlm::rand_below(rng, 10)];
  *remaining_valence = e.valence;
  return e.sym;
}

inline std::string random_ring(Rng& rng) {
  static const char* rings[] = {"C1CCC1",    "C1CCCC1",  "C1CCCCC1", "C1CCOC1",
                                "C1CCOCC1",  "c1ccccc1", "c1ccncc1", "c1ccoc1",
                                "C1CCNC1",   "c1cscc1",  "C1CCCCCC1"};
  return rings[chemlm::rand_below(rng, 11)];
}

inline std::string random_fragment(Rng& rng, int depth, int incoming) {
  if (depth > 3) return "C";
  if (incoming == 1 && chemlm::rand_below(rng, 5) == 0) return random_ring(rng);
  int cap = 0;
  std::string out;
  do {
    out = random_chain_atom(rng, &cap);
  } while (cap < incoming);
  cap -= incoming;  // bond to whatever this fragment attaches to
  int children = 0;
  while (cap > 0 && children < 3 && chemlm::rand_below(rng, 3) != 0) {
    int order = 1;
    if (cap >= 2 && chemlm::rand_below(rng, 6) == 0) order = 2;
    if (cap >= 3 && chemlm::rand_below(rng, 12) == 0) order = 3;
    std::string sub = random_fragment(rng, depth + 1, order);
    std::string bond = order == 2 ? "=" : (order == 3 ? "#" : "");
    bool last = (chemlm::rand_below(rng, 2) == 0) || cap - order == 0;
    if (last) {
      out += bond + sub;
      cap = 0;
    } else {
      out += "(" + bond + sub + ")";
      cap -= order;
    }
    ++children;
  }
  return out;
}

// n distinct molecule strings; mixes chains, branches, rings and a sprinkle
// of bracket atoms.
inline std::vector<std::string> fixture_corpus(std::size_t n, std::uint64_t seed) {
  Rng rng(seed);
  std::vector<std::string> out;
  std::set<std::string> seen;
  while (out.size() < n) {
    std::string s;
    switch (chemlm::rand_below(rng, 8)) {
      case 0:
        s = random_ring(rng) + random_fragment(rng, 1);
        break;
      case 1:
        s = "C[C@@H](" + random_fragment(rng, 2) + ")" + random_fragment(rng, 2);
        break;
      case 2:
        s = "OC(=O)" + random_fragment(rng, 0);  // carboxylic head
        break;
      case 3:
        s = "[NH3+]" + std::string("CC") + random_fragment(rng, 1);
        break;
      default:
        s = random_fragment(rng, 0);
        break;
    }
    try {
      chemlm::parse_smiles(s);
    } catch (const chemlm::SmilesError&) {
      continue;  // generator bug guard; everything emitted should parse
    }
    if (seen.insert(s).second) out.push_back(s);
  }
  return out;
}

// Synthetic binary task: label 1 iff the molecule contains nitrogen. Ring
// scaffolds vary independently of the label so scaffold groups carry both
// classes across partitions.
inline chemlm::TaskDataset nitrogen_task(std::size_t n, std::uint64_t seed) {
  Rng rng(seed);
  static const char* chains[] = {"NC",  "NCC", "CNC",  "NCCC", "CCNCC", "NCCO",
                                 "CC",  "CCC", "OCC",  "CCCC", "CCOCC", "OCCO"};
  chemlm::TaskDataset ds;
  ds.task_name = "contains_nitrogen";
  std::set<std::string> seen;
  while (ds.records.size() < n) {
    std::string chain = chains[chemlm::rand_below(rng, 12)];
    std::string extra;
    std::size_t elen = chemlm::rand_below(rng, 6);
    for (std::size_t k = 0; k < elen; ++k) extra += "CO"[chemlm::rand_below(rng, 2)];
    std::string smiles = chain + extra + random_ring(rng);
    // second ring half the time; the ring-linker-ring skeleton lands in the
    // scaffold, so groups stay small and plentiful
    if (chemlm::rand_below(rng, 2) == 0) {
      smiles += std::string(chemlm::rand_below(rng, 3), 'C');
      smiles += random_ring(rng);
    }
    if (!seen.insert(smiles).second) continue;
    bool pos = smiles.find('N') != std::string::npos || smiles.find('n') != std::string::npos;
    ds.records.push_back({smiles, pos ? 1 : 0});
  }
  return ds;
}

// --- independent oracles ---

// The pinned tokenization pattern run through a real regex engine.
inline std::vector<std::string> regex_oracle_tokenize(const std::string& s) {
  static const std::regex re(chemlm::kSmilesTokenPattern);
  std::vector<std::string> out;
  auto begin = std::sregex_iterator(s.begin(), s.end(), re);
  auto end = std::sregex_iterator();
  for (auto it = begin; it != end; ++it) out.push_back(it->str());
  return out;
}

// Brute-force adjacent pair counting over a corpus of symbol sequences.
inline std::pair<std::pair<std::string, std::string>, long long> best_pair_oracle(
    const std::vector<std::vector<std::string>>& seqs) {
  std::map<std::pair<std::string, std::string>, long long> counts;
  for (const auto& seq : seqs)
    for (std::size_t i = 0; i + 1 < seq.size(); ++i) ++counts[{seq[i], seq[i + 1]}];
  std::pair<std::string, std::string> best;
  long long best_count = 0;
  for (const auto& [p, c] : counts)
    if (c > best_count) {
      best = p;
      best_count = c;
    }
  return {best, best_count};
}

// O(pos*neg) Mann-Whitney brute force.
inline double roc_auc_bruteforce(const chemlm::ScoredLabels& sl) {
  double num = 0.0;
  long long pairs = 0;
  for (std::size_t i = 0; i < sl.labels.size(); ++i) {
    if (!sl.labels[i]) continue;
    for (std::size_t j = 0; j < sl.labels.size(); ++j) {
      if (sl.labels[j]) continue;
      ++pairs;
      if (sl.scores[i] > sl.scores[j]) num += 1.0;
      else if (sl.scores[i] == sl.scores[j]) num += 0.5;
    }
  }
  return num / static_cast<double>(pairs);
}

// Checks the decoded graph against the valence table.
inline bool satisfies_valences(const chemlm::MolGraph& g) {
  std::vector<int> used(g.atoms.size(), 0);
  for (const auto& b : g.bonds) {
    used[b.a] += chemlm::bond_order_value(b.order);
    used[b.b] += chemlm::bond_order_value(b.order);
  }
  for (std::size_t i = 0; i < g.atoms.size(); ++i) {
    if (used[i] > chemlm::selfies_valence(g.atoms[i].element, g.atoms[i].charge)) return false;
  }
  return true;
}

// Uniformly random SELFIES alphabet string.
inline chemlm::SelfiesString random_selfies(Rng& rng, std::size_t max_len) {
  static const std::vector<std::string> alphabet = chemlm::selfies_alphabet();
  std::size_t len = chemlm::rand_below(rng, max_len) + 1;
  chemlm::SelfiesString out;
  for (std::size_t i = 0; i < len; ++i)
    out.push_back(alphabet[chemlm::rand_below(rng, alphabet.size())]);
  return out;
}

}  // namespace fixtures
