// Copyright 2026 the chemlm authors
// SPDX-License-Identifier: Apache-2.0
//
// SELFIES-style molecular string codec: every alphabet string decodes to a
// valence-valid molecule; graphs in the supported subset round-trip.
#pragma once

#include <algorithm>
#include <map>
#include <optional>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

#include "chemlm/molgraph.hpp"

namespace chemlm {

struct UnknownToken : std::runtime_error {
  using std::runtime_error::runtime_error;
};
struct UnsupportedFeature : std::runtime_error {
  using std::runtime_error::runtime_error;
};

using SelfiesString = std::vector<std::string>;

// Maximum bond capacity per element (charge variants adjust N and O).
inline int selfies_valence(const std::string& element, int charge) {
  static const std::map<std::string, int> base = {
      {"C", 4}, {"N", 3}, {"O", 2}, {"S", 6},  {"P", 5},
      {"F", 1}, {"Cl", 1}, {"Br", 1}, {"I", 1}, {"B", 3}};
  auto it = base.find(element);
  if (it == base.end()) throw UnsupportedFeature("element not in SELFIES alphabet: " + element);
  if (charge == 0) return it->second;
  if (element == "N" && charge == 1) return 4;
  if (element == "N" && charge == -1) return 2;
  if (element == "O" && charge == 1) return 3;
  if (element == "O" && charge == -1) return 1;
  throw UnsupportedFeature("charge state not in SELFIES alphabet: " + element +
                           std::to_string(charge));
}

namespace selfies_detail {

struct AtomToken {
  std::string element;
  int charge = 0;
  int order = 1;  // requested bond order to the preceding atom
};

struct StructToken {
  enum class Kind { Branch, Ring } kind;
  int digits = 1;  // 1 or 2 index tokens follow
  int order = 1;   // ring bond order request
};

// Token text between brackets -> parsed atom or structural symbol.
inline std::optional<AtomToken> parse_atom_token(std::string_view body) {
  AtomToken t;
  if (!body.empty() && body[0] == '=') {
    t.order = 2;
    body.remove_prefix(1);
  } else if (!body.empty() && body[0] == '#') {
    t.order = 3;
    body.remove_prefix(1);
  }
  std::size_t i = 0;
  while (i < body.size() && std::isalpha(static_cast<unsigned char>(body[i]))) ++i;
  if (i == 0) return std::nullopt;
  t.element = std::string(body.substr(0, i));
  body.remove_prefix(i);
  if (!body.empty()) {
    if (body.size() == 2 && (body[0] == '+' || body[0] == '-') && body[1] == '1')
      t.charge = body[0] == '+' ? 1 : -1;
    else
      return std::nullopt;
  }
  static const std::map<std::string, int> ok = {{"C", 4}, {"N", 3}, {"O", 2},  {"S", 6},
                                                {"P", 5}, {"F", 1}, {"Cl", 1}, {"Br", 1},
                                                {"I", 1}, {"B", 3}};
  if (!ok.count(t.element)) return std::nullopt;
  if (t.charge != 0 && t.element != "N" && t.element != "O") return std::nullopt;
  return t;
}

inline std::optional<StructToken> parse_struct_token(std::string_view body) {
  StructToken t{StructToken::Kind::Branch, 1, 1};
  if (body == "Branch1") return StructToken{StructToken::Kind::Branch, 1, 1};
  if (body == "Branch2") return StructToken{StructToken::Kind::Branch, 2, 1};
  if (body == "Ring1") return StructToken{StructToken::Kind::Ring, 1, 1};
  if (body == "Ring2") return StructToken{StructToken::Kind::Ring, 2, 1};
  if (body == "=Ring1") return StructToken{StructToken::Kind::Ring, 1, 2};
  if (body == "=Ring2") return StructToken{StructToken::Kind::Ring, 2, 2};
  if (body == "#Ring1") return StructToken{StructToken::Kind::Ring, 1, 3};
  if (body == "#Ring2") return StructToken{StructToken::Kind::Ring, 2, 3};
  (void)t;
  return std::nullopt;
}

// The 16-token digit table: a token's position is its digit value; tokens
// outside the table count as 0, so any index sequence is readable.
inline const std::vector<std::string>& digit_table() {
  static const std::vector<std::string> table = {
      "[C]", "[Ring1]", "[Ring2]", "[Branch1]", "[Branch2]", "[O]", "[N]", "[=N]",
      "[=C]", "[#C]",   "[S]",     "[P]",       "[F]",       "[Cl]", "[Br]", "[I]"};
  return table;
}

inline int digit_value(const std::string& token) {
  const auto& table = digit_table();
  auto it = std::find(table.begin(), table.end(), token);
  return it == table.end() ? 0 : static_cast<int>(it - table.begin());
}

inline std::vector<std::string> digits_for(int value, int n_digits) {
  const auto& table = digit_table();
  std::vector<std::string> out(n_digits);
  for (int i = n_digits - 1; i >= 0; --i) {
    out[i] = table[value % 16];
    value /= 16;
  }
  return out;
}

}  // namespace selfies_detail

// Every token of the alphabet this codec accepts; used by robustness tests.
inline std::vector<std::string> selfies_alphabet() {
  std::vector<std::string> out;
  for (const char* el : {"C", "N", "O", "S", "P", "F", "Cl", "Br", "I", "B"})
    for (const char* pre : {"", "=", "#"})
      out.push_back(std::string("[") + pre + el + "]");
  for (const char* q : {"+1", "-1"}) {
    out.push_back(std::string("[N") + q + "]");
    out.push_back(std::string("[O") + q + "]");
  }
  for (const char* s : {"Branch1", "Branch2", "Ring1", "Ring2", "=Ring1", "=Ring2",
                        "#Ring1", "#Ring2"})
    out.push_back(std::string("[") + s + "]");
  return out;
}

// Splits concatenated "[C][=O]..." text into bracket tokens.
inline SelfiesString split_selfies(std::string_view s) {
  SelfiesString out;
  std::size_t i = 0;
  while (i < s.size()) {
    if (s[i] != '[') throw UnknownToken("expected '[' in SELFIES text");
    auto close = s.find(']', i);
    if (close == std::string_view::npos) throw UnknownToken("unterminated SELFIES token");
    out.emplace_back(s.substr(i, close - i + 1));
    i = close + 1;
  }
  return out;
}

namespace selfies_detail {

struct Decoder {
  MolGraph g;
  std::vector<int> cap;

  int place_atom(const AtomToken& t) {
    Atom a;
    a.element = t.element;
    a.charge = t.charge;
    g.atoms.push_back(a);
    cap.push_back(selfies_valence(t.element, t.charge));
    return static_cast<int>(g.atoms.size()) - 1;
  }

  bool bond_exists(int a, int b) const {
    for (const auto& bd : g.bonds)
      if ((bd.a == a && bd.b == b) || (bd.a == b && bd.b == a)) return true;
    return false;
  }

  // Derives tokens [begin, end); first atom bonds to `anchor` (or starts the
  // molecule when anchor < 0). Returns when tokens run out or the chain head
  // runs out of capacity.
  void derive(const SelfiesString& toks, std::size_t begin, std::size_t end, int anchor) {
    int current = anchor;
    bool placed_any = anchor >= 0;
    std::size_t i = begin;
    auto read_index = [&](int n_digits) {
      int v = 0;
      for (int d = 0; d < n_digits && i < end; ++d) v = v * 16 + digit_value(toks[i++]);
      return v;
    };
    while (i < end) {
      const std::string& tok = toks[i];
      if (tok.size() < 3 || tok.front() != '[' || tok.back() != ']')
        throw UnknownToken("malformed SELFIES token: " + tok);
      std::string_view body(tok);
      body = body.substr(1, body.size() - 2);
      if (auto at = parse_atom_token(body)) {
        ++i;
        if (!placed_any || current < 0) {
          current = place_atom(*at);
          placed_any = true;
          continue;
        }
        if (cap[current] == 0) return;  // chain saturated, remaining tokens dropped
        int new_cap = selfies_valence(at->element, at->charge);
        int order = std::min({at->order, cap[current], new_cap});
        int idx = place_atom(*at);
        g.bonds.push_back({current, idx,
                           order == 1 ? BondOrder::Single
                                      : (order == 2 ? BondOrder::Double : BondOrder::Triple)});
        cap[current] -= order;
        cap[idx] -= order;
        current = idx;
      } else if (auto st = parse_struct_token(body)) {
        ++i;
        if (st->kind == StructToken::Kind::Branch) {
          int q = read_index(st->digits);
          std::size_t len = static_cast<std::size_t>(q) + 1;
          std::size_t bend = std::min(end, i + len);
          if (current >= 0 && cap[current] >= 1) derive(toks, i, bend, current);
          i = bend;
        } else {
          int q = read_index(st->digits);
          if (current < 0) continue;
          int target = current - (q + 1);
          if (target < 0) target = 0;
          if (target == current || bond_exists(target, current)) continue;
          if (cap[current] == 0 || cap[target] == 0) continue;
          int order = std::min({st->order, cap[current], cap[target]});
          g.bonds.push_back({target, current,
                             order == 1 ? BondOrder::Single
                                        : (order == 2 ? BondOrder::Double : BondOrder::Triple)});
          cap[current] -= order;
          cap[target] -= order;
        }
      } else {
        throw UnknownToken("token not in SELFIES alphabet: " + tok);
      }
    }
  }
};

}  // namespace selfies_detail

// Total decoder: any alphabet string yields a valence-valid graph. The only
// error is a token outside the alphabet.
inline MolGraph decode_selfies(const SelfiesString& tokens) {
  selfies_detail::Decoder d;
  d.derive(tokens, 0, tokens.size(), -1);
  return d.g;
}

namespace selfies_detail {

struct Encoder {
  const MolGraph& g;
  std::vector<std::vector<std::pair<int, BondOrder>>> nbrs;
  std::vector<int> place;  // placement order, -1 = unplaced
  std::vector<std::vector<bool>> edge_done;
  int placed = 0;

  explicit Encoder(const MolGraph& graph)
      : g(graph), nbrs(graph.atoms.size()), place(graph.atoms.size(), -1) {
    for (const auto& b : g.bonds) {
      if (b.order == BondOrder::Aromatic)
        throw UnsupportedFeature("aromatic bonds must be kekulized before SELFIES encoding");
      nbrs[b.a].push_back({b.b, b.order});
      nbrs[b.b].push_back({b.a, b.order});
    }
    for (auto& v : nbrs) std::sort(v.begin(), v.end());
    edge_done.assign(g.atoms.size(), {});
    for (std::size_t i = 0; i < g.atoms.size(); ++i)
      edge_done[i].assign(nbrs[i].size(), false);
    for (std::size_t i = 0; i < g.atoms.size(); ++i) {
      const Atom& a = g.atoms[i];
      if (a.aromatic) throw UnsupportedFeature("aromatic atom flags must be kekulized first");
      int used = 0;
      for (auto [j, o] : nbrs[i]) used += bond_order_value(o);
      if (used > selfies_valence(a.element, a.charge))
        throw UnsupportedFeature("bond order sum exceeds valence at " + a.element);
    }
  }

  static std::string atom_token(const Atom& a, int order) {
    std::string s = "[";
    if (order == 2) s += '=';
    if (order == 3) s += '#';
    s += a.element;
    if (a.charge == 1) s += "+1";
    if (a.charge == -1) s += "-1";
    s += ']';
    return s;
  }

  void mark_edge(int u, int v) {
    for (std::size_t k = 0; k < nbrs[u].size(); ++k)
      if (nbrs[u][k].first == v) edge_done[u][k] = true;
    for (std::size_t k = 0; k < nbrs[v].size(); ++k)
      if (nbrs[v][k].first == u) edge_done[v][k] = true;
  }

  // Emits atom u (already bonded via `order` to its parent) plus its rings,
  // branches and chain continuation.
  std::vector<std::string> emit(int u, int order) {
    std::vector<std::string> out;
    out.push_back(atom_token(g.atoms[u], order));
    place[u] = placed++;
    // ring closures to already-placed atoms
    for (std::size_t k = 0; k < nbrs[u].size(); ++k) {
      auto [v, bo] = nbrs[u][k];
      if (edge_done[u][k] || place[v] < 0) continue;
      int q = place[u] - place[v] - 1;
      int o = static_cast<int>(bo);  // Single=1, Double=2, Triple=3
      std::string pre = o == 2 ? "=" : (o == 3 ? "#" : "");
      int digits = q < 16 ? 1 : 2;
      if (q >= 256) throw UnsupportedFeature("ring span exceeds Ring2 range");
      out.push_back("[" + pre + "Ring" + std::to_string(digits) + "]");
      auto ds = digits_for(q, digits);
      out.insert(out.end(), ds.begin(), ds.end());
      mark_edge(u, v);
    }
    // children, chosen lazily: a sibling subtree may reach (and place) a
    // later neighbor, in which case that edge surfaces as a ring closure
    auto next_child = [&]() -> int {
      for (std::size_t k = 0; k < nbrs[u].size(); ++k)
        if (!edge_done[u][k] && place[nbrs[u][k].first] < 0) return static_cast<int>(k);
      return -1;
    };
    while (true) {
      int k = next_child();
      if (k < 0) break;
      auto [v, bo] = nbrs[u][static_cast<std::size_t>(k)];
      mark_edge(u, v);
      std::vector<std::string> sub = emit(v, static_cast<int>(bo));
      if (next_child() < 0) {  // chain continuation closes this atom's emission
        out.insert(out.end(), sub.begin(), sub.end());
        break;
      }
      int q = static_cast<int>(sub.size()) - 1;
      int digits = q < 16 ? 1 : 2;
      if (q >= 256) throw UnsupportedFeature("branch exceeds Branch2 range");
      out.push_back("[Branch" + std::to_string(digits) + "]");
      auto ds = digits_for(q, digits);
      out.insert(out.end(), ds.begin(), ds.end());
      out.insert(out.end(), sub.begin(), sub.end());
    }
    return out;
  }
};

}  // namespace selfies_detail

// Encodes a kekulized, subset-conform graph; decode_selfies(result) is
// graph-isomorphic (element, charge, bond order) to the input.
inline SelfiesString encode_selfies(const MolGraph& g) {
  if (g.atoms.empty()) return {};
  selfies_detail::Encoder enc(g);
  auto out = enc.emit(0, 1);
  // a disconnected input would leave atoms unplaced
  for (int p : enc.place)
    if (p < 0) throw UnsupportedFeature("disconnected graph cannot be SELFIES-encoded");
  return out;
}

// Local alternating-bond kekulization: assigns each aromatic bond single or
// double so that every aromatic atom needing a double bond gets exactly one.
// Returns nullopt when no assignment exists.
inline std::optional<MolGraph> kekulize(const MolGraph& g) {
  bool any = false;
  for (const auto& a : g.atoms) any |= a.aromatic;
  for (const auto& b : g.bonds) any |= (b.order == BondOrder::Aromatic);
  if (!any) return g;

  const int n = static_cast<int>(g.atoms.size());
  std::vector<int> needs(n, 0);
  for (int i = 0; i < n; ++i) {
    const Atom& a = g.atoms[i];
    if (!a.aromatic) continue;
    if (a.element == "C") needs[i] = 1;
    else if (a.element == "N" || a.element == "P")
      needs[i] = (a.explicit_hydrogens.value_or(0) > 0 || a.charge < 0) ? 0 : 1;
    else
      needs[i] = 0;  // O, S, B contribute lone pairs
  }
  std::vector<std::vector<std::pair<int, int>>> arom(n);  // (neighbor, bond idx)
  for (int bi = 0; bi < static_cast<int>(g.bonds.size()); ++bi) {
    const auto& b = g.bonds[bi];
    if (b.order == BondOrder::Aromatic) {
      arom[b.a].push_back({b.b, bi});
      arom[b.b].push_back({b.a, bi});
    }
  }
  std::vector<int> match(n, -1);  // partner atom in the double-bond matching

  // backtracking perfect matching on the needs-double subset
  auto solve = [&](auto&& self, int start) -> bool {
    int u = -1;
    for (int i = start; i < n; ++i)
      if (needs[i] == 1 && match[i] == -1) {
        u = i;
        break;
      }
    if (u == -1) return true;
    for (auto [v, bi] : arom[u]) {
      if (needs[v] == 1 && match[v] == -1) {
        match[u] = v;
        match[v] = u;
        if (self(self, u + 1)) return true;
        match[u] = -1;
        match[v] = -1;
      }
    }
    return false;
  };
  if (!solve(solve, 0)) return std::nullopt;

  MolGraph out = g;
  for (auto& b : out.bonds) {
    if (b.order != BondOrder::Aromatic) continue;
    b.order = (match[b.a] == b.b) ? BondOrder::Double : BondOrder::Single;
  }
  for (auto& a : out.atoms) a.aromatic = false;
  return out;
}

// Canonical key on the attributes SELFIES preserves (element, charge, bond
// orders); hydrogen counts, isotopes and chirality are dropped.
inline std::string selfies_round_trip_key(const MolGraph& g) {
  MolGraph stripped = g;
  for (auto& a : stripped.atoms) {
    a.explicit_hydrogens.reset();
    a.isotope.reset();
    a.chirality.reset();
    a.aromatic = false;
  }
  return canonical_key(stripped);
}

struct SelfiesConversionReport {
  std::vector<std::string> selfies;  // one concatenated token string per kept line
  long long converted = 0;
  long long skipped = 0;
};

// Stream conversion; unconvertible inputs are counted, never fatal.
inline SelfiesConversionReport corpus_to_selfies(const std::vector<std::string>& smiles) {
  SelfiesConversionReport rep;
  for (const auto& s : smiles) {
    try {
      MolGraph g = parse_smiles(s);
      auto kek = kekulize(g);
      if (!kek) {
        ++rep.skipped;
        continue;
      }
      auto toks = encode_selfies(*kek);
      std::string joined;
      for (const auto& t : toks) joined += t;
      rep.selfies.push_back(joined);
      ++rep.converted;
    } catch (const std::exception&) {
      ++rep.skipped;
    }
  }
  return rep;
}

}  // namespace chemlm
