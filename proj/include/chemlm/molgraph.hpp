// Copyright 2026 the chemlm authors
// SPDX-License-Identifier: Apache-2.0
//
// SMILES subset parser, Bemis-Murcko scaffolds, canonical graph keys and
// hashed circular fingerprints.
#pragma once

#include <algorithm>
#include <bit>
#include <cctype>
#include <cstdint>
#include <tuple>
#include <map>
#include <optional>
#include <set>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

#include "chemlm/rng.hpp"

namespace chemlm {

struct SmilesError : std::runtime_error {
  using std::runtime_error::runtime_error;
};
struct UnmatchedRingBond : SmilesError {
  using SmilesError::SmilesError;
};
struct UnbalancedBranch : SmilesError {
  using SmilesError::SmilesError;
};
struct UnknownSymbol : SmilesError {
  using SmilesError::SmilesError;
};
struct UnclosedBracket : SmilesError {
  using SmilesError::SmilesError;
};
struct DisconnectedInput : SmilesError {
  using SmilesError::SmilesError;
};

enum class BondOrder : std::uint8_t { Single = 1, Double = 2, Triple = 3, Aromatic = 4 };

inline int bond_order_value(BondOrder o) {
  switch (o) {
    case BondOrder::Single: return 1;
    case BondOrder::Double: return 2;
    case BondOrder::Triple: return 3;
    case BondOrder::Aromatic: return 1;  // counts as 1 toward valence sums
  }
  return 1;
}

struct Atom {
  std::string element;
  bool aromatic = false;
  int charge = 0;
  std::optional<int> explicit_hydrogens;  // bracket atoms only
  std::optional<int> isotope;
  std::optional<std::string> chirality;  // "@" / "@@", preserved opaquely
};

struct Bond {
  int a = 0;
  int b = 0;
  BondOrder order = BondOrder::Single;
};

struct MolGraph {
  std::vector<Atom> atoms;
  std::vector<Bond> bonds;

  bool empty() const { return atoms.empty(); }

  std::vector<std::vector<int>> adjacency() const {
    std::vector<std::vector<int>> adj(atoms.size());
    for (int i = 0; i < static_cast<int>(bonds.size()); ++i) {
      adj[bonds[i].a].push_back(i);
      adj[bonds[i].b].push_back(i);
    }
    return adj;
  }
};

namespace detail {

inline bool is_organic_symbol(std::string_view s) {
  static const std::set<std::string_view> organic = {"B", "C", "N", "O", "P",
                                                     "S", "F", "Cl", "Br", "I"};
  return organic.count(s) > 0;
}

inline bool is_aromatic_symbol(char c) {
  return c == 'b' || c == 'c' || c == 'n' || c == 'o' || c == 's' || c == 'p';
}

// Element symbols accepted inside brackets (subset + common bracket atoms).
inline bool is_bracket_element(std::string_view s) {
  static const std::set<std::string_view> known = {
      "B", "C", "N", "O", "P",  "S",  "F",  "Cl", "Br", "I", "H",
      "b", "c", "n", "o", "s",  "p",  "Si", "Se", "As", "Na", "K",
      "Li", "Ca", "Mg", "Zn", "Fe", "Al", "Sn", "Te", "se"};
  return known.count(s) > 0;
}

struct BracketAtom {
  Atom atom;
};

// Parses the body between '[' and ']': isotope? symbol chiral? Hcount? charge?
inline Atom parse_bracket_body(std::string_view body, std::string_view whole) {
  Atom atom;
  std::size_t i = 0;
  auto fail = [&] { throw UnknownSymbol("bad bracket atom: [" + std::string(body) + "] in " + std::string(whole)); };
  if (i >= body.size()) fail();
  if (std::isdigit(static_cast<unsigned char>(body[i]))) {
    int iso = 0;
    while (i < body.size() && std::isdigit(static_cast<unsigned char>(body[i]))) {
      iso = iso * 10 + (body[i] - '0');
      ++i;
    }
    if (iso <= 0) fail();
    atom.isotope = iso;
  }
  if (i >= body.size()) fail();
  // element: try two-letter, then one-letter
  std::string sym;
  if (i + 1 < body.size() && std::isupper(static_cast<unsigned char>(body[i])) &&
      std::islower(static_cast<unsigned char>(body[i + 1])) &&
      is_bracket_element(body.substr(i, 2))) {
    sym = std::string(body.substr(i, 2));
    i += 2;
  } else if (is_bracket_element(body.substr(i, 1))) {
    sym = std::string(body.substr(i, 1));
    i += 1;
  } else {
    fail();
  }
  if (std::islower(static_cast<unsigned char>(sym[0]))) {
    atom.aromatic = true;
    sym[0] = static_cast<char>(std::toupper(static_cast<unsigned char>(sym[0])));
  }
  atom.element = sym;
  if (i < body.size() && body[i] == '@') {
    if (i + 1 < body.size() && body[i + 1] == '@') {
      atom.chirality = "@@";
      i += 2;
    } else {
      atom.chirality = "@";
      i += 1;
    }
  }
  if (i < body.size() && body[i] == 'H' && atom.element != "H") {
    ++i;
    int h = 1;
    if (i < body.size() && std::isdigit(static_cast<unsigned char>(body[i]))) {
      h = 0;
      while (i < body.size() && std::isdigit(static_cast<unsigned char>(body[i]))) {
        h = h * 10 + (body[i] - '0');
        ++i;
      }
    }
    atom.explicit_hydrogens = h;
  } else {
    atom.explicit_hydrogens = 0;
  }
  if (i < body.size() && (body[i] == '+' || body[i] == '-')) {
    char sign = body[i];
    ++i;
    int mag = 0;
    if (i < body.size() && std::isdigit(static_cast<unsigned char>(body[i]))) {
      while (i < body.size() && std::isdigit(static_cast<unsigned char>(body[i]))) {
        mag = mag * 10 + (body[i] - '0');
        ++i;
      }
    } else {
      mag = 1;
      while (i < body.size() && body[i] == sign) {
        ++mag;
        ++i;
      }
    }
    atom.charge = (sign == '+') ? mag : -mag;
  }
  if (i != body.size()) fail();
  return atom;
}

}  // namespace detail

// Parses the supported SMILES subset into a molecular graph. Implicit
// hydrogens are not materialized; lowercase atoms carry the aromatic flag.
inline MolGraph parse_smiles(std::string_view s) {
  if (s.empty()) throw UnknownSymbol("empty SMILES");
  for (char c : s) {
    if (static_cast<unsigned char>(c) > 127)
      throw UnknownSymbol("non-ASCII byte in SMILES");
  }
  MolGraph g;
  std::vector<int> branch_stack;
  int prev_atom = -1;
  std::optional<BondOrder> pending_order;
  struct RingOpen {
    int atom;
    std::optional<BondOrder> order;
  };
  std::map<int, RingOpen> open_rings;
  std::set<std::pair<int, int>> bond_set;

  auto add_bond = [&](int a, int b, std::optional<BondOrder> explicit_order) {
    if (a == b) throw UnmatchedRingBond("ring closure bonds atom to itself in " + std::string(s));
    auto key = std::minmax(a, b);
    if (!bond_set.insert({key.first, key.second}).second)
      throw UnmatchedRingBond("duplicate bond between atoms in " + std::string(s));
    BondOrder order;
    if (explicit_order) {
      order = *explicit_order;
    } else {
      order = (g.atoms[a].aromatic && g.atoms[b].aromatic) ? BondOrder::Aromatic
                                                           : BondOrder::Single;
    }
    g.bonds.push_back({a, b, order});
  };

  auto attach_atom = [&](Atom atom) {
    int idx = static_cast<int>(g.atoms.size());
    g.atoms.push_back(std::move(atom));
    if (prev_atom >= 0) {
      add_bond(prev_atom, idx, pending_order);
    } else if (pending_order) {
      throw UnknownSymbol("bond symbol before first atom in " + std::string(s));
    }
    pending_order.reset();
    prev_atom = idx;
  };

  auto ring_closure = [&](int digit) {
    if (prev_atom < 0)
      throw UnmatchedRingBond("ring digit before any atom in " + std::string(s));
    auto it = open_rings.find(digit);
    if (it == open_rings.end()) {
      open_rings.emplace(digit, RingOpen{prev_atom, pending_order});
      pending_order.reset();
    } else {
      std::optional<BondOrder> order = it->second.order;
      if (pending_order) {
        if (order && *order != *pending_order)
          throw UnmatchedRingBond("conflicting ring bond orders in " + std::string(s));
        order = pending_order;
      }
      add_bond(it->second.atom, prev_atom, order);
      open_rings.erase(it);
      pending_order.reset();
    }
  };

  std::size_t i = 0;
  while (i < s.size()) {
    char c = s[i];
    if (c == '.') {
      throw DisconnectedInput("dot-disconnected SMILES not supported: " + std::string(s));
    } else if (c == '(') {
      if (prev_atom < 0) throw UnbalancedBranch("branch before first atom in " + std::string(s));
      branch_stack.push_back(prev_atom);
      ++i;
    } else if (c == ')') {
      if (branch_stack.empty()) throw UnbalancedBranch("unopened ')' in " + std::string(s));
      if (pending_order) throw UnknownSymbol("dangling bond symbol before ')' in " + std::string(s));
      prev_atom = branch_stack.back();
      branch_stack.pop_back();
      ++i;
    } else if (c == '-') {
      pending_order = BondOrder::Single;
      ++i;
    } else if (c == '=') {
      pending_order = BondOrder::Double;
      ++i;
    } else if (c == '#') {
      pending_order = BondOrder::Triple;
      ++i;
    } else if (c == ':') {
      pending_order = BondOrder::Aromatic;
      ++i;
    } else if (c == '[') {
      auto close = s.find(']', i + 1);
      if (close == std::string_view::npos)
        throw UnclosedBracket("missing ']' in " + std::string(s));
      attach_atom(detail::parse_bracket_body(s.substr(i + 1, close - i - 1), s));
      i = close + 1;
    } else if (c == '%') {
      if (i + 2 >= s.size() || !std::isdigit(static_cast<unsigned char>(s[i + 1])) ||
          !std::isdigit(static_cast<unsigned char>(s[i + 2])))
        throw UnknownSymbol("bad %nn ring closure in " + std::string(s));
      ring_closure((s[i + 1] - '0') * 10 + (s[i + 2] - '0'));
      i += 3;
    } else if (std::isdigit(static_cast<unsigned char>(c))) {
      if (c == '0') throw UnknownSymbol("ring digit 0 in " + std::string(s));
      ring_closure(c - '0');
      ++i;
    } else if (c == 'C' && i + 1 < s.size() && s[i + 1] == 'l') {
      attach_atom(Atom{"Cl"});
      i += 2;
    } else if (c == 'B' && i + 1 < s.size() && s[i + 1] == 'r') {
      attach_atom(Atom{"Br"});
      i += 2;
    } else if (detail::is_organic_symbol(std::string_view(&c, 1))) {
      attach_atom(Atom{std::string(1, c)});
      ++i;
    } else if (detail::is_aromatic_symbol(c)) {
      Atom a;
      a.element = std::string(1, static_cast<char>(std::toupper(static_cast<unsigned char>(c))));
      a.aromatic = true;
      attach_atom(std::move(a));
      ++i;
    } else {
      throw UnknownSymbol(std::string("unparseable character '") + c + "' in " + std::string(s));
    }
  }
  if (!branch_stack.empty()) throw UnbalancedBranch("unclosed '(' in " + std::string(s));
  if (!open_rings.empty()) throw UnmatchedRingBond("dangling ring-closure digit in " + std::string(s));
  if (pending_order) throw UnknownSymbol("dangling bond symbol at end of " + std::string(s));
  return g;
}

// Bemis-Murcko scaffold: iteratively prune degree-1 atoms until fixed point.
// Acyclic molecules reduce to the empty graph; ring/linker atoms survive.
inline MolGraph murcko_scaffold(const MolGraph& g) {
  std::vector<bool> alive(g.atoms.size(), true);
  std::vector<int> degree(g.atoms.size(), 0);
  for (const auto& b : g.bonds) {
    ++degree[b.a];
    ++degree[b.b];
  }
  bool changed = true;
  while (changed) {
    changed = false;
    for (std::size_t i = 0; i < g.atoms.size(); ++i) {
      if (alive[i] && degree[i] <= 1) {
        alive[i] = false;
        changed = true;
        for (const auto& b : g.bonds) {
          if (b.a == static_cast<int>(i) && alive[b.b]) --degree[b.b];
          if (b.b == static_cast<int>(i) && alive[b.a]) --degree[b.a];
        }
        degree[i] = 0;
      }
    }
  }
  MolGraph out;
  std::vector<int> remap(g.atoms.size(), -1);
  for (std::size_t i = 0; i < g.atoms.size(); ++i) {
    if (alive[i]) {
      remap[i] = static_cast<int>(out.atoms.size());
      out.atoms.push_back(g.atoms[i]);
    }
  }
  for (const auto& b : g.bonds) {
    if (remap[b.a] >= 0 && remap[b.b] >= 0)
      out.bonds.push_back({remap[b.a], remap[b.b], b.order});
  }
  return out;
}

namespace detail {

// Iterative neighborhood-invariant refinement (Morgan relabeling) with
// individualization on residual ties. Produces an atom ordering that is
// identical for isomorphic graphs built by this toolkit.
struct Canonicalizer {
  const MolGraph& g;
  std::vector<std::vector<std::pair<int, int>>> nbrs;  // (neighbor, order code)

  explicit Canonicalizer(const MolGraph& graph) : g(graph), nbrs(graph.atoms.size()) {
    for (const auto& b : g.bonds) {
      int code = static_cast<int>(b.order);
      nbrs[b.a].push_back({b.b, code});
      nbrs[b.b].push_back({b.a, code});
    }
  }

  std::vector<int> refine(std::vector<int> color) const {
    const int n = static_cast<int>(g.atoms.size());
    while (true) {
      std::vector<std::vector<long long>> sig(n);
      for (int i = 0; i < n; ++i) {
        sig[i].push_back(color[i]);
        std::vector<long long> ns;
        for (auto [j, code] : nbrs[i]) ns.push_back(static_cast<long long>(color[j]) * 8 + code);
        std::sort(ns.begin(), ns.end());
        sig[i].insert(sig[i].end(), ns.begin(), ns.end());
      }
      std::vector<std::vector<long long>> distinct(sig);
      std::sort(distinct.begin(), distinct.end());
      distinct.erase(std::unique(distinct.begin(), distinct.end()), distinct.end());
      std::vector<int> next(n);
      for (int i = 0; i < n; ++i)
        next[i] = static_cast<int>(std::lower_bound(distinct.begin(), distinct.end(), sig[i]) -
                                   distinct.begin());
      if (next == color) return color;
      color = std::move(next);
    }
  }

  std::string serialize(const std::vector<int>& order) const {
    std::vector<int> pos(g.atoms.size());
    for (std::size_t i = 0; i < order.size(); ++i) pos[order[i]] = static_cast<int>(i);
    std::string out;
    for (int idx : order) {
      const Atom& a = g.atoms[idx];
      out += a.element;
      if (a.aromatic) out += '~';
      if (a.charge != 0) out += (a.charge > 0 ? "+" : "") + std::to_string(a.charge);
      out += ';';
    }
    std::vector<std::tuple<int, int, int>> edges;
    for (const auto& b : g.bonds) {
      int x = pos[b.a], y = pos[b.b];
      if (x > y) std::swap(x, y);
      edges.emplace_back(x, y, static_cast<int>(b.order));
    }
    std::sort(edges.begin(), edges.end());
    for (auto [x, y, o] : edges)
      out += std::to_string(x) + "-" + std::to_string(y) + ":" + std::to_string(o) + ";";
    return out;
  }

  // Returns the lexicographically smallest serialization over the
  // individualization tree rooted at `color`.
  std::string canonical_from(std::vector<int> color, int depth) const {
    const int n = static_cast<int>(g.atoms.size());
    color = refine(std::move(color));
    int max_color = 0;
    for (int c : color) max_color = std::max(max_color, c);
    if (max_color == n - 1 || depth > 8) {
      std::vector<int> order(n);
      for (int i = 0; i < n; ++i) order[i] = i;
      std::sort(order.begin(), order.end(), [&](int a, int b) {
        if (color[a] != color[b]) return color[a] < color[b];
        return a < b;  // only reachable at the depth cap
      });
      return serialize(order);
    }
    // smallest non-singleton color class
    std::map<int, std::vector<int>> cells;
    for (int i = 0; i < n; ++i) cells[color[i]].push_back(i);
    const std::vector<int>* target = nullptr;
    for (const auto& [c, members] : cells) {
      if (members.size() > 1) {
        target = &members;
        break;
      }
    }
    std::string best;
    for (int atom : *target) {
      std::vector<int> next(color);
      for (int i = 0; i < n; ++i)
        next[i] = next[i] * 2 + (i == atom ? 1 : 0);
      std::string s = canonical_from(std::move(next), depth + 1);
      if (best.empty() || s < best) best = std::move(s);
    }
    return best;
  }

  std::string run() const {
    const int n = static_cast<int>(g.atoms.size());
    if (n == 0) return "";
    std::vector<std::tuple<std::string, int, int, int, int, int>> init(n);
    for (int i = 0; i < n; ++i) {
      const Atom& a = g.atoms[i];
      init[i] = {a.element, static_cast<int>(nbrs[i].size()), a.charge,
                 a.aromatic ? 1 : 0, a.isotope.value_or(0),
                 a.explicit_hydrogens.value_or(-1)};
    }
    std::vector<std::tuple<std::string, int, int, int, int, int>> distinct(init);
    std::sort(distinct.begin(), distinct.end());
    distinct.erase(std::unique(distinct.begin(), distinct.end()), distinct.end());
    std::vector<int> color(n);
    for (int i = 0; i < n; ++i)
      color[i] = static_cast<int>(std::lower_bound(distinct.begin(), distinct.end(), init[i]) -
                                  distinct.begin());
    return canonical_from(std::move(color), 0);
  }
};

}  // namespace detail

// Deterministic canonical key for a graph; identical for isomorphic graphs.
inline std::string canonical_key(const MolGraph& g) {
  return detail::Canonicalizer(g).run();
}

// Grouping key for scaffold splitting: canonical key of the graph (empty
// graph maps to "").
inline std::string scaffold_key(const MolGraph& g) { return canonical_key(g); }

struct Fingerprint {
  std::vector<std::uint64_t> words;  // width/64 words, bit i = word i/64, bit i%64
  int width = 2048;
  int radius = 2;

  bool test(int bit) const { return (words[bit / 64] >> (bit % 64)) & 1; }
  void set(int bit) { words[bit / 64] |= (1ULL << (bit % 64)); }
  int popcount() const {
    int n = 0;
    for (auto w : words) n += std::popcount(w);
    return n;
  }
};

// Hashed circular (Morgan-style) fingerprint. Per-atom invariant from
// (element, degree, charge, aromatic), iteratively combined with neighbor
// invariants per radius shell; every shell id sets one bit modulo width.
inline Fingerprint morgan_fingerprint(const MolGraph& g, int radius = 2, int width = 2048) {
  if (radius < 0) throw std::invalid_argument("radius must be >= 0");
  if (width <= 0 || (width & (width - 1)) != 0)
    throw std::invalid_argument("width must be a power of two");
  Fingerprint fp;
  fp.width = width;
  fp.radius = radius;
  fp.words.assign(static_cast<std::size_t>(width) / 64 + (width < 64 ? 1 : 0), 0);

  const int n = static_cast<int>(g.atoms.size());
  std::vector<std::vector<std::pair<int, int>>> nbrs(n);
  for (const auto& b : g.bonds) {
    nbrs[b.a].push_back({b.b, static_cast<int>(b.order)});
    nbrs[b.b].push_back({b.a, static_cast<int>(b.order)});
  }
  std::vector<std::uint64_t> inv(n);
  for (int i = 0; i < n; ++i) {
    const Atom& a = g.atoms[i];
    std::uint64_t h = kHashSeed;
    h = hash_combine(h, fnv1a(a.element.data(), a.element.size()));
    h = hash_combine(h, static_cast<std::uint64_t>(nbrs[i].size()));
    h = hash_combine(h, static_cast<std::uint64_t>(a.charge + 1000));
    h = hash_combine(h, a.aromatic ? 1u : 0u);
    inv[i] = h;
    fp.set(static_cast<int>(h % static_cast<std::uint64_t>(width)));
  }
  for (int r = 1; r <= radius; ++r) {
    std::vector<std::uint64_t> next(n);
    for (int i = 0; i < n; ++i) {
      std::vector<std::uint64_t> env;
      for (auto [j, code] : nbrs[i])
        env.push_back(hash_combine(static_cast<std::uint64_t>(code), inv[j]));
      std::sort(env.begin(), env.end());
      std::uint64_t h = hash_combine(kHashSeed, inv[i]);
      for (auto e : env) h = hash_combine(h, e);
      next[i] = h;
      fp.set(static_cast<int>(h % static_cast<std::uint64_t>(width)));
    }
    inv = std::move(next);
  }
  return fp;
}

}  // namespace chemlm
