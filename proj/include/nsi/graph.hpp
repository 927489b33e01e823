#pragma once

// Interference graphs: each unit's neighborhood (itself plus its adjacent
// units) is the set of units whose treatments can move its outcome.

#include <algorithm>
#include <cstddef>
#include <cstdint>
#include <istream>
#include <ostream>
#include <random>
#include <span>
#include <sstream>
#include <string>
#include <utility>
#include <vector>

#include "nsi/error.hpp"

namespace nsi {

using Unit = std::size_t;
using Edge = std::pair<Unit, Unit>;

/// Undirected graph over units 0..N-1. Self-edges are always present, so a
/// unit's neighborhood includes the unit itself. Immutable once built.
class NetworkGraph {
 public:
  NetworkGraph() = default;

  /// Builds the graph from an edge list. Edges are symmetrized and
  /// deduplicated; self-edges are added for every unit.
  NetworkGraph(std::size_t n_units, std::span<const Edge> edges) : adj_(n_units) {
    if (n_units == 0) throw InputError("graph must have at least one unit");
    for (Unit n = 0; n < n_units; ++n) adj_[n].push_back(n);
    for (const auto& [i, j] : edges) {
      if (i >= n_units || j >= n_units) {
        throw InputError("edge (" + std::to_string(i) + ", " + std::to_string(j) +
                         ") references a unit outside [0, " + std::to_string(n_units) + ")");
      }
      adj_[i].push_back(j);
      adj_[j].push_back(i);
    }
    for (auto& row : adj_) {
      std::sort(row.begin(), row.end());
      row.erase(std::unique(row.begin(), row.end()), row.end());
    }
  }

  NetworkGraph(std::size_t n_units, std::initializer_list<Edge> edges)
      : NetworkGraph(n_units, std::span<const Edge>(edges.begin(), edges.size())) {}

  std::size_t size() const noexcept { return adj_.size(); }

  /// N(n) in ascending unit order, including n. This order defines the
  /// "k-th neighbor" used by factor stacking and donor permutations.
  /// Directed interference would swap this for an in-neighbor lookup.
  std::span<const Unit> neighbors(Unit n) const {
    check_unit(n);
    return adj_[n];
  }

  /// Number of neighbors excluding the self-edge.
  std::size_t degree(Unit n) const { return neighbors(n).size() - 1; }

  std::size_t max_degree() const noexcept {
    std::size_t d = 0;
    for (const auto& row : adj_) d = std::max(d, row.size() - 1);
    return d;
  }

  bool has_edge(Unit i, Unit j) const {
    check_unit(i);
    check_unit(j);
    return std::binary_search(adj_[i].begin(), adj_[i].end(), j);
  }

  /// Non-self edges with i < j, sorted.
  std::vector<Edge> edges() const {
    std::vector<Edge> out;
    for (Unit i = 0; i < adj_.size(); ++i)
      for (Unit j : adj_[i])
        if (i < j) out.emplace_back(i, j);
    return out;
  }

  friend bool operator==(const NetworkGraph&, const NetworkGraph&) = default;

 private:
  void check_unit(Unit n) const {
    if (n >= adj_.size())
      throw InputError("unit " + std::to_string(n) + " out of range [0, " +
                       std::to_string(adj_.size()) + ")");
  }

  std::vector<std::vector<Unit>> adj_;
};

/// Proper vertex coloring; colors are 0-based indices below num_colors.
struct Coloring {
  int num_colors = 0;
  std::vector<int> assignment;
};

inline std::span<const Unit> neighbors(const NetworkGraph& g, Unit n) { return g.neighbors(n); }

/// Adds an edge between every unit and each of its two-hop neighbors.
inline NetworkGraph two_hop(const NetworkGraph& g) {
  std::vector<Edge> edges;
  for (Unit i = 0; i < g.size(); ++i) {
    for (Unit j : g.neighbors(i)) {
      for (Unit k : g.neighbors(j)) {
        if (i < k) edges.emplace_back(i, k);
      }
    }
  }
  return NetworkGraph(g.size(), edges);
}

/// First-fit coloring over ascending unit index: each unit takes the
/// smallest color not used by an already-colored neighbor. Uses at most
/// max_degree + 1 colors.
inline Coloring greedy_color(const NetworkGraph& g) {
  Coloring c;
  c.assignment.assign(g.size(), -1);
  std::vector<char> taken;
  for (Unit n = 0; n < g.size(); ++n) {
    taken.assign(g.degree(n) + 2, 0);
    for (Unit j : g.neighbors(n)) {
      const int cj = c.assignment[j];
      if (j != n && cj >= 0 && static_cast<std::size_t>(cj) < taken.size()) taken[cj] = 1;
    }
    int color = 0;
    while (taken[color]) ++color;
    c.assignment[n] = color;
    c.num_colors = std::max(c.num_colors, color + 1);
  }
  return c;
}

/// True when no non-self edge joins two units of the same color.
inline bool is_proper(const NetworkGraph& g, const Coloring& c) {
  if (c.assignment.size() != g.size()) return false;
  for (const auto& [i, j] : g.edges())
    if (c.assignment[i] == c.assignment[j]) return false;
  return true;
}

enum class RegularKind { ring, circulant };

/// Circulant graph with offsets 1..degree/2; a ring is the degree-2 case.
inline NetworkGraph make_regular_graph(RegularKind kind, std::size_t n_units, std::size_t degree) {
  if (kind == RegularKind::ring && degree != 2)
    throw InputError("ring graphs have degree 2, got " + std::to_string(degree));
  if (degree % 2 != 0) throw InputError("circulant degree must be even");
  if (degree >= n_units)
    throw InputError("degree " + std::to_string(degree) + " must be below n_units " +
                     std::to_string(n_units));
  std::vector<Edge> edges;
  edges.reserve(n_units * degree / 2);
  for (Unit n = 0; n < n_units; ++n)
    for (std::size_t off = 1; off <= degree / 2; ++off) edges.emplace_back(n, (n + off) % n_units);
  return NetworkGraph(n_units, edges);
}

inline NetworkGraph make_ring(std::size_t n_units) {
  return make_regular_graph(RegularKind::ring, n_units, 2);
}

inline NetworkGraph make_path(std::size_t n_units) {
  std::vector<Edge> edges;
  for (Unit n = 0; n + 1 < n_units; ++n) edges.emplace_back(n, n + 1);
  return NetworkGraph(n_units, edges);
}

inline NetworkGraph make_complete(std::size_t n_units) {
  std::vector<Edge> edges;
  for (Unit i = 0; i < n_units; ++i)
    for (Unit j = i + 1; j < n_units; ++j) edges.emplace_back(i, j);
  return NetworkGraph(n_units, edges);
}

/// Hub 0 joined to leaves 1..n_units-1.
inline NetworkGraph make_star(std::size_t n_units) {
  std::vector<Edge> edges;
  for (Unit n = 1; n < n_units; ++n) edges.emplace_back(0, n);
  return NetworkGraph(n_units, edges);
}

/// Random graph whose degrees never exceed max_degree: candidate pairs are
/// visited in shuffled order and kept with probability edge_prob while both
/// endpoints have spare degree.
inline NetworkGraph make_random_bounded_degree(std::size_t n_units, std::size_t max_degree,
                                               double edge_prob, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::vector<Edge> pairs;
  for (Unit i = 0; i < n_units; ++i)
    for (Unit j = i + 1; j < n_units; ++j) pairs.emplace_back(i, j);
  std::shuffle(pairs.begin(), pairs.end(), rng);
  std::bernoulli_distribution keep(edge_prob);
  std::vector<std::size_t> deg(n_units, 0);
  std::vector<Edge> edges;
  for (const auto& [i, j] : pairs) {
    if (deg[i] < max_degree && deg[j] < max_degree && keep(rng)) {
      edges.emplace_back(i, j);
      ++deg[i];
      ++deg[j];
    }
  }
  return NetworkGraph(n_units, edges);
}

// Edge-list text format: one "i j" pair per line, 0-based. Blank lines and
// '#' comments are skipped; self-edges are implied. A "# units: N" comment
// fixes the unit count so trailing isolated units survive a round trip.

inline NetworkGraph read_edge_list(std::istream& in, std::size_t n_units_hint = 0) {
  std::vector<Edge> edges;
  std::size_t declared = 0;
  std::size_t max_index = 0;
  bool any = false;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    const auto hash = line.find('#');
    if (hash != std::string::npos) {
      std::istringstream comment(line.substr(hash + 1));
      std::string key;
      std::size_t value = 0;
      if (comment >> key && key == "units:" && comment >> value) declared = value;
      line.erase(hash);
    }
    std::istringstream fields(line);
    long long i = 0, j = 0;
    if (!(fields >> i)) continue;
    std::string rest;
    if (!(fields >> j) || (fields >> rest) || i < 0 || j < 0)
      throw InputError("edge list line " + std::to_string(lineno) + ": expected \"i j\"");
    edges.emplace_back(static_cast<Unit>(i), static_cast<Unit>(j));
    max_index = std::max({max_index, static_cast<std::size_t>(i), static_cast<std::size_t>(j)});
    any = true;
  }
  std::size_t n = std::max(declared, n_units_hint);
  if (n == 0) n = any ? max_index + 1 : 0;
  if (any && max_index >= n)
    throw InputError("edge list references unit " + std::to_string(max_index) +
                     " but declares " + std::to_string(n) + " units");
  return NetworkGraph(n, edges);
}

inline void write_edge_list(std::ostream& out, const NetworkGraph& g) {
  out << "# units: " << g.size() << '\n';
  for (const auto& [i, j] : g.edges()) out << i << ' ' << j << '\n';
}

}  // namespace nsi
