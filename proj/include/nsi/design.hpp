#pragma once

// Training schedules built from a coloring of the two-hop graph. Units of one
// color are at least three hops apart, so no neighborhood ever contains two
// of them; each color gets its own non-control label inside its period.

#include <Eigen/Dense>
#include <algorithm>
#include <cstdint>
#include <optional>
#include <random>
#include <span>
#include <vector>

#include "nsi/error.hpp"
#include "nsi/graph.hpp"
#include "nsi/panel.hpp"

namespace nsi {

struct Period {
  std::vector<int> colors;  ///< 0-based color indices active in this period
  std::size_t begin = 0;    ///< first training column
  std::size_t end = 0;      ///< one past the last training column
};

struct DesignSchedule {
  Eigen::MatrixXi a_pre;  ///< N x T_pre
  std::vector<Period> periods;
  std::size_t t_bar = 0;    ///< columns per period
  std::size_t t_prime = 0;  ///< number of periods, ceil(num_colors / (D - 1))
  int d_treatments = 0;
  int r_bar = 0;
  Coloring coloring;

  std::size_t t_pre() const noexcept { return static_cast<std::size_t>(a_pre.cols()); }
  int num_colors() const noexcept { return coloring.num_colors; }
};

/// Upper bound r_bar D (d^2 + D) / (D - 1) on T_pre for max degree d.
inline double training_length_bound(std::size_t max_degree, int d_treatments, int r_bar) {
  if (d_treatments < 2) throw InputError("the design needs at least two treatments");
  const double d = static_cast<double>(max_degree);
  const double dd = d_treatments;
  return r_bar * dd * (d * d + dd) / (dd - 1.0);
}

/// Label a unit with 0-based color c receives during its own period:
/// ((c + 1) mod (D - 1)) + 2, a value in {2, ..., D}.
inline Treatment period_label(int color, int d_treatments) {
  return static_cast<Treatment>((color + 1) % (d_treatments - 1) + 2);
}

/// Schedule for an arbitrary proper coloring of the conflict graph.
inline DesignSchedule design_from_coloring(const Coloring& coloring, int d_treatments, int r_bar,
                                           std::optional<std::size_t> t_bar = std::nullopt) {
  if (d_treatments < 2) throw InputError("the design needs at least two treatments (D >= 2)");
  if (r_bar < 1) throw InputError("r_bar must be at least 1");
  if (coloring.num_colors < 1 || coloring.assignment.empty()) throw InputError("empty coloring");
  const std::size_t min_bar = static_cast<std::size_t>(r_bar) * static_cast<std::size_t>(d_treatments);
  const std::size_t bar = t_bar.value_or(min_bar);
  if (bar < min_bar)
    throw InputError("t_bar must be at least r_bar * D = " + std::to_string(min_bar));

  const int per = d_treatments - 1;
  DesignSchedule s;
  s.t_bar = bar;
  s.t_prime = static_cast<std::size_t>((coloring.num_colors + per - 1) / per);
  s.d_treatments = d_treatments;
  s.r_bar = r_bar;
  s.coloring = coloring;
  for (std::size_t l = 0; l < s.t_prime; ++l) {
    Period p;
    for (int c = static_cast<int>(l) * per; c < std::min(coloring.num_colors, static_cast<int>(l + 1) * per); ++c)
      p.colors.push_back(c);
    p.begin = l * bar;
    p.end = (l + 1) * bar;
    s.periods.push_back(std::move(p));
  }

  const auto n = static_cast<Eigen::Index>(coloring.assignment.size());
  s.a_pre = Eigen::MatrixXi::Ones(n, static_cast<Eigen::Index>(s.t_prime * bar));
  for (Eigen::Index i = 0; i < n; ++i) {
    const int c = coloring.assignment[static_cast<std::size_t>(i)];
    const std::size_t l = static_cast<std::size_t>(c / per);
    s.a_pre.block(i, static_cast<Eigen::Index>(l * bar), 1, static_cast<Eigen::Index>(bar))
        .setConstant(period_label(c, d_treatments));
  }
  return s;
}

/// Greedy two-hop coloring followed by the period layout; period l occupies
/// columns [l * t_bar, (l + 1) * t_bar).
inline DesignSchedule design_schedule(const NetworkGraph& g, int d_treatments, int r_bar,
                                      std::optional<std::size_t> t_bar = std::nullopt) {
  if (d_treatments < 2) throw InputError("the design needs at least two treatments (D >= 2)");
  return design_from_coloring(greedy_color(two_hop(g)), d_treatments, r_bar, t_bar);
}

/// i.i.d. uniform labels in [1, D].
inline TreatmentVector random_prediction_treatments(std::size_t n_units, int d_treatments,
                                                    std::uint64_t seed) {
  if (d_treatments < 1) throw InputError("number of treatments must be at least 1");
  std::mt19937_64 rng(seed);
  std::uniform_int_distribution<int> pick(1, d_treatments);
  TreatmentVector out(n_units);
  for (auto& a : out) a = pick(rng);
  return out;
}

/// Edges between units within two hops whose target labels differ.
inline NetworkGraph conflict_graph(const NetworkGraph& g, std::span<const Treatment> target) {
  if (target.size() != g.size()) throw InputError("target must have one entry per unit");
  const NetworkGraph g2 = two_hop(g);
  std::vector<Edge> edges;
  for (const auto& [i, j] : g2.edges())
    if (target[i] != target[j]) edges.emplace_back(i, j);
  return NetworkGraph(g.size(), edges);
}

/// Schedule tailored to one target assignment. Coloring the sparser conflict
/// graph greedily is not guaranteed to use fewer colors, so the two-hop
/// coloring (also proper on the conflict graph) is kept when it is smaller.
inline DesignSchedule tailored_design(const NetworkGraph& g, int d_treatments, int r_bar,
                                      std::span<const Treatment> target,
                                      std::optional<std::size_t> t_bar = std::nullopt) {
  if (d_treatments < 2) throw InputError("the design needs at least two treatments (D >= 2)");
  for (Treatment a : target)
    if (a < 1 || a > d_treatments) throw InputError("target entries must lie in [1, D]");
  Coloring c = greedy_color(conflict_graph(g, target));
  Coloring full = greedy_color(two_hop(g));
  if (full.num_colors < c.num_colors) c = std::move(full);
  return design_from_coloring(c, d_treatments, r_bar, t_bar);
}

/// Spreads the schedule's periods over exactly t_pre columns: column t
/// belongs to period floor(t * T' / t_pre). Every period must keep at least
/// r_bar * D columns.
inline Eigen::MatrixXi stretch_schedule(const DesignSchedule& s, std::size_t t_pre) {
  const std::size_t tp = s.t_prime;
  const std::size_t min_bar = static_cast<std::size_t>(s.r_bar) * static_cast<std::size_t>(s.d_treatments);
  if (t_pre < tp * min_bar)
    throw InputError("t_pre " + std::to_string(t_pre) + " leaves fewer than r_bar * D columns per period");
  Eigen::MatrixXi out(s.a_pre.rows(), static_cast<Eigen::Index>(t_pre));
  for (std::size_t t = 0; t < t_pre; ++t) {
    const std::size_t l = t * tp / t_pre;
    out.col(static_cast<Eigen::Index>(t)) = s.a_pre.col(static_cast<Eigen::Index>(s.periods[l].begin));
  }
  return out;
}

}  // namespace nsi
