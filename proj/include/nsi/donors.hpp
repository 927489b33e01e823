#pragma once

// Donor discovery. A unit i != n donates to (n, target) when |N(i)| = |N(n)|
// and some reordering of N(i) reproduces both the training treatments of
// N(n), row for row, and the target assignment over the prediction period.

#include <Eigen/Dense>
#include <algorithm>
#include <map>
#include <numeric>
#include <span>
#include <vector>

#include "nsi/error.hpp"
#include "nsi/graph.hpp"
#include "nsi/panel.hpp"

namespace nsi {

struct DonorMember {
  Unit donor = 0;
  /// perm[k] is the position within N(donor) that plays the role of the
  /// k-th neighbor of the ego.
  std::vector<std::size_t> perm;

  friend bool operator==(const DonorMember&, const DonorMember&) = default;
};

struct DonorSet {
  Unit ego = 0;
  TreatmentVector target_nbhd;
  std::vector<DonorMember> members;

  bool empty() const noexcept { return members.empty(); }
  std::size_t size() const noexcept { return members.size(); }

  std::vector<Unit> units() const {
    std::vector<Unit> out;
    out.reserve(members.size());
    for (const auto& m : members) out.push_back(m.donor);
    return out;
  }
};

/// identity: only the canonical alignment perm[k] = k is tried. exhaustive:
/// any reordering of N(i) is allowed.
enum class DonorMode { identity, exhaustive };

/// Precomputes per-unit training-row identifiers for one (graph, panel) pair
/// so that repeated donor queries cost O(N |N(n)|) each.
class DonorFinder {
 public:
  DonorFinder(const NetworkGraph& g, const TreatmentPanel& treatments)
      : g_(&g), treatments_(&treatments), a_post_(treatments.a_post()), row_id_(g.size()) {
    if (treatments.n_units() != g.size())
      throw InputError("treatment panel and graph disagree on the number of units");
    std::map<std::vector<Treatment>, int> ids;
    std::vector<Treatment> row(treatments.t_pre());
    for (Unit i = 0; i < g.size(); ++i) {
      for (std::size_t t = 0; t < row.size(); ++t) row[t] = treatments.at(i, t);
      row_id_[i] = ids.try_emplace(row, static_cast<int>(ids.size())).first->second;
    }
  }

  /// Identifier shared by exactly those units with identical training rows.
  int training_row_id(Unit i) const { return row_id_.at(i); }

  DonorSet find(Unit n, std::span<const Treatment> target_nbhd, DonorMode mode) const {
    const auto ego_nb = g_->neighbors(n);
    check_target(n, target_nbhd);
    DonorSet ds{n, TreatmentVector(target_nbhd.begin(), target_nbhd.end()), {}};
    std::vector<std::size_t> perm;
    for (Unit i = 0; i < g_->size(); ++i) {
      if (i == n || g_->neighbors(i).size() != ego_nb.size()) continue;
      const bool ok = mode == DonorMode::identity ? match_identity(n, i, target_nbhd, perm)
                                                  : match_any(n, i, target_nbhd, perm);
      if (ok) ds.members.push_back({i, perm});
    }
    return ds;
  }

  /// Donors under the no-interference rule: same own training row and own
  /// prediction treatment equal to own_target.
  DonorSet find_si(Unit n, Treatment own_target) const {
    g_->neighbors(n);  // range check
    if (own_target < 1 || own_target > treatments_->d_treatments())
      throw InputError("target treatment out of range");
    DonorSet ds{n, {own_target}, {}};
    for (Unit i = 0; i < g_->size(); ++i) {
      if (i != n && row_id_[i] == row_id_[n] && a_post_[i] == own_target) ds.members.push_back({i, {0}});
    }
    return ds;
  }

 private:
  void check_target(Unit n, std::span<const Treatment> target_nbhd) const {
    if (target_nbhd.size() != g_->neighbors(n).size())
      throw InputError("target has " + std::to_string(target_nbhd.size()) + " entries but N(" +
                       std::to_string(n) + ") has " + std::to_string(g_->neighbors(n).size()));
    for (Treatment a : target_nbhd)
      if (a < 1 || a > treatments_->d_treatments()) throw InputError("target treatment out of range");
  }

  bool match_identity(Unit n, Unit i, std::span<const Treatment> target,
                      std::vector<std::size_t>& perm) const {
    const auto en = g_->neighbors(n);
    const auto dn = g_->neighbors(i);
    for (std::size_t k = 0; k < en.size(); ++k) {
      if (row_id_[dn[k]] != row_id_[en[k]] || a_post_[dn[k]] != target[k]) return false;
    }
    perm.resize(en.size());
    std::iota(perm.begin(), perm.end(), std::size_t{0});
    return true;
  }

  // A witnessing reordering exists iff the multisets of (training row,
  // prediction treatment) pairs agree. Taking, for each ego position in turn,
  // the smallest unused matching donor position yields the lexicographically
  // smallest witness.
  bool match_any(Unit n, Unit i, std::span<const Treatment> target,
                 std::vector<std::size_t>& perm) const {
    const auto en = g_->neighbors(n);
    const auto dn = g_->neighbors(i);
    std::vector<char> used(dn.size(), 0);
    perm.assign(en.size(), 0);
    for (std::size_t k = 0; k < en.size(); ++k) {
      bool found = false;
      for (std::size_t j = 0; j < dn.size(); ++j) {
        if (!used[j] && row_id_[dn[j]] == row_id_[en[k]] && a_post_[dn[j]] == target[k]) {
          used[j] = 1;
          perm[k] = j;
          found = true;
          break;
        }
      }
      if (!found) return false;
    }
    return true;
  }

  const NetworkGraph* g_;
  const TreatmentPanel* treatments_;
  TreatmentVector a_post_;
  std::vector<int> row_id_;
};

inline DonorSet find_donors(const NetworkGraph& g, const TreatmentPanel& treatments, Unit n,
                            std::span<const Treatment> target_nbhd,
                            DonorMode mode = DonorMode::identity) {
  return DonorFinder(g, treatments).find(n, target_nbhd, mode);
}

inline DonorSet find_si_donors(const NetworkGraph& g, const TreatmentPanel& treatments, Unit n,
                               Treatment own_target) {
  return DonorFinder(g, treatments).find_si(n, own_target);
}

struct DonorMatrices {
  Eigen::VectorXd z_pre_n;  ///< T_pre
  Eigen::MatrixXd z_pre;    ///< T_pre x |I|
  Eigen::MatrixXd z_post;   ///< T_post x |I|
};

/// Column extraction in donor-set order.
inline DonorMatrices donor_submatrices(const ObservationPanel& z, const DonorSet& ds) {
  if (ds.empty()) throw EmptyDonorsError("no donors for unit " + std::to_string(ds.ego));
  if (ds.ego >= z.n_units()) throw InputError("ego unit outside the observation panel");
  const auto tp = static_cast<Eigen::Index>(z.t_pre());
  const auto tq = static_cast<Eigen::Index>(z.t_post());
  DonorMatrices m;
  m.z_pre_n = z.matrix().col(static_cast<Eigen::Index>(ds.ego)).head(tp);
  m.z_pre.resize(tp, static_cast<Eigen::Index>(ds.size()));
  m.z_post.resize(tq, static_cast<Eigen::Index>(ds.size()));
  for (std::size_t c = 0; c < ds.size(); ++c) {
    const Unit i = ds.members[c].donor;
    if (i >= z.n_units()) throw InputError("donor outside the observation panel");
    m.z_pre.col(static_cast<Eigen::Index>(c)) = z.matrix().col(static_cast<Eigen::Index>(i)).head(tp);
    m.z_post.col(static_cast<Eigen::Index>(c)) = z.matrix().col(static_cast<Eigen::Index>(i)).tail(tq);
  }
  return m;
}

}  // namespace nsi
