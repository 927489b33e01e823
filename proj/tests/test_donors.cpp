#include <gtest/gtest.h>

#include <algorithm>
#include <numeric>
#include <random>

#include "nsi/donors.hpp"

using namespace nsi;

namespace {

TreatmentPanel panel_from(const Eigen::MatrixXi& a_pre, const TreatmentVector& a_post, int d) {
  return TreatmentPanel::from_parts(a_pre, a_post, 2, d);
}

// Tries every ordering of N(i) against the raw treatment matrix and returns
// the lexicographically first witness.
std::optional<std::vector<std::size_t>> brute_witness(const NetworkGraph& g, const TreatmentPanel& a, Unit n,
                                                      Unit i, const TreatmentVector& target) {
  const auto en = g.neighbors(n);
  const auto dn = g.neighbors(i);
  if (en.size() != dn.size()) return std::nullopt;
  std::vector<std::size_t> perm(en.size());
  std::iota(perm.begin(), perm.end(), std::size_t{0});
  do {
    bool ok = true;
    for (std::size_t k = 0; k < en.size() && ok; ++k) {
      for (std::size_t t = 0; t < a.t_pre() && ok; ++t) ok = a.at(dn[perm[k]], t) == a.at(en[k], t);
      ok = ok && a.at(dn[perm[k]], a.t_pre()) == target[k];
    }
    if (ok) return perm;
  } while (std::next_permutation(perm.begin(), perm.end()));
  return std::nullopt;
}

void expect_members_valid(const NetworkGraph& g, const TreatmentPanel& a, const DonorSet& ds) {
  const auto en = g.neighbors(ds.ego);
  for (const auto& m : ds.members) {
    EXPECT_NE(m.donor, ds.ego);
    const auto dn = g.neighbors(m.donor);
    ASSERT_EQ(dn.size(), en.size());
    for (std::size_t k = 0; k < en.size(); ++k) {
      for (std::size_t t = 0; t < a.t_pre(); ++t) EXPECT_EQ(a.at(dn[m.perm[k]], t), a.at(en[k], t));
      EXPECT_EQ(a.at(dn[m.perm[k]], a.t_pre()), ds.target_nbhd[k]);
    }
  }
}

TreatmentPanel random_panel(std::size_t n, std::size_t t_pre, int d, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::uniform_int_distribution<int> pick(1, d);
  Eigen::MatrixXi a_pre(static_cast<Eigen::Index>(n), static_cast<Eigen::Index>(t_pre));
  for (Eigen::Index k = 0; k < a_pre.size(); ++k) a_pre(k) = pick(rng);
  TreatmentVector post(n);
  for (auto& v : post) v = pick(rng);
  return panel_from(a_pre, post, d);
}

}  // namespace

TEST(Donors, ConstantTrainingAllUnitsDonate) {
  const NetworkGraph g = make_ring(6);
  const TreatmentPanel a = panel_from(Eigen::MatrixXi::Ones(6, 4), TreatmentVector(6, 2), 2);
  const DonorSet ds = find_donors(g, a, 2, TreatmentVector{2, 2, 2});
  EXPECT_EQ(ds.units(), (std::vector<Unit>{0, 1, 3, 4, 5}));
  expect_members_valid(g, a, ds);
}

TEST(Donors, DegreeMismatchExcludesHub) {
  const NetworkGraph g = make_star(5);
  const TreatmentPanel a = panel_from(Eigen::MatrixXi::Ones(5, 3), TreatmentVector(5, 1), 2);
  const DonorSet ds = find_donors(g, a, 1, TreatmentVector{1, 1}, DonorMode::exhaustive);
  EXPECT_EQ(ds.units(), (std::vector<Unit>{2, 3, 4}));
}

TEST(Donors, RingPatternSiSevenNsiFour) {
  // Seven units other than the ego receive treatment 2; only four closed
  // neighborhoods hold exactly one treated unit.
  const NetworkGraph g = make_ring(11);
  const TreatmentVector post{2, 1, 1, 2, 2, 2, 2, 2, 1, 2, 1};
  const TreatmentPanel a = panel_from(Eigen::MatrixXi::Ones(11, 3), post, 2);
  // N(10) = {0, 9, 10}; the ego alone is treated.
  const TreatmentVector target{1, 1, 2};
  const DonorSet nsi = find_donors(g, a, 10, target, DonorMode::exhaustive);
  EXPECT_EQ(nsi.units(), (std::vector<Unit>{0, 1, 2, 9}));
  expect_members_valid(g, a, nsi);
  const DonorSet si = find_si_donors(g, a, 10, 2);
  EXPECT_EQ(si.units(), (std::vector<Unit>{0, 3, 4, 5, 6, 7, 9}));
}

TEST(Donors, ExhaustiveMatchesBruteForceOnRing8) {
  const NetworkGraph g = make_ring(8);
  Eigen::MatrixXi pre(8, 2);
  pre << 1, 2, 2, 1, 1, 1, 2, 1, 1, 2, 2, 1, 1, 1, 2, 1;
  const TreatmentVector post{1, 2, 1, 2, 2, 1, 1, 2};
  const TreatmentPanel a = panel_from(pre, post, 2);
  const DonorFinder f(g, a);
  std::size_t total = 0;
  for (Unit n = 0; n < 8; ++n) {
    for (int code = 0; code < 8; ++code) {
      const TreatmentVector tgt{1 + (code & 1), 1 + ((code >> 1) & 1), 1 + ((code >> 2) & 1)};
      const DonorSet ds = f.find(n, tgt, DonorMode::exhaustive);
      std::vector<DonorMember> expected;
      for (Unit i = 0; i < 8; ++i)
        if (i != n)
          if (auto w = brute_witness(g, a, n, i, tgt)) expected.push_back({i, *w});
      EXPECT_EQ(ds.members, expected);
      total += ds.size();
    }
  }
  EXPECT_GT(total, 0u);
}

TEST(Donors, ExhaustiveEqualsBruteForceOnSmallRandomGraphs) {
  for (std::uint64_t seed = 0; seed < 60; ++seed) {
    const std::size_t n_units = 4 + seed % 5;  // <= 8 units
    const NetworkGraph g = make_random_bounded_degree(n_units, 3, 0.6, seed);
    const int d = 2 + static_cast<int>(seed % 2);
    const TreatmentPanel a = random_panel(n_units, 1 + seed % 3, d, seed * 7 + 1);
    const DonorFinder f(g, a);
    std::mt19937_64 rng(seed);
    for (Unit n = 0; n < n_units; ++n) {
      TreatmentVector tgt(g.neighbors(n).size());
      for (auto& v : tgt) v = 1 + static_cast<int>(rng() % static_cast<unsigned>(d));
      // use the ego's actual post assignment half the time so matches occur
      if (rng() % 2) tgt = TreatmentPanel::restrict_to(g, n, a.a_post());
      const DonorSet ex = f.find(n, tgt, DonorMode::exhaustive);
      const DonorSet id = f.find(n, tgt, DonorMode::identity);
      std::vector<DonorMember> expected;
      for (Unit i = 0; i < n_units; ++i)
        if (i != n)
          if (auto w = brute_witness(g, a, n, i, tgt)) expected.push_back({i, *w});
      EXPECT_EQ(ex.members, expected) << "seed " << seed << " unit " << n;
      const auto ids = id.units();
      const auto exs = ex.units();
      EXPECT_TRUE(std::includes(exs.begin(), exs.end(), ids.begin(), ids.end()));
      expect_members_valid(g, a, id);
    }
  }
}

TEST(Donors, IdentityNsiDonorsAreSiDonorsWhenSelfPositionsAlign) {
  for (std::uint64_t seed = 0; seed < 10; ++seed) {
    const NetworkGraph g = make_ring(40);
    const TreatmentPanel a = random_panel(40, 2, 2, seed);
    const DonorFinder f(g, a);
    for (Unit n = 1; n + 1 < 40; ++n) {  // self sits in the middle of N(n)
      const TreatmentVector tgt = TreatmentPanel::restrict_to(g, n, a.a_post());
      const DonorSet nsi = f.find(n, tgt, DonorMode::identity);
      const auto si = f.find_si(n, tgt[1]).units();
      for (const auto& m : nsi.members) {
        if (m.donor == 0 || m.donor == 39) continue;
        EXPECT_TRUE(std::binary_search(si.begin(), si.end(), m.donor));
      }
    }
  }
}

TEST(Donors, NoSpilloverNsiEqualsSi) {
  const NetworkGraph g(10, {});
  const TreatmentPanel a = random_panel(10, 2, 2, 3);
  for (Unit n = 0; n < 10; ++n)
    for (Treatment t : {1, 2}) {
      EXPECT_EQ(find_donors(g, a, n, TreatmentVector{t}).units(), find_si_donors(g, a, n, t).units());
    }
}

TEST(Donors, TargetValidation) {
  const NetworkGraph g = make_ring(6);
  const TreatmentPanel a = random_panel(6, 2, 2, 1);
  EXPECT_THROW(find_donors(g, a, 0, TreatmentVector{1, 2}), InputError);
  EXPECT_THROW(find_donors(g, a, 0, TreatmentVector{1, 2, 3}), InputError);
  EXPECT_THROW(find_si_donors(g, a, 0, 3), InputError);
}

TEST(Donors, SubmatricesFollowMemberOrder) {
  Eigen::MatrixXd z(5, 4);
  for (Eigen::Index t = 0; t < 5; ++t)
    for (Eigen::Index i = 0; i < 4; ++i) z(t, i) = 10.0 * static_cast<double>(t) + static_cast<double>(i);
  const ObservationPanel p(z, 3);
  DonorSet ds{0, {1}, {{3, {0}}, {1, {0}}}};
  const DonorMatrices m = donor_submatrices(p, ds);
  EXPECT_EQ(m.z_pre_n, z.col(0).head(3));
  EXPECT_EQ(m.z_pre.col(0), z.col(3).head(3));
  EXPECT_EQ(m.z_pre.col(1), z.col(1).head(3));
  EXPECT_EQ(m.z_post.col(0), z.col(3).tail(2));

  DonorSet one{2, {1}, {{1, {0}}}};
  EXPECT_EQ(donor_submatrices(p, one).z_pre, z.col(1).head(3));

  DonorSet none{2, {1}, {}};
  EXPECT_THROW(donor_submatrices(p, none), EmptyDonorsError);
}

TEST(Donors, SubmatricesMatchReindexing) {
  std::mt19937_64 rng(5);
  std::normal_distribution<double> nd;
  Eigen::MatrixXd z(12, 9);
  for (Eigen::Index k = 0; k < z.size(); ++k) z(k) = nd(rng);
  const ObservationPanel p(z, 8);
  DonorSet ds{4, {1}, {{7, {0}}, {0, {0}}, {5, {0}}, {2, {0}}}};
  const DonorMatrices m = donor_submatrices(p, ds);
  for (std::size_t c = 0; c < ds.size(); ++c)
    for (Eigen::Index t = 0; t < 12; ++t) {
      const double v = z(t, static_cast<Eigen::Index>(ds.members[c].donor));
      if (t < 8) EXPECT_EQ(m.z_pre(t, static_cast<Eigen::Index>(c)), v);
      else EXPECT_EQ(m.z_post(t - 8, static_cast<Eigen::Index>(c)), v);
    }
}
