#include <gtest/gtest.h>

#include <random>

#include "nsi/design.hpp"
#include "nsi/estimator.hpp"

using namespace nsi;

namespace {

Eigen::MatrixXd gaussian(Eigen::Index rows, Eigen::Index cols, std::mt19937_64& rng, double sd = 1.0) {
  std::normal_distribution<double> nd(0.0, sd);
  Eigen::MatrixXd m(rows, cols);
  for (Eigen::Index k = 0; k < m.size(); ++k) m(k) = nd(rng);
  return m;
}

DonorMatrices random_matrices(std::uint64_t seed, Eigen::Index t_pre = 30, Eigen::Index t_post = 7,
                              Eigen::Index donors = 9) {
  std::mt19937_64 rng(seed);
  return {gaussian(t_pre, 1, rng).col(0), gaussian(t_pre, donors, rng), gaussian(t_post, donors, rng)};
}

struct World {
  NetworkGraph g;
  TreatmentPanel a;
  Simulation sim;
};

World design_world(std::size_t n, int rank, double sigma, std::uint64_t seed, std::size_t t_pre = 60,
                   std::size_t t_post = 10) {
  World w{make_ring(n), {}, {}};
  const DesignSchedule s = design_schedule(w.g, 2, 1);
  const Eigen::MatrixXi a_pre = stretch_schedule(s, t_pre);
  w.a = TreatmentPanel::from_parts(a_pre, random_prediction_treatments(n, 2, seed + 1), t_post, 2);
  w.sim = simulate(w.g, w.a, {rank, sigma, seed});
  return w;
}

}  // namespace

TEST(Estimator, SingleExactDonor) {
  Eigen::MatrixXd z(6, 2);
  z << 1, 1, 2, 2, 3, 3, 4, 4, 5, 7, 6, 9;
  const ObservationPanel p(z, 4);
  const DonorSet ds{0, {1}, {{1, {0}}}};
  EstimateOptions o;
  o.kappa = KappaPolicy::exactly(1);
  const EstimateReport r = estimate(p, ds, o);
  EXPECT_NEAR(r.alpha(0), 1.0, 1e-14);
  EXPECT_NEAR(r.point, 8.0, 1e-13);
  EXPECT_NEAR(r.sigma_hat, 0.0, 1e-14);
  EXPECT_EQ(r.donors, (std::vector<Unit>{1}));
}

TEST(Estimator, ThreeFormulationsAgree) {
  for (std::uint64_t seed = 0; seed < 30; ++seed) {
    const DonorMatrices m = random_matrices(seed);
    EstimateOptions o;
    o.kappa = KappaPolicy::exactly(1 + static_cast<int>(seed % 6));
    const EstimateReport r = estimate(m, o);
    const double t_post = static_cast<double>(m.z_post.rows());
    const double matrix_form =
        (Eigen::RowVectorXd::Ones(m.z_post.rows()) * m.z_post * svt_pinv(m.z_pre, r.kappa) * m.z_pre_n)(0) / t_post;
    double double_sum = 0.0;
    for (Eigen::Index t = 0; t < m.z_post.rows(); ++t)
      for (Eigen::Index j = 0; j < m.z_post.cols(); ++j) double_sum += r.alpha(j) * m.z_post(t, j);
    double_sum /= t_post;
    EXPECT_NEAR(r.point, matrix_form, 1e-12);
    EXPECT_NEAR(r.point, double_sum, 1e-12);
    EXPECT_NEAR(r.pointwise.mean(), r.point, 1e-12);
  }
}

TEST(Estimator, CiWidthFormula) {
  for (std::uint64_t seed = 0; seed < 10; ++seed) {
    const DonorMatrices m = random_matrices(seed + 50);
    for (double level : {80.0, 95.0, 99.0}) {
      for (bool two : {false, true}) {
        EstimateOptions o;
        o.kappa = KappaPolicy::exactly(3);
        o.ci_level = level;
        o.two_sided = two;
        const EstimateReport r = estimate(m, o);
        const double p = level / 100.0;
        const double z = normal_quantile(two ? (1.0 + p) / 2.0 : p);
        const double width = 2.0 * z * r.sigma_hat * r.alpha.norm() / std::sqrt(static_cast<double>(m.z_post.rows()));
        EXPECT_NEAR(r.ci_hi - r.ci_lo, width, 1e-12);
        EXPECT_NEAR(0.5 * (r.ci_hi + r.ci_lo), r.point, 1e-12);
      }
    }
  }
  EXPECT_NEAR(ci_multiplier(95.0, false), 1.6448536269514722, 1e-12);
  EXPECT_NEAR(ci_multiplier(95.0, true), 1.959963984540054, 1e-12);
  EXPECT_THROW(ci_multiplier(100.0, false), InputError);
}

TEST(Estimator, ZeroResidualCollapsesInterval) {
  std::mt19937_64 rng(3);
  const Eigen::MatrixXd pre = gaussian(20, 2, rng) * gaussian(2, 6, rng);
  const Eigen::VectorXd beta = gaussian(6, 1, rng).col(0);
  const DonorMatrices m{pre * beta, pre, gaussian(5, 6, rng)};
  EstimateOptions o;
  o.kappa = KappaPolicy::exactly(2);
  const EstimateReport r = estimate(m, o);
  EXPECT_LE(r.sigma_hat, 1e-12);
  EXPECT_NEAR(r.ci_lo, r.point, 1e-10);
  EXPECT_NEAR(r.ci_hi, r.point, 1e-10);
}

TEST(Estimator, Errors) {
  const DonorMatrices m = random_matrices(1);
  EXPECT_THROW(estimate(DonorMatrices{m.z_pre_n, Eigen::MatrixXd(30, 0), Eigen::MatrixXd(7, 0)}, {}), EmptyDonorsError);
  EXPECT_THROW(estimate(DonorMatrices{Eigen::VectorXd(0), Eigen::MatrixXd(0, 9), m.z_post}, {}), InputError);
  EXPECT_THROW(estimate(DonorMatrices{m.z_pre_n, m.z_pre, Eigen::MatrixXd(0, 9)}, {}), InputError);
  EstimateOptions o;
  o.kappa = KappaPolicy::exactly(3);
  const Eigen::MatrixXd rank2 = m.z_pre.leftCols(2) * Eigen::MatrixXd::Ones(2, 9);
  EXPECT_THROW(estimate(DonorMatrices{m.z_pre_n, rank2, m.z_post}, o), DegenerateRankError);
  const ObservationPanel p(Eigen::MatrixXd::Ones(5, 3), 0);
  EXPECT_THROW(estimate(p, DonorSet{0, {1}, {{1, {0}}}}), InputError);
  const ObservationPanel q(Eigen::MatrixXd::Ones(5, 3), 3);
  EXPECT_THROW(estimate(q, DonorSet{0, {1}, {}}), EmptyDonorsError);
}

TEST(Estimator, LeftoverEnergyWarning) {
  const DonorMatrices m = random_matrices(9);
  EstimateOptions o;
  o.kappa = KappaPolicy::exactly(1);
  EXPECT_FALSE(estimate(m, o).warnings.empty());
  o.kappa = KappaPolicy::exactly(9);
  EXPECT_TRUE(estimate(m, o).warnings.empty());
}

TEST(Estimator, NoiselessWorldsAreIdentified) {
  for (int rank : {1, 2, 3}) {
    const World w = design_world(200, rank, 0.0, 40 + static_cast<std::uint64_t>(rank));
    const DonorFinder f(w.g, w.a);
    std::size_t checked = 0;
    for (Unit n = 20; n < 200; n += 9) {
      for (int code = 0; code < 8; ++code) {
        const TreatmentVector tgt{1 + (code & 1), 1 + ((code >> 1) & 1), 1 + ((code >> 2) & 1)};
        const DonorSet ds = f.find(n, tgt, DonorMode::identity);
        if (ds.size() < static_cast<std::size_t>(3 * rank)) continue;
        const double truth = true_estimand(w.sim.world, w.g, w.a, n, tgt);
        // kappa = rank of the donors' training matrix; with exactly r(d+1)
        // donors there is no cliff for the knee to find
        const DonorMatrices zm = donor_submatrices(w.sim.observations, ds);
        const Eigen::VectorXd sv = decompose(zm.z_pre).singular_values;
        EstimateOptions o;
        o.kappa = KappaPolicy::exactly(numerical_rank(std::span<const double>(sv.data(), sv.size())));
        const EstimateReport r = estimate(w.sim.observations, ds, o);
        EXPECT_NEAR(r.point, truth, 1e-8) << "rank " << rank << " unit " << n;
        if (ds.size() > static_cast<std::size_t>(3 * rank)) EXPECT_NEAR(estimate(w.sim.observations, ds).point, truth, 1e-8);
        const ObservationPanel means(w.sim.mean, w.a.t_pre());
        const DonorMatrices mm = donor_submatrices(means, ds);
        EXPECT_NEAR(identification_oracle(mm.z_pre, mm.z_post, mm.z_pre_n), truth, 1e-9);
        ++checked;
      }
    }
    EXPECT_GT(checked, 20u);
  }
}

TEST(Estimator, OracleWithTwinDonor) {
  Eigen::MatrixXd pre(4, 1), post(2, 1);
  pre << 1, -2, 3, 0.5;
  post << 4, 6;
  EXPECT_NEAR(identification_oracle(pre, post, pre.col(0)), 5.0, 1e-14);
}

TEST(Estimator, ConstantTrainingBreaksIdentification) {
  // Every unit is untreated throughout training, so a unit's own effect and
  // its neighbors' effects cannot be separated.
  const NetworkGraph g = make_ring(60);
  TreatmentVector post(60, 1);
  for (Unit i = 0; i < 60; i += 3) post[i] = 2;  // every third unit treated
  const TreatmentPanel a = TreatmentPanel::from_parts(Eigen::MatrixXi::Ones(60, 40), post, 5, 2);
  const Simulation sim = simulate(g, a, {2, 0.0, 8});
  const ObservationPanel means(sim.mean, 40);
  // ego 31: N = {30, 31, 32}; target treats only the left neighbor.
  const TreatmentVector tgt{2, 1, 1};
  const DonorSet ds = find_donors(g, a, 31, tgt, DonorMode::exhaustive);
  ASSERT_FALSE(ds.empty());
  const DonorMatrices mm = donor_submatrices(means, ds);
  const double truth = true_estimand(sim.world, g, a, 31, tgt);
  EXPECT_GT(std::abs(identification_oracle(mm.z_pre, mm.z_post, mm.z_pre_n) - truth), 1e-3);
}

TEST(Estimator, CoverageInWellSpecifiedModel) {
  // Generic low-rank panel: i.i.d. time factors, ego in the donor span,
  // fixed kappa equal to the true rank and a single prediction measurement.
  std::mt19937_64 rng(2024);
  const int reps = 400, k = 3;
  const Eigen::Index t_pre = 1000, donors = 30;
  const double sigma = 0.3;
  int covered = 0;
  for (int rep = 0; rep < reps; ++rep) {
    const Eigen::MatrixXd u = gaussian(k, donors, rng);
    const Eigen::VectorXd beta = gaussian(donors, 1, rng, 0.2).col(0);
    const Eigen::MatrixXd w_pre = gaussian(t_pre, k, rng);
    const Eigen::MatrixXd w_post = gaussian(1, k, rng);
    DonorMatrices m;
    m.z_pre = w_pre * u + gaussian(t_pre, donors, rng, sigma);
    m.z_post = w_post * u + gaussian(1, donors, rng, sigma);
    m.z_pre_n = w_pre * u * beta + gaussian(t_pre, 1, rng, sigma).col(0);
    const double theta = (w_post * u * beta)(0);
    EstimateOptions o;
    o.kappa = KappaPolicy::exactly(k);
    const EstimateReport r = estimate(m, o);
    if (r.ci_lo <= theta && theta <= r.ci_hi) ++covered;
  }
  const double rate = static_cast<double>(covered) / reps;
  EXPECT_GE(rate, 0.88);
  EXPECT_LE(rate, 0.99);
}
