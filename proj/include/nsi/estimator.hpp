#pragma once

// Two-step estimation: learn donor weights by principal component regression
// on the training measurements, then average the weighted donor outcomes over
// the prediction measurements.

#include <Eigen/Dense>
#include <boost/math/distributions/normal.hpp>
#include <cmath>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "nsi/donors.hpp"
#include "nsi/error.hpp"
#include "nsi/panel.hpp"
#include "nsi/spectral.hpp"
#include "nsi/validity.hpp"

namespace nsi {

/// Standard normal quantile.
inline double normal_quantile(double p) {
  if (!(p > 0.0 && p < 1.0)) throw InputError("quantile level must lie in (0, 1)");
  return boost::math::quantile(boost::math::normal_distribution<double>(), p);
}

struct EstimateOptions {
  KappaPolicy kappa = KappaPolicy::automatic();
  double ci_level = 95.0;  ///< percent
  /// false: multiplier Phi^-1(level/100), applied on both sides of the point.
  /// true:  multiplier Phi^-1((1 + level/100) / 2).
  bool two_sided = false;
  double energy_warning = 0.10;  ///< warn when spectral energy beyond kappa exceeds this share
};

/// Multiplier applied to sigma_hat * ||alpha||_2 / sqrt(T_post).
inline double ci_multiplier(double level, bool two_sided) {
  if (!(level > 0.0 && level < 100.0)) throw InputError("ci level must lie in (0, 100)");
  const double p = level / 100.0;
  return normal_quantile(two_sided ? 0.5 * (1.0 + p) : p);
}

struct Diagnostics {
  std::optional<TrainingTestResult> training;
  std::optional<SubspaceTestResult> subspace;
};

struct EstimateReport {
  double point = 0.0;
  Eigen::VectorXd alpha;
  double sigma_hat = 0.0;
  int kappa = 0;
  Eigen::VectorXd spectrum;
  double ci_lo = 0.0;
  double ci_hi = 0.0;
  double ci_level = 95.0;
  bool two_sided = false;
  Eigen::VectorXd pointwise;  ///< Z_post,I alpha, one entry per prediction measurement
  std::vector<Unit> donors;
  Diagnostics diagnostics;
  std::vector<std::string> warnings;
};

/// Estimate with a given decomposition of m.z_pre and a fixed kappa.
inline EstimateReport estimate_at(const DonorMatrices& m, const SpectralDecomposition& sd, int kappa,
                                  const EstimateOptions& opts) {
  const auto t_pre = m.z_pre.rows();
  const auto t_post = m.z_post.rows();
  if (t_pre == 0) throw InputError("no training measurements (T_pre = 0)");
  if (t_post == 0) throw InputError("no prediction measurements (T_post = 0)");
  if (m.z_pre.cols() == 0) throw EmptyDonorsError();

  EstimateReport rep;
  rep.spectrum = sd.singular_values;
  rep.kappa = kappa;
  rep.alpha = svt_pinv(sd, kappa) * m.z_pre_n;
  rep.pointwise = m.z_post * rep.alpha;
  rep.point = rep.pointwise.mean();
  rep.sigma_hat = std::sqrt((m.z_pre_n - m.z_pre * rep.alpha).squaredNorm() / static_cast<double>(t_pre));

  const double half = ci_multiplier(opts.ci_level, opts.two_sided) * rep.sigma_hat * rep.alpha.norm() /
                      std::sqrt(static_cast<double>(t_post));
  rep.ci_lo = rep.point - half;
  rep.ci_hi = rep.point + half;
  rep.ci_level = opts.ci_level;
  rep.two_sided = opts.two_sided;

  const double leftover = trailing_energy(sd.singular_values, kappa);
  if (leftover > opts.energy_warning)
    rep.warnings.push_back("kappa = " + std::to_string(kappa) + " leaves " +
                           std::to_string(100.0 * leftover) + "% of the spectral energy unused");
  return rep;
}

/// Estimate on already-extracted donor matrices. neighborhood_size feeds the
/// |N(n)| floor of KappaPolicy::automatic().
inline EstimateReport estimate(const DonorMatrices& m, const EstimateOptions& opts,
                               std::size_t neighborhood_size = 0) {
  if (m.z_pre.rows() == 0) throw InputError("no training measurements (T_pre = 0)");
  if (m.z_pre.cols() == 0) throw EmptyDonorsError();
  const SpectralDecomposition sd = decompose(m.z_pre);
  const int kappa = select_kappa(sd.singular_values, opts.kappa, static_cast<std::size_t>(m.z_pre.rows()),
                                 static_cast<std::size_t>(m.z_pre.cols()), neighborhood_size);
  return estimate_at(m, sd, kappa, opts);
}

inline EstimateReport estimate(const ObservationPanel& z, const DonorSet& ds,
                               const EstimateOptions& opts = {}) {
  if (z.t_pre() == 0) throw InputError("no training measurements (T_pre = 0)");
  EstimateReport rep = estimate(donor_submatrices(z, ds), opts, ds.target_nbhd.size());
  rep.donors = ds.units();
  return rep;
}

/// Noiseless identification formula
///   (1/T_post) 1^T E[Z_post,I] E[Z_pre,I]^+ E[z_pre,n]
/// with a full pseudo-inverse (singular values below 1e-10 * s_1 dropped).
inline double identification_oracle(const Eigen::MatrixXd& mean_pre_i, const Eigen::MatrixXd& mean_post_i,
                                    const Eigen::VectorXd& mean_pre_n) {
  if (mean_post_i.rows() == 0) throw InputError("no prediction measurements");
  if (mean_pre_i.cols() != mean_post_i.cols() || mean_pre_i.rows() != mean_pre_n.size())
    throw InputError("oracle inputs have inconsistent shapes");
  if (mean_pre_i.size() == 0) return 0.0;  // empty pseudo-inverse
  Eigen::JacobiSVD<Eigen::MatrixXd> svd(mean_pre_i, Eigen::ComputeThinU | Eigen::ComputeThinV);
  const auto& s = svd.singularValues();
  Eigen::VectorXd inv = Eigen::VectorXd::Zero(s.size());
  for (Eigen::Index l = 0; l < s.size(); ++l)
    if (s(0) > 0.0 && s(l) > rank_floor * s(0)) inv(l) = 1.0 / s(l);
  const Eigen::VectorXd alpha =
      svd.matrixV() * inv.asDiagonal() * (svd.matrixU().transpose() * mean_pre_n);
  return (mean_post_i * alpha).mean();
}

}  // namespace nsi
