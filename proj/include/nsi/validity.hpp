#pragma once

// Pre-collection check on the treatment masks and post-collection check on
// the observed donor spectra.

#include <Eigen/Dense>
#include <algorithm>
#include <map>
#include <span>
#include <string>
#include <vector>

#include "nsi/error.hpp"
#include "nsi/graph.hpp"
#include "nsi/panel.hpp"
#include "nsi/spectral.hpp"

namespace nsi {

/// Relative singular value tolerance for column ranks and for column-space
/// membership residuals.
inline constexpr double mask_tolerance = 1e-9;

struct MaskMatrices {
  /// rows x (T_pre * D); column a*T_pre + t is Ind(A[i, t] == a + 1).
  Eigen::MatrixXi b_pre;
  /// rows x D; b_post(i, a) = Ind(target_i == a + 1).
  Eigen::MatrixXi b_post;
};

/// Masks over all units.
inline MaskMatrices build_masks(const TreatmentPanel& treatments, std::span<const Treatment> target) {
  treatments.check_vector(target, "target");
  const auto n = static_cast<Eigen::Index>(treatments.n_units());
  const auto tp = static_cast<Eigen::Index>(treatments.t_pre());
  const int d = treatments.d_treatments();
  MaskMatrices m{Eigen::MatrixXi::Zero(n, tp * d), Eigen::MatrixXi::Zero(n, d)};
  for (Eigen::Index i = 0; i < n; ++i) {
    for (Eigen::Index t = 0; t < tp; ++t) m.b_pre(i, (treatments.matrix()(i, t) - 1) * tp + t) = 1;
    m.b_post(i, target[static_cast<std::size_t>(i)] - 1) = 1;
  }
  return m;
}

/// Masks restricted to the rows N(n), with the target given over N(n).
inline MaskMatrices neighborhood_masks(const NetworkGraph& g, const TreatmentPanel& treatments, Unit n,
                                       std::span<const Treatment> target_nbhd) {
  const auto nb = g.neighbors(n);
  if (target_nbhd.size() != nb.size()) throw InputError("target length does not match |N(n)|");
  const auto rows = static_cast<Eigen::Index>(nb.size());
  const auto tp = static_cast<Eigen::Index>(treatments.t_pre());
  const int d = treatments.d_treatments();
  MaskMatrices m{Eigen::MatrixXi::Zero(rows, tp * d), Eigen::MatrixXi::Zero(rows, d)};
  for (Eigen::Index k = 0; k < rows; ++k) {
    const Unit j = nb[static_cast<std::size_t>(k)];
    for (Eigen::Index t = 0; t < tp; ++t) m.b_pre(k, (treatments.at(j, static_cast<std::size_t>(t)) - 1) * tp + t) = 1;
    const Treatment a = target_nbhd[static_cast<std::size_t>(k)];
    if (a < 1 || a > d) throw InputError("target treatment out of range");
    m.b_post(k, a - 1) = 1;
  }
  return m;
}

namespace detail {

/// Orthonormal basis of the column space (relative tolerance mask_tolerance).
inline Eigen::MatrixXd column_basis(const Eigen::MatrixXd& m) {
  if (m.cols() == 0 || m.rows() == 0) return Eigen::MatrixXd(m.rows(), 0);
  Eigen::JacobiSVD<Eigen::MatrixXd> svd(m, Eigen::ComputeThinU);
  const auto& s = svd.singularValues();
  Eigen::Index rank = 0;
  if (s.size() > 0 && s(0) > 0.0)
    while (rank < s.size() && s(rank) > mask_tolerance * s(0)) ++rank;
  return svd.matrixU().leftCols(rank);
}

/// Distinct columns of an integer matrix (column-space is unchanged).
inline Eigen::MatrixXd distinct_columns(const Eigen::MatrixXi& m) {
  std::vector<std::vector<int>> seen;
  for (Eigen::Index c = 0; c < m.cols(); ++c) {
    std::vector<int> col(m.col(c).data(), m.col(c).data() + m.rows());
    if (std::find(seen.begin(), seen.end(), col) == seen.end()) seen.push_back(std::move(col));
  }
  Eigen::MatrixXd out(m.rows(), static_cast<Eigen::Index>(seen.size()));
  for (std::size_t c = 0; c < seen.size(); ++c)
    for (Eigen::Index r = 0; r < m.rows(); ++r) out(r, static_cast<Eigen::Index>(c)) = seen[c][static_cast<std::size_t>(r)];
  return out;
}

}  // namespace detail

/// Numerical column rank of an integer mask matrix.
inline int mask_rank(const Eigen::MatrixXi& m) {
  return static_cast<int>(detail::column_basis(detail::distinct_columns(m)).cols());
}

/// colrank(B^pre[N(n), :]); Assumption 4 needs this to equal |N(n)|.
inline int colrank_diagnostic(const TreatmentPanel& treatments, const NetworkGraph& g, Unit n) {
  const TreatmentVector ones(g.neighbors(n).size(), 1);
  return mask_rank(neighborhood_masks(g, treatments, n, ones).b_pre);
}

struct TrainingTestResult {
  bool pass = false;
  bool span_ok = false;     ///< B~post[N(n), :] columns lie in colspace(B^pre[N(n), :])
  bool repeats_ok = false;  ///< every distinct training column repeats >= r_bar * D times
  int colrank = 0;
  std::size_t min_repeats = 0;       ///< fewest repetitions of a distinct training column
  std::size_t required_repeats = 0;  ///< r_bar * D
  double max_residual = 0.0;         ///< largest projection residual among post columns
};

inline TrainingTestResult training_treatment_test(const NetworkGraph& g, const TreatmentPanel& treatments,
                                                  Unit n, std::span<const Treatment> target_nbhd,
                                                  int r_bar) {
  if (r_bar < 1) throw InputError("r_bar must be at least 1");
  if (treatments.n_units() != g.size())
    throw InputError("treatment panel and graph disagree on the number of units");
  const MaskMatrices m = neighborhood_masks(g, treatments, n, target_nbhd);
  TrainingTestResult res;
  res.required_repeats = static_cast<std::size_t>(r_bar) * static_cast<std::size_t>(treatments.d_treatments());

  const Eigen::MatrixXd basis = detail::column_basis(detail::distinct_columns(m.b_pre));
  res.colrank = static_cast<int>(basis.cols());
  res.span_ok = true;
  for (Eigen::Index a = 0; a < m.b_post.cols(); ++a) {
    const Eigen::VectorXd b = m.b_post.col(a).cast<double>();
    const Eigen::VectorXd resid = b - basis * (basis.transpose() * b);
    res.max_residual = std::max(res.max_residual, resid.norm());
    if (resid.norm() > mask_tolerance * std::max(1.0, b.norm())) res.span_ok = false;
  }

  const auto nb = g.neighbors(n);
  std::map<std::vector<Treatment>, std::size_t> counts;
  std::vector<Treatment> col(nb.size());
  for (std::size_t t = 0; t < treatments.t_pre(); ++t) {
    for (std::size_t k = 0; k < nb.size(); ++k) col[k] = treatments.at(nb[k], t);
    ++counts[col];
  }
  res.repeats_ok = true;
  res.min_repeats = counts.empty() ? 0 : treatments.t_pre();
  for (const auto& [key, c] : counts) {
    res.min_repeats = std::min(res.min_repeats, c);
    if (c < res.required_repeats) res.repeats_ok = false;
  }
  res.pass = res.span_ok && res.repeats_ok;
  return res;
}

struct SubspaceTestResult {
  double beta_hat = 0.0;
  double threshold = 0.0;  ///< (1 - gamma) * kappa_prime
  bool pass = false;
  int kappa = 0;
  int kappa_prime = 0;
  double gamma = 0.5;
};

/// beta_hat = ||(I - R_pre R_pre^T) R_post||_F^2 with R_pre, R_post the top
/// kappa / kappa_prime right singular vectors of the donor pre / post
/// matrices. Passes when beta_hat <= (1 - gamma) kappa_prime.
inline SubspaceTestResult subspace_inclusion_test(const Eigen::MatrixXd& z_pre_i,
                                                  const Eigen::MatrixXd& z_post_i, int kappa,
                                                  int kappa_prime, double gamma = 0.5) {
  if (!(gamma > 0.0 && gamma < 1.0)) throw InputError("gamma must lie in (0, 1)");
  if (z_pre_i.cols() != z_post_i.cols())
    throw InputError("pre and post donor matrices have different donor counts");
  if (z_post_i.size() == 0 || z_post_i.isZero(0.0))
    throw DegenerateRankError("post-period donor matrix is identically zero");
  if (z_pre_i.size() == 0 || z_pre_i.isZero(0.0))
    throw DegenerateRankError("pre-period donor matrix is identically zero");
  const SpectralDecomposition pre = decompose(z_pre_i);
  const SpectralDecomposition post = decompose(z_post_i);
  if (kappa < 1 || kappa > pre.q())
    throw InputError("kappa must lie in [1, " + std::to_string(pre.q()) + "]");
  if (kappa_prime < 1 || kappa_prime > post.q())
    throw InputError("kappa_prime must lie in [1, " + std::to_string(post.q()) + "]");
  const Eigen::MatrixXd r_pre = pre.right.leftCols(kappa);
  const Eigen::MatrixXd r_post = post.right.leftCols(kappa_prime);
  const Eigen::MatrixXd resid = r_post - r_pre * (r_pre.transpose() * r_post);
  SubspaceTestResult res;
  res.beta_hat = resid.squaredNorm();
  res.threshold = (1.0 - gamma) * kappa_prime;
  res.pass = res.beta_hat <= res.threshold;
  res.kappa = kappa;
  res.kappa_prime = kappa_prime;
  res.gamma = gamma;
  return res;
}

/// As above, with kappa and kappa_prime chosen by a policy on each spectrum.
inline SubspaceTestResult subspace_inclusion_test(const Eigen::MatrixXd& z_pre_i,
                                                  const Eigen::MatrixXd& z_post_i,
                                                  const KappaPolicy& policy = KappaPolicy::knee(),
                                                  double gamma = 0.5,
                                                  std::size_t neighborhood_size = 0) {
  if (z_post_i.size() == 0 || z_post_i.isZero(0.0))
    throw DegenerateRankError("post-period donor matrix is identically zero");
  const auto pre = decompose(z_pre_i).singular_values;
  const auto post = decompose(z_post_i).singular_values;
  const int k = select_kappa(pre, policy, static_cast<std::size_t>(z_pre_i.rows()),
                             static_cast<std::size_t>(z_pre_i.cols()), neighborhood_size);
  const int kp = select_kappa(post, policy, static_cast<std::size_t>(z_post_i.rows()),
                              static_cast<std::size_t>(z_post_i.cols()), neighborhood_size);
  return subspace_inclusion_test(z_pre_i, z_post_i, k, kp, gamma);
}

}  // namespace nsi
