#pragma once

// Singular value decomposition helpers, hard singular value thresholding and
// the rules for choosing how many spectral components to keep.

#include <Eigen/Dense>
#include <boost/math/quadrature/gauss_kronrod.hpp>
#include <boost/math/tools/roots.hpp>
#include <algorithm>
#include <charconv>
#include <cmath>
#include <limits>
#include <numbers>
#include <span>
#include <string>
#include <vector>

#include "nsi/error.hpp"

namespace nsi {

/// Relative floor below which a singular value is treated as zero when
/// inverting it: s_kappa must exceed rank_floor * s_1.
inline constexpr double rank_floor = 1e-10;

struct SpectralDecomposition {
  Eigen::VectorXd singular_values;  ///< descending, length q = min(rows, cols)
  Eigen::MatrixXd left;             ///< rows x q
  Eigen::MatrixXd right;            ///< cols x q

  Eigen::Index q() const noexcept { return singular_values.size(); }
};

inline SpectralDecomposition decompose(const Eigen::MatrixXd& m) {
  if (m.size() == 0) throw InputError("cannot decompose an empty matrix");
  Eigen::BDCSVD<Eigen::MatrixXd> svd(m, Eigen::ComputeThinU | Eigen::ComputeThinV);
  return {svd.singularValues(), svd.matrixU(), svd.matrixV()};
}

/// Rank-kappa pseudo-inverse sum_{l<=kappa} (1/s_l) v_l u_l^T of the
/// decomposed matrix (cols x rows).
inline Eigen::MatrixXd svt_pinv(const SpectralDecomposition& sd, int kappa) {
  if (kappa < 1 || kappa > sd.q())
    throw InputError("kappa must lie in [1, " + std::to_string(sd.q()) + "], got " +
                     std::to_string(kappa));
  const double s1 = sd.singular_values(0);
  const double sk = sd.singular_values(kappa - 1);
  if (!(s1 > 0.0) || !(sk > rank_floor * s1))
    throw DegenerateRankError("singular value " + std::to_string(kappa) +
                              " is numerically zero; choose a smaller kappa");
  const auto k = static_cast<Eigen::Index>(kappa);
  return sd.right.leftCols(k) * sd.singular_values.head(k).cwiseInverse().asDiagonal() *
         sd.left.leftCols(k).transpose();
}

inline Eigen::MatrixXd svt_pinv(const Eigen::MatrixXd& m, int kappa) {
  return svt_pinv(decompose(m), kappa);
}

enum class KappaRule { knee, universal, fixed };

struct KappaPolicy {
  KappaRule rule = KappaRule::knee;
  int fixed = 0;                    ///< used by KappaRule::fixed
  int floor = 0;                    ///< minimum number of components
  bool floor_to_neighborhood = false;  ///< raise the floor to |N(n)|

  static KappaPolicy knee() { return {}; }
  static KappaPolicy universal() { return {KappaRule::universal}; }
  static KappaPolicy exactly(int k) { return {KappaRule::fixed, k}; }
  /// Knee point, never fewer than |N(n)| components.
  static KappaPolicy automatic() { return {KappaRule::knee, 0, 0, true}; }

  KappaPolicy with_floor(int f) const {
    KappaPolicy p = *this;
    p.floor = f;
    return p;
  }
};

/// Parses "auto", "knee", "universal" or a positive integer.
inline KappaPolicy parse_kappa_policy(const std::string& text) {
  if (text == "auto") return KappaPolicy::automatic();
  if (text == "knee") return KappaPolicy::knee();
  if (text == "universal") return KappaPolicy::universal();
  int k = 0;
  const auto [ptr, ec] = std::from_chars(text.data(), text.data() + text.size(), k);
  if (ec != std::errc() || ptr != text.data() + text.size() || k < 1)
    throw InputError("kappa must be auto, knee, universal or a positive integer; got '" + text + "'");
  return KappaPolicy::exactly(k);
}

namespace detail {

inline void check_spectrum(std::span<const double> s) {
  if (s.empty()) throw InputError("spectrum is empty");
  if (!(s[0] > 0.0)) throw DegenerateRankError("spectrum is identically zero");
}

}  // namespace detail

/// Number of singular values above rank_floor * s[0].
inline int numerical_rank(std::span<const double> s) {
  detail::check_spectrum(s);
  return static_cast<int>(std::count_if(s.begin(), s.end(), [&](double v) { return v > rank_floor * s[0]; }));
}

/// Elbow of the log-spectrum. The chord joins the first and last
/// log-singular values; the elbow is the point lying farthest below it, and
/// the components strictly before the elbow are kept. A cliff such as
/// [10, 9.5, 0.01, 0.009] therefore keeps 2. A spectrum with values at or
/// below rank_floor * s[0] is exactly rank deficient, and its numerical rank
/// is returned; the chord cannot see a cliff that sits at its own endpoint.
inline int knee_point(std::span<const double> s) {
  detail::check_spectrum(s);
  const std::size_t q = s.size();
  const auto rank = static_cast<std::size_t>(numerical_rank(s));
  if (rank < q) return static_cast<int>(rank);
  if (q <= 2) return 1;
  const double tiny = std::max(s[0] * 1e-250, std::numeric_limits<double>::min());
  auto logv = [&](std::size_t i) { return std::log(std::max(s[i], tiny)); };
  const double y0 = logv(0);
  const double slope = (logv(q - 1) - y0) / static_cast<double>(q - 1);
  std::size_t best = 0;
  double best_gap = 0.0;
  for (std::size_t i = 1; i + 1 < q; ++i) {
    const double gap = (y0 + slope * static_cast<double>(i)) - logv(i);
    if (gap > best_gap) {
      best_gap = gap;
      best = i;
    }
  }
  return std::max<int>(1, static_cast<int>(best));
}

/// Median of the Marchenko-Pastur law with aspect ratio beta in (0, 1].
inline double marchenko_pastur_median(double beta) {
  if (!(beta > 0.0 && beta <= 1.0)) throw InputError("aspect ratio must lie in (0, 1]");
  const double lo = (1.0 - std::sqrt(beta)) * (1.0 - std::sqrt(beta));
  const double hi = (1.0 + std::sqrt(beta)) * (1.0 + std::sqrt(beta));
  // With t = lo + (hi - lo) sin^2(phi) the density integrand is smooth on
  // [0, pi/2].
  auto cdf = [&](double x) {
    const double phi_max = std::asin(std::sqrt(std::clamp((x - lo) / (hi - lo), 0.0, 1.0)));
    auto f = [&](double phi) {
      const double sc = std::sin(phi) * std::cos(phi);
      const double t = lo + (hi - lo) * std::sin(phi) * std::sin(phi);
      return 2.0 * (hi - lo) * (hi - lo) * sc * sc / (2.0 * std::numbers::pi * beta * t);
    };
    return boost::math::quadrature::gauss_kronrod<double, 61>::integrate(f, 0.0, phi_max, 15, 1e-13);
  };
  const auto [a, b] = boost::math::tools::bisect([&](double x) { return cdf(x) - 0.5; }, lo, hi,
                                                 boost::math::tools::eps_tolerance<double>(50));
  return 0.5 * (a + b);
}

/// Universal singular value threshold: the noise level is estimated from
/// the median singular value and components above 2.02 sqrt(max dim) sigma
/// are kept.
inline int universal_threshold(std::span<const double> s, std::size_t rows, std::size_t cols) {
  detail::check_spectrum(s);
  const double m = static_cast<double>(std::min(rows, cols));
  const double n = static_cast<double>(std::max(rows, cols));
  const double beta = (rows == 0 || cols == 0) ? 1.0 : m / n;
  std::vector<double> sorted(s.begin(), s.end());
  std::sort(sorted.begin(), sorted.end());
  const std::size_t q = sorted.size();
  const double median = q % 2 ? sorted[q / 2] : 0.5 * (sorted[q / 2 - 1] + sorted[q / 2]);
  const double tau = 2.02 * median / std::sqrt(marchenko_pastur_median(beta));
  const auto count = std::count_if(s.begin(), s.end(), [&](double v) { return v > tau && v > rank_floor * s[0]; });
  return std::max<int>(1, static_cast<int>(count));
}

/// Applies a KappaPolicy to a descending spectrum. rows/cols are the
/// dimensions of the decomposed matrix (only the universal rule uses them);
/// neighborhood_size feeds KappaPolicy::floor_to_neighborhood.
inline int select_kappa(std::span<const double> s, const KappaPolicy& policy, std::size_t rows = 0,
                        std::size_t cols = 0, std::size_t neighborhood_size = 0) {
  detail::check_spectrum(s);
  const int q = static_cast<int>(s.size());
  int k = 1;
  switch (policy.rule) {
    case KappaRule::knee: k = knee_point(s); break;
    case KappaRule::universal: k = universal_threshold(s, rows, cols); break;
    case KappaRule::fixed: k = policy.fixed; break;
  }
  int floor = policy.floor;
  if (policy.floor_to_neighborhood) floor = std::max(floor, static_cast<int>(neighborhood_size));
  return std::clamp(std::max(k, floor), 1, q);
}

inline int select_kappa(const Eigen::VectorXd& s, const KappaPolicy& policy, std::size_t rows = 0,
                        std::size_t cols = 0, std::size_t neighborhood_size = 0) {
  return select_kappa(std::span<const double>(s.data(), static_cast<std::size_t>(s.size())), policy,
                      rows, cols, neighborhood_size);
}

/// Share of squared spectral energy beyond the first kappa components.
inline double trailing_energy(const Eigen::VectorXd& s, int kappa) {
  const double total = s.squaredNorm();
  if (!(total > 0.0)) return 0.0;
  return s.tail(s.size() - kappa).squaredNorm() / total;
}

}  // namespace nsi
