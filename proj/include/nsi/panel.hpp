#pragma once

// Treatment and observation panels, and the additive latent-factor world
// that generates outcomes:
//
//   E[Y_{t,n} | factors] = sum_{j in N(n)} < u_{j,n}, w_{t, a_j} >
//
// Treatments are labels 1..D throughout; label 1 is the control.

#include <Eigen/Dense>
#include <cmath>
#include <cstdint>
#include <random>
#include <span>
#include <string>
#include <vector>

#include "nsi/error.hpp"
#include "nsi/graph.hpp"

namespace nsi {

using Treatment = int;
using TreatmentVector = std::vector<Treatment>;

/// N x T matrix of treatments split into T_pre training columns followed by
/// T_post prediction columns. Every prediction column carries the same
/// assignment a^post.
class TreatmentPanel {
 public:
  TreatmentPanel() = default;

  TreatmentPanel(Eigen::MatrixXi a, int d_treatments, std::size_t t_pre,
                 TreatmentVector target = {})
      : a_(std::move(a)), d_(d_treatments), t_pre_(t_pre), target_(std::move(target)) {
    if (d_ < 1) throw InputError("number of treatments must be at least 1");
    if (a_.rows() == 0) throw InputError("treatment panel has no units");
    if (t_pre_ > static_cast<std::size_t>(a_.cols()))
      throw InputError("t_pre " + std::to_string(t_pre_) + " exceeds panel width " +
                       std::to_string(a_.cols()));
    if ((a_.array() < 1).any() || (a_.array() > d_).any())
      throw InputError("treatment entries must lie in [1, " + std::to_string(d_) + "]");
    for (Eigen::Index t = static_cast<Eigen::Index>(t_pre_) + 1; t < a_.cols(); ++t) {
      if (a_.col(t) != a_.col(static_cast<Eigen::Index>(t_pre_)))
        throw InputError("prediction column " + std::to_string(t) +
                         " differs from the first prediction column");
    }
    if (!target_.empty()) check_vector(target_, "target");
  }

  /// Training block plus a constant prediction assignment repeated t_post times.
  static TreatmentPanel from_parts(const Eigen::MatrixXi& a_pre, std::span<const Treatment> a_post,
                                   std::size_t t_post, int d_treatments, TreatmentVector target = {}) {
    if (static_cast<std::size_t>(a_pre.rows()) != a_post.size())
      throw InputError("a_post length does not match the number of units");
    Eigen::MatrixXi a(a_pre.rows(), a_pre.cols() + static_cast<Eigen::Index>(t_post));
    a.leftCols(a_pre.cols()) = a_pre;
    for (Eigen::Index i = 0; i < a.rows(); ++i)
      for (Eigen::Index t = a_pre.cols(); t < a.cols(); ++t) a(i, t) = a_post[i];
    return TreatmentPanel(std::move(a), d_treatments, static_cast<std::size_t>(a_pre.cols()),
                          std::move(target));
  }

  std::size_t n_units() const noexcept { return static_cast<std::size_t>(a_.rows()); }
  std::size_t n_times() const noexcept { return static_cast<std::size_t>(a_.cols()); }
  std::size_t t_pre() const noexcept { return t_pre_; }
  std::size_t t_post() const noexcept { return n_times() - t_pre_; }
  int d_treatments() const noexcept { return d_; }

  Treatment at(Unit i, std::size_t t) const { return a_(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(t)); }
  const Eigen::MatrixXi& matrix() const noexcept { return a_; }
  auto a_pre() const { return a_.leftCols(static_cast<Eigen::Index>(t_pre_)); }

  /// The prediction assignment a^post. Requires t_post >= 1.
  TreatmentVector a_post() const {
    if (t_post() == 0) throw InputError("panel has no prediction columns");
    TreatmentVector out(n_units());
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = at(i, t_pre_);
    return out;
  }

  const TreatmentVector& target() const noexcept { return target_; }

  /// Restricts a full-length assignment to N(n), in canonical neighbor order.
  static TreatmentVector restrict_to(const NetworkGraph& g, Unit n, std::span<const Treatment> full) {
    TreatmentVector out;
    for (Unit j : g.neighbors(n)) out.push_back(full[j]);
    return out;
  }

  void check_vector(std::span<const Treatment> v, const char* what) const {
    if (v.size() != n_units())
      throw InputError(std::string(what) + " must have one entry per unit");
    for (Treatment a : v)
      if (a < 1 || a > d_)
        throw InputError(std::string(what) + " entries must lie in [1, " + std::to_string(d_) + "]");
  }

 private:
  Eigen::MatrixXi a_;
  int d_ = 0;
  std::size_t t_pre_ = 0;
  TreatmentVector target_;
};

/// T x N matrix of observed outcomes, Z[t, n] = Y_{t,n} under a^t.
class ObservationPanel {
 public:
  ObservationPanel() = default;
  ObservationPanel(Eigen::MatrixXd z, std::size_t t_pre) : z_(std::move(z)), t_pre_(t_pre) {
    if (t_pre_ > static_cast<std::size_t>(z_.rows()))
      throw InputError("t_pre exceeds the number of observed measurements");
  }

  std::size_t n_units() const noexcept { return static_cast<std::size_t>(z_.cols()); }
  std::size_t n_times() const noexcept { return static_cast<std::size_t>(z_.rows()); }
  std::size_t t_pre() const noexcept { return t_pre_; }
  std::size_t t_post() const noexcept { return n_times() - t_pre_; }
  const Eigen::MatrixXd& matrix() const noexcept { return z_; }

  auto pre() const { return z_.topRows(static_cast<Eigen::Index>(t_pre_)); }
  auto post() const { return z_.bottomRows(static_cast<Eigen::Index>(t_post())); }

  void check_against(const TreatmentPanel& a) const {
    if (n_units() != a.n_units() || n_times() != a.n_times() || t_pre_ != a.t_pre())
      throw InputError("observation panel shape does not match the treatment panel");
  }

 private:
  Eigen::MatrixXd z_;
  std::size_t t_pre_ = 0;
};

enum class WProcess { iid_uniform, random_walk };

/// Half-width of the uniform box factors are drawn from:
/// per_neighbor = 1/sqrt(r (d+1)), per_degree = 1/sqrt(r d).
enum class FactorScale { per_neighbor, per_degree };

enum class NoiseKind { gaussian, uniform };

struct SimConfig {
  int rank = 2;
  double noise_std = 0.0;
  std::uint64_t seed = 0;
  WProcess w_process = WProcess::random_walk;
  FactorScale factor_scale = FactorScale::per_neighbor;
  NoiseKind noise = NoiseKind::gaussian;
};

inline double factor_bound(FactorScale scale, int rank, std::size_t max_degree) {
  const double r = rank;
  const double d = static_cast<double>(max_degree);
  if (scale == FactorScale::per_degree) {
    if (max_degree == 0) throw InputError("per-degree factor scale needs a graph with edges");
    return 1.0 / std::sqrt(r * d);
  }
  return 1.0 / std::sqrt(r * (d + 1.0));
}

/// Ground-truth latent factors. u_{j,i} is stored per unit i as a
/// |N(i)| x r block whose k-th row belongs to the k-th neighbor of i;
/// w_{t,a} is stored per measurement as a D x r block (row a-1).
class LatentFactorWorld {
 public:
  LatentFactorWorld() = default;
  LatentFactorWorld(int rank, std::vector<Eigen::MatrixXd> u, std::vector<Eigen::MatrixXd> w,
                    double noise_std, std::uint64_t seed)
      : rank_(rank), u_(std::move(u)), w_(std::move(w)), noise_std_(noise_std), seed_(seed) {}

  int rank() const noexcept { return rank_; }
  double noise_std() const noexcept { return noise_std_; }
  std::uint64_t seed() const noexcept { return seed_; }
  std::size_t n_units() const noexcept { return u_.size(); }
  std::size_t n_times() const noexcept { return w_.size(); }
  int d_treatments() const noexcept { return w_.empty() ? 0 : static_cast<int>(w_.front().rows()); }

  const Eigen::MatrixXd& u_block(Unit i) const { return u_.at(i); }
  const Eigen::MatrixXd& w_block(std::size_t t) const { return w_.at(t); }

  /// u_{j,i}; j must be a neighbor of i.
  Eigen::VectorXd u(const NetworkGraph& g, Unit j, Unit i) const {
    const auto nb = g.neighbors(i);
    const auto it = std::lower_bound(nb.begin(), nb.end(), j);
    if (it == nb.end() || *it != j)
      throw InputError("u_{j,i} is only defined for j in N(i)");
    return u_.at(i).row(it - nb.begin()).transpose();
  }

  Eigen::VectorXd w(std::size_t t, Treatment a) const { return w_.at(t).row(a - 1).transpose(); }

 private:
  int rank_ = 0;
  std::vector<Eigen::MatrixXd> u_;
  std::vector<Eigen::MatrixXd> w_;
  double noise_std_ = 0.0;
  std::uint64_t seed_ = 0;
};

/// Noiseless mean outcome of unit n at measurement t when N(n) receives
/// a_nbhd (aligned with the canonical neighbor order).
inline double mean_outcome(const LatentFactorWorld& world, const NetworkGraph& g, std::size_t t,
                           Unit n, std::span<const Treatment> a_nbhd) {
  const auto nb = g.neighbors(n);
  if (a_nbhd.size() != nb.size())
    throw InputError("neighborhood assignment has " + std::to_string(a_nbhd.size()) +
                     " entries but N(" + std::to_string(n) + ") has " + std::to_string(nb.size()));
  if (t >= world.n_times()) throw InputError("measurement index out of range");
  const Eigen::MatrixXd& u = world.u_block(n);
  const Eigen::MatrixXd& w = world.w_block(t);
  double y = 0.0;
  for (std::size_t k = 0; k < nb.size(); ++k) {
    const Treatment a = a_nbhd[k];
    if (a < 1 || a > w.rows()) throw InputError("treatment label out of range");
    y += u.row(static_cast<Eigen::Index>(k)).dot(w.row(a - 1));
  }
  return y;
}

/// Average of the noiseless means over the prediction measurements.
inline double true_estimand(const LatentFactorWorld& world, const NetworkGraph& g,
                            const TreatmentPanel& treatments, Unit n,
                            std::span<const Treatment> target_nbhd) {
  if (treatments.t_post() == 0) throw InputError("panel has no prediction columns");
  double sum = 0.0;
  for (std::size_t t = treatments.t_pre(); t < treatments.n_times(); ++t)
    sum += mean_outcome(world, g, t, n, target_nbhd);
  return sum / static_cast<double>(treatments.t_post());
}

struct Simulation {
  ObservationPanel observations;
  LatentFactorWorld world;
  Eigen::MatrixXd mean;  ///< T x N noiseless means under the applied treatments
};

/// Draws a latent-factor world for g and observes it under `treatments`.
/// Draw order is fixed (u by unit and neighbor, then w, then noise by
/// measurement and unit), so a seed reproduces the panel exactly.
inline Simulation simulate(const NetworkGraph& g, const TreatmentPanel& treatments,
                           const SimConfig& cfg) {
  if (cfg.rank < 1) throw InputError("rank must be at least 1");
  if (!(cfg.noise_std >= 0.0)) throw InputError("noise_std must be non-negative");
  if (treatments.n_units() != g.size())
    throw InputError("treatment panel and graph disagree on the number of units");

  const std::size_t n_units = g.size();
  const std::size_t n_times = treatments.n_times();
  const int r = cfg.rank;
  const int d = treatments.d_treatments();
  const double b = factor_bound(cfg.factor_scale, r, g.max_degree());

  std::mt19937_64 rng(cfg.seed);
  std::uniform_real_distribution<double> box(-b, b);

  std::vector<Eigen::MatrixXd> u(n_units);
  for (Unit i = 0; i < n_units; ++i) {
    u[i].resize(static_cast<Eigen::Index>(g.neighbors(i).size()), r);
    for (Eigen::Index k = 0; k < u[i].rows(); ++k)
      for (int c = 0; c < r; ++c) u[i](k, c) = box(rng);
  }

  std::vector<Eigen::MatrixXd> w(n_times, Eigen::MatrixXd(d, r));
  for (std::size_t t = 0; t < n_times; ++t) {
    for (int a = 0; a < d; ++a) {
      for (int c = 0; c < r; ++c) {
        const double draw = box(rng);
        w[t](a, c) = (cfg.w_process == WProcess::random_walk && t > 0) ? w[t - 1](a, c) + draw : draw;
      }
    }
  }

  LatentFactorWorld world(r, std::move(u), std::move(w), cfg.noise_std, cfg.seed);

  Eigen::MatrixXd mean(static_cast<Eigen::Index>(n_times), static_cast<Eigen::Index>(n_units));
  TreatmentVector a_nbhd;
  for (std::size_t t = 0; t < n_times; ++t) {
    for (Unit n = 0; n < n_units; ++n) {
      a_nbhd.clear();
      for (Unit j : g.neighbors(n)) a_nbhd.push_back(treatments.at(j, t));
      mean(static_cast<Eigen::Index>(t), static_cast<Eigen::Index>(n)) = mean_outcome(world, g, t, n, a_nbhd);
    }
  }

  Eigen::MatrixXd z = mean;
  if (cfg.noise_std > 0.0) {
    std::normal_distribution<double> gauss(0.0, cfg.noise_std);
    const double half = std::sqrt(3.0) * cfg.noise_std;
    std::uniform_real_distribution<double> flat(-half, half);
    for (Eigen::Index t = 0; t < z.rows(); ++t)
      for (Eigen::Index n = 0; n < z.cols(); ++n)
        z(t, n) += cfg.noise == NoiseKind::gaussian ? gauss(rng) : flat(rng);
  }

  return Simulation{ObservationPanel(std::move(z), treatments.t_pre()), std::move(world), std::move(mean)};
}

}  // namespace nsi
