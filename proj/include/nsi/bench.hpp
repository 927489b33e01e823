#pragma once

// Simulation harness: draws seeded worlds, estimates counterfactuals with
// NSI, SI and the donor-average baseline, and aggregates errors against the
// noiseless truth.

#include <Eigen/Dense>
#include <algorithm>
#include <atomic>
#include <exception>
#include <cmath>
#include <cstdint>
#include <limits>
#include <map>
#include <optional>
#include <ostream>
#include <random>
#include <set>
#include <string>
#include <thread>
#include <vector>

#include "nsi/design.hpp"
#include "nsi/donors.hpp"
#include "nsi/error.hpp"
#include "nsi/estimator.hpp"
#include "nsi/graph.hpp"
#include "nsi/panel.hpp"
#include "nsi/spectral.hpp"

namespace nsi {

enum class GraphKind { ring, circulant, path, complete, star, random };

struct GraphSpec {
  GraphKind kind = GraphKind::ring;
  std::size_t n_units = 1000;
  std::size_t degree = 2;   ///< circulant degree, or max degree for random graphs
  double edge_prob = 0.05;  ///< random graphs only
};

inline NetworkGraph make_graph(const GraphSpec& spec, std::uint64_t seed = 0) {
  switch (spec.kind) {
    case GraphKind::ring: return make_ring(spec.n_units);
    case GraphKind::circulant: return make_regular_graph(RegularKind::circulant, spec.n_units, spec.degree);
    case GraphKind::path: return make_path(spec.n_units);
    case GraphKind::complete: return make_complete(spec.n_units);
    case GraphKind::star: return make_star(spec.n_units);
    case GraphKind::random:
      return make_random_bounded_degree(spec.n_units, spec.degree, spec.edge_prob, seed);
  }
  throw InputError("unknown graph kind");
}

/// How training treatments are assigned in each simulated world.
enum class TrainingKind {
  design,           ///< two-hop coloring schedule spread over T_pre
  constant_random,  ///< one uniform label per unit, held for all of T_pre
};

/// How the minimum kappa (|N(n)| for NSI, 1 for SI) is enforced.
enum class FloorMode {
  filter,  ///< estimates whose selected kappa is below the floor are dropped
  clamp,   ///< kappa is raised to the floor
};

struct EstimatorSet {
  bool nsi = true;
  bool si = true;
  bool baseline = true;
};

struct BenchConfig {
  GraphSpec graph;
  int rank = 2;
  double noise_std = 0.31622776601683794;  // variance 0.1
  std::size_t t_pre = 150;
  std::size_t t_post = 50;
  int d_treatments = 2;
  std::size_t n_sims = 200;
  std::size_t n_eval_units = 50;
  EstimatorSet estimators;
  KappaPolicy kappa = KappaPolicy::knee();
  FloorMode floor_mode = FloorMode::filter;
  DonorMode donor_mode = DonorMode::identity;
  bool subsample = false;  ///< keep floor(sqrt(N)) random donors when more match
  TrainingKind training = TrainingKind::design;
  int r_bar = 1;
  std::size_t max_targets = 64;  ///< enumerate all D^|N(n)| targets up to this many
  WProcess w_process = WProcess::random_walk;
  FactorScale factor_scale = FactorScale::per_neighbor;
  NoiseKind noise = NoiseKind::gaussian;
  double ci_level = 95.0;
  bool two_sided = false;
  std::uint64_t seed = 0;
  unsigned threads = 1;  ///< 0 = hardware concurrency

  void validate() const {
    if (n_sims < 1) throw InputError("n_sims must be at least 1");
    if (n_eval_units < 1 || n_eval_units > graph.n_units)
      throw InputError("n_eval_units must lie in [1, n_units]");
    if (rank < 1) throw InputError("rank must be at least 1");
    if (!(noise_std >= 0.0)) throw InputError("noise_std must be non-negative");
    if (t_pre < 1 || t_post < 1) throw InputError("t_pre and t_post must be positive");
    if (d_treatments < 1) throw InputError("d_treatments must be at least 1");
    if (training == TrainingKind::design && d_treatments < 2)
      throw InputError("the coloring design needs d_treatments >= 2");
    if (r_bar < 1) throw InputError("r_bar must be at least 1");
    if (max_targets < 1) throw InputError("max_targets must be at least 1");
  }
};

/// SplitMix64 step, used to derive independent per-simulation seeds.
inline std::uint64_t mix_seed(std::uint64_t seed, std::uint64_t stream) {
  std::uint64_t z = seed + 0x9e3779b97f4a7c15ULL * (stream + 1);
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}

/// One simulated world of a benchmark.
struct BenchWorld {
  TreatmentPanel treatments;
  Simulation sim;
  std::vector<Unit> eval_units;
};

inline Eigen::MatrixXi training_treatments(const NetworkGraph& g, const BenchConfig& cfg, std::uint64_t seed) {
  if (cfg.training == TrainingKind::design) {
    const DesignSchedule s = design_schedule(g, cfg.d_treatments, cfg.r_bar);
    return stretch_schedule(s, cfg.t_pre);
  }
  const TreatmentVector labels = random_prediction_treatments(g.size(), cfg.d_treatments, seed);
  Eigen::MatrixXi a(static_cast<Eigen::Index>(g.size()), static_cast<Eigen::Index>(cfg.t_pre));
  for (Unit i = 0; i < g.size(); ++i) a.row(static_cast<Eigen::Index>(i)).setConstant(labels[i]);
  return a;
}

inline BenchWorld make_world(const NetworkGraph& g, const BenchConfig& cfg, std::size_t sim_index) {
  const std::uint64_t s = mix_seed(cfg.seed, sim_index);
  const Eigen::MatrixXi a_pre = training_treatments(g, cfg, mix_seed(s, 4));
  const TreatmentVector a_post = random_prediction_treatments(g.size(), cfg.d_treatments, mix_seed(s, 2));
  TreatmentPanel panel = TreatmentPanel::from_parts(a_pre, a_post, cfg.t_post, cfg.d_treatments);
  SimConfig sc;
  sc.rank = cfg.rank;
  sc.noise_std = cfg.noise_std;
  sc.seed = mix_seed(s, 1);
  sc.w_process = cfg.w_process;
  sc.factor_scale = cfg.factor_scale;
  sc.noise = cfg.noise;
  Simulation sim = simulate(g, panel, sc);

  std::vector<Unit> units(g.size());
  for (Unit i = 0; i < units.size(); ++i) units[i] = i;
  std::mt19937_64 rng(mix_seed(s, 3));
  for (std::size_t k = 0; k < cfg.n_eval_units; ++k) {
    std::uniform_int_distribution<std::size_t> pick(k, units.size() - 1);
    std::swap(units[k], units[pick(rng)]);
  }
  units.resize(cfg.n_eval_units);
  return {std::move(panel), std::move(sim), std::move(units)};
}

/// All of [D]^k in lexicographic order when there are at most `cap`,
/// otherwise `cap` distinct uniformly drawn vectors.
inline std::vector<TreatmentVector> enumerate_targets(std::size_t k, int d_treatments, std::size_t cap,
                                                      std::uint64_t seed) {
  double total = 1.0;
  for (std::size_t i = 0; i < k; ++i) total *= d_treatments;
  std::vector<TreatmentVector> out;
  if (total <= static_cast<double>(cap)) {
    TreatmentVector v(k, 1);
    while (true) {
      out.push_back(v);
      std::size_t pos = k;
      while (pos > 0 && v[pos - 1] == d_treatments) v[--pos] = 1;
      if (pos == 0) break;
      ++v[pos - 1];
    }
    return out;
  }
  std::mt19937_64 rng(seed);
  std::uniform_int_distribution<int> pick(1, d_treatments);
  std::set<TreatmentVector> seen;
  while (out.size() < cap) {
    TreatmentVector v(k);
    for (auto& a : v) a = pick(rng);
    if (seen.insert(v).second) out.push_back(std::move(v));
  }
  return out;
}

/// Mean of the donors' prediction-period outcomes.
inline double baseline_estimate(const ObservationPanel& z, const DonorSet& ds) {
  if (ds.empty()) throw EmptyDonorsError("no donors for unit " + std::to_string(ds.ego));
  return donor_submatrices(z, ds).z_post.mean();
}

/// Per-measurement baseline predictions (row means of Z_post,I).
inline Eigen::VectorXd baseline_pointwise(const ObservationPanel& z, const DonorSet& ds) {
  if (ds.empty()) throw EmptyDonorsError("no donors for unit " + std::to_string(ds.ego));
  return donor_submatrices(z, ds).z_post.rowwise().mean();
}

/// NSI pipeline with the no-interference donor rule: donors share the unit's
/// own training row and own prediction treatment.
inline EstimateReport si_estimate(const ObservationPanel& z, const NetworkGraph& g,
                                  const TreatmentPanel& treatments, Unit n, Treatment target,
                                  const EstimateOptions& opts = {KappaPolicy::knee()}) {
  const DonorSet ds = find_si_donors(g, treatments, n, target);
  EstimateReport rep = estimate(donor_submatrices(z, ds), opts, 1);
  rep.donors = ds.units();
  return rep;
}

struct EstimatorStats {
  std::size_t n_estimates = 0;
  double mse = std::numeric_limits<double>::quiet_NaN();
  double r_squared = std::numeric_limits<double>::quiet_NaN();
  double mean_donor_count = std::numeric_limits<double>::quiet_NaN();
  double coverage = std::numeric_limits<double>::quiet_NaN();  ///< NaN for the baseline
  std::size_t excluded_empty = 0;
  std::size_t excluded_kappa = 0;
  std::size_t excluded_degenerate = 0;
  std::vector<double> residuals;  ///< point - truth, one per estimand
  std::vector<int> kappas;        ///< selected kappa before any floor
  std::vector<double> sim_mse;    ///< MSE within each simulation (NaN if none)
};

struct BenchResult {
  EstimatorStats nsi;
  EstimatorStats si;
  EstimatorStats baseline;
  std::size_t n_sims = 0;
  std::size_t n_estimands = 0;
};

namespace detail {

struct Accum {
  double sq_err_sum = 0.0;  // sum over estimands of the per-estimand MSE
  std::size_t count = 0;
  double donors = 0.0;
  std::size_t covered = 0;
  std::size_t ci_count = 0;
  std::size_t excluded_empty = 0, excluded_kappa = 0, excluded_degenerate = 0;
  std::vector<double> residuals;
  std::vector<int> kappas;
  double r2_sum = 0.0;
  std::size_t r2_units = 0;
};

// Per-unit pooled R^2 over every (target, measurement) pair of one unit.
struct UnitFit {
  double sse = 0.0, sum = 0.0, sum_sq = 0.0;
  std::size_t count = 0;

  void add(const Eigen::VectorXd& pred, const Eigen::VectorXd& truth) {
    sse += (pred - truth).squaredNorm();
    sum += truth.sum();
    sum_sq += truth.squaredNorm();
    count += static_cast<std::size_t>(truth.size());
  }
  void flush(Accum& acc) {
    if (count > 0) {
      const double sst = sum_sq - sum * sum / static_cast<double>(count);
      if (sst > 0.0) {
        acc.r2_sum += 1.0 - sse / sst;
        ++acc.r2_units;
      }
    }
    *this = {};
  }
};

struct SimOutcome {
  Accum nsi, si, baseline;
  std::size_t n_estimands = 0;
};

struct Fit {
  EstimateReport rep;
  int raw_kappa = 0;
};

enum class Outcome { ok, empty, kappa, degenerate };

inline Outcome fit(const ObservationPanel& z, const DonorSet& ds, const BenchConfig& cfg, int floor,
                   Fit& out) {
  if (ds.empty()) return Outcome::empty;
  try {
    const DonorMatrices m = donor_submatrices(z, ds);
    const SpectralDecomposition sd = decompose(m.z_pre);
    KappaPolicy base = cfg.kappa;
    base.floor_to_neighborhood = false;
    out.raw_kappa = select_kappa(sd.singular_values, base, static_cast<std::size_t>(m.z_pre.rows()),
                                 static_cast<std::size_t>(m.z_pre.cols()));
    int k = out.raw_kappa;
    if (k < floor) {
      if (cfg.floor_mode == FloorMode::filter) return Outcome::kappa;
      k = std::min<int>(floor, static_cast<int>(sd.q()));
    }
    EstimateOptions opts;
    opts.ci_level = cfg.ci_level;
    opts.two_sided = cfg.two_sided;
    out.rep = estimate_at(m, sd, k, opts);
    out.rep.donors = ds.units();
    return Outcome::ok;
  } catch (const DegenerateRankError&) {
    return Outcome::degenerate;
  }
}

inline void record_exclusion(Accum& acc, Outcome o) {
  if (o == Outcome::empty) ++acc.excluded_empty;
  if (o == Outcome::kappa) ++acc.excluded_kappa;
  if (o == Outcome::degenerate) ++acc.excluded_degenerate;
}

inline void record(Accum& acc, UnitFit& uf, const Eigen::VectorXd& pred, double point,
                   const Eigen::VectorXd& truth, double theta, std::size_t donors,
                   const EstimateReport* rep, int raw_kappa) {
  acc.sq_err_sum += (pred - truth).squaredNorm() / static_cast<double>(truth.size());
  ++acc.count;
  acc.donors += static_cast<double>(donors);
  acc.residuals.push_back(point - theta);
  uf.add(pred, truth);
  if (rep) {
    ++acc.ci_count;
    if (rep->ci_lo <= theta && theta <= rep->ci_hi) ++acc.covered;
    acc.kappas.push_back(raw_kappa);
  }
}

inline DonorSet maybe_subsample(DonorSet ds, const BenchConfig& cfg, std::size_t n_units, std::uint64_t seed) {
  if (!cfg.subsample) return ds;
  const auto keep = static_cast<std::size_t>(std::floor(std::sqrt(static_cast<double>(n_units))));
  if (ds.size() <= keep) return ds;
  std::mt19937_64 rng(seed);
  std::shuffle(ds.members.begin(), ds.members.end(), rng);
  ds.members.resize(keep);
  std::sort(ds.members.begin(), ds.members.end(),
            [](const DonorMember& a, const DonorMember& b) { return a.donor < b.donor; });
  return ds;
}

inline SimOutcome run_one(const NetworkGraph& g, const BenchConfig& cfg, std::size_t sim_index) {
  SimOutcome out;
  const BenchWorld w = make_world(g, cfg, sim_index);
  const ObservationPanel& z = w.sim.observations;
  const DonorFinder finder(g, w.treatments);
  const std::uint64_t s = mix_seed(cfg.seed, sim_index);
  const std::size_t t0 = cfg.t_pre;

  struct SiEntry {
    Outcome outcome;
    Fit fit;
    std::size_t donors;
  };
  std::map<std::pair<Unit, Treatment>, SiEntry> si_cache;

  for (std::size_t u = 0; u < w.eval_units.size(); ++u) {
    const Unit n = w.eval_units[u];
    const auto nb = g.neighbors(n);
    const std::size_t self_pos = static_cast<std::size_t>(std::find(nb.begin(), nb.end(), n) - nb.begin());
    UnitFit uf_nsi, uf_si, uf_base;
    const auto targets = enumerate_targets(nb.size(), cfg.d_treatments, cfg.max_targets,
                                           mix_seed(s, 6 + 7919 * static_cast<std::uint64_t>(n)));
    for (const TreatmentVector& target : targets) {
      ++out.n_estimands;
      Eigen::VectorXd truth(static_cast<Eigen::Index>(cfg.t_post));
      for (std::size_t t = 0; t < cfg.t_post; ++t)
        truth(static_cast<Eigen::Index>(t)) = mean_outcome(w.sim.world, g, t0 + t, n, target);
      const double theta = truth.mean();

      if (cfg.estimators.nsi || cfg.estimators.baseline) {
        const DonorSet ds = maybe_subsample(finder.find(n, target, cfg.donor_mode), cfg, g.size(),
                                            mix_seed(s, 5 + 104729 * static_cast<std::uint64_t>(out.n_estimands)));
        if (cfg.estimators.nsi) {
          Fit f;
          const Outcome o = fit(z, ds, cfg, static_cast<int>(nb.size()), f);
          if (o == Outcome::ok)
            record(out.nsi, uf_nsi, f.rep.pointwise, f.rep.point, truth, theta, ds.size(), &f.rep, f.raw_kappa);
          else
            record_exclusion(out.nsi, o);
        }
        if (cfg.estimators.baseline) {
          if (ds.empty()) {
            record_exclusion(out.baseline, Outcome::empty);
          } else {
            const Eigen::VectorXd pred = baseline_pointwise(z, ds);
            record(out.baseline, uf_base, pred, pred.mean(), truth, theta, ds.size(), nullptr, 0);
          }
        }
      }
      if (cfg.estimators.si) {
        const Treatment own = target[self_pos];
        auto it = si_cache.find({n, own});
        if (it == si_cache.end()) {
          const DonorSet ds = finder.find_si(n, own);
          SiEntry e{Outcome::empty, {}, ds.size()};
          e.outcome = fit(z, ds, cfg, 1, e.fit);
          it = si_cache.emplace(std::make_pair(n, own), std::move(e)).first;
        }
        const SiEntry& e = it->second;
        if (e.outcome == Outcome::ok)
          record(out.si, uf_si, e.fit.rep.pointwise, e.fit.rep.point, truth, theta, e.donors, &e.fit.rep,
                 e.fit.raw_kappa);
        else
          record_exclusion(out.si, e.outcome);
      }
    }
    uf_nsi.flush(out.nsi);
    uf_si.flush(out.si);
    uf_base.flush(out.baseline);
  }
  return out;
}

inline void merge(EstimatorStats& st, const std::vector<SimOutcome>& sims, Accum SimOutcome::*which,
                  bool has_ci) {
  double sq = 0.0, donors = 0.0, r2 = 0.0;
  std::size_t count = 0, covered = 0, ci = 0, r2_units = 0;
  for (const SimOutcome& so : sims) {
    const Accum& a = so.*which;
    sq += a.sq_err_sum;
    count += a.count;
    donors += a.donors;
    covered += a.covered;
    ci += a.ci_count;
    r2 += a.r2_sum;
    r2_units += a.r2_units;
    st.excluded_empty += a.excluded_empty;
    st.excluded_kappa += a.excluded_kappa;
    st.excluded_degenerate += a.excluded_degenerate;
    st.residuals.insert(st.residuals.end(), a.residuals.begin(), a.residuals.end());
    st.kappas.insert(st.kappas.end(), a.kappas.begin(), a.kappas.end());
    st.sim_mse.push_back(a.count ? a.sq_err_sum / static_cast<double>(a.count)
                                 : std::numeric_limits<double>::quiet_NaN());
  }
  st.n_estimates = count;
  if (count) {
    st.mse = sq / static_cast<double>(count);
    st.mean_donor_count = donors / static_cast<double>(count);
  }
  if (r2_units) st.r_squared = r2 / static_cast<double>(r2_units);
  if (has_ci && ci) st.coverage = static_cast<double>(covered) / static_cast<double>(ci);
}

}  // namespace detail

/// Runs cfg.n_sims independent simulations. MSE is the mean, over estimands,
/// of the squared pointwise error averaged over the prediction measurements;
/// R^2 is computed per evaluated unit over all of its (target, measurement)
/// pairs and then averaged over units. Results do not depend on cfg.threads.
inline BenchResult run_bench(const BenchConfig& cfg) {
  cfg.validate();
  const NetworkGraph g = make_graph(cfg.graph, cfg.seed);
  std::vector<detail::SimOutcome> sims(cfg.n_sims);
  unsigned workers = cfg.threads ? cfg.threads : std::max(1u, std::thread::hardware_concurrency());
  workers = static_cast<unsigned>(std::min<std::size_t>(workers, cfg.n_sims));
  if (workers <= 1) {
    for (std::size_t k = 0; k < cfg.n_sims; ++k) sims[k] = detail::run_one(g, cfg, k);
  } else {
    std::atomic<std::size_t> next{0};
    std::exception_ptr failure;
    std::atomic<bool> failed{false};
    std::vector<std::thread> pool;
    for (unsigned w = 0; w < workers; ++w) {
      pool.emplace_back([&] {
        try {
          for (std::size_t k = next++; k < cfg.n_sims && !failed; k = next++) sims[k] = detail::run_one(g, cfg, k);
        } catch (...) {
          if (!failed.exchange(true)) failure = std::current_exception();
        }
      });
    }
    for (auto& t : pool) t.join();
    if (failure) std::rethrow_exception(failure);
  }
  BenchResult res;
  res.n_sims = cfg.n_sims;
  for (const auto& so : sims) res.n_estimands += so.n_estimands;
  detail::merge(res.nsi, sims, &detail::SimOutcome::nsi, true);
  detail::merge(res.si, sims, &detail::SimOutcome::si, true);
  detail::merge(res.baseline, sims, &detail::SimOutcome::baseline, false);
  return res;
}

struct Moments {
  double mean = 0.0;
  double variance = 0.0;
  double skewness = 0.0;
  double excess_kurtosis = 0.0;
};

/// Population moments of a sample.
inline Moments sample_moments(const std::vector<double>& x) {
  if (x.size() < 2) throw InputError("need at least two samples");
  Moments m;
  for (double v : x) m.mean += v;
  m.mean /= static_cast<double>(x.size());
  double m2 = 0.0, m3 = 0.0, m4 = 0.0;
  for (double v : x) {
    const double d = v - m.mean;
    m2 += d * d;
    m3 += d * d * d;
    m4 += d * d * d * d;
  }
  const double n = static_cast<double>(x.size());
  m2 /= n;
  m3 /= n;
  m4 /= n;
  m.variance = m2;
  m.skewness = m2 > 0.0 ? m3 / std::pow(m2, 1.5) : 0.0;
  m.excess_kurtosis = m2 > 0.0 ? m4 / (m2 * m2) - 3.0 : 0.0;
  return m;
}

/// CSV of residuals: estimator,residual
inline void write_residuals_csv(std::ostream& out, const BenchResult& r) {
  out.precision(17);
  out << "estimator,residual\n";
  for (double v : r.nsi.residuals) out << "nsi," << v << '\n';
  for (double v : r.si.residuals) out << "si," << v << '\n';
  for (double v : r.baseline.residuals) out << "baseline," << v << '\n';
}

}  // namespace nsi
