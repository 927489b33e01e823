#pragma once

// File formats: panel CSVs (one row per measurement, one column per unit),
// JSON configuration and JSON reports.

#include <Eigen/Dense>
#include <charconv>
#include <cmath>
#include <istream>
#include <limits>
#include <nlohmann/json.hpp>
#include <ostream>
#include <sstream>
#include <string>
#include <vector>

#include "nsi/bench.hpp"
#include "nsi/error.hpp"
#include "nsi/estimator.hpp"
#include "nsi/panel.hpp"
#include "nsi/validity.hpp"

namespace nsi {

using json = nlohmann::json;

namespace detail {

inline std::vector<std::string> split_csv_line(const std::string& line) {
  std::vector<std::string> out;
  std::string field;
  std::istringstream in(line);
  while (std::getline(in, field, ',')) {
    while (!field.empty() && (field.back() == '\r' || field.back() == ' ')) field.pop_back();
    std::size_t b = 0;
    while (b < field.size() && field[b] == ' ') ++b;
    out.push_back(field.substr(b));
  }
  if (!line.empty() && line.back() == ',') out.emplace_back();
  return out;
}

// Reads the header and the value rows; the leading t column is dropped.
inline std::vector<std::vector<std::string>> read_csv_body(std::istream& in, std::size_t& n_units) {
  std::string line;
  if (!std::getline(in, line)) throw InputError("panel CSV is empty");
  const auto header = split_csv_line(line);
  if (header.size() < 2 || header[0] != "t")
    throw InputError("panel CSV header must be t,unit_0,...,unit_{N-1}");
  n_units = header.size() - 1;
  for (std::size_t i = 0; i < n_units; ++i)
    if (header[i + 1] != "unit_" + std::to_string(i))
      throw InputError("panel CSV header column " + std::to_string(i + 1) + " should be unit_" +
                       std::to_string(i));
  std::vector<std::vector<std::string>> rows;
  std::size_t lineno = 1;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.find_first_not_of(" \r\t") == std::string::npos) continue;
    auto fields = split_csv_line(line);
    if (fields.size() != n_units + 1)
      throw InputError("panel CSV line " + std::to_string(lineno) + " has " + std::to_string(fields.size()) +
                       " fields, expected " + std::to_string(n_units + 1));
    fields.erase(fields.begin());
    rows.push_back(std::move(fields));
  }
  return rows;
}

template <class T>
T parse_number(const std::string& s) {
  T v{};
  const auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
  if (ec != std::errc() || ptr != s.data() + s.size()) throw InputError("cannot parse '" + s + "' as a number");
  return v;
}

inline void write_header(std::ostream& out, std::size_t n_units) {
  out << 't';
  for (std::size_t i = 0; i < n_units; ++i) out << ",unit_" << i;
  out << '\n';
}

}  // namespace detail

/// T x N observations. t_pre is not stored in the file.
inline Eigen::MatrixXd read_panel_csv(std::istream& in) {
  std::size_t n = 0;
  const auto rows = detail::read_csv_body(in, n);
  Eigen::MatrixXd z(static_cast<Eigen::Index>(rows.size()), static_cast<Eigen::Index>(n));
  for (std::size_t t = 0; t < rows.size(); ++t)
    for (std::size_t i = 0; i < n; ++i)
      z(static_cast<Eigen::Index>(t), static_cast<Eigen::Index>(i)) = detail::parse_number<double>(rows[t][i]);
  if (!z.allFinite()) throw InputError("panel CSV contains non-finite values");
  return z;
}

inline void write_panel_csv(std::ostream& out, const Eigen::MatrixXd& z) {
  detail::write_header(out, static_cast<std::size_t>(z.cols()));
  out.precision(std::numeric_limits<double>::max_digits10);
  for (Eigen::Index t = 0; t < z.rows(); ++t) {
    out << t;
    for (Eigen::Index i = 0; i < z.cols(); ++i) out << ',' << z(t, i);
    out << '\n';
  }
}

/// Reads a treatment CSV (rows are measurements) into an N x T matrix.
inline Eigen::MatrixXi read_treatment_csv(std::istream& in) {
  std::size_t n = 0;
  const auto rows = detail::read_csv_body(in, n);
  Eigen::MatrixXi a(static_cast<Eigen::Index>(n), static_cast<Eigen::Index>(rows.size()));
  for (std::size_t t = 0; t < rows.size(); ++t)
    for (std::size_t i = 0; i < n; ++i)
      a(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(t)) = detail::parse_number<int>(rows[t][i]);
  return a;
}

/// Writes an N x T treatment matrix with one row per measurement.
inline void write_treatment_csv(std::ostream& out, const Eigen::MatrixXi& a) {
  detail::write_header(out, static_cast<std::size_t>(a.rows()));
  for (Eigen::Index t = 0; t < a.cols(); ++t) {
    out << t;
    for (Eigen::Index i = 0; i < a.rows(); ++i) out << ',' << a(i, t);
    out << '\n';
  }
}

/// Parses "1,2,1" (spaces allowed).
inline TreatmentVector parse_treatment_list(const std::string& text) {
  TreatmentVector out;
  for (const auto& f : detail::split_csv_line(text)) {
    if (f.empty()) throw InputError("empty entry in treatment list '" + text + "'");
    out.push_back(detail::parse_number<int>(f));
  }
  if (out.empty()) throw InputError("treatment list is empty");
  return out;
}

namespace detail {

template <class E>
E parse_enum(const json& v, const char* key, std::initializer_list<std::pair<const char*, E>> names) {
  if (!v.is_string()) throw InputError(std::string("config key ") + key + " must be a string");
  const auto s = v.get<std::string>();
  for (const auto& [name, e] : names)
    if (s == name) return e;
  std::string allowed;
  for (const auto& [name, e] : names) allowed += (allowed.empty() ? "" : ", ") + std::string(name);
  throw InputError(std::string("config key ") + key + " must be one of: " + allowed + "; got '" + s + "'");
}

template <class T>
T get_number(const json& v, const char* key) {
  if (!v.is_number()) throw InputError(std::string("config key ") + key + " must be a number");
  if constexpr (std::is_integral_v<T>) {
    if (!v.is_number_integer() || (std::is_unsigned_v<T> && v.get<long long>() < 0))
      throw InputError(std::string("config key ") + key + " must be a non-negative integer");
  }
  return v.get<T>();
}

}  // namespace detail

/// Builds a BenchConfig from JSON. Every key is optional; unknown keys are
/// rejected. The simulate subcommand reads the same format.
inline BenchConfig parse_config(const json& j) {
  if (!j.is_object()) throw InputError("config must be a JSON object");
  BenchConfig c;
  bool noise_variance_given = false;
  for (const auto& [key, v] : j.items()) {
    const char* k = key.c_str();
    if (key == "n_units") c.graph.n_units = detail::get_number<std::size_t>(v, k);
    else if (key == "degree") c.graph.degree = detail::get_number<std::size_t>(v, k);
    else if (key == "edge_prob") c.graph.edge_prob = detail::get_number<double>(v, k);
    else if (key == "graph_kind")
      c.graph.kind = detail::parse_enum<GraphKind>(v, k, {{"ring", GraphKind::ring}, {"circulant", GraphKind::circulant},
                                                          {"path", GraphKind::path}, {"complete", GraphKind::complete},
                                                          {"star", GraphKind::star}, {"random", GraphKind::random}});
    else if (key == "rank") c.rank = detail::get_number<int>(v, k);
    else if (key == "noise_std") c.noise_std = detail::get_number<double>(v, k);
    else if (key == "noise_variance") {
      const double var = detail::get_number<double>(v, k);
      if (var < 0.0) throw InputError("noise_variance must be non-negative");
      c.noise_std = std::sqrt(var);
      noise_variance_given = true;
    }
    else if (key == "t_pre") c.t_pre = detail::get_number<std::size_t>(v, k);
    else if (key == "t_post") c.t_post = detail::get_number<std::size_t>(v, k);
    else if (key == "d_treatments") c.d_treatments = detail::get_number<int>(v, k);
    else if (key == "w_process")
      c.w_process = detail::parse_enum<WProcess>(v, k, {{"random_walk", WProcess::random_walk},
                                                        {"iid_uniform", WProcess::iid_uniform}});
    else if (key == "factor_scale")
      c.factor_scale = detail::parse_enum<FactorScale>(v, k, {{"per_neighbor", FactorScale::per_neighbor},
                                                              {"per_degree", FactorScale::per_degree}});
    else if (key == "noise")
      c.noise = detail::parse_enum<NoiseKind>(v, k, {{"gaussian", NoiseKind::gaussian}, {"uniform", NoiseKind::uniform}});
    else if (key == "seed") c.seed = detail::get_number<std::uint64_t>(v, k);
    else if (key == "n_sims") c.n_sims = detail::get_number<std::size_t>(v, k);
    else if (key == "n_eval_units") c.n_eval_units = detail::get_number<std::size_t>(v, k);
    else if (key == "estimators") {
      if (!v.is_array()) throw InputError("config key estimators must be an array");
      c.estimators = {false, false, false};
      for (const auto& e : v) {
        const auto which = detail::parse_enum<int>(e, k, {{"nsi", 0}, {"si", 1}, {"baseline", 2}});
        (which == 0 ? c.estimators.nsi : which == 1 ? c.estimators.si : c.estimators.baseline) = true;
      }
    }
    else if (key == "kappa") {
      if (v.is_number_integer()) c.kappa = KappaPolicy::exactly(v.get<int>());
      else if (v.is_string()) c.kappa = parse_kappa_policy(v.get<std::string>());
      else throw InputError("config key kappa must be a string or an integer");
      if (c.kappa.rule == KappaRule::fixed && c.kappa.fixed < 1) throw InputError("kappa must be positive");
    }
    else if (key == "floor_mode")
      c.floor_mode = detail::parse_enum<FloorMode>(v, k, {{"filter", FloorMode::filter}, {"clamp", FloorMode::clamp}});
    else if (key == "donor_mode")
      c.donor_mode = detail::parse_enum<DonorMode>(v, k, {{"identity", DonorMode::identity},
                                                          {"exhaustive", DonorMode::exhaustive}});
    else if (key == "subsample") {
      if (!v.is_boolean()) throw InputError("config key subsample must be a boolean");
      c.subsample = v.get<bool>();
    }
    else if (key == "training")
      c.training = detail::parse_enum<TrainingKind>(v, k, {{"design", TrainingKind::design},
                                                           {"constant_random", TrainingKind::constant_random}});
    else if (key == "r_bar") c.r_bar = detail::get_number<int>(v, k);
    else if (key == "max_targets") c.max_targets = detail::get_number<std::size_t>(v, k);
    else if (key == "ci_level") c.ci_level = detail::get_number<double>(v, k);
    else if (key == "two_sided") {
      if (!v.is_boolean()) throw InputError("config key two_sided must be a boolean");
      c.two_sided = v.get<bool>();
    }
    else if (key == "threads") c.threads = detail::get_number<unsigned>(v, k);
    else throw InputError("unknown config key '" + key + "'");
  }
  if (noise_variance_given && j.contains("noise_std"))
    throw InputError("give either noise_std or noise_variance, not both");
  return c;
}

inline BenchConfig read_config(std::istream& in) {
  json j;
  try {
    j = json::parse(in);
  } catch (const json::exception& e) {
    throw InputError(std::string("config is not valid JSON: ") + e.what());
  }
  return parse_config(j);
}

namespace detail {

inline json vector_json(const Eigen::VectorXd& v) { return json(std::vector<double>(v.data(), v.data() + v.size())); }

// NaN is not representable in JSON; emit null.
inline json number_or_null(double v) { return std::isfinite(v) ? json(v) : json(nullptr); }

}  // namespace detail

inline json to_json(const TrainingTestResult& r) {
  return {{"pass", r.pass},
          {"span_ok", r.span_ok},
          {"repeats_ok", r.repeats_ok},
          {"colrank", r.colrank},
          {"min_repeats", r.min_repeats},
          {"required_repeats", r.required_repeats}};
}

inline json to_json(const SubspaceTestResult& r) {
  return {{"beta_hat", r.beta_hat}, {"threshold", r.threshold}, {"pass", r.pass},
          {"kappa", r.kappa},       {"kappa_prime", r.kappa_prime}, {"gamma", r.gamma}};
}

inline json to_json(const EstimateReport& r) {
  json j = {{"point", r.point},
            {"ci", {r.ci_lo, r.ci_hi}},
            {"ci_level", r.ci_level},
            {"two_sided", r.two_sided},
            {"alpha", detail::vector_json(r.alpha)},
            {"sigma_hat", r.sigma_hat},
            {"kappa", r.kappa},
            {"spectrum", detail::vector_json(r.spectrum)},
            {"donors", r.donors},
            {"pointwise", detail::vector_json(r.pointwise)},
            {"warnings", r.warnings}};
  json tests = json::object();
  if (r.diagnostics.training) {
    tests["training"] = r.diagnostics.training->pass;
    tests["training_detail"] = to_json(*r.diagnostics.training);
  }
  if (r.diagnostics.subspace) tests["subspace"] = to_json(*r.diagnostics.subspace);
  j["tests"] = std::move(tests);
  return j;
}

inline json to_json(const EstimatorStats& s, bool with_residuals) {
  json j = {{"n_estimates", s.n_estimates},
            {"mse", detail::number_or_null(s.mse)},
            {"r_squared", detail::number_or_null(s.r_squared)},
            {"mean_donor_count", detail::number_or_null(s.mean_donor_count)},
            {"coverage", detail::number_or_null(s.coverage)},
            {"excluded", {{"empty_donors", s.excluded_empty},
                          {"kappa_floor", s.excluded_kappa},
                          {"degenerate_rank", s.excluded_degenerate}}}};
  if (!s.residuals.empty() && s.residuals.size() >= 2) {
    const Moments m = sample_moments(s.residuals);
    j["residual_moments"] = {{"mean", m.mean}, {"variance", m.variance}, {"skewness", m.skewness},
                             {"excess_kurtosis", m.excess_kurtosis}};
  }
  if (with_residuals) {
    j["residuals"] = s.residuals;
    j["kappas"] = s.kappas;
  }
  return j;
}

inline json to_json(const BenchResult& r, const BenchConfig& cfg, bool with_residuals = false) {
  json j = {{"n_sims", r.n_sims}, {"n_estimands", r.n_estimands}, {"seed", cfg.seed}};
  if (cfg.estimators.nsi) j["nsi"] = to_json(r.nsi, with_residuals);
  if (cfg.estimators.si) j["si"] = to_json(r.si, with_residuals);
  if (cfg.estimators.baseline) j["baseline"] = to_json(r.baseline, with_residuals);
  return j;
}

}  // namespace nsi
