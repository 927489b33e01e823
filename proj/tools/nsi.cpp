// nsi: command-line front end.
//
//   nsi simulate --config F --out-panel P.csv --out-treatments A.csv [--out-graph G.txt]
//   nsi design   --graph G.txt --d D --rbar R --out A.csv [--tbar T] [--tpre K] [--target LIST]
//   nsi estimate --panel P.csv --treatments A.csv --graph G.txt --unit n --target LIST --tpre K
//   nsi test training|subspace ...
//   nsi bench    --config F --out results.json
//
// Exit codes: 0 ok, 2 input error, 3 estimation infeasible, 4 failed test
// under --strict.

#include <CLI11.hpp>
#include <fstream>
#include <iostream>
#include <optional>
#include <string>

#include "nsi/nsi.hpp"

namespace {

using namespace nsi;

std::ifstream open_in(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw InputError("cannot open '" + path + "' for reading");
  return in;
}

std::ofstream open_out(const std::string& path) {
  std::ofstream out(path);
  if (!out) throw InputError("cannot open '" + path + "' for writing");
  return out;
}

NetworkGraph load_graph(const std::string& path, std::size_t n_units_hint = 0) {
  auto in = open_in(path);
  return read_edge_list(in, n_units_hint);
}

Eigen::MatrixXd load_panel(const std::string& path) {
  auto in = open_in(path);
  return read_panel_csv(in);
}

Eigen::MatrixXi load_treatments(const std::string& path) {
  auto in = open_in(path);
  return read_treatment_csv(in);
}

int max_label(const Eigen::MatrixXi& a) { return a.size() ? std::max(2, a.maxCoeff()) : 2; }

void emit(const json& j, const std::string& out_path) {
  if (out_path.empty()) {
    std::cout << j.dump(2) << '\n';
  } else {
    auto out = open_out(out_path);
    out << j.dump(2) << '\n';
  }
}

struct PanelArgs {
  std::string panel, treatments, graph, target, kappa = "auto";
  std::size_t unit = 0, t_pre = 0;
  int d = 0;
  std::string donor_mode = "identity";
};

struct Loaded {
  NetworkGraph g;
  TreatmentPanel treatments;
  TreatmentVector target;
};

Loaded load_treatment_side(const PanelArgs& a, bool need_post) {
  const Eigen::MatrixXi m = load_treatments(a.treatments);
  Loaded l;
  l.g = load_graph(a.graph, static_cast<std::size_t>(m.rows()));
  if (l.g.size() != static_cast<std::size_t>(m.rows()))
    throw InputError("graph has " + std::to_string(l.g.size()) + " units but the treatment CSV has " +
                     std::to_string(m.rows()));
  const std::size_t t_pre = a.t_pre ? a.t_pre : static_cast<std::size_t>(m.cols());
  l.treatments = TreatmentPanel(m, a.d ? a.d : max_label(m), t_pre);
  if (need_post && l.treatments.t_post() == 0) throw InputError("treatment CSV has no prediction rows after --tpre");
  l.target = parse_treatment_list(a.target);
  if (a.unit >= l.g.size()) throw InputError("unit " + std::to_string(a.unit) + " out of range");
  return l;
}

DonorMode parse_donor_mode(const std::string& s) {
  if (s == "identity") return DonorMode::identity;
  if (s == "exhaustive") return DonorMode::exhaustive;
  throw InputError("--donor-mode must be identity or exhaustive");
}

void add_panel_options(CLI::App* cmd, PanelArgs& a, bool with_panel) {
  if (with_panel) cmd->add_option("--panel", a.panel, "observation CSV (t,unit_0,...)")->required();
  cmd->add_option("--treatments", a.treatments, "treatment CSV, same layout")->required();
  cmd->add_option("--graph", a.graph, "edge list")->required();
  cmd->add_option("--unit", a.unit, "ego unit (0-based)")->required();
  cmd->add_option("--target", a.target, "target treatments over N(unit), ascending neighbor order, e.g. 1,2,1")
      ->required();
  cmd->add_option("--tpre", a.t_pre, "number of training measurements (default: all rows)");
  cmd->add_option("--d", a.d, "number of treatments D (default: largest label, at least 2)");
  cmd->add_option("--donor-mode", a.donor_mode, "identity or exhaustive");
}

int run_simulate(const std::string& config, const std::string& out_panel, const std::string& out_treatments,
                 const std::string& out_graph, const std::string& out_mean) {
  auto in = open_in(config);
  const BenchConfig cfg = read_config(in);
  cfg.validate();
  const NetworkGraph g = make_graph(cfg.graph, cfg.seed);
  const BenchWorld w = make_world(g, cfg, 0);
  {
    auto out = open_out(out_panel);
    write_panel_csv(out, w.sim.observations.matrix());
  }
  {
    auto out = open_out(out_treatments);
    write_treatment_csv(out, w.treatments.matrix());
  }
  if (!out_graph.empty()) {
    auto out = open_out(out_graph);
    write_edge_list(out, g);
  }
  if (!out_mean.empty()) {
    auto out = open_out(out_mean);
    write_panel_csv(out, w.sim.mean);
  }
  emit({{"n_units", g.size()}, {"t_pre", cfg.t_pre}, {"t_post", cfg.t_post},
        {"d_treatments", cfg.d_treatments}, {"seed", cfg.seed}}, "");
  return exit_code::ok;
}

int run_design(const std::string& graph, int d, int r_bar, std::optional<std::size_t> t_bar,
               std::optional<std::size_t> t_pre, const std::string& target, const std::string& out_path,
               const std::string& summary_path) {
  const NetworkGraph g = load_graph(graph);
  DesignSchedule s;
  if (target.empty()) {
    s = design_schedule(g, d, r_bar, t_bar);
  } else {
    const TreatmentVector tgt = parse_treatment_list(target);
    if (tgt.size() != g.size()) throw InputError("--target must list one treatment per unit");
    s = tailored_design(g, d, r_bar, tgt, t_bar);
  }
  const Eigen::MatrixXi a = t_pre ? stretch_schedule(s, *t_pre) : s.a_pre;
  {
    auto out = open_out(out_path);
    write_treatment_csv(out, a);
  }
  const json summary = {{"num_colors", s.num_colors()},
                        {"t_prime", s.t_prime},
                        {"t_bar", s.t_bar},
                        {"t_pre", static_cast<std::size_t>(a.cols())},
                        {"bound_rhs", training_length_bound(g.max_degree(), d, r_bar)}};
  emit(summary, "");
  if (!summary_path.empty()) emit(summary, summary_path);
  return exit_code::ok;
}

int run_estimate(const PanelArgs& a, double ci, bool two_sided, int r_bar, double gamma, bool strict,
                 const std::string& out_path) {
  const Loaded l = load_treatment_side(a, true);
  const ObservationPanel z(load_panel(a.panel), l.treatments.t_pre());
  z.check_against(l.treatments);
  const DonorSet ds = find_donors(l.g, l.treatments, a.unit, l.target, parse_donor_mode(a.donor_mode));
  EstimateOptions opts;
  opts.kappa = parse_kappa_policy(a.kappa);
  opts.ci_level = ci;
  opts.two_sided = two_sided;
  EstimateReport rep = estimate(z, ds, opts);

  rep.diagnostics.training = training_treatment_test(l.g, l.treatments, a.unit, l.target, r_bar);
  const DonorMatrices m = donor_submatrices(z, ds);
  try {
    rep.diagnostics.subspace =
        subspace_inclusion_test(m.z_pre, m.z_post, opts.kappa, gamma, l.target.size());
  } catch (const InfeasibleError& e) {
    rep.warnings.push_back(std::string("subspace test skipped: ") + e.what());
  }
  emit(to_json(rep), out_path);
  const bool passed = rep.diagnostics.training->pass &&
                      (!rep.diagnostics.subspace || rep.diagnostics.subspace->pass);
  return strict && !passed ? exit_code::test_failure : exit_code::ok;
}

int run_test_training(const PanelArgs& a, int r_bar, bool strict) {
  const Loaded l = load_treatment_side(a, false);
  const TrainingTestResult r = training_treatment_test(l.g, l.treatments, a.unit, l.target, r_bar);
  emit({{"training", to_json(r)}}, "");
  return strict && !r.pass ? exit_code::test_failure : exit_code::ok;
}

int run_test_subspace(const PanelArgs& a, const std::string& kappa, std::optional<int> kappa_prime,
                      double gamma, bool strict) {
  const Loaded l = load_treatment_side(a, true);
  const ObservationPanel z(load_panel(a.panel), l.treatments.t_pre());
  z.check_against(l.treatments);
  const DonorSet ds = find_donors(l.g, l.treatments, a.unit, l.target, parse_donor_mode(a.donor_mode));
  const DonorMatrices m = donor_submatrices(z, ds);
  const KappaPolicy policy = parse_kappa_policy(kappa);
  SubspaceTestResult r;
  if (kappa_prime || policy.rule == KappaRule::fixed) {
    const auto sp = decompose(m.z_pre).singular_values;
    const auto sq = decompose(m.z_post).singular_values;
    const int k = select_kappa(sp, policy, static_cast<std::size_t>(m.z_pre.rows()),
                               static_cast<std::size_t>(m.z_pre.cols()), l.target.size());
    const int kp = kappa_prime ? *kappa_prime
                               : select_kappa(sq, policy, static_cast<std::size_t>(m.z_post.rows()),
                                              static_cast<std::size_t>(m.z_post.cols()), l.target.size());
    r = subspace_inclusion_test(m.z_pre, m.z_post, k, kp, gamma);
  } else {
    r = subspace_inclusion_test(m.z_pre, m.z_post, policy, gamma, l.target.size());
  }
  emit({{"subspace", to_json(r)}}, "");
  return strict && !r.pass ? exit_code::test_failure : exit_code::ok;
}

int run_bench_cmd(const std::string& config, const std::string& out_path, const std::string& residuals,
                  std::optional<std::size_t> sims, std::optional<unsigned> threads, bool with_residuals) {
  auto in = open_in(config);
  BenchConfig cfg = read_config(in);
  if (sims) cfg.n_sims = *sims;
  if (threads) cfg.threads = *threads;
  const BenchResult r = run_bench(cfg);
  emit(to_json(r, cfg, with_residuals), out_path);
  if (!residuals.empty()) {
    auto out = open_out(residuals);
    write_residuals_csv(out, r);
  }
  return exit_code::ok;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Counterfactual estimation for panel data under network interference"};
  app.require_subcommand(1);

  std::string config, out_panel, out_treatments, out_graph, out_mean;
  auto* sim = app.add_subcommand("simulate", "draw a latent-factor world and write its panels");
  sim->add_option("--config", config, "JSON config")->required();
  sim->add_option("--out-panel", out_panel, "observation CSV")->required();
  sim->add_option("--out-treatments", out_treatments, "treatment CSV")->required();
  sim->add_option("--out-graph", out_graph, "edge list of the generated graph");
  sim->add_option("--out-mean", out_mean, "noiseless mean outcomes CSV");

  std::string graph, design_out, design_target, summary;
  int d = 2, r_bar = 1;
  std::optional<std::size_t> t_bar, design_tpre;
  auto* des = app.add_subcommand("design", "two-hop coloring training schedule");
  des->add_option("--graph", graph, "edge list")->required();
  des->add_option("--d", d, "number of treatments D >= 2")->required();
  des->add_option("--rbar", r_bar, "repetition factor r_bar >= 1")->required();
  des->add_option("--out", design_out, "treatment CSV for the training period")->required();
  des->add_option("--tbar", t_bar, "columns per period (default r_bar * D)");
  des->add_option("--tpre", design_tpre, "spread the periods over exactly this many columns");
  des->add_option("--target", design_target, "tailor to this full target assignment (one entry per unit)");
  des->add_option("--summary", summary, "also write the JSON summary here");

  PanelArgs est_args;
  double ci = 95.0, gamma = 0.5;
  bool two_sided = false, strict = false;
  std::string est_out;
  auto* est = app.add_subcommand("estimate", "estimate one counterfactual");
  add_panel_options(est, est_args, true);
  est->add_option("--kappa", est_args.kappa, "auto, knee, universal or an integer");
  est->add_option("--ci", ci, "confidence level in percent");
  est->add_flag("--two-sided", two_sided, "use the two-sided normal quantile");
  est->add_option("--rbar", r_bar, "r_bar for the training test");
  est->add_option("--gamma", gamma, "gamma for the subspace test");
  est->add_flag("--strict", strict, "exit 4 when a validity test fails");
  est->add_option("--out", est_out, "write the JSON report here instead of stdout");

  auto* test = app.add_subcommand("test", "validity tests");
  test->require_subcommand(1);
  PanelArgs tr_args;
  auto* tr = test->add_subcommand("training", "treatment-mask test");
  add_panel_options(tr, tr_args, false);
  tr->add_option("--rbar", r_bar, "repetition factor r_bar >= 1");
  tr->add_flag("--strict", strict, "exit 4 when the test fails");

  PanelArgs ss_args;
  std::string ss_kappa = "knee";
  std::optional<int> kappa_prime;
  auto* ss = test->add_subcommand("subspace", "donor spectra test");
  add_panel_options(ss, ss_args, true);
  ss->add_option("--kappa", ss_kappa, "knee, universal, auto or an integer");
  ss->add_option("--kappa-prime", kappa_prime, "components kept for the post-period matrix");
  ss->add_option("--gamma", gamma, "threshold parameter in (0, 1)");
  ss->add_flag("--strict", strict, "exit 4 when the test fails");

  std::string bench_out, residuals;
  std::optional<std::size_t> sims;
  std::optional<unsigned> threads;
  bool with_residuals = false;
  auto* bench = app.add_subcommand("bench", "run the simulation study");
  bench->add_option("--config", config, "JSON config")->required();
  bench->add_option("--out", bench_out, "results JSON")->required();
  bench->add_option("--residuals", residuals, "residual CSV");
  bench->add_option("--sims", sims, "override n_sims");
  bench->add_option("--threads", threads, "override threads (0 = all cores)");
  bench->add_flag("--with-residuals", with_residuals, "embed residuals and kappas in the JSON");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e);
    return rc == 0 ? exit_code::ok : exit_code::input_error;
  }

  try {
    if (*sim) return run_simulate(config, out_panel, out_treatments, out_graph, out_mean);
    if (*des) return run_design(graph, d, r_bar, t_bar, design_tpre, design_target, design_out, summary);
    if (*est) return run_estimate(est_args, ci, two_sided, r_bar, gamma, strict, est_out);
    if (*tr) return run_test_training(tr_args, r_bar, strict);
    if (*ss) return run_test_subspace(ss_args, ss_kappa, kappa_prime, gamma, strict);
    if (*bench) return run_bench_cmd(config, bench_out, residuals, sims, threads, with_residuals);
  } catch (const InputError& e) {
    std::cerr << "error: " << e.what() << '\n';
    return exit_code::input_error;
  } catch (const InfeasibleError& e) {
    std::cerr << "infeasible: " << e.what() << '\n';
    return exit_code::infeasible;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 1;
  }
  return exit_code::ok;
}
