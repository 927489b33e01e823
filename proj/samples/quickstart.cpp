// Simulate a ring of 200 units under a coloring design, then estimate one
// counterfactual and compare it with the noiseless truth.

#include <iostream>

#include "nsi/nsi.hpp"

int main() {
  using namespace nsi;

  const NetworkGraph g = make_ring(200);
  const int d = 2;
  const std::size_t t_pre = 60, t_post = 20;

  const DesignSchedule schedule = design_schedule(g, d, /*r_bar=*/1);
  const Eigen::MatrixXi a_pre = stretch_schedule(schedule, t_pre);
  const TreatmentVector a_post = random_prediction_treatments(g.size(), d, /*seed=*/7);
  const TreatmentPanel treatments = TreatmentPanel::from_parts(a_pre, a_post, t_post, d);

  SimConfig cfg;
  cfg.rank = 2;
  cfg.noise_std = 0.1;
  cfg.seed = 11;
  const Simulation sim = simulate(g, treatments, cfg);

  const Unit n = 10;
  const TreatmentVector target = {2, 1, 2};  // over N(10) = {9, 10, 11}
  const DonorSet donors = find_donors(g, treatments, n, target);
  std::cout << "donors: " << donors.size() << '\n';

  const EstimateReport rep = estimate(sim.observations, donors);
  const double truth = true_estimand(sim.world, g, treatments, n, target);
  std::cout << "estimate " << rep.point << "  [" << rep.ci_lo << ", " << rep.ci_hi << "]\n"
            << "truth    " << truth << "\n"
            << "kappa    " << rep.kappa << '\n';

  const auto check = training_treatment_test(g, treatments, n, target, 1);
  std::cout << "training test " << (check.pass ? "passed" : "failed") << '\n';
  return 0;
}
