#pragma once

#include <Eigen/Dense>
#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "irtmix/estimate.hpp"
#include "irtmix/model.hpp"
#include "irtmix/quadrature.hpp"

namespace irtmix {

/// Ground truth for multinomial data generation under any (r, F, Z, U) model.
struct GeneratorTruth {
  ModelSpec spec;
  ItemParams items;
  Eigen::VectorXd beta;
  RandomCovParams cov;
};

/// Draws one dataset: per subject, random effects from N(0, Sigma), then one
/// multinomial draw per (visit, item) from the conditional category
/// probabilities. Covariate columns named by the model spec get deterministic
/// alternating 0/1 values by subject index. Bit-reproducible given
/// (seed, replication) for any execution order.
Dataset simulate_dataset(const GeneratorTruth& truth, int n_subjects,
                         std::span<const double> times, std::uint64_t seed,
                         std::uint32_t replication);

enum class ModelClass { lmm, adjacent, cumulative };

std::string model_class_name(ModelClass c);
ModelClass parse_model_class(const std::string& name);

/// One cell of the model-selection study: a generating model, difficulty set,
/// slope and variance settings, and the replication plan.
struct Scenario {
  std::string name;
  RatioFamily generator = RatioFamily::adjacent;
  CdfKind kind = CdfKind::logistic;
  std::vector<std::vector<double>> delta;  // per-item thresholds
  double beta1 = 0.0;
  double sigma0_sq = 1.5;
  double sigma1_sq = 0.0;
  int n_subjects = 300;
  std::vector<double> times = {0, 1, 2, 4, 6, 8, 10, 12};
  int replications = 100;
  std::uint64_t seed = 1;
  std::vector<ModelClass> fit_classes = {ModelClass::lmm, ModelClass::adjacent,
                                         ModelClass::cumulative};

  void validate() const;
  GeneratorTruth truth() const;
};

/// Difficulty sets used by the built-in scenario grids (two items, four
/// categories each): "near" thresholds sit close together, "far" spread out.
std::vector<std::vector<double>> delta_near();
std::vector<std::vector<double>> delta_far();

struct ClassSummary {
  ModelClass model_class = ModelClass::lmm;
  int m1 = 0;
  int m2 = 0;
  int failures = 0;
  int converged() const { return m1 + m2; }
  double m1_freq() const { return converged() > 0 ? 100.0 * m1 / converged() : 0.0; }
  double m2_freq() const { return converged() > 0 ? 100.0 * m2 / converged() : 0.0; }
};

struct SelectionSummary {
  Scenario scenario;
  std::vector<ClassSummary> classes;
};

/// Simulate-fit-select over all replications: for each requested model class,
/// fit the random-intercept model and the random-intercept-and-slope model,
/// select by BIC, and tally. Replications run in parallel; tallies are reduced
/// in replication order, so the summary is identical for any thread count.
SelectionSummary run_scenario(const Scenario& scenario, const QuadratureRule& quad,
                              int n_threads = 1);

/// Built-in scenario grids covering the model-selection study: the random-slope
/// detection grid under the null and at sigma1^2 = 0.2 ("table4"), and the
/// sensitivity grid over small slope variances ("table5"). Each grid crosses
/// four generator/difficulty cells.
std::vector<Scenario> builtin_table4(int replications, std::uint64_t seed);
std::vector<Scenario> builtin_table5(int replications, std::uint64_t seed);

}  // namespace irtmix
