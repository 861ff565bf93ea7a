#pragma once

#include <Eigen/Dense>
#include <cstdint>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "irtmix/family.hpp"
#include "irtmix/link.hpp"

namespace irtmix {

/// Item-parameter design: free thresholds per item, or shared thresholds plus a
/// per-item shift (rating scale).
enum class ItemDesign { per_item_thresholds, rating_scale };

/// Random-effect design: subject intercept only, or intercept and time slope.
enum class RandomEffects { intercept_only, intercept_and_slope };

enum class RandomCov { diagonal, unstructured };

struct ItemInfo {
  int id = 0;
  int n_categories = 2;   // categories 0..M with M = n_categories - 1
  bool reversed = false;  // functional-scale orientation, applied at ingestion
};

/// One column of the latent-trait fixed-effect design. The design value at a
/// visit is (column value) * (t_v - t0) when with_time is set; a pure time trend
/// has an empty column; a baseline group contrast has with_time = false.
struct FixedEffect {
  std::string name;
  std::string column;
  bool with_time = false;
};

/// The model quadruplet (ratio family, CdF, item design, random design) plus the
/// covariate layout of the latent-trait regression.
struct ModelSpec {
  RatioFamily family = RatioFamily::cumulative;
  CdfKind kind = CdfKind::logistic;
  ItemDesign item_design = ItemDesign::per_item_thresholds;
  std::vector<ItemInfo> items;
  std::vector<FixedEffect> fixed_effects;
  RandomEffects random_effects = RandomEffects::intercept_only;
  RandomCov random_cov = RandomCov::diagonal;

  void validate() const;
  int n_random() const { return random_effects == RandomEffects::intercept_only ? 1 : 2; }
  int n_items() const { return static_cast<int>(items.size()); }
  int max_threshold_count() const;
  /// Index of the item with the given id, or -1.
  int item_index(int id) const;
};

/// Named IRT model constructors (taxonomy of classical models).
ModelSpec rating_scale_model(int n_items, int n_categories);
ModelSpec partial_credit_model(const std::vector<ItemInfo>& items);
ModelSpec graded_response_model(const std::vector<ItemInfo>& items);
ModelSpec sequential_rasch_model(const std::vector<ItemInfo>& items);
ModelSpec generalized_partial_credit_model(const std::vector<ItemInfo>& items);

/// Item parameters. For per-item designs, thresholds[j] holds the M_j strictly
/// increasing thresholds of item j. For the rating scale, thresholds[0] holds the
/// shared thresholds and shift[j] the per-item location (shift[0] fixed at 0).
/// Discrimination defaults to 1 and is accepted for forward evaluation only.
struct ItemParams {
  std::vector<std::vector<double>> thresholds;
  std::vector<double> shift;
  std::vector<double> discrimination;

  void validate(const ModelSpec& spec) const;
  bool unit_discrimination() const;
};

/// Effective threshold of item j for category m (1-based): delta_jm, or
/// delta_m + tau_j under the rating scale.
double effective_threshold(const ModelSpec& spec, const ItemParams& params, int item_idx, int m);

/// eta = alpha_j * (theta - delta_jm); theta - (delta_m + tau_j) for the rating
/// scale. Throws CategoryError for m outside 1..M_j.
double linear_predictor(const ModelSpec& spec, const ItemParams& params, int item_idx,
                        double theta, int m);

/// All M_j predictors of an item at a given latent-trait value.
std::vector<double> item_predictors(const ModelSpec& spec, const ItemParams& params,
                                    int item_idx, double theta);

/// Random-effect covariance as a lower Cholesky factor (Sigma = L L'); diagonal
/// structures keep the off-diagonal at zero.
struct RandomCovParams {
  int dim = 1;
  std::vector<double> chol_lower;  // row-major lower triangle, size dim*(dim+1)/2

  static RandomCovParams diagonal(std::span<const double> sds);
  static RandomCovParams from_chol(int dim, std::span<const double> lower);
  double chol(int r, int c) const;
  double var(int r) const;
  double cov(int r, int c) const;
  void validate(const ModelSpec& spec) const;
};

/// Packed free parameters: fixed effects, then per-item first threshold plus log
/// increments (strict ordering holds for every unconstrained vector), then
/// covariance parameters (log standard deviations, or the Cholesky factor with
/// log diagonal).
using ParameterVector = Eigen::VectorXd;

struct ParameterLayout {
  int n_beta = 0;
  int n_item = 0;
  int n_cov = 0;
  int beta_offset() const { return 0; }
  int item_offset() const { return n_beta; }
  int cov_offset() const { return n_beta + n_item; }
  int total() const { return n_beta + n_item + n_cov; }
};

ParameterLayout layout_of(const ModelSpec& spec);

struct UnpackedParams {
  ItemParams items;
  Eigen::VectorXd beta;
  RandomCovParams cov;
};

ParameterVector pack(const ModelSpec& spec, const ItemParams& items,
                     const Eigen::VectorXd& beta, const RandomCovParams& cov);
UnpackedParams unpack(const ModelSpec& spec, const ParameterVector& packed);

/// theta = x'beta + u'xi with x the fixed-effect design at (covariates, t_v, t0)
/// and u = (1) or (1, t_v - t0). covariate_values[p] carries the column value
/// referenced by fixed_effects[p] (ignored for pure time effects).
double latent_trait(const ModelSpec& spec, std::span<const double> beta,
                    std::span<const double> xi, std::span<const double> covariate_values,
                    double t_v, double t0);

/// Long-format ordinal data grouped by subject. Missing responses are dropped at
/// construction and only counted; covariates are stored per visit in the order
/// of covariate_columns.
struct VisitData {
  int visit = 0;
  double time = 0.0;
  std::vector<double> covariates;
  std::vector<std::pair<int, int>> obs;  // (item index in spec order, category)
};

struct SubjectData {
  std::string id;
  std::vector<VisitData> visits;
  double baseline_time() const { return visits.empty() ? 0.0 : visits.front().time; }
};

struct Dataset {
  std::vector<std::string> covariate_columns;
  std::vector<SubjectData> subjects;
  long n_missing = 0;

  long n_obs() const;
  int n_subjects() const { return static_cast<int>(subjects.size()); }
  std::uint64_t fingerprint() const;
};

/// Structural validation of a dataset against a spec (category ranges, visit
/// ordering, covariate layout). Throws DataError / CategoryError.
void validate_dataset(const ModelSpec& spec, const Dataset& data);

}  // namespace irtmix
