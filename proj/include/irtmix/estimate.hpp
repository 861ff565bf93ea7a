#pragma once

#include <Eigen/Dense>
#include <optional>
#include <string>
#include <vector>

#include "irtmix/bfgs.hpp"
#include "irtmix/errors.hpp"
#include "irtmix/model.hpp"
#include "irtmix/quadrature.hpp"

namespace irtmix {

struct FitDiagnostics {
  bool converged = false;
  int iterations = 0;
  int n_evals = 0;
  double rel_grad = 0.0;
  long clamp_count = 0;
  long adaptive_failures = 0;
};

/// Marginal maximum-likelihood fit of an (r, F, Z, U) model.
struct FitResult {
  ModelSpec spec;
  ParameterVector packed;  // optimum on the unconstrained scale
  UnpackedParams params;   // natural scale
  double loglik = 0.0;
  double bic = 0.0;
  int n_free_params = 0;
  int n_subjects = 0;
  std::uint64_t data_fingerprint = 0;
  FitDiagnostics diag;

  // standard errors (empty when not computed); natural scale via the delta method
  Eigen::VectorXd packed_se;
  std::vector<double> beta_se, beta_z, beta_p;          // per fixed effect
  std::vector<std::vector<double>> threshold_se;        // per item, per threshold
  std::vector<double> shift_se;                         // rating scale shifts
  std::vector<double> cov_estimates;                    // sigma0^2[, cov01], sigma1^2
  std::vector<double> cov_se;
  std::vector<std::string> cov_names;

  bool has_se() const { return packed_se.size() > 0; }
};

/// Optimizer failed to converge; carries the best iterate found.
class ConvergenceError : public Error {
public:
  ConvergenceError(const std::string& what, FitResult best)
      : Error(what), best(std::move(best)) {}
  FitResult best;
};

struct LoglikValue {
  double value = 0.0;
  long clamp_count = 0;
  long adaptive_failures = 0;
};

/// Marginal log-likelihood: per-subject conditional likelihoods integrated over
/// the random effects by (adaptive) Gauss-Hermite quadrature. Deterministic for
/// fixed inputs and any thread count.
LoglikValue marginal_loglik(const ModelSpec& spec, const Dataset& data,
                            const ParameterVector& packed, const QuadratureRule& quad,
                            int n_threads = 1);

/// Packed-scale gradient of the marginal log-likelihood (quadrature geometry
/// held fixed, which is exact to quadrature accuracy).
Eigen::VectorXd marginal_loglik_gradient(const ModelSpec& spec, const Dataset& data,
                                         const ParameterVector& packed,
                                         const QuadratureRule& quad, int n_threads = 1);

struct FitOptions {
  QuadratureRule quad = QuadratureRule::gauss_hermite(7);
  OptimOptions optim;
  int n_threads = 1;
  bool compute_se = true;
  /// After convergence, re-fit from variance-at-zero candidates when a variance
  /// component is heading to the boundary; keeps nested models comparable.
  bool boundary_polish = true;
};

/// Default start: zero fixed effects, thresholds from pooled empirical
/// cumulative logits, unit variances.
ParameterVector default_init(const ModelSpec& spec, const Dataset& data);

/// Maximize the marginal likelihood. Throws DataError for degenerate items
/// (fewer than two observed categories) and ConvergenceError (carrying the best
/// iterate) when the optimizer exhausts its iteration budget.
FitResult fit(const ModelSpec& spec, const Dataset& data,
              const std::optional<ParameterVector>& init = std::nullopt,
              const FitOptions& options = FitOptions());

/// Convenience entry taking natural-scale parameters; rejects discrimination
/// parameters other than 1 (such models fall outside the GLMM class handled by
/// this estimator).
FitResult fit_from(const ModelSpec& spec, const Dataset& data, const ItemParams& items,
                   const Eigen::VectorXd& beta, const RandomCovParams& cov,
                   const FitOptions& options = FitOptions());

/// BIC = -2 loglik + k log(n_subjects).
double bic_value(double loglik, int n_free_params, int n_subjects);

/// 0 selects (bic_a, k_a), 1 the other; ties within 1e-9 go to fewer parameters.
int select_by_bic(double bic_a, int k_a, double bic_b, int k_b);

/// The fit with the smaller BIC; requires both fits to come from the same
/// dataset (ComparisonError otherwise).
const FitResult& compare_bic(const FitResult& a, const FitResult& b);

struct WaldTest {
  double estimate = 0.0;
  double se = 0.0;
  double z = 0.0;
  double p = 1.0;
};

/// Wald z and two-sided p for a named fixed effect. InferenceError when the
/// coefficient is unknown or its standard error is unavailable/zero.
WaldTest wald_test(const FitResult& fit, const std::string& coefficient);

/// Two-sided standard-normal tail probability of |z|.
double normal_two_sided_p(double z);

}  // namespace irtmix
