#include "irtmix/estimate.hpp"

#include <algorithm>
#include <limits>
#include <cmath>

#include "irtmix/link.hpp"
#include "likelihood.hpp"

namespace irtmix {

namespace {

using detail::EvalCounters;
using detail::MarginalEvaluator;

void check_nondegenerate(const ModelSpec& spec, const Dataset& data) {
  std::vector<std::vector<long>> counts(spec.n_items());
  for (int j = 0; j < spec.n_items(); ++j) counts[j].assign(spec.items[j].n_categories, 0);
  for (const SubjectData& s : data.subjects)
    for (const VisitData& v : s.visits)
      for (auto [j, y] : v.obs) ++counts[j][y];
  for (int j = 0; j < spec.n_items(); ++j) {
    int seen = 0;
    for (long c : counts[j]) seen += c > 0 ? 1 : 0;
    if (seen < 2)
      throw DataError("item " + std::to_string(spec.items[j].id) +
                      " has fewer than two observed categories");
  }
}

std::vector<double> empirical_thresholds(const std::vector<long>& counts, CdfKind /*kind*/) {
  const int M = static_cast<int>(counts.size()) - 1;
  long total = 0;
  for (long c : counts) total += c;
  std::vector<double> delta(M);
  double prev = -1e30;
  long above = total;
  for (int m = 1; m <= M; ++m) {
    above -= counts[m - 1];
    double q = static_cast<double>(above) / static_cast<double>(total);
    const double lo = 0.5 / static_cast<double>(total);
    q = std::min(std::max(q, lo), 1.0 - lo);
    double d = -std::log(q / (1.0 - q));
    if (d < prev + 0.05) d = prev + 0.05;
    delta[m - 1] = d;
    prev = d;
  }
  return delta;
}

// indices of packed parameters that park a variance component at zero, with the
// companion values to use when probing the boundary
struct BoundaryCandidate {
  std::vector<std::pair<int, double>> assignments;
  int watch_index;  // log-sd index whose smallness triggers the probe
};

std::vector<BoundaryCandidate> boundary_candidates(const ModelSpec& spec,
                                                   const ParameterLayout& lay) {
  std::vector<BoundaryCandidate> out;
  const int c = lay.cov_offset();
  if (spec.n_random() == 1) {
    out.push_back({{{c, -10.0}}, c});
  } else if (spec.random_cov == RandomCov::diagonal) {
    out.push_back({{{c, -10.0}}, c});
    out.push_back({{{c + 1, -10.0}}, c + 1});
  } else {
    out.push_back({{{c, -10.0}}, c});
    out.push_back({{{c + 1, 0.0}, {c + 2, -10.0}}, c + 2});
  }
  return out;
}

}  // namespace

LoglikValue marginal_loglik(const ModelSpec& spec, const Dataset& data,
                            const ParameterVector& packed, const QuadratureRule& quad,
                            int n_threads) {
  MarginalEvaluator ev(spec, data, quad, n_threads);
  EvalCounters ctr;
  LoglikValue out;
  out.value = ev.eval(packed, nullptr, &ctr);
  out.clamp_count = ctr.clamps;
  out.adaptive_failures = ctr.adaptive_failures;
  return out;
}

Eigen::VectorXd marginal_loglik_gradient(const ModelSpec& spec, const Dataset& data,
                                         const ParameterVector& packed,
                                         const QuadratureRule& quad, int n_threads) {
  MarginalEvaluator ev(spec, data, quad, n_threads);
  Eigen::VectorXd grad;
  ev.eval(packed, &grad, nullptr);
  return grad;
}

ParameterVector default_init(const ModelSpec& spec, const Dataset& data) {
  spec.validate();
  const ParameterLayout lay = layout_of(spec);
  ParameterVector x = ParameterVector::Zero(lay.total());

  std::vector<std::vector<long>> counts(spec.n_items());
  for (int j = 0; j < spec.n_items(); ++j) counts[j].assign(spec.items[j].n_categories, 0);
  for (const SubjectData& s : data.subjects)
    for (const VisitData& v : s.visits)
      for (auto [j, y] : v.obs) ++counts[j][y];

  int pos = lay.item_offset();
  if (spec.item_design == ItemDesign::per_item_thresholds) {
    for (int j = 0; j < spec.n_items(); ++j) {
      const std::vector<double> delta = empirical_thresholds(counts[j], spec.kind);
      x[pos++] = delta[0];
      for (std::size_t m = 1; m < delta.size(); ++m)
        x[pos++] = std::log(delta[m] - delta[m - 1]);
    }
  } else {
    std::vector<long> pooled(spec.items.front().n_categories, 0);
    for (const auto& cj : counts)
      for (std::size_t m = 0; m < cj.size(); ++m) pooled[m] += cj[m];
    const std::vector<double> delta = empirical_thresholds(pooled, spec.kind);
    x[pos++] = delta[0];
    for (std::size_t m = 1; m < delta.size(); ++m) x[pos++] = std::log(delta[m] - delta[m - 1]);
    // shifts start at zero
  }
  // log standard deviations start at 0 (unit variances); unstructured l10 at 0
  return x;
}

FitResult fit(const ModelSpec& spec, const Dataset& data,
              const std::optional<ParameterVector>& init, const FitOptions& options) {
  spec.validate();
  validate_dataset(spec, data);
  check_nondegenerate(spec, data);
  const ParameterLayout lay = layout_of(spec);

  ParameterVector x0 = init.has_value() ? *init : default_init(spec, data);
  if (x0.size() != lay.total())
    throw SpecificationError("initial parameter vector has the wrong length");

  MarginalEvaluator ev(spec, data, options.quad, options.n_threads);
  Objective objective = [&ev](const Eigen::VectorXd& x, Eigen::VectorXd* grad) {
    double value = -ev.eval(x, grad, nullptr);
    if (grad != nullptr) *grad = -*grad;
    if (!std::isfinite(value)) return std::numeric_limits<double>::infinity();
    return value;
  };

  OptimResult best = bfgs_minimize(objective, x0, options.optim);
  if (options.boundary_polish) {
    for (const BoundaryCandidate& cand : boundary_candidates(spec, lay)) {
      if (best.x[cand.watch_index] >= -3.0 || best.x[cand.watch_index] <= -9.0) continue;
      Eigen::VectorXd probe = best.x;
      for (auto [idx, val] : cand.assignments) probe[idx] = val;
      OptimResult alt = bfgs_minimize(objective, probe, options.optim);
      if (alt.f <= best.f) best = alt;
    }
  }

  // final clean evaluation at the optimum for diagnostics
  EvalCounters ctr;
  Eigen::VectorXd grad_at_opt(lay.total());
  const double loglik = ev.eval(best.x, &grad_at_opt, &ctr);

  FitResult out;
  out.spec = spec;
  out.packed = best.x;
  out.params = unpack(spec, best.x);
  out.loglik = loglik;
  out.n_free_params = lay.total();
  out.n_subjects = data.n_subjects();
  out.bic = bic_value(loglik, out.n_free_params, out.n_subjects);
  out.data_fingerprint = data.fingerprint();
  out.diag.converged = best.converged;
  out.diag.iterations = best.iterations;
  out.diag.n_evals = best.n_evals;
  out.diag.rel_grad = best.rel_grad;
  out.diag.clamp_count = ctr.clamps;
  out.diag.adaptive_failures = ctr.adaptive_failures;

  // natural-scale covariance entries
  const RandomCovParams& cov = out.params.cov;
  if (spec.n_random() == 1) {
    out.cov_estimates = {cov.var(0)};
    out.cov_names = {"sigma0_sq"};
  } else if (spec.random_cov == RandomCov::diagonal) {
    out.cov_estimates = {cov.var(0), cov.var(1)};
    out.cov_names = {"sigma0_sq", "sigma1_sq"};
  } else {
    out.cov_estimates = {cov.var(0), cov.cov(0, 1), cov.var(1)};
    out.cov_names = {"sigma0_sq", "cov01", "sigma1_sq"};
  }

  if (!best.converged)
    throw ConvergenceError("fit did not converge within " +
                               std::to_string(options.optim.max_iterations) + " iterations",
                           out);

  if (options.compute_se) {
    // observed information by central differences of the analytic gradient
    const int P = lay.total();
    Eigen::MatrixXd info(P, P);
    Eigen::VectorXd gp(P), gm(P);
    for (int p = 0; p < P; ++p) {
      const double h = 1e-4 * std::max(1.0, std::fabs(best.x[p]));
      Eigen::VectorXd xp = best.x, xm = best.x;
      xp[p] += h;
      xm[p] -= h;
      ev.eval(xp, &gp, nullptr);
      ev.eval(xm, &gm, nullptr);
      info.col(p) = -(gp - gm) / (2.0 * h);
    }
    info = 0.5 * (info + info.transpose()).eval();

    // eigenvalue-floored inverse keeps the covariance positive semi-definite
    // when a variance component sits on the boundary
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(info);
    const double floor = 1e-10 * std::max(1.0, es.eigenvalues().cwiseAbs().maxCoeff());
    Eigen::VectorXd inv_eigs(P);
    for (int p = 0; p < P; ++p) inv_eigs[p] = 1.0 / std::max(es.eigenvalues()[p], floor);
    const Eigen::MatrixXd covm =
        es.eigenvectors() * inv_eigs.asDiagonal() * es.eigenvectors().transpose();

    out.packed_se.resize(P);
    for (int p = 0; p < P; ++p) out.packed_se[p] = std::sqrt(std::max(covm(p, p), 0.0));

    out.beta_se.resize(lay.n_beta);
    out.beta_z.resize(lay.n_beta);
    out.beta_p.resize(lay.n_beta);
    for (int p = 0; p < lay.n_beta; ++p) {
      out.beta_se[p] = out.packed_se[p];
      out.beta_z[p] = out.beta_se[p] > 0.0 ? out.params.beta[p] / out.beta_se[p] : 0.0;
      out.beta_p[p] = normal_two_sided_p(out.beta_z[p]);
    }

    // delta method for thresholds: delta_m = delta_1 + sum_{k<m} exp(gamma_k)
    auto threshold_var = [&](int pos, const std::vector<double>& delta, int m) {
      Eigen::VectorXd row = Eigen::VectorXd::Zero(P);
      row[pos] = 1.0;
      for (int k = 1; k <= m; ++k) row[pos + k] = delta[k] - delta[k - 1];
      return row.dot(covm * row);
    };
    if (spec.item_design == ItemDesign::per_item_thresholds) {
      int pos = lay.item_offset();
      out.threshold_se.resize(spec.n_items());
      for (int j = 0; j < spec.n_items(); ++j) {
        const std::vector<double>& delta = out.params.items.thresholds[j];
        const int M = static_cast<int>(delta.size());
        out.threshold_se[j].resize(M);
        for (int m = 0; m < M; ++m)
          out.threshold_se[j][m] = std::sqrt(std::max(threshold_var(pos, delta, m), 0.0));
        pos += M;
      }
    } else {
      const std::vector<double>& delta = out.params.items.thresholds[0];
      const int M = static_cast<int>(delta.size());
      out.threshold_se.resize(1);
      out.threshold_se[0].resize(M);
      const int pos = lay.item_offset();
      for (int m = 0; m < M; ++m)
        out.threshold_se[0][m] = std::sqrt(std::max(threshold_var(pos, delta, m), 0.0));
      out.shift_se.assign(spec.n_items(), 0.0);
      for (int j = 1; j < spec.n_items(); ++j) out.shift_se[j] = out.packed_se[pos + M + j - 1];
    }

    // delta method for the covariance block
    const int c = lay.cov_offset();
    out.cov_se.clear();
    if (spec.n_random() == 1) {
      out.cov_se = {2.0 * cov.var(0) * out.packed_se[c]};
    } else if (spec.random_cov == RandomCov::diagonal) {
      out.cov_se = {2.0 * cov.var(0) * out.packed_se[c], 2.0 * cov.var(1) * out.packed_se[c + 1]};
    } else {
      const double l00 = cov.chol(0, 0), l10 = cov.chol(1, 0), l11 = cov.chol(1, 1);
      auto quad_form = [&](const Eigen::Vector3d& j3) {
        Eigen::VectorXd row = Eigen::VectorXd::Zero(P);
        row[c] = j3[0];
        row[c + 1] = j3[1];
        row[c + 2] = j3[2];
        return std::sqrt(std::max(row.dot(covm * row), 0.0));
      };
      // parameters are (log l00, l10, log l11)
      out.cov_se = {quad_form({2.0 * l00 * l00, 0.0, 0.0}),
                    quad_form({l00 * l10, l00, 0.0}),
                    quad_form({0.0, 2.0 * l10, 2.0 * l11 * l11})};
    }
  }

  return out;
}

FitResult fit_from(const ModelSpec& spec, const Dataset& data, const ItemParams& items,
                   const Eigen::VectorXd& beta, const RandomCovParams& cov,
                   const FitOptions& options) {
  if (!items.unit_discrimination())
    throw SpecificationError(
        "estimation requires unit discrimination: models with free discrimination do not "
        "have a linear predictor");
  return fit(spec, data, pack(spec, items, beta, cov), options);
}

double bic_value(double loglik, int n_free_params, int n_subjects) {
  return -2.0 * loglik + n_free_params * std::log(static_cast<double>(n_subjects));
}

int select_by_bic(double bic_a, int k_a, double bic_b, int k_b) {
  if (std::fabs(bic_a - bic_b) <= 1e-9) return k_a <= k_b ? 0 : 1;
  return bic_a < bic_b ? 0 : 1;
}

const FitResult& compare_bic(const FitResult& a, const FitResult& b) {
  if (a.data_fingerprint != b.data_fingerprint)
    throw ComparisonError("BIC comparison requires fits on the same dataset");
  return select_by_bic(a.bic, a.n_free_params, b.bic, b.n_free_params) == 0 ? a : b;
}

double normal_two_sided_p(double z) { return std::erfc(std::fabs(z) / std::sqrt(2.0)); }

WaldTest wald_test(const FitResult& fit, const std::string& coefficient) {
  int idx = -1;
  for (std::size_t p = 0; p < fit.spec.fixed_effects.size(); ++p)
    if (fit.spec.fixed_effects[p].name == coefficient) idx = static_cast<int>(p);
  if (idx < 0) throw InferenceError("unknown coefficient: " + coefficient);
  if (!fit.has_se() || fit.beta_se[idx] <= 0.0 || !std::isfinite(fit.beta_se[idx]))
    throw InferenceError("standard error unavailable for " + coefficient);
  WaldTest t;
  t.estimate = fit.params.beta[idx];
  t.se = fit.beta_se[idx];
  t.z = t.estimate / t.se;
  t.p = normal_two_sided_p(t.z);
  return t;
}

}  // namespace irtmix
