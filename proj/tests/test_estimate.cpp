#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <random>

#include "irtmix/errors.hpp"
#include "irtmix/estimate.hpp"
#include "irtmix/kernels.hpp"
#include "irtmix/quadrature.hpp"
#include "irtmix/simulate.hpp"
#include "test_util.hpp"

using namespace irtmix;
using testutil::sim_spec;
using testutil::toy_dataset;

namespace {

ParameterVector pack_sim(const ModelSpec& spec, const std::vector<std::vector<double>>& delta,
                         double beta1, double sd0, double sd1) {
  ItemParams items;
  items.thresholds = delta;
  items.discrimination.assign(delta.size(), 1.0);
  Eigen::VectorXd beta(1);
  beta << beta1;
  RandomCovParams cov;
  if (spec.n_random() == 2) {
    const std::array<double, 2> sds{sd0, sd1};
    cov = RandomCovParams::diagonal(sds);
  } else {
    const std::array<double, 1> sds{sd0};
    cov = RandomCovParams::diagonal(sds);
  }
  return pack(spec, items, beta, cov);
}

}  // namespace

TEST_CASE("near-zero variances collapse the integral to the conditional likelihood") {
  const ModelSpec spec = sim_spec(RatioFamily::cumulative, true);
  const Dataset data =
      toy_dataset(RatioFamily::cumulative, true, 0.2, 1.5, 0.05, 8, {0, 1, 2, 4}, 99);
  ParameterVector packed = pack_sim(spec, delta_far(), 0.2, 1.0, 1.0);
  packed[packed.size() - 2] = -12.0;
  packed[packed.size() - 1] = -12.0;

  double cond = 0.0;
  for (const SubjectData& s : data.subjects) {
    const double t0 = s.baseline_time();
    for (const VisitData& v : s.visits)
      for (auto [j, y] : v.obs)
        cond += std::log(
            testutil::cond_prob_oracle(spec.family, 0.2 * (v.time - t0), delta_far()[j], y));
  }
  const LoglikValue ll = marginal_loglik(spec, data, packed, QuadratureRule::gauss_hermite(7));
  CHECK(std::fabs(ll.value - cond) < 1e-6);
}

TEST_CASE("marginal likelihood matches a million-draw Monte-Carlo oracle") {
  const ModelSpec spec = sim_spec(RatioFamily::cumulative, true);
  const Dataset data =
      toy_dataset(RatioFamily::cumulative, true, 0.3, 1.5, 0.05, 10, {0, 1, 2, 4}, 7);
  const double sd0 = std::sqrt(1.5), sd1 = std::sqrt(0.05);
  const ParameterVector packed = pack_sim(spec, delta_far(), 0.3, sd0, sd1);
  const LoglikValue ll =
      marginal_loglik(spec, data, packed, QuadratureRule::gauss_hermite(15));
  const double oracle =
      testutil::mc_loglik_oracle(spec, data, delta_far(), 0.3, sd0, sd1, 500000, 1234);
  CHECK(std::fabs(ll.value - oracle) < 1e-3);
}

TEST_CASE("single binary response agrees with a dense reference rule") {
  ModelSpec spec;
  spec.family = RatioFamily::cumulative;
  spec.kind = CdfKind::logistic;
  spec.items = {{1, 2, false}};
  spec.random_effects = RandomEffects::intercept_only;

  Dataset data;
  SubjectData s;
  s.id = "1";
  VisitData v;
  v.visit = 0;
  v.time = 0.0;
  v.obs = {{0, 1}};
  s.visits = {v};
  data.subjects = {s};

  ItemParams items;
  items.thresholds = {{0.7}};
  items.discrimination = {1.0};
  const std::array<double, 1> sds{1.0};
  const ParameterVector packed =
      pack(spec, items, Eigen::VectorXd(0), RandomCovParams::diagonal(sds));

  // test-side 41-node rule applied directly to F(xi - delta)
  const QuadratureRule ref = QuadratureRule::gauss_hermite(41);
  double p = 0.0;
  for (int k = 0; k < 41; ++k)
    p += ref.weights[k] / (1.0 + std::exp(-(ref.nodes[k] - 0.7)));
  const LoglikValue ll =
      marginal_loglik(spec, data, packed, QuadratureRule::gauss_hermite(15));
  CHECK(std::fabs(ll.value - std::log(p)) < 1e-8);
}

TEST_CASE("analytic gradients match central finite differences") {
  std::mt19937_64 rng(2024);
  std::uniform_real_distribution<double> jitter(-0.25, 0.25);

  struct Case {
    RatioFamily family;
    CdfKind kind;
    bool slope;
    RandomCov cov;
  };
  const Case cases[] = {
      {RatioFamily::cumulative, CdfKind::logistic, true, RandomCov::diagonal},
      {RatioFamily::adjacent, CdfKind::logistic, true, RandomCov::unstructured},
      {RatioFamily::sequential, CdfKind::gumbel_max, false, RandomCov::diagonal},
      {RatioFamily::cumulative, CdfKind::gaussian, true, RandomCov::diagonal},
  };

  // the analytic gradient holds the adapted node geometry fixed; at 15 nodes
  // per dimension that approximation is converged well past the tolerance
  const QuadratureRule quad = QuadratureRule::gauss_hermite(15);
  int checked = 0;
  for (const Case& c : cases) {
    ModelSpec spec = sim_spec(c.family, c.slope, c.kind);
    spec.random_cov = c.cov;
    const Dataset data =
        toy_dataset(c.family == RatioFamily::sequential ? RatioFamily::adjacent : c.family,
                    c.slope, 0.2, 1.2, c.slope ? 0.04 : 0.0, 15, {0, 1, 3, 5}, 11);
    const ParameterVector base = default_init(spec, data);
    for (int point = 0; point < 5; ++point) {
      ParameterVector x = base;
      for (Eigen::Index p = 0; p < x.size(); ++p) x[p] += jitter(rng);
      const Eigen::VectorXd grad = marginal_loglik_gradient(spec, data, x, quad);
      for (Eigen::Index p = 0; p < x.size(); ++p) {
        const double h = 1e-5 * std::max(1.0, std::fabs(x[p]));
        ParameterVector xp = x, xm = x;
        xp[p] += h;
        xm[p] -= h;
        const double fp = marginal_loglik(spec, data, xp, quad).value;
        const double fm = marginal_loglik(spec, data, xm, quad).value;
        const double fd = (fp - fm) / (2.0 * h);
        CHECK(std::fabs(grad[p] - fd) <= 1e-4 * std::max(1.0, std::fabs(fd)));
      }
      ++checked;
    }
  }
  CHECK(checked == 20);
}

TEST_CASE("seven-node and fifteen-node rules agree to 1e-3 per subject") {
  const ModelSpec spec = sim_spec(RatioFamily::cumulative, true);
  const Dataset data = toy_dataset(RatioFamily::cumulative, true, 0.3, 1.5, 0.05, 60,
                                   {0, 1, 2, 4, 6, 8, 10, 12}, 21);
  const ParameterVector packed =
      pack_sim(spec, delta_far(), 0.3, std::sqrt(1.5), std::sqrt(0.05));
  const double l7 = marginal_loglik(spec, data, packed, QuadratureRule::gauss_hermite(7)).value;
  const double l15 =
      marginal_loglik(spec, data, packed, QuadratureRule::gauss_hermite(15)).value;
  CHECK(std::fabs(l7 - l15) <= 1e-3 * data.n_subjects());
}

TEST_CASE("likelihood is invariant to subject relabeling") {
  const ModelSpec spec = sim_spec(RatioFamily::adjacent, true);
  Dataset data = toy_dataset(RatioFamily::adjacent, true, 0.1, 1.0, 0.02, 24, {0, 2, 5}, 31);
  const ParameterVector packed = pack_sim(spec, delta_near(), 0.1, 1.0, 0.2);
  const QuadratureRule quad = QuadratureRule::gauss_hermite(7);
  const double base = marginal_loglik(spec, data, packed, quad).value;
  std::reverse(data.subjects.begin(), data.subjects.end());
  const double flipped = marginal_loglik(spec, data, packed, quad).value;
  CHECK(std::fabs(base - flipped) <= 1e-9 * std::fabs(base));
}

TEST_CASE("evaluation is deterministic across calls and thread counts") {
  const ModelSpec spec = sim_spec(RatioFamily::cumulative, true);
  const Dataset data =
      toy_dataset(RatioFamily::cumulative, true, 0.3, 1.5, 0.05, 30, {0, 1, 2, 4}, 5);
  const ParameterVector packed =
      pack_sim(spec, delta_far(), 0.3, std::sqrt(1.5), std::sqrt(0.05));
  const QuadratureRule quad = QuadratureRule::gauss_hermite(7);
  const double a = marginal_loglik(spec, data, packed, quad, 1).value;
  const double b = marginal_loglik(spec, data, packed, quad, 1).value;
  const double c = marginal_loglik(spec, data, packed, quad, 2).value;
  const double d = marginal_loglik(spec, data, packed, quad, 3).value;
  CHECK(a == b);
  CHECK(a == c);
  CHECK(a == d);
}

TEST_CASE("scalar and simd kernel paths agree on the marginal likelihood") {
  if (kern::avx2_ops() == nullptr) return;
  const ModelSpec spec = sim_spec(RatioFamily::adjacent, true);
  const Dataset data =
      toy_dataset(RatioFamily::adjacent, true, 0.2, 1.5, 0.03, 25, {0, 1, 3, 6}, 77);
  const ParameterVector packed = pack_sim(spec, delta_near(), 0.2, 1.1, 0.15);
  const QuadratureRule quad = QuadratureRule::gauss_hermite(7);
  kern::force_isa(kern::Isa::scalar);
  const double ll_scalar = marginal_loglik(spec, data, packed, quad).value;
  kern::force_isa(kern::Isa::avx2);
  const double ll_avx2 = marginal_loglik(spec, data, packed, quad).value;
  CHECK(std::fabs(ll_scalar - ll_avx2) <= 1e-12 * std::fabs(ll_scalar));
}

TEST_CASE("balanced binary data puts the threshold at zero") {
  ModelSpec spec;
  spec.family = RatioFamily::cumulative;
  spec.kind = CdfKind::logistic;
  spec.items = {{1, 2, false}};
  spec.random_effects = RandomEffects::intercept_only;

  Dataset data;
  for (int i = 0; i < 40; ++i) {
    SubjectData s;
    s.id = std::to_string(i);
    VisitData v;
    v.visit = 0;
    v.time = 0.0;
    v.obs = {{0, i % 2}};
    s.visits = {v};
    data.subjects.push_back(s);
  }
  FitOptions opts;
  opts.compute_se = false;
  const FitResult res = fit(spec, data, std::nullopt, opts);
  CHECK(std::fabs(res.params.items.thresholds[0][0]) < 1e-3);
}

TEST_CASE("refitting from the optimum is a fixed point") {
  const ModelSpec spec = sim_spec(RatioFamily::cumulative, false);
  const Dataset data =
      toy_dataset(RatioFamily::cumulative, false, 0.2, 1.5, 0.0, 50, {0, 1, 3, 6}, 3);
  FitOptions opts;
  opts.compute_se = false;
  const FitResult first = fit(spec, data, std::nullopt, opts);
  const FitResult second = fit(spec, data, first.packed, opts);
  CHECK(std::fabs(second.loglik - first.loglik) <= 1e-8);
}

TEST_CASE("bic arithmetic, tie rule, and dataset guard") {
  CHECK(bic_value(-1000.0, 9, 300) == doctest::Approx(2051.33).epsilon(2e-5));
  CHECK(select_by_bic(10.0, 3, 10.0, 4) == 0);
  CHECK(select_by_bic(10.0, 4, 10.0, 3) == 1);
  CHECK(select_by_bic(12.0, 9, 10.0, 3) == 1);

  const ModelSpec spec = sim_spec(RatioFamily::cumulative, false);
  const Dataset a = toy_dataset(RatioFamily::cumulative, false, 0.2, 1.0, 0.0, 25, {0, 1, 3}, 1);
  const Dataset b = toy_dataset(RatioFamily::cumulative, false, 0.2, 1.0, 0.0, 25, {0, 1, 3}, 2);
  FitOptions opts;
  opts.compute_se = false;
  const FitResult fa = fit(spec, a, std::nullopt, opts);
  const FitResult fb = fit(spec, b, std::nullopt, opts);
  CHECK_THROWS_AS(compare_bic(fa, fb), ComparisonError);
  CHECK(&compare_bic(fa, fa) == &fa);
}

TEST_CASE("the slope model attains at least the intercept model's likelihood") {
  const Dataset data =
      toy_dataset(RatioFamily::cumulative, false, 0.3, 1.5, 0.0, 60, {0, 1, 2, 4, 6, 8}, 17);
  FitOptions opts;
  opts.compute_se = false;
  const ModelSpec m1 = sim_spec(RatioFamily::cumulative, false);
  const ModelSpec m2 = sim_spec(RatioFamily::cumulative, true);
  const FitResult f1 = fit(m1, data, std::nullopt, opts);
  ParameterVector warm(f1.packed.size() + 1);
  warm.segment(0, f1.packed.size()) = f1.packed;
  warm[warm.size() - 1] = warm[warm.size() - 2] - 2.1;
  const FitResult f2 = fit(m2, data, warm, opts);
  CHECK(f2.loglik >= f1.loglik - 1e-6);
}

TEST_CASE("wald statistics") {
  FitResult fr;
  fr.spec = sim_spec(RatioFamily::cumulative, false);
  fr.spec.fixed_effects = {{"a", "", true}, {"b", "g", false}, {"c", "g", true}};
  fr.params.beta = Eigen::Vector3d(0.0, 1.96, -0.330);
  fr.packed_se = Eigen::VectorXd::Ones(3);
  fr.beta_se = {1.0, 1.0, 0.076};
  fr.beta_z = {0, 0, 0};
  fr.beta_p = {0, 0, 0};

  const WaldTest t0 = wald_test(fr, "a");
  CHECK(t0.z == 0.0);
  CHECK(t0.p == doctest::Approx(1.0));
  const WaldTest t1 = wald_test(fr, "b");
  CHECK(std::fabs(t1.p - 0.05) < 1e-4);
  const WaldTest t2 = wald_test(fr, "c");
  CHECK(t2.z == doctest::Approx(-4.342).epsilon(1e-3));
  CHECK(t2.p < 0.001);
  CHECK_THROWS_AS(wald_test(fr, "nope"), InferenceError);
  fr.beta_se[0] = 0.0;
  CHECK_THROWS_AS(wald_test(fr, "a"), InferenceError);
}

TEST_CASE("reversing categories and negating covariates preserves the maximum") {
  // express the trend through a covariate column so negation is a data
  // transform: theta = beta * x_v with x carrying (t - t0)
  ModelSpec spec;
  spec.family = RatioFamily::cumulative;
  spec.kind = CdfKind::logistic;
  spec.items = {{1, 4, false}, {2, 4, false}};
  spec.fixed_effects = {{"trend", "x", false}};
  spec.random_effects = RandomEffects::intercept_only;

  Dataset data = toy_dataset(RatioFamily::cumulative, false, 0.25, 1.2, 0.0, 60, {0, 1, 3, 6}, 9);
  data.covariate_columns = {"x"};
  for (SubjectData& s : data.subjects)
    for (VisitData& v : s.visits) v.covariates = {v.time - s.baseline_time()};

  Dataset mirrored = data;
  for (SubjectData& s : mirrored.subjects)
    for (VisitData& v : s.visits) {
      v.covariates[0] = -v.covariates[0];
      for (auto& [j, y] : v.obs) y = 3 - y;
    }

  FitOptions opts;
  opts.compute_se = false;
  opts.optim.rel_grad_tol = 1e-7;
  const FitResult f = fit(spec, data, std::nullopt, opts);
  const FitResult g = fit(spec, mirrored, std::nullopt, opts);
  CHECK(std::fabs(f.loglik - g.loglik) <= 1e-6);
  // thresholds map to the negated reversal
  for (int j = 0; j < 2; ++j)
    for (int m = 0; m < 3; ++m)
      CHECK(std::fabs(g.params.items.thresholds[j][m] +
                      f.params.items.thresholds[j][2 - m]) < 5e-3);
}

TEST_CASE("degenerate items are rejected before fitting") {
  ModelSpec spec = sim_spec(RatioFamily::cumulative, false);
  Dataset data = toy_dataset(RatioFamily::cumulative, false, 0.2, 1.0, 0.0, 20, {0, 1}, 2);
  for (SubjectData& s : data.subjects)
    for (VisitData& v : s.visits)
      for (auto& [j, y] : v.obs)
        if (j == 1) y = 0;
  CHECK_THROWS_AS(fit(spec, data, std::nullopt, FitOptions()), DataError);
}

TEST_CASE("the estimator rejects free discrimination") {
  const ModelSpec spec = sim_spec(RatioFamily::cumulative, false);
  const Dataset data = toy_dataset(RatioFamily::cumulative, false, 0.2, 1.0, 0.0, 20, {0, 1}, 4);
  ItemParams items;
  items.thresholds = delta_far();
  items.discrimination = {2.0, 1.0};
  Eigen::VectorXd beta(1);
  beta << 0.0;
  const std::array<double, 1> sds{1.0};
  CHECK_THROWS_AS(
      fit_from(spec, data, items, beta, RandomCovParams::diagonal(sds), FitOptions()),
      SpecificationError);
}

TEST_CASE("non-convergence carries the best iterate") {
  const ModelSpec spec = sim_spec(RatioFamily::cumulative, true);
  const Dataset data =
      toy_dataset(RatioFamily::cumulative, true, 0.3, 1.5, 0.05, 40, {0, 1, 2, 4}, 12);
  FitOptions opts;
  opts.compute_se = false;
  opts.optim.max_iterations = 2;
  try {
    fit(spec, data, std::nullopt, opts);
    FAIL("expected ConvergenceError");
  } catch (const ConvergenceError& e) {
    CHECK_FALSE(e.best.diag.converged);
    CHECK(e.best.packed.size() == layout_of(spec).total());
    CHECK(std::isfinite(e.best.loglik));
  }
}

TEST_CASE("clamped probabilities are counted") {
  const ModelSpec spec = sim_spec(RatioFamily::cumulative, false);
  const Dataset data = toy_dataset(RatioFamily::cumulative, false, 0.2, 1.0, 0.0, 10, {0, 1}, 6);
  // absurd thresholds force underflow clamping on some observations
  const ParameterVector packed =
      pack_sim(spec, {{-40.0, -39.0, 38.0}, {-40.0, -39.0, 38.0}}, 0.0, 1.0, 0.0);
  const LoglikValue ll = marginal_loglik(spec, data, packed, QuadratureRule::gauss_hermite(7));
  CHECK(std::isfinite(ll.value));
  CHECK(ll.clamp_count > 0);
}

TEST_CASE("rating-scale gradients and recovery") {
  ModelSpec spec = rating_scale_model(3, 4);
  spec.fixed_effects = {{"time", "", true}};
  spec.random_effects = RandomEffects::intercept_only;

  GeneratorTruth truth;
  truth.spec = spec;
  truth.items.thresholds = {{-1.2, 0.3, 1.6}};
  truth.items.shift = {0.0, 0.5, -0.4};
  truth.items.discrimination = {1.0, 1.0, 1.0};
  truth.beta = Eigen::VectorXd::Constant(1, 0.15);
  const std::array<double, 1> sds{1.1};
  truth.cov = RandomCovParams::diagonal(sds);
  const Dataset data = simulate_dataset(truth, 150, std::vector<double>{0, 1, 3, 6}, 31, 0);

  const QuadratureRule quad = QuadratureRule::gauss_hermite(21);
  ParameterVector x = default_init(spec, data);
  std::mt19937_64 rng(5);
  std::uniform_real_distribution<double> jitter(-0.2, 0.2);
  for (Eigen::Index p = 0; p < x.size(); ++p) x[p] += jitter(rng);
  const Eigen::VectorXd grad = marginal_loglik_gradient(spec, data, x, quad);
  for (Eigen::Index p = 0; p < x.size(); ++p) {
    const double h = 1e-5 * std::max(1.0, std::fabs(x[p]));
    ParameterVector xp = x, xm = x;
    xp[p] += h;
    xm[p] -= h;
    const double fd = (marginal_loglik(spec, data, xp, quad).value -
                       marginal_loglik(spec, data, xm, quad).value) /
                      (2.0 * h);
    CHECK(std::fabs(grad[p] - fd) <= 1e-4 * std::max(1.0, std::fabs(fd)));
  }

  FitOptions opts;
  opts.compute_se = false;
  const FitResult f = fit(spec, data, std::nullopt, opts);
  CHECK(f.diag.converged);
  CHECK(std::fabs(f.params.items.shift[1] - 0.5) < 0.25);
  CHECK(std::fabs(f.params.items.shift[2] + 0.4) < 0.25);
  CHECK(std::fabs(f.params.items.thresholds[0][0] + 1.2) < 0.3);
}

TEST_CASE("sequential-family fits recover generating parameters") {
  const ModelSpec spec = sim_spec(RatioFamily::sequential, false);
  GeneratorTruth truth;
  truth.spec = spec;
  truth.items.thresholds = delta_far();
  truth.items.discrimination = {1.0, 1.0};
  truth.beta = Eigen::VectorXd::Constant(1, 0.2);
  truth.cov = RandomCovParams::diagonal(std::array<double, 1>{1.0});
  const Dataset data = simulate_dataset(truth, 200, std::vector<double>{0, 1, 3, 6}, 77, 1);
  FitOptions opts;
  opts.compute_se = false;
  const FitResult f = fit(spec, data, std::nullopt, opts);
  CHECK(f.diag.converged);
  CHECK(std::fabs(f.params.beta[0] - 0.2) < 0.12);
  CHECK(std::fabs(f.params.items.thresholds[0][0] + 2.1) < 0.45);
  CHECK(std::fabs(f.cov_estimates[0] - 1.0) < 0.5);
}
