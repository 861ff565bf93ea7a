#include <doctest.h>

#include <array>
#include <cmath>
#include <random>

#include "irtmix/errors.hpp"
#include "irtmix/model.hpp"

using namespace irtmix;

namespace {

ModelSpec two_item_spec() {
  ModelSpec spec;
  spec.family = RatioFamily::cumulative;
  spec.kind = CdfKind::logistic;
  spec.items = {{1, 4, false}, {2, 4, false}};
  spec.fixed_effects = {{"time", "", true}};
  spec.random_effects = RandomEffects::intercept_and_slope;
  spec.random_cov = RandomCov::diagonal;
  return spec;
}

}  // namespace

TEST_CASE("spec validation catches structural mistakes") {
  ModelSpec spec = two_item_spec();
  CHECK_NOTHROW(spec.validate());

  ModelSpec empty = spec;
  empty.items.clear();
  CHECK_THROWS_AS(empty.validate(), SpecificationError);

  ModelSpec dup = spec;
  dup.items[1].id = 1;
  CHECK_THROWS_AS(dup.validate(), SpecificationError);

  ModelSpec intercept = spec;
  intercept.fixed_effects.push_back({"intercept", "", false});
  CHECK_THROWS_AS(intercept.validate(), SpecificationError);

  ModelSpec rs = spec;
  rs.item_design = ItemDesign::rating_scale;
  rs.items[1].n_categories = 3;
  CHECK_THROWS_AS(rs.validate(), SpecificationError);
}

TEST_CASE("model taxonomy constructors carry the expected components") {
  const std::vector<ItemInfo> items = {{1, 4, false}, {2, 4, false}};
  CHECK(partial_credit_model(items).family == RatioFamily::adjacent);
  CHECK(graded_response_model(items).family == RatioFamily::cumulative);
  CHECK(sequential_rasch_model(items).family == RatioFamily::sequential);
  const ModelSpec rs = rating_scale_model(2, 4);
  CHECK(rs.item_design == ItemDesign::rating_scale);
  CHECK(rs.family == RatioFamily::adjacent);
}

TEST_CASE("latent trait mirrors the linear decomposition") {
  // time-only form: theta = (t - t0) beta1 + xi0
  ModelSpec spec = two_item_spec();
  spec.random_effects = RandomEffects::intercept_only;
  const std::array<double, 1> beta{0.3};
  const std::array<double, 1> xi{1.5};
  const std::array<double, 1> cov{0.0};
  CHECK(latent_trait(spec, beta, xi, cov, 4.0, 0.0) == doctest::Approx(2.7).epsilon(1e-15));

  // full form with group, time and interaction
  ModelSpec full = two_item_spec();
  full.fixed_effects = {{"group", "group", false}, {"time", "", true}, {"group:time", "group", true}};
  const std::array<double, 3> beta3{0.0, -0.330, -0.188};
  const std::array<double, 2> xi2{0.0, 0.0};
  const std::array<double, 3> covs{1.0, 0.0, 1.0};
  CHECK(latent_trait(full, beta3, xi2, covs, 4.0, 0.0) ==
        doctest::Approx(4.0 * (-0.330 - 0.188)).epsilon(1e-12));

  const std::array<double, 3> zero3{0.0, 0.0, 0.0};
  CHECK(latent_trait(full, zero3, xi2, covs, 4.0, 0.0) == 0.0);

  const std::array<double, 2> bad{0.0, 0.0};
  CHECK_THROWS_AS(latent_trait(full, bad, xi2, covs, 4.0, 0.0), SpecificationError);
}

TEST_CASE("latent trait is linear in the coefficients") {
  ModelSpec full = two_item_spec();
  full.fixed_effects = {{"group", "group", false}, {"time", "", true}};
  std::mt19937_64 rng(3);
  std::uniform_real_distribution<double> u(-2.0, 2.0);
  for (int rep = 0; rep < 200; ++rep) {
    const std::array<double, 2> b1{u(rng), u(rng)};
    const std::array<double, 2> b2{u(rng), u(rng)};
    const double a = u(rng), c = u(rng);
    const std::array<double, 2> mix{a * b1[0] + c * b2[0], a * b1[1] + c * b2[1]};
    const std::array<double, 2> xi{0.0, 0.0};
    const std::array<double, 2> cov{1.0, 0.0};
    const double lhs = latent_trait(full, mix, xi, cov, 3.0, 1.0);
    const double rhs = a * latent_trait(full, b1, xi, cov, 3.0, 1.0) +
                       c * latent_trait(full, b2, xi, cov, 3.0, 1.0);
    CHECK(std::fabs(lhs - rhs) < 1e-12);
  }
}

TEST_CASE("linear predictor evaluates alpha (theta - delta)") {
  ModelSpec spec = two_item_spec();
  ItemParams params;
  params.thresholds = {{-2.1, 1.0, 2.75}, {-1.25, 1.4, 3.3}};
  params.discrimination = {1.0, 1.0};
  CHECK(linear_predictor(spec, params, 0, 0.0, 1) == doctest::Approx(2.1));
  CHECK(linear_predictor(spec, params, 0, 1.0, 2) == doctest::Approx(0.0));
  params.discrimination = {2.0, 1.0};
  CHECK(linear_predictor(spec, params, 0, 1.0, 2) == doctest::Approx(0.0));
  params.thresholds[0][1] = 0.0;
  CHECK(linear_predictor(spec, params, 0, 1.0, 2) == doctest::Approx(2.0));
  CHECK_THROWS_AS(linear_predictor(spec, params, 0, 0.0, 4), CategoryError);
  CHECK_THROWS_AS(linear_predictor(spec, params, 0, 0.0, 0), CategoryError);
}

TEST_CASE("rating-scale predictor shifts shared thresholds") {
  ModelSpec spec = rating_scale_model(2, 4);
  ItemParams params;
  params.thresholds = {{-1.0, 0.0, 1.0}};
  params.shift = {0.0, 0.5};
  params.discrimination = {1.0, 1.0};
  CHECK(linear_predictor(spec, params, 1, 0.0, 2) == doctest::Approx(-0.5));
  CHECK(linear_predictor(spec, params, 0, 0.0, 2) == doctest::Approx(0.0));
}

TEST_CASE("packing round-trips the anchored example") {
  ModelSpec spec = two_item_spec();
  spec.fixed_effects = {{"time", "", true}};
  ItemParams params;
  params.thresholds = {{-2.1, 1.0, 2.75}, {-1.25, 1.4, 3.3}};
  params.discrimination = {1.0, 1.0};
  Eigen::VectorXd beta(1);
  beta << 0.3;
  const std::array<double, 2> sds{std::sqrt(1.5), std::sqrt(0.2)};
  const RandomCovParams cov = RandomCovParams::diagonal(sds);

  const ParameterVector packed = pack(spec, params, beta, cov);
  CHECK(packed[1] == doctest::Approx(-2.1));
  CHECK(packed[2] == doctest::Approx(std::log(3.1)));
  CHECK(packed[3] == doctest::Approx(std::log(1.75)));
  CHECK(packed[packed.size() - 2] == doctest::Approx(0.5 * std::log(1.5)));
  CHECK(packed[packed.size() - 1] == doctest::Approx(0.5 * std::log(0.2)));

  const UnpackedParams back = unpack(spec, packed);
  for (int j = 0; j < 2; ++j)
    for (int m = 0; m < 3; ++m)
      CHECK(std::fabs(back.items.thresholds[j][m] - params.thresholds[j][m]) < 1e-14);
  CHECK(std::fabs(back.cov.var(0) - 1.5) < 1e-14);
  CHECK(std::fabs(back.cov.var(1) - 0.2) < 1e-14);
}

TEST_CASE("single threshold packs to itself") {
  ModelSpec spec;
  spec.items = {{1, 2, false}};
  spec.random_effects = RandomEffects::intercept_only;
  ItemParams params;
  params.thresholds = {{0.0}};
  params.discrimination = {1.0};
  const std::array<double, 1> sds{1.0};
  const ParameterVector packed =
      pack(spec, params, Eigen::VectorXd(0), RandomCovParams::diagonal(sds));
  REQUIRE(packed.size() == 2);
  CHECK(packed[0] == 0.0);
  CHECK(packed[1] == 0.0);
}

TEST_CASE("pack rejects non-increasing thresholds") {
  ModelSpec spec = two_item_spec();
  ItemParams params;
  params.thresholds = {{-2.1, 1.0, 0.9}, {-1.25, 1.4, 3.3}};
  params.discrimination = {1.0, 1.0};
  Eigen::VectorXd beta(1);
  beta << 0.0;
  const std::array<double, 2> sds{1.0, 1.0};
  CHECK_THROWS_AS(pack(spec, params, beta, RandomCovParams::diagonal(sds)), OrderingError);
}

TEST_CASE("round-trip identity over random parameter sets") {
  std::mt19937_64 rng(11);
  std::uniform_real_distribution<double> u(-3.0, 3.0);
  std::uniform_real_distribution<double> upos(0.05, 2.0);
  for (int rep = 0; rep < 10000; ++rep) {
    ModelSpec spec = two_item_spec();
    if (rep % 3 == 1) spec.random_cov = RandomCov::unstructured;
    if (rep % 3 == 2) spec.random_effects = RandomEffects::intercept_only;
    ItemParams params;
    params.thresholds.resize(2);
    for (int j = 0; j < 2; ++j) {
      double d = u(rng);
      for (int m = 0; m < 3; ++m) {
        params.thresholds[j].push_back(d);
        d += upos(rng);
      }
    }
    params.discrimination = {1.0, 1.0};
    Eigen::VectorXd beta(1);
    beta << u(rng);
    RandomCovParams cov;
    if (spec.n_random() == 1) {
      const std::array<double, 1> sds{upos(rng)};
      cov = RandomCovParams::diagonal(sds);
    } else if (spec.random_cov == RandomCov::diagonal) {
      const std::array<double, 2> sds{upos(rng), upos(rng)};
      cov = RandomCovParams::diagonal(sds);
    } else {
      const std::array<double, 3> low{upos(rng), u(rng), upos(rng)};
      cov = RandomCovParams::from_chol(2, low);
    }
    const ParameterVector packed = pack(spec, params, beta, cov);
    const UnpackedParams back = unpack(spec, packed);
    for (int j = 0; j < 2; ++j)
      for (int m = 0; m < 3; ++m)
        CHECK(std::fabs(back.items.thresholds[j][m] - params.thresholds[j][m]) <= 1e-12);
    CHECK(std::fabs(back.beta[0] - beta[0]) <= 1e-12);
    for (std::size_t c = 0; c < cov.chol_lower.size(); ++c)
      CHECK(std::fabs(back.cov.chol_lower[c] - cov.chol_lower[c]) <= 1e-12);
  }
}

TEST_CASE("any unconstrained vector unpacks to increasing thresholds") {
  ModelSpec spec = two_item_spec();
  const ParameterLayout lay = layout_of(spec);
  std::mt19937_64 rng(13);
  std::uniform_real_distribution<double> u(-20.0, 20.0);
  for (int rep = 0; rep < 10000; ++rep) {
    ParameterVector x(lay.total());
    for (int p = 0; p < lay.total(); ++p) x[p] = u(rng);
    const UnpackedParams back = unpack(spec, x);
    for (const std::vector<double>& delta : back.items.thresholds)
      for (std::size_t m = 1; m < delta.size(); ++m) CHECK(delta[m] > delta[m - 1]);
    CHECK(back.cov.chol(0, 0) > 0.0);
  }
}

TEST_CASE("rating-scale packing carries shared thresholds and shifts") {
  ModelSpec spec = rating_scale_model(3, 4);
  spec.fixed_effects = {{"time", "", true}};
  ItemParams params;
  params.thresholds = {{-1.0, 0.2, 1.4}};
  params.shift = {0.0, 0.5, -0.3};
  params.discrimination = {1.0, 1.0, 1.0};
  Eigen::VectorXd beta(1);
  beta << 0.1;
  const std::array<double, 1> sds{1.2};
  const ParameterVector packed = pack(spec, params, beta, RandomCovParams::diagonal(sds));
  const ParameterLayout lay = layout_of(spec);
  CHECK(lay.n_item == 3 + 2);
  const UnpackedParams back = unpack(spec, packed);
  CHECK(back.items.shift[1] == doctest::Approx(0.5));
  CHECK(back.items.shift[2] == doctest::Approx(-0.3));
  for (int m = 0; m < 3; ++m)
    CHECK(back.items.thresholds[0][m] == doctest::Approx(params.thresholds[0][m]));
}

TEST_CASE("dataset validation catches structural errors") {
  ModelSpec spec = two_item_spec();
  Dataset data;
  data.covariate_columns = {};
  SubjectData s;
  s.id = "a";
  VisitData v0;
  v0.visit = 0;
  v0.time = 0.0;
  v0.obs = {{0, 1}, {1, 3}};
  VisitData v1 = v0;
  v1.visit = 1;
  v1.time = 2.0;
  s.visits = {v0, v1};
  data.subjects = {s};
  CHECK_NOTHROW(validate_dataset(spec, data));

  Dataset bad_cat = data;
  bad_cat.subjects[0].visits[0].obs[0].second = 4;
  CHECK_THROWS_AS(validate_dataset(spec, bad_cat), CategoryError);

  Dataset dup = data;
  dup.subjects[0].visits[0].obs.push_back({0, 2});
  CHECK_THROWS_AS(validate_dataset(spec, dup), DataError);

  Dataset bad_time = data;
  bad_time.subjects[0].visits[1].time = -1.0;
  CHECK_THROWS_AS(validate_dataset(spec, bad_time), DataError);
}

TEST_CASE("fingerprints distinguish datasets") {
  ModelSpec spec = two_item_spec();
  Dataset a;
  SubjectData s;
  s.id = "x";
  VisitData v;
  v.visit = 0;
  v.time = 0.0;
  v.obs = {{0, 1}};
  s.visits = {v};
  a.subjects = {s};
  Dataset b = a;
  b.subjects[0].visits[0].obs[0].second = 2;
  CHECK(a.fingerprint() != b.fingerprint());
  CHECK(a.fingerprint() == Dataset(a).fingerprint());
}
