#include <doctest.h>

#include <cmath>
#include <random>
#include <vector>

#include "irtmix/errors.hpp"
#include "irtmix/family.hpp"

using namespace irtmix;

namespace {

const RatioFamily kFamilies[] = {RatioFamily::adjacent, RatioFamily::cumulative,
                                 RatioFamily::sequential};
const CdfKind kKinds[] = {CdfKind::logistic, CdfKind::gaussian, CdfKind::gumbel_max,
                          CdfKind::gumbel_min};

// brute-force adjacent-ratio evaluation used as the independent oracle
std::vector<double> adjacent_oracle(CdfKind kind, const std::vector<double>& eta) {
  const std::size_t M = eta.size();
  std::vector<double> prod(M + 1, 1.0);
  for (std::size_t m = 1; m <= M; ++m) {
    const double F = cdf_eval(kind, eta[m - 1]);
    prod[m] = prod[m - 1] * (F / (1.0 - F));
  }
  double sum = 0.0;
  for (double p : prod) sum += p;
  for (double& p : prod) p /= sum;
  return prod;
}

std::vector<double> sorted_descending_eta(std::mt19937_64& rng, int M) {
  std::uniform_real_distribution<double> u(-4.0, 4.0);
  std::vector<double> eta(M);
  for (double& e : eta) e = u(rng);
  std::sort(eta.begin(), eta.end(), std::greater<>());
  for (int m = 1; m < M; ++m)
    if (eta[m] > eta[m - 1] - 1e-6) eta[m] = eta[m - 1] - 1e-6;
  return eta;
}

}  // namespace

TEST_CASE("cumulative probabilities reproduce the anchored example") {
  const std::vector<double> eta = {2.1, -1.0, -2.75};
  const CategoryDistribution p = category_probs(RatioFamily::cumulative, CdfKind::logistic, eta);
  REQUIRE(p.size() == 4);
  CHECK(std::fabs(p[0] - 0.109) < 5e-4);
  CHECK(std::fabs(p[1] - 0.622) < 5e-4);
  CHECK(std::fabs(p[2] - 0.209) < 5e-4);
  CHECK(std::fabs(p[3] - 0.060) < 5e-4);
  // Pr(Y >= m) = F(eta_m)
  for (int m = 1; m <= 3; ++m) {
    double tail = 0.0;
    for (int c = m; c <= 3; ++c) tail += p[c];
    CHECK(std::fabs(tail - cdf_eval(CdfKind::logistic, eta[m - 1])) < 1e-12);
  }
}

TEST_CASE("adjacent probabilities match the direct ratio-product oracle") {
  const std::vector<double> eta = {1.6, -1.0, -1.45};
  const CategoryDistribution p = category_probs(RatioFamily::adjacent, CdfKind::logistic, eta);
  const std::vector<double> oracle = adjacent_oracle(CdfKind::logistic, eta);
  REQUIRE(p.size() == 4);
  // frozen from the oracle below: (0.121913, 0.603839, 0.222140, 0.052108)
  CHECK(std::fabs(p[0] - 0.121913) < 1e-6);
  CHECK(std::fabs(p[1] - 0.603839) < 1e-6);
  CHECK(std::fabs(p[2] - 0.222140) < 1e-6);
  CHECK(std::fabs(p[3] - 0.052108) < 1e-6);
  CHECK(std::fabs(p[2] - 0.2222) < 1e-4);
  for (std::size_t m = 0; m < p.size(); ++m) CHECK(std::fabs(p[m] - oracle[m]) < 1e-12);
}

TEST_CASE("all families coincide on binary responses") {
  for (RatioFamily family : kFamilies)
    for (CdfKind kind : kKinds)
      for (double eta : {-2.0, -0.3, 0.0, 1.7}) {
        const std::vector<double> one = {eta};
        const CategoryDistribution p = category_probs(family, kind, one);
        REQUIRE(p.size() == 2);
        const double F = cdf_eval(kind, eta);
        CHECK(std::fabs(p[0] - (1.0 - F)) < 1e-12);
        CHECK(std::fabs(p[1] - F) < 1e-12);
      }
}

TEST_CASE("sequential product form at zero predictors") {
  const std::vector<double> eta = {0.0, 0.0};
  const CategoryDistribution p = category_probs(RatioFamily::sequential, CdfKind::logistic, eta);
  REQUIRE(p.size() == 3);
  CHECK(std::fabs(p[0] - 0.5) < 1e-12);
  CHECK(std::fabs(p[1] - 0.25) < 1e-12);
  CHECK(std::fabs(p[2] - 0.25) < 1e-12);
}

TEST_CASE("cumulative ordering violations carry the first offending index") {
  const std::vector<double> eta = {0.5, 0.7, -1.0};
  try {
    category_probs(RatioFamily::cumulative, CdfKind::logistic, eta);
    FAIL("expected OrderingError");
  } catch (const OrderingError& e) {
    CHECK(e.index == 2);
  }
}

TEST_CASE("non-finite predictors are a domain error") {
  const std::vector<double> eta = {1.0, std::nan("")};
  CHECK_THROWS_AS(category_probs(RatioFamily::adjacent, CdfKind::logistic, eta), DomainError);
}

TEST_CASE("probabilities normalize over random draws") {
  std::mt19937_64 rng(20240817);
  std::uniform_int_distribution<int> pick_m(1, 6);
  std::uniform_real_distribution<double> u(-6.0, 6.0);
  for (int rep = 0; rep < 10000; ++rep) {
    const RatioFamily family = kFamilies[rep % 3];
    const CdfKind kind = kKinds[(rep / 3) % 4];
    const int M = pick_m(rng);
    std::vector<double> eta(M);
    for (double& e : eta) e = u(rng);
    if (family == RatioFamily::cumulative) {
      std::sort(eta.begin(), eta.end(), std::greater<>());
      for (int m = 1; m < M; ++m)
        if (eta[m] > eta[m - 1] - 1e-6) eta[m] = eta[m - 1] - 1e-6;
    }
    const CategoryDistribution p = category_probs(family, kind, eta);
    double sum = 0.0;
    for (double v : p) {
      CHECK(v >= 0.0);
      sum += v;
    }
    CHECK(std::fabs(sum - 1.0) <= 1e-12);
  }
}

TEST_CASE("adjacent-logistic equals the partial-credit form") {
  std::mt19937_64 rng(7);
  std::uniform_real_distribution<double> u(-5.0, 5.0);
  for (int rep = 0; rep < 500; ++rep) {
    const int M = 1 + rep % 5;
    std::vector<double> eta(M);
    for (double& e : eta) e = u(rng);
    const CategoryDistribution p =
        category_probs(RatioFamily::adjacent, CdfKind::logistic, eta);
    // pi_m proportional to exp(sum_{k<=m} eta_k)
    std::vector<double> expo(M + 1, 0.0);
    for (int m = 1; m <= M; ++m) expo[m] = expo[m - 1] + eta[m - 1];
    double sum = 0.0;
    for (double e : expo) sum += std::exp(e);
    for (int m = 0; m <= M; ++m) CHECK(std::fabs(p[m] - std::exp(expo[m]) / sum) < 1e-12);
  }
}

TEST_CASE("reversal flips category probabilities for symmetric kinds") {
  const std::vector<double> eta = {2.1, -1.0, -2.75};
  const std::vector<double> rev =
      reverse_categories(RatioFamily::cumulative, CdfKind::logistic, eta);
  REQUIRE(rev.size() == 3);
  CHECK(rev[0] == doctest::Approx(2.75));
  CHECK(rev[1] == doctest::Approx(1.0));
  CHECK(rev[2] == doctest::Approx(-2.1));
  const CategoryDistribution p = category_probs(RatioFamily::cumulative, CdfKind::logistic, eta);
  const CategoryDistribution q = category_probs(RatioFamily::cumulative, CdfKind::logistic, rev);
  for (std::size_t m = 0; m < p.size(); ++m)
    CHECK(std::fabs(q[m] - p[p.size() - 1 - m]) < 1e-12);

  std::mt19937_64 rng(99);
  for (int rep = 0; rep < 400; ++rep) {
    const int M = 1 + rep % 5;
    const CdfKind kind = rep % 2 == 0 ? CdfKind::logistic : CdfKind::gaussian;
    for (RatioFamily family : {RatioFamily::adjacent, RatioFamily::cumulative}) {
      std::vector<double> e = sorted_descending_eta(rng, M);
      const std::vector<double> r = reverse_categories(family, kind, e);
      const CategoryDistribution a = category_probs(family, kind, e);
      const CategoryDistribution b = category_probs(family, kind, r);
      for (std::size_t m = 0; m < a.size(); ++m)
        CHECK(std::fabs(b[m] - a[a.size() - 1 - m]) < 1e-12);
    }
  }
}

TEST_CASE("reversal in the symmetric binary case is a fixed point") {
  const std::vector<double> eta = {0.0};
  const std::vector<double> rev =
      reverse_categories(RatioFamily::adjacent, CdfKind::logistic, eta);
  CHECK(rev[0] == 0.0);
  const CategoryDistribution p = category_probs(RatioFamily::adjacent, CdfKind::logistic, rev);
  CHECK(std::fabs(p[0] - 0.5) < 1e-12);
  CHECK(std::fabs(p[1] - 0.5) < 1e-12);
}

TEST_CASE("reversal rejects sequential families and asymmetric kinds") {
  const std::vector<double> eta = {1.0, 0.0};
  CHECK_THROWS_AS(reverse_categories(RatioFamily::sequential, CdfKind::logistic, eta),
                  UnsupportedTransformError);
  CHECK_THROWS_AS(reverse_categories(RatioFamily::cumulative, CdfKind::gumbel_max, eta),
                  UnsupportedTransformError);
}

TEST_CASE("merging categories drops one threshold and sums the two probabilities") {
  const std::vector<double> eta = {2.1, -1.0, -2.75};
  const std::vector<double> merged = merge_categories(RatioFamily::cumulative, eta, 2);
  REQUIRE(merged.size() == 2);
  CHECK(merged[0] == doctest::Approx(2.1));
  CHECK(merged[1] == doctest::Approx(-2.75));
  const CategoryDistribution p = category_probs(RatioFamily::cumulative, CdfKind::logistic, eta);
  const CategoryDistribution q =
      category_probs(RatioFamily::cumulative, CdfKind::logistic, merged);
  CHECK(std::fabs(q[0] - p[0]) < 1e-12);
  CHECK(std::fabs(q[1] - (p[1] + p[2])) < 1e-12);
  CHECK(std::fabs(q[2] - p[3]) < 1e-12);
  CHECK(std::fabs(q[1] - 0.831) < 5e-4);
}

TEST_CASE("merging a binary response leaves the sure distribution") {
  const std::vector<double> eta = {0.3};
  const std::vector<double> merged = merge_categories(RatioFamily::cumulative, eta, 1);
  CHECK(merged.empty());
}

TEST_CASE("merging invariance over random cumulative instances") {
  std::mt19937_64 rng(512);
  for (int rep = 0; rep < 1000; ++rep) {
    const int M = 2 + rep % 4;
    const std::vector<double> eta = sorted_descending_eta(rng, M);
    const int m = 1 + static_cast<int>(rng() % M);
    const std::vector<double> merged = merge_categories(RatioFamily::cumulative, eta, m);
    for (CdfKind kind : kKinds) {
      const CategoryDistribution p = category_probs(RatioFamily::cumulative, kind, eta);
      const CategoryDistribution q = category_probs(RatioFamily::cumulative, kind, merged);
      for (int c = 0; c <= M - 1; ++c) {
        double expect = p[c < m - 1 ? c : c + 1];
        if (c == m - 1) expect = p[m - 1] + p[m];
        CHECK(std::fabs(q[c] - expect) < 1e-12);
      }
    }
  }
}

TEST_CASE("merging twice commutes over distinct indices") {
  const std::vector<double> eta = {2.0, 1.0, -0.5, -2.0};
  const std::vector<double> a =
      merge_categories(RatioFamily::cumulative, merge_categories(RatioFamily::cumulative, eta, 3),
                       1);
  const std::vector<double> b =
      merge_categories(RatioFamily::cumulative, merge_categories(RatioFamily::cumulative, eta, 1),
                       2);
  REQUIRE(a.size() == b.size());
  for (std::size_t i = 0; i < a.size(); ++i) CHECK(a[i] == b[i]);
}

TEST_CASE("merging rejects non-cumulative families and bad indices") {
  const std::vector<double> eta = {1.0, 0.0};
  CHECK_THROWS_AS(merge_categories(RatioFamily::adjacent, eta, 1), UnsupportedTransformError);
  CHECK_THROWS_AS(merge_categories(RatioFamily::cumulative, eta, 0), CategoryError);
  CHECK_THROWS_AS(merge_categories(RatioFamily::cumulative, eta, 3), CategoryError);
}

TEST_CASE("extreme predictors stay normalized in log space") {
  const std::vector<double> eta = {30.0, 10.0, -30.0};
  for (RatioFamily family : kFamilies) {
    const CategoryDistribution p = category_probs(family, CdfKind::logistic, eta);
    double sum = 0.0;
    for (double v : p) sum += v;
    CHECK(std::fabs(sum - 1.0) <= 1e-12);
  }
}
