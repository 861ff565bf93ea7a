#include <doctest.h>

#include <cmath>
#include <limits>

#include "irtmix/errors.hpp"
#include "irtmix/link.hpp"

using namespace irtmix;

namespace {
const CdfKind kAll[] = {CdfKind::logistic, CdfKind::gaussian, CdfKind::gumbel_max,
                        CdfKind::gumbel_min};
}

TEST_CASE("cdf anchor values") {
  CHECK(cdf_eval(CdfKind::logistic, 0.0) == doctest::Approx(0.5).epsilon(1e-14));
  CHECK(cdf_eval(CdfKind::gaussian, 0.0) == doctest::Approx(0.5).epsilon(1e-14));
  CHECK(cdf_eval(CdfKind::gumbel_max, 0.0) ==
        doctest::Approx(std::exp(-1.0)).epsilon(1e-14));
  // high-precision scalar oracle for the logistic at 2.1
  const long double oracle = 1.0L / (1.0L + std::exp(-2.1L));
  CHECK(std::fabs(cdf_eval(CdfKind::logistic, 2.1) - static_cast<double>(oracle)) < 1e-12);
  CHECK(cdf_eval(CdfKind::logistic, 2.1) == doctest::Approx(0.890903).epsilon(1e-6));
}

TEST_CASE("pdf anchor values") {
  CHECK(pdf_eval(CdfKind::logistic, 0.0) == doctest::Approx(0.25).epsilon(1e-14));
  CHECK(pdf_eval(CdfKind::gaussian, 0.0) ==
        doctest::Approx(1.0 / std::sqrt(2.0 * M_PI)).epsilon(1e-14));
  // finite-difference oracle at gumbel_max, eta = 1
  const double h = 1e-5;
  const double fd =
      (cdf_eval(CdfKind::gumbel_max, 1.0 + h) - cdf_eval(CdfKind::gumbel_max, 1.0 - h)) /
      (2.0 * h);
  CHECK(std::fabs(pdf_eval(CdfKind::gumbel_max, 1.0) - fd) < 1e-8);
}

TEST_CASE("non-finite arguments are rejected") {
  for (CdfKind kind : kAll) {
    CHECK_THROWS_AS(cdf_eval(kind, std::numeric_limits<double>::quiet_NaN()), DomainError);
    CHECK_THROWS_AS(cdf_eval(kind, std::numeric_limits<double>::infinity()), DomainError);
    CHECK_THROWS_AS(pdf_eval(kind, std::numeric_limits<double>::quiet_NaN()), DomainError);
  }
}

TEST_CASE("symmetry flags") {
  CHECK(is_symmetric(CdfKind::logistic));
  CHECK(is_symmetric(CdfKind::gaussian));
  CHECK_FALSE(is_symmetric(CdfKind::gumbel_max));
  CHECK_FALSE(is_symmetric(CdfKind::gumbel_min));
}

TEST_CASE("cdf is a strictly increasing probability on a grid") {
  // grids stop where IEEE doubles lose the property: near 1.0 the CdF value or
  // its 1e-3 step falls below one ulp (gaussian above ~7, gumbel_min above
  // ~3.5), and exp(-exp(6.6)) underflows to exactly 0 for gumbel_max
  auto check_grid = [](CdfKind kind, double lo, double hi) {
    for (int i = 0; i <= 200; ++i) {
      const double eta = lo + (hi - lo) * i / 200.0;
      const double F = cdf_eval(kind, eta);
      CHECK(F > 0.0);
      CHECK(F < 1.0);
      CHECK(cdf_eval(kind, eta + 1e-3) > F);
    }
  };
  check_grid(CdfKind::logistic, -10.0, 10.0);
  check_grid(CdfKind::gaussian, -10.0, 7.0);
  check_grid(CdfKind::gumbel_max, -6.5, 10.0);
  check_grid(CdfKind::gumbel_min, -10.0, 3.2);
}

TEST_CASE("symmetric kinds satisfy F(-x) = 1 - F(x)") {
  for (CdfKind kind : {CdfKind::logistic, CdfKind::gaussian})
    for (int i = -100; i <= 100; ++i) {
      const double eta = 0.1 * i;
      CHECK(std::fabs(cdf_eval(kind, -eta) - (1.0 - cdf_eval(kind, eta))) < 1e-12);
    }
}

TEST_CASE("pdf matches finite differences of the cdf") {
  const double h = 1e-5;
  for (CdfKind kind : kAll) {
    for (int i = 0; i <= 200; ++i) {
      const double eta = -8.0 + 0.08 * i;
      const double fd = (cdf_eval(kind, eta + h) - cdf_eval(kind, eta - h)) / (2.0 * h);
      CHECK(std::fabs(pdf_eval(kind, eta) - fd) <= 1e-6);
      CHECK(pdf_eval(kind, eta) >= 0.0);
    }
  }
}

TEST_CASE("pdf derivative matches finite differences of the pdf") {
  const double h = 1e-5;
  for (CdfKind kind : kAll)
    for (int i = -60; i <= 60; ++i) {
      const double eta = 0.1 * i;
      const double fd = (pdf_eval(kind, eta + h) - pdf_eval(kind, eta - h)) / (2.0 * h);
      CHECK(std::fabs(pdf_deriv_eval(kind, eta) - fd) <= 1e-6);
    }
}

TEST_CASE("log cdf and log ccdf agree with direct logs and stay finite in deep tails") {
  for (CdfKind kind : kAll) {
    for (int i = -60; i <= 60; ++i) {
      const double eta = 0.1 * i;
      const double F = cdf_eval(kind, eta);
      CHECK(std::fabs(log_cdf_eval(kind, eta) - std::log(F)) < 1e-10);
      // the naive log(1-F) reference carries a cancellation error of order
      // eps/(1-F); allow for it
      if (F < 1.0) {
        const double ref_err = 1e-10 + 4.0e-16 / (1.0 - F);
        CHECK(std::fabs(log_ccdf_eval(kind, eta) - std::log(1.0 - F)) < ref_err);
      } else {
        CHECK(std::isfinite(log_ccdf_eval(kind, eta)));  // saturated reference
      }
    }
    CHECK(std::isfinite(log_cdf_eval(kind, -35.0)));
    CHECK(std::isfinite(log_ccdf_eval(kind, 35.0)));
  }
}

TEST_CASE("config names round-trip") {
  for (CdfKind kind : kAll) CHECK(parse_cdf(cdf_name(kind)) == kind);
  CHECK_THROWS_AS(parse_cdf("cauchy"), ParseError);
}
