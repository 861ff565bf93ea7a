#include "irtmix/link.hpp"

#include <cmath>

#include "irtmix/errors.hpp"

namespace irtmix {

namespace {

constexpr double kInvSqrt2 = 0.70710678118654752440;
constexpr double kInvSqrt2Pi = 0.39894228040143267794;

void check_finite(double eta) {
  if (!std::isfinite(eta)) throw DomainError("cdf argument must be finite");
}

// log(1 + exp(x)) without overflow.
double log1pexp(double x) {
  if (x > 33.3) return x;  // exp(-x) below double epsilon of x
  if (x > 0.0) return x + std::log1p(std::exp(-x));
  return std::log1p(std::exp(x));
}

}  // namespace

double cdf_eval(CdfKind kind, double eta) {
  check_finite(eta);
  switch (kind) {
    case CdfKind::logistic: {
      if (eta >= 0.0) return 1.0 / (1.0 + std::exp(-eta));
      const double e = std::exp(eta);
      return e / (1.0 + e);
    }
    case CdfKind::gaussian:
      return 0.5 * std::erfc(-eta * kInvSqrt2);
    case CdfKind::gumbel_max:
      return std::exp(-std::exp(-eta));
    case CdfKind::gumbel_min:
      return -std::expm1(-std::exp(eta));
  }
  throw DomainError("unknown cdf kind");
}

double pdf_eval(CdfKind kind, double eta) {
  check_finite(eta);
  switch (kind) {
    case CdfKind::logistic: {
      const double e = std::exp(-std::fabs(eta));
      const double d = 1.0 + e;
      return e / (d * d);
    }
    case CdfKind::gaussian:
      return kInvSqrt2Pi * std::exp(-0.5 * eta * eta);
    case CdfKind::gumbel_max:
      return std::exp(-eta - std::exp(-eta));
    case CdfKind::gumbel_min:
      return std::exp(eta - std::exp(eta));
  }
  throw DomainError("unknown cdf kind");
}

double pdf_deriv_eval(CdfKind kind, double eta) {
  check_finite(eta);
  switch (kind) {
    case CdfKind::logistic: {
      const double F = cdf_eval(CdfKind::logistic, eta);
      return pdf_eval(CdfKind::logistic, eta) * (1.0 - 2.0 * F);
    }
    case CdfKind::gaussian:
      return -eta * pdf_eval(CdfKind::gaussian, eta);
    case CdfKind::gumbel_max:
      return pdf_eval(CdfKind::gumbel_max, eta) * std::expm1(-eta);
    case CdfKind::gumbel_min:
      return -pdf_eval(CdfKind::gumbel_min, eta) * std::expm1(eta);
  }
  throw DomainError("unknown cdf kind");
}

double log_cdf_eval(CdfKind kind, double eta) {
  check_finite(eta);
  switch (kind) {
    case CdfKind::logistic:
      return -log1pexp(-eta);
    case CdfKind::gaussian: {
      if (eta > -30.0) return std::log(0.5 * std::erfc(-eta * kInvSqrt2));
      // deep lower tail: Mills-ratio expansion of log Phi(eta)
      const double x = -eta;
      const double x2 = x * x;
      return -0.5 * x2 - std::log(x) + std::log(kInvSqrt2Pi) +
             std::log1p(-1.0 / x2 + 3.0 / (x2 * x2));
    }
    case CdfKind::gumbel_max:
      return -std::exp(-eta);
    case CdfKind::gumbel_min: {
      const double t = std::exp(eta);
      if (t > 33.3) return -std::exp(-t);
      return std::log(-std::expm1(-t));
    }
  }
  throw DomainError("unknown cdf kind");
}

double log_ccdf_eval(CdfKind kind, double eta) {
  check_finite(eta);
  switch (kind) {
    case CdfKind::logistic:
      return -log1pexp(eta);
    case CdfKind::gaussian:
      return log_cdf_eval(CdfKind::gaussian, -eta);
    case CdfKind::gumbel_max: {
      const double t = std::exp(-eta);
      if (t > 33.3) return -std::exp(-t);
      return std::log(-std::expm1(-t));
    }
    case CdfKind::gumbel_min:
      return -std::exp(eta);
  }
  throw DomainError("unknown cdf kind");
}

bool is_symmetric(CdfKind kind) {
  return kind == CdfKind::logistic || kind == CdfKind::gaussian;
}

std::string cdf_name(CdfKind kind) {
  switch (kind) {
    case CdfKind::logistic: return "logistic";
    case CdfKind::gaussian: return "gaussian";
    case CdfKind::gumbel_max: return "gumbel_max";
    case CdfKind::gumbel_min: return "gumbel_min";
  }
  return "?";
}

CdfKind parse_cdf(const std::string& name) {
  if (name == "logistic") return CdfKind::logistic;
  if (name == "gaussian") return CdfKind::gaussian;
  if (name == "gumbel_max") return CdfKind::gumbel_max;
  if (name == "gumbel_min") return CdfKind::gumbel_min;
  throw ParseError("unknown cdf name: " + name);
}

}  // namespace irtmix
