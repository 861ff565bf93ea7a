#pragma once

#include <string>

namespace irtmix {

/// Cumulative distribution functions used as inverse-link components.
enum class CdfKind { logistic, gaussian, gumbel_max, gumbel_min };

/// F(eta), strictly increasing with limits 0 / 1. Throws DomainError on non-finite eta.
double cdf_eval(CdfKind kind, double eta);

/// Density F'(eta) >= 0. Throws DomainError on non-finite eta.
double pdf_eval(CdfKind kind, double eta);

/// Second derivative F''(eta); used by Newton steps in the estimation layer.
double pdf_deriv_eval(CdfKind kind, double eta);

/// log F(eta), evaluated without intermediate under/overflow.
double log_cdf_eval(CdfKind kind, double eta);

/// log(1 - F(eta)), evaluated without intermediate under/overflow.
double log_ccdf_eval(CdfKind kind, double eta);

/// True exactly for the logistic and gaussian kinds.
bool is_symmetric(CdfKind kind);

/// Lowercase config-file name ("logistic", "gaussian", "gumbel_max", "gumbel_min").
std::string cdf_name(CdfKind kind);

/// Parse a config-file name; throws ParseError on unknown names.
CdfKind parse_cdf(const std::string& name);

}  // namespace irtmix
