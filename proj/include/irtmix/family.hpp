#pragma once

#include <span>
#include <string>
#include <vector>

#include "irtmix/link.hpp"

namespace irtmix {

/// Probability-ratio family: the transform that the linear predictors target
/// through the CdF. With M predictors eta_1..eta_M (descending convention,
/// eta_m = theta - delta_m for strictly increasing thresholds), each family maps
/// eta to a distribution over the M+1 ordered categories 0..M.
enum class RatioFamily { adjacent, cumulative, sequential };

/// Category probability vector (pi_0, ..., pi_M); entries in [0,1], sum 1.
using CategoryDistribution = std::vector<double>;

/// Map linear predictors to category probabilities.
///   cumulative: Pr(Y >= m) = F(eta_m); requires F(eta_1) > ... > F(eta_M)
///   adjacent:   pi_m / (pi_{m-1} + pi_m) = F(eta_m)
///   sequential: Pr(Y >= m | Y >= m-1) = F(eta_m)
/// Throws DomainError on non-finite eta, OrderingError (with the first offending
/// index) when the cumulative monotonicity requirement fails.
CategoryDistribution category_probs(RatioFamily family, CdfKind kind,
                                    std::span<const double> eta);

/// Predictors of the category-reversed model: eta'_m = -eta_{M+1-m}. Only the
/// adjacent and cumulative families with a symmetric CdF are reversible; other
/// combinations throw UnsupportedTransformError.
std::vector<double> reverse_categories(RatioFamily family, CdfKind kind,
                                       std::span<const double> eta);

/// Predictors after gathering categories m-1 and m (1 <= m <= M): drops eta_m.
/// Cumulative family only; others throw UnsupportedTransformError.
std::vector<double> merge_categories(RatioFamily family, std::span<const double> eta, int m);

std::string family_name(RatioFamily family);
RatioFamily parse_family(const std::string& name);

}  // namespace irtmix
