#include "irtmix/model.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <cstring>
#include <limits>
#include <set>

#include "irtmix/errors.hpp"

namespace irtmix {

namespace {

constexpr double kMaxLogIncrement = 30.0;  // caps exp() during wild line-search steps

void check_increasing(const std::vector<double>& delta, const std::string& what) {
  for (std::size_t m = 1; m < delta.size(); ++m)
    if (!(delta[m] > delta[m - 1]))
      throw OrderingError(what + " must be strictly increasing; violated at position " +
                              std::to_string(m + 1),
                          static_cast<int>(m + 1));
}

}  // namespace

// ---------------------------------------------------------------------------
// ModelSpec
// ---------------------------------------------------------------------------

void ModelSpec::validate() const {
  if (items.empty()) throw SpecificationError("model requires at least one item");
  std::set<int> ids;
  for (const ItemInfo& item : items) {
    if (item.n_categories < 2)
      throw SpecificationError("item " + std::to_string(item.id) +
                               " needs at least two categories");
    if (!ids.insert(item.id).second)
      throw SpecificationError("duplicate item id " + std::to_string(item.id));
  }
  if (item_design == ItemDesign::rating_scale) {
    for (const ItemInfo& item : items)
      if (item.n_categories != items.front().n_categories)
        throw SpecificationError("rating scale requires a common number of categories");
  }
  std::set<std::string> names;
  for (const FixedEffect& fe : fixed_effects) {
    if (!names.insert(fe.name).second)
      throw SpecificationError("duplicate fixed effect: " + fe.name);
    if (fe.column.empty() && !fe.with_time)
      throw SpecificationError("a global intercept is not identified when item thresholds "
                               "are free: effect '" + fe.name + "'");
  }
}

int ModelSpec::max_threshold_count() const {
  int m = 0;
  for (const ItemInfo& item : items) m = std::max(m, item.n_categories - 1);
  return m;
}

int ModelSpec::item_index(int id) const {
  for (std::size_t j = 0; j < items.size(); ++j)
    if (items[j].id == id) return static_cast<int>(j);
  return -1;
}

ModelSpec rating_scale_model(int n_items, int n_categories) {
  ModelSpec spec;
  spec.family = RatioFamily::adjacent;
  spec.kind = CdfKind::logistic;
  spec.item_design = ItemDesign::rating_scale;
  for (int j = 0; j < n_items; ++j) spec.items.push_back({j + 1, n_categories, false});
  return spec;
}

ModelSpec partial_credit_model(const std::vector<ItemInfo>& items) {
  ModelSpec spec;
  spec.family = RatioFamily::adjacent;
  spec.kind = CdfKind::logistic;
  spec.items = items;
  return spec;
}

ModelSpec graded_response_model(const std::vector<ItemInfo>& items) {
  ModelSpec spec;
  spec.family = RatioFamily::cumulative;
  spec.kind = CdfKind::logistic;
  spec.items = items;
  return spec;
}

ModelSpec sequential_rasch_model(const std::vector<ItemInfo>& items) {
  ModelSpec spec;
  spec.family = RatioFamily::sequential;
  spec.kind = CdfKind::logistic;
  spec.items = items;
  return spec;
}

ModelSpec generalized_partial_credit_model(const std::vector<ItemInfo>& items) {
  return partial_credit_model(items);
}

// ---------------------------------------------------------------------------
// ItemParams
// ---------------------------------------------------------------------------

void ItemParams::validate(const ModelSpec& spec) const {
  const std::size_t J = spec.items.size();
  if (spec.item_design == ItemDesign::per_item_thresholds) {
    if (thresholds.size() != J) throw SpecificationError("one threshold vector per item expected");
    for (std::size_t j = 0; j < J; ++j) {
      if (static_cast<int>(thresholds[j].size()) != spec.items[j].n_categories - 1)
        throw SpecificationError("item " + std::to_string(spec.items[j].id) +
                                 ": threshold count does not match categories");
      check_increasing(thresholds[j], "item thresholds");
    }
  } else {
    if (thresholds.size() != 1)
      throw SpecificationError("rating scale uses a single shared threshold vector");
    if (static_cast<int>(thresholds[0].size()) != spec.items.front().n_categories - 1)
      throw SpecificationError("shared threshold count does not match categories");
    check_increasing(thresholds[0], "shared thresholds");
    if (shift.size() != J) throw SpecificationError("one shift per item expected");
    if (shift[0] != 0.0) throw SpecificationError("first item shift is fixed at zero");
  }
  if (!discrimination.empty() && discrimination.size() != J)
    throw SpecificationError("one discrimination per item expected");
  for (double a : discrimination)
    if (!(a > 0.0)) throw SpecificationError("discrimination must be positive");
}

bool ItemParams::unit_discrimination() const {
  for (double a : discrimination)
    if (a != 1.0) return false;
  return true;
}

double effective_threshold(const ModelSpec& spec, const ItemParams& params, int item_idx,
                           int m) {
  const int M = spec.items[item_idx].n_categories - 1;
  if (m < 1 || m > M)
    throw CategoryError("category " + std::to_string(m) + " outside 1.." + std::to_string(M) +
                        " for item " + std::to_string(spec.items[item_idx].id));
  if (spec.item_design == ItemDesign::per_item_thresholds)
    return params.thresholds[item_idx][m - 1];
  return params.thresholds[0][m - 1] + params.shift[item_idx];
}

double linear_predictor(const ModelSpec& spec, const ItemParams& params, int item_idx,
                        double theta, int m) {
  const double delta = effective_threshold(spec, params, item_idx, m);
  const double alpha =
      params.discrimination.empty() ? 1.0 : params.discrimination[item_idx];
  return alpha * (theta - delta);
}

std::vector<double> item_predictors(const ModelSpec& spec, const ItemParams& params,
                                    int item_idx, double theta) {
  const int M = spec.items[item_idx].n_categories - 1;
  std::vector<double> eta(M);
  for (int m = 1; m <= M; ++m) eta[m - 1] = linear_predictor(spec, params, item_idx, theta, m);
  return eta;
}

// ---------------------------------------------------------------------------
// RandomCovParams
// ---------------------------------------------------------------------------

RandomCovParams RandomCovParams::diagonal(std::span<const double> sds) {
  RandomCovParams out;
  out.dim = static_cast<int>(sds.size());
  out.chol_lower.assign(out.dim * (out.dim + 1) / 2, 0.0);
  int pos = 0;
  for (int r = 0; r < out.dim; ++r) {
    out.chol_lower[pos + r] = sds[r];
    pos += r + 1;
  }
  return out;
}

RandomCovParams RandomCovParams::from_chol(int dim, std::span<const double> lower) {
  if (static_cast<int>(lower.size()) != dim * (dim + 1) / 2)
    throw SpecificationError("cholesky factor size mismatch");
  RandomCovParams out;
  out.dim = dim;
  out.chol_lower.assign(lower.begin(), lower.end());
  return out;
}

double RandomCovParams::chol(int r, int c) const {
  if (c > r) return 0.0;
  return chol_lower[r * (r + 1) / 2 + c];
}

double RandomCovParams::var(int r) const { return cov(r, r); }

double RandomCovParams::cov(int r, int c) const {
  double s = 0.0;
  for (int k = 0; k <= std::min(r, c); ++k) s += chol(r, k) * chol(c, k);
  return s;
}

void RandomCovParams::validate(const ModelSpec& spec) const {
  if (dim != spec.n_random())
    throw SpecificationError("random-effect dimension mismatch");
  for (int r = 0; r < dim; ++r)
    if (!(chol(r, r) >= 0.0))
      throw SpecificationError("covariance cholesky diagonal must be non-negative");
  if (spec.random_cov == RandomCov::diagonal) {
    for (int r = 0; r < dim; ++r)
      for (int c = 0; c < r; ++c)
        if (chol(r, c) != 0.0)
          throw SpecificationError("diagonal covariance cannot carry off-diagonal terms");
  }
}

// ---------------------------------------------------------------------------
// Packing
// ---------------------------------------------------------------------------

ParameterLayout layout_of(const ModelSpec& spec) {
  ParameterLayout lay;
  lay.n_beta = static_cast<int>(spec.fixed_effects.size());
  if (spec.item_design == ItemDesign::per_item_thresholds) {
    for (const ItemInfo& item : spec.items) lay.n_item += item.n_categories - 1;
  } else {
    lay.n_item = spec.items.front().n_categories - 1 + static_cast<int>(spec.items.size()) - 1;
  }
  if (spec.n_random() == 1) {
    lay.n_cov = 1;
  } else {
    lay.n_cov = spec.random_cov == RandomCov::diagonal ? 2 : 3;
  }
  return lay;
}

namespace {

int pack_thresholds(const std::vector<double>& delta, ParameterVector& out, int pos) {
  check_increasing(delta, "item thresholds");
  out[pos++] = delta[0];
  for (std::size_t m = 1; m < delta.size(); ++m) out[pos++] = std::log(delta[m] - delta[m - 1]);
  return pos;
}

int unpack_thresholds(const ParameterVector& packed, int pos, int M, std::vector<double>& delta) {
  delta.resize(M);
  delta[0] = packed[pos++];
  for (int m = 1; m < M; ++m) {
    delta[m] = delta[m - 1] + std::exp(std::min(packed[pos], kMaxLogIncrement));
    // an increment below one ulp would be absorbed; keep strict ordering
    if (!(delta[m] > delta[m - 1]))
      delta[m] = std::nextafter(delta[m - 1], std::numeric_limits<double>::infinity());
    ++pos;
  }
  return pos;
}

}  // namespace

ParameterVector pack(const ModelSpec& spec, const ItemParams& items, const Eigen::VectorXd& beta,
                     const RandomCovParams& cov) {
  spec.validate();
  items.validate(spec);
  cov.validate(spec);
  const ParameterLayout lay = layout_of(spec);
  if (beta.size() != lay.n_beta) throw SpecificationError("fixed-effect dimension mismatch");

  ParameterVector out(lay.total());
  for (int p = 0; p < lay.n_beta; ++p) out[p] = beta[p];
  int pos = lay.item_offset();
  if (spec.item_design == ItemDesign::per_item_thresholds) {
    for (std::size_t j = 0; j < spec.items.size(); ++j)
      pos = pack_thresholds(items.thresholds[j], out, pos);
  } else {
    pos = pack_thresholds(items.thresholds[0], out, pos);
    for (std::size_t j = 1; j < spec.items.size(); ++j) out[pos++] = items.shift[j];
  }
  if (spec.n_random() == 1) {
    out[pos++] = std::log(cov.chol(0, 0));
  } else if (spec.random_cov == RandomCov::diagonal) {
    out[pos++] = std::log(cov.chol(0, 0));
    out[pos++] = std::log(cov.chol(1, 1));
  } else {
    out[pos++] = std::log(cov.chol(0, 0));
    out[pos++] = cov.chol(1, 0);
    out[pos++] = std::log(cov.chol(1, 1));
  }
  return out;
}

UnpackedParams unpack(const ModelSpec& spec, const ParameterVector& packed) {
  const ParameterLayout lay = layout_of(spec);
  if (packed.size() != lay.total())
    throw SpecificationError("parameter vector has length " + std::to_string(packed.size()) +
                             ", expected " + std::to_string(lay.total()));
  UnpackedParams out;
  out.beta = packed.segment(0, lay.n_beta);

  int pos = lay.item_offset();
  if (spec.item_design == ItemDesign::per_item_thresholds) {
    out.items.thresholds.resize(spec.items.size());
    for (std::size_t j = 0; j < spec.items.size(); ++j)
      pos = unpack_thresholds(packed, pos, spec.items[j].n_categories - 1, out.items.thresholds[j]);
  } else {
    out.items.thresholds.resize(1);
    pos = unpack_thresholds(packed, pos, spec.items.front().n_categories - 1,
                            out.items.thresholds[0]);
    out.items.shift.assign(spec.items.size(), 0.0);
    for (std::size_t j = 1; j < spec.items.size(); ++j) out.items.shift[j] = packed[pos++];
  }
  out.items.discrimination.assign(spec.items.size(), 1.0);

  if (spec.n_random() == 1) {
    const double sd = std::exp(packed[pos++]);
    out.cov = RandomCovParams::diagonal(std::array<double, 1>{sd});
  } else if (spec.random_cov == RandomCov::diagonal) {
    const double sd0 = std::exp(packed[pos++]);
    const double sd1 = std::exp(packed[pos++]);
    out.cov = RandomCovParams::diagonal(std::array<double, 2>{sd0, sd1});
  } else {
    const double l00 = std::exp(packed[pos++]);
    const double l10 = packed[pos++];
    const double l11 = std::exp(packed[pos++]);
    out.cov = RandomCovParams::from_chol(2, std::array<double, 3>{l00, l10, l11});
  }
  return out;
}

// ---------------------------------------------------------------------------
// Latent trait
// ---------------------------------------------------------------------------

double latent_trait(const ModelSpec& spec, std::span<const double> beta,
                    std::span<const double> xi, std::span<const double> covariate_values,
                    double t_v, double t0) {
  if (beta.size() != spec.fixed_effects.size())
    throw SpecificationError("beta dimension does not match fixed effects");
  if (covariate_values.size() != spec.fixed_effects.size())
    throw SpecificationError("covariate values must align with fixed effects");
  if (static_cast<int>(xi.size()) != spec.n_random())
    throw SpecificationError("random-effect dimension mismatch");

  const double s = t_v - t0;
  double theta = 0.0;
  for (std::size_t p = 0; p < spec.fixed_effects.size(); ++p) {
    const FixedEffect& fe = spec.fixed_effects[p];
    double x = fe.column.empty() ? 1.0 : covariate_values[p];
    if (fe.with_time) x *= s;
    theta += beta[p] * x;
  }
  theta += xi[0];
  if (xi.size() == 2) theta += s * xi[1];
  return theta;
}

// ---------------------------------------------------------------------------
// Dataset
// ---------------------------------------------------------------------------

long Dataset::n_obs() const {
  long n = 0;
  for (const SubjectData& s : subjects)
    for (const VisitData& v : s.visits) n += static_cast<long>(v.obs.size());
  return n;
}

std::uint64_t Dataset::fingerprint() const {
  std::uint64_t h = 1469598103934665603ULL;  // FNV-1a
  auto mix = [&h](std::uint64_t v) {
    h ^= v;
    h *= 1099511628211ULL;
  };
  auto mix_double = [&](double d) {
    std::uint64_t bits;
    static_assert(sizeof(bits) == sizeof(d));
    std::memcpy(&bits, &d, sizeof(bits));
    mix(bits);
  };
  for (const SubjectData& s : subjects) {
    for (char c : s.id) mix(static_cast<std::uint64_t>(c));
    for (const VisitData& v : s.visits) {
      mix(static_cast<std::uint64_t>(v.visit));
      mix_double(v.time);
      for (double c : v.covariates) mix_double(c);
      for (auto [j, y] : v.obs) {
        mix(static_cast<std::uint64_t>(j));
        mix(static_cast<std::uint64_t>(y));
      }
    }
  }
  mix(static_cast<std::uint64_t>(n_missing));
  return h;
}

void validate_dataset(const ModelSpec& spec, const Dataset& data) {
  for (const SubjectData& s : data.subjects) {
    if (s.visits.empty()) throw DataError("subject " + s.id + " has no visits");
    for (std::size_t v = 0; v < s.visits.size(); ++v) {
      const VisitData& visit = s.visits[v];
      if (visit.time < 0.0) throw DataError("subject " + s.id + ": negative visit time");
      if (v > 0 && (visit.visit <= s.visits[v - 1].visit || visit.time < s.visits[v - 1].time))
        throw DataError("subject " + s.id + ": visits must be increasing in index and time");
      if (visit.covariates.size() != data.covariate_columns.size())
        throw DataError("subject " + s.id + ": covariate row width mismatch");
      std::set<int> seen;
      for (auto [j, y] : visit.obs) {
        if (j < 0 || j >= spec.n_items()) throw DataError("observation on undeclared item");
        if (!seen.insert(j).second)
          throw DataError("subject " + s.id + ": duplicate response for item " +
                          std::to_string(spec.items[j].id) + " at visit " +
                          std::to_string(visit.visit));
        const int M = spec.items[j].n_categories - 1;
        if (y < 0 || y > M)
          throw CategoryError("subject " + s.id + ": category " + std::to_string(y) +
                              " outside 0.." + std::to_string(M) + " for item " +
                              std::to_string(spec.items[j].id));
      }
    }
  }
}

}  // namespace irtmix
