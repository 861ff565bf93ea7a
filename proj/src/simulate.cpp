#include "irtmix/simulate.hpp"

#include <algorithm>
#include <cmath>

#include "irtmix/errors.hpp"
#include "irtmix/rng.hpp"
#include "irtmix/score_lmm.hpp"
#include "parallel.hpp"

namespace irtmix {

namespace {

// warm-start offset for the slope log-sd relative to the fitted intercept log-sd
constexpr double kSlopeInitOffset = -2.1;

std::vector<std::string> referenced_columns(const ModelSpec& spec) {
  std::vector<std::string> cols;
  for (const FixedEffect& fe : spec.fixed_effects) {
    if (fe.column.empty()) continue;
    if (std::find(cols.begin(), cols.end(), fe.column) == cols.end()) cols.push_back(fe.column);
  }
  return cols;
}

}  // namespace

Dataset simulate_dataset(const GeneratorTruth& truth, int n_subjects,
                         std::span<const double> times, std::uint64_t seed,
                         std::uint32_t replication) {
  const ModelSpec& spec = truth.spec;
  spec.validate();
  truth.items.validate(spec);
  truth.cov.validate(spec);
  if (n_subjects < 1) throw SpecificationError("need at least one subject");
  if (times.empty()) throw SpecificationError("need at least one visit time");

  const int d = spec.n_random();
  const double t0 = times[0];
  const std::vector<std::string> cols = referenced_columns(spec);

  Dataset data;
  data.covariate_columns = cols;
  data.subjects.resize(n_subjects);

  for (int i = 0; i < n_subjects; ++i) {
    CounterRng rng(seed, replication, static_cast<std::uint32_t>(i));
    SubjectData& subj = data.subjects[i];
    subj.id = std::to_string(i + 1);

    // xi = L z
    double z0 = rng.next_normal();
    double xi0 = truth.cov.chol(0, 0) * z0;
    double xi1 = 0.0;
    if (d == 2) {
      const double z1 = rng.next_normal();
      xi1 = truth.cov.chol(1, 0) * z0 + truth.cov.chol(1, 1) * z1;
    }
    const std::array<double, 2> xi{xi0, xi1};

    // deterministic covariate assignment: alternating 0/1 by subject index
    std::vector<double> covvals(cols.size());
    for (std::size_t c = 0; c < cols.size(); ++c) covvals[c] = static_cast<double>(i % 2);
    std::vector<double> fe_values(spec.fixed_effects.size(), 0.0);
    for (std::size_t p = 0; p < spec.fixed_effects.size(); ++p) {
      const std::string& col = spec.fixed_effects[p].column;
      if (col.empty()) continue;
      const auto it = std::find(cols.begin(), cols.end(), col);
      fe_values[p] = covvals[it - cols.begin()];
    }

    subj.visits.resize(times.size());
    for (std::size_t v = 0; v < times.size(); ++v) {
      VisitData& visit = subj.visits[v];
      visit.visit = static_cast<int>(v);
      visit.time = times[v];
      visit.covariates = covvals;
      const double theta =
          latent_trait(spec, std::span<const double>(truth.beta.data(), truth.beta.size()),
                       std::span<const double>(xi.data(), d), fe_values, times[v], t0);
      for (int j = 0; j < spec.n_items(); ++j) {
        const std::vector<double> eta = item_predictors(spec, truth.items, j, theta);
        const CategoryDistribution probs = category_probs(spec.family, spec.kind, eta);
        const double u = rng.next_uniform();
        double cum = 0.0;
        int y = static_cast<int>(probs.size()) - 1;
        for (std::size_t m = 0; m < probs.size(); ++m) {
          cum += probs[m];
          if (u < cum) {
            y = static_cast<int>(m);
            break;
          }
        }
        visit.obs.emplace_back(j, y);
      }
    }
  }
  return data;
}

std::string model_class_name(ModelClass c) {
  switch (c) {
    case ModelClass::lmm: return "lmm";
    case ModelClass::adjacent: return "adjacent";
    case ModelClass::cumulative: return "cumulative";
  }
  return "?";
}

ModelClass parse_model_class(const std::string& name) {
  if (name == "lmm") return ModelClass::lmm;
  if (name == "adjacent") return ModelClass::adjacent;
  if (name == "cumulative") return ModelClass::cumulative;
  throw ParseError("unknown model class: " + name);
}

std::vector<std::vector<double>> delta_near() {
  return {{-1.6, 1.0, 1.45}, {-0.8, 1.15, 1.9}};
}

std::vector<std::vector<double>> delta_far() {
  return {{-2.1, 1.0, 2.75}, {-1.25, 1.4, 3.3}};
}

void Scenario::validate() const {
  if (generator == RatioFamily::sequential)
    throw SpecificationError("scenario generators are adjacent or cumulative");
  if (delta.empty()) throw SpecificationError("scenario needs item thresholds");
  for (const std::vector<double>& dj : delta) {
    if (dj.empty()) throw SpecificationError("empty threshold vector");
    for (std::size_t m = 1; m < dj.size(); ++m)
      if (!(dj[m] > dj[m - 1]))
        throw OrderingError("scenario thresholds must be strictly increasing",
                            static_cast<int>(m + 1));
  }
  if (!(sigma0_sq >= 0.0) || !(sigma1_sq >= 0.0))
    throw SpecificationError("variances must be non-negative");
  if (replications < 1) throw SpecificationError("need at least one replication");
  if (n_subjects < 1) throw SpecificationError("need at least one subject");
  if (times.size() < 2) throw SpecificationError("need at least two visits");
  if (fit_classes.empty()) throw SpecificationError("no model classes requested");
}

GeneratorTruth Scenario::truth() const {
  validate();
  GeneratorTruth t;
  t.spec.family = generator;
  t.spec.kind = kind;
  t.spec.item_design = ItemDesign::per_item_thresholds;
  for (std::size_t j = 0; j < delta.size(); ++j)
    t.spec.items.push_back(
        {static_cast<int>(j) + 1, static_cast<int>(delta[j].size()) + 1, false});
  t.spec.fixed_effects = {{"time", "", true}};
  t.spec.random_effects =
      sigma1_sq > 0.0 ? RandomEffects::intercept_and_slope : RandomEffects::intercept_only;
  t.spec.random_cov = RandomCov::diagonal;
  t.items.thresholds = delta;
  t.items.discrimination.assign(delta.size(), 1.0);
  t.beta = Eigen::VectorXd::Constant(1, beta1);
  if (t.spec.n_random() == 2) {
    const std::array<double, 2> sds{std::sqrt(sigma0_sq), std::sqrt(sigma1_sq)};
    t.cov = RandomCovParams::diagonal(sds);
  } else {
    const std::array<double, 1> sds{std::sqrt(sigma0_sq)};
    t.cov = RandomCovParams::diagonal(sds);
  }
  return t;
}

namespace {

ModelSpec fit_spec(const Scenario& sc, RatioFamily family, bool slope) {
  ModelSpec spec;
  spec.family = family;
  spec.kind = sc.kind;
  spec.item_design = ItemDesign::per_item_thresholds;
  for (std::size_t j = 0; j < sc.delta.size(); ++j)
    spec.items.push_back(
        {static_cast<int>(j) + 1, static_cast<int>(sc.delta[j].size()) + 1, false});
  spec.fixed_effects = {{"time", "", true}};
  spec.random_effects = slope ? RandomEffects::intercept_and_slope : RandomEffects::intercept_only;
  // the slope model carries the full (unstructured) covariance, the structure
  // the application-style analyses use; the generator stays independent
  spec.random_cov = slope ? RandomCov::unstructured : RandomCov::diagonal;
  return spec;
}

// -1 failure, 0 selects the intercept-only model, 1 the slope model
int select_irt(const Scenario& sc, RatioFamily family, const Dataset& data,
               const QuadratureRule& quad) {
  try {
    const ModelSpec m1 = fit_spec(sc, family, false);
    const ModelSpec m2 = fit_spec(sc, family, true);
    FitOptions opts;
    opts.quad = quad;
    opts.n_threads = 1;
    opts.compute_se = false;
    const FitResult f1 = fit(m1, data, std::nullopt, opts);
    // warm start: keep the fitted intercept scale, zero covariance, and a
    // small slope scale
    const ParameterLayout l1 = layout_of(m1);
    ParameterVector x0(l1.total() + 2);
    x0.segment(0, l1.total()) = f1.packed;
    x0[l1.total()] = 0.0;
    x0[l1.total() + 1] = f1.packed[l1.total() - 1] + kSlopeInitOffset;
    FitResult f2;
    try {
      f2 = fit(m2, data, x0, opts);
    } catch (const ConvergenceError&) {
      f2 = fit(m2, data, std::nullopt, opts);  // one retry from the default start
    }
    return select_by_bic(f1.bic, f1.n_free_params, f2.bic, f2.n_free_params);
  } catch (const Error&) {
    return -1;
  }
}

int select_lmm(const Scenario& sc, const Dataset& data, const QuadratureRule&) {
  try {
    const ModelSpec gen = fit_spec(sc, sc.generator, false);
    const ScoreSeries scores = scores_from_dataset(gen, data);
    LmmOptions opts;
    const LmmFit f1 = fit_lmm(LmmModel::random_intercept, scores, opts);
    Eigen::VectorXd x0(lmm_n_params(LmmModel::random_intercept_slope, false));
    x0[0] = 0.5 * std::log(std::max(f1.sigma0_sq, 1e-12));
    x0[1] = x0[0] + kSlopeInitOffset;
    x0[2] = 0.5 * std::log(std::max(f1.sigma_eps_sq, 1e-12));
    const LmmFit f2 = fit_lmm(LmmModel::random_intercept_slope, scores, opts, x0);
    return select_by_bic(f1.bic, f1.n_free_params, f2.bic, f2.n_free_params);
  } catch (const Error&) {
    return -1;
  }
}

}  // namespace

SelectionSummary run_scenario(const Scenario& scenario, const QuadratureRule& quad,
                              int n_threads) {
  scenario.validate();
  const GeneratorTruth truth = scenario.truth();
  const int N = scenario.replications;
  const int C = static_cast<int>(scenario.fit_classes.size());

  std::vector<int> outcome(static_cast<std::size_t>(N) * C, -1);
  detail::parallel_for(static_cast<std::size_t>(N), n_threads, [&](std::size_t rep, int) {
    const Dataset data = simulate_dataset(truth, scenario.n_subjects, scenario.times,
                                          scenario.seed, static_cast<std::uint32_t>(rep));
    for (int c = 0; c < C; ++c) {
      const ModelClass cls = scenario.fit_classes[c];
      int sel;
      if (cls == ModelClass::lmm)
        sel = select_lmm(scenario, data, quad);
      else
        sel = select_irt(scenario,
                         cls == ModelClass::adjacent ? RatioFamily::adjacent
                                                     : RatioFamily::cumulative,
                         data, quad);
      outcome[rep * C + c] = sel;
    }
  });

  SelectionSummary out;
  out.scenario = scenario;
  out.classes.resize(C);
  for (int c = 0; c < C; ++c) out.classes[c].model_class = scenario.fit_classes[c];
  for (int rep = 0; rep < N; ++rep)
    for (int c = 0; c < C; ++c) {
      const int sel = outcome[static_cast<std::size_t>(rep) * C + c];
      if (sel < 0)
        ++out.classes[c].failures;
      else if (sel == 0)
        ++out.classes[c].m1;
      else
        ++out.classes[c].m2;
    }
  return out;
}

namespace {

Scenario make_cell(const std::string& tag, RatioFamily gen, bool far, double beta1,
                   double sigma1_sq, int replications, std::uint64_t seed) {
  Scenario sc;
  sc.generator = gen;
  sc.delta = far ? delta_far() : delta_near();
  sc.beta1 = beta1;
  sc.sigma1_sq = sigma1_sq;
  sc.replications = replications;
  sc.seed = seed;
  char buf[96];
  std::snprintf(buf, sizeof(buf), "%s_b%+.3f_s%.3f", tag.c_str(), beta1, sigma1_sq);
  sc.name = buf;
  return sc;
}

struct Column {
  std::string tag;
  RatioFamily gen;
  bool far;
};

const std::vector<Column>& scenario_columns() {
  static const std::vector<Column> cols = {{"am_near", RatioFamily::adjacent, false},
                                           {"cm_far", RatioFamily::cumulative, true},
                                           {"cm_near", RatioFamily::cumulative, false},
                                           {"am_far", RatioFamily::adjacent, true}};
  return cols;
}

}  // namespace

std::vector<Scenario> builtin_table4(int replications, std::uint64_t seed) {
  std::vector<Scenario> grid;
  for (const Column& col : scenario_columns()) {
    for (double b1 : {-0.3, 0.3})
      grid.push_back(make_cell(col.tag, col.gen, col.far, b1, 0.2, replications, seed));
    for (double b1 : {-0.5, -0.3, -0.2, -0.1, 0.0, 0.1, 0.3, 0.5})
      grid.push_back(make_cell(col.tag, col.gen, col.far, b1, 0.0, replications, seed));
  }
  return grid;
}

std::vector<Scenario> builtin_table5(int replications, std::uint64_t seed) {
  std::vector<Scenario> grid;
  for (const Column& col : scenario_columns()) {
    for (double s1 : {0.01, 0.02, 0.03, 0.05, 0.2, 0.5})
      grid.push_back(make_cell(col.tag, col.gen, col.far, 1.0, s1, replications, seed));
    for (double s1 : {0.002, 0.005, 0.008, 0.01, 0.02})
      grid.push_back(make_cell(col.tag, col.gen, col.far, 0.3, s1, replications, seed));
    for (double s1 : {0.002, 0.005, 0.008})
      grid.push_back(make_cell(col.tag, col.gen, col.far, -0.3, s1, replications, seed));
  }
  return grid;
}

}  // namespace irtmix
