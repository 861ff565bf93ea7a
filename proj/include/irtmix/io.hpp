#pragma once

#include <iosfwd>
#include <string>
#include <vector>

#include "irtmix/estimate.hpp"
#include "irtmix/model.hpp"
#include "irtmix/score_lmm.hpp"
#include "irtmix/simulate.hpp"

namespace irtmix {

struct IngestReport {
  long rows = 0;
  long missing = 0;
  int n_subjects = 0;
  int n_items_seen = 0;
  long n_obs = 0;
  std::vector<std::string> covariate_columns;
};

/// Long-format CSV with header subject,visit,time,item,response[,covariates...].
/// Empty response cells are missing observations. Functional items flagged in
/// the model spec are reversed here (y -> M - y), keeping the model core
/// orientation-free. Errors carry 1-based line numbers.
Dataset ingest_csv(const std::string& path, const ModelSpec& spec,
                   IngestReport* report = nullptr);
Dataset ingest_csv(std::istream& in, const ModelSpec& spec, IngestReport* report = nullptr);

/// Model-spec config: flat key/value lines with '#' comments and [a, b, c]
/// arrays. Keys: family, cdf, item_design, items (id:ncat, '!' suffix for
/// reversed), fixed (time | column | column:time), random, covariance.
ModelSpec parse_model_spec(std::istream& in);
ModelSpec load_model_spec(const std::string& path);

/// Scenario manifest in the same key/value format; "table4" and "table5" name
/// the built-in grids. replications/seed <= 0 keep the manifest values.
std::vector<Scenario> load_manifest(const std::string& path_or_builtin, int replications_override,
                                    long long seed_override);
Scenario parse_scenario(std::istream& in);

/// Shortest round-trip decimal rendering; all writers use it so outputs are
/// byte-stable.
std::string format_double(double v);

void write_estimates_csv(const std::string& path, const FitResult& fit);
void write_fit_summary_json(const std::string& path, const FitResult& fit, int nodes);
void write_probability_decomposition_csv(const std::string& path, const FitResult& fit,
                                         const Dataset& data);
void write_selection_summary_csv(const std::string& path,
                                 const std::vector<SelectionSummary>& summaries);

/// Wide-format aggregate mirroring the study tables: one row per
/// (sigma1_sq, beta1) setting, one block of class columns per generator cell,
/// plus failure totals. `m1` selects which selection frequency is reported.
void write_table_layout_csv(const std::string& path,
                            const std::vector<SelectionSummary>& summaries, bool m1);
void write_scores_csv(const std::string& path, const ScoreSeries& scores);
void write_cdf_curves_csv(const std::string& path, double eta_min, double eta_max, double step);
void write_discrimination_curves_csv(const std::string& path,
                                     const std::vector<double>& alphas, double theta_min,
                                     double theta_max, double step);

}  // namespace irtmix
