// Command-line front end: data ingestion, model fitting, scenario execution,
// scoring, and plot-data emission. All outputs are plain text files that are
// byte-reproducible from (inputs, flags, seed).

#include <fcntl.h>
#include <unistd.h>

#include <CLI11.hpp>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <json.hpp>
#include <algorithm>
#include <string>
#include <vector>

#include "irtmix/estimate.hpp"
#include "irtmix/io.hpp"
#include "irtmix/kernels.hpp"
#include "irtmix/score_lmm.hpp"
#include "irtmix/simulate.hpp"

namespace fs = std::filesystem;
using json = nlohmann::ordered_json;

namespace {

// one process per output directory
class DirLock {
public:
  explicit DirLock(const fs::path& dir) : path_(dir / ".irtmix.lock") {
    fd_ = ::open(path_.c_str(), O_CREAT | O_EXCL | O_WRONLY, 0644);
    if (fd_ < 0)
      throw irtmix::Error("output directory is locked by another run: " + path_.string());
  }
  ~DirLock() {
    if (fd_ >= 0) {
      ::close(fd_);
      ::unlink(path_.c_str());
    }
  }
  DirLock(const DirLock&) = delete;
  DirLock& operator=(const DirLock&) = delete;

private:
  fs::path path_;
  int fd_ = -1;
};

void write_json(const fs::path& path, const json& j) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw irtmix::Error("cannot write " + path.string());
  out << j.dump(2) << '\n';
}

struct CommonArgs {
  std::string out_dir;
  std::uint64_t seed = 1;
  int nodes = 7;
  int threads = 1;
  int verbosity = 0;
};

int run_fit(const std::string& data_path, const std::string& spec_path, const CommonArgs& args) {
  const fs::path out(args.out_dir);
  fs::create_directories(out);
  DirLock lock(out);

  const irtmix::ModelSpec spec = irtmix::load_model_spec(spec_path);
  irtmix::IngestReport report;
  const irtmix::Dataset data = irtmix::ingest_csv(data_path, spec, &report);
  if (args.verbosity > 0)
    std::cerr << "ingested " << report.rows << " rows, " << report.n_subjects << " subjects, "
              << report.n_obs << " observations, " << report.missing << " missing\n";

  irtmix::FitOptions options;
  options.quad = irtmix::QuadratureRule::gauss_hermite(args.nodes);
  options.n_threads = args.threads;

  json log;
  log["command"] = "fit";
  log["data"] = data_path;
  log["spec"] = spec_path;
  log["seed"] = args.seed;
  log["nodes"] = args.nodes;
  log["kernel"] = irtmix::kern::active_name();
  log["ingest"] = {{"rows", report.rows},
                   {"missing", report.missing},
                   {"subjects", report.n_subjects},
                   {"observations", report.n_obs}};

  bool converged = true;
  irtmix::FitResult result;
  try {
    result = irtmix::fit(spec, data, std::nullopt, options);
  } catch (const irtmix::ConvergenceError& e) {
    converged = false;
    result = e.best;
    std::cerr << "fit did not converge: " << e.what() << "\n";
  }

  irtmix::write_estimates_csv((out / "estimates.csv").string(), result);
  irtmix::write_fit_summary_json((out / "fit_summary.json").string(), result, args.nodes);
  irtmix::write_probability_decomposition_csv((out / "probability_decomposition.csv").string(),
                                              result, data);
  log["converged"] = converged;
  log["loglik"] = result.loglik;
  log["bic"] = result.bic;
  log["iterations"] = result.diag.iterations;
  log["clamp_count"] = result.diag.clamp_count;
  log["adaptive_failures"] = result.diag.adaptive_failures;
  log["outputs"] = {"estimates.csv", "fit_summary.json", "probability_decomposition.csv"};
  write_json(out / "run_log.json", log);
  return converged ? 0 : 1;
}

int run_simulate(const std::string& manifest, int replications, long long seed_override,
                 const CommonArgs& args) {
  const fs::path out(args.out_dir);
  fs::create_directories(out);
  DirLock lock(out);

  const std::vector<irtmix::Scenario> scenarios =
      irtmix::load_manifest(manifest, replications, seed_override);
  const irtmix::QuadratureRule quad = irtmix::QuadratureRule::gauss_hermite(args.nodes);

  json log;
  log["command"] = "simulate";
  log["manifest"] = manifest;
  log["nodes"] = args.nodes;
  log["kernel"] = irtmix::kern::active_name();
  json cells = json::array();

  std::vector<irtmix::SelectionSummary> summaries;
  for (const irtmix::Scenario& sc : scenarios) {
    if (args.verbosity > 0) std::cerr << "scenario " << sc.name << "\n";
    irtmix::SelectionSummary s = irtmix::run_scenario(sc, quad, args.threads);
    json cell;
    cell["name"] = sc.name;
    cell["seed"] = sc.seed;
    cell["replications"] = sc.replications;
    for (const irtmix::ClassSummary& c : s.classes)
      cell[irtmix::model_class_name(c.model_class)] = {
          {"m1", c.m1}, {"m2", c.m2}, {"failures", c.failures}};
    cells.push_back(cell);
    summaries.push_back(std::move(s));
  }
  irtmix::write_selection_summary_csv((out / "selection_summary.csv").string(), summaries);
  json outputs = json::array();
  outputs.push_back("selection_summary.csv");
  if (manifest == "table4" || manifest == "table5") {
    // aggregate in the study-table layout plus one file per generator cell
    const bool m1 = manifest == "table4";
    irtmix::write_table_layout_csv((out / "table_layout.csv").string(), summaries, m1);
    outputs.push_back("table_layout.csv");
    std::vector<std::string> groups;
    for (const irtmix::SelectionSummary& s : summaries) {
      const std::string g = s.scenario.name.substr(0, s.scenario.name.find("_b"));
      if (std::find(groups.begin(), groups.end(), g) == groups.end()) groups.push_back(g);
    }
    for (const std::string& g : groups) {
      std::vector<irtmix::SelectionSummary> cell;
      for (const irtmix::SelectionSummary& s : summaries)
        if (s.scenario.name.rfind(g + "_b", 0) == 0) cell.push_back(s);
      const std::string name = "cells_" + g + ".csv";
      irtmix::write_selection_summary_csv((out / name).string(), cell);
      outputs.push_back(name);
    }
  }
  log["cells"] = cells;
  log["outputs"] = outputs;
  write_json(out / "run_log.json", log);
  return 0;
}

int run_score(const std::string& data_path, const std::string& spec_path,
              const std::string& group_column, const CommonArgs& args) {
  const fs::path out(args.out_dir);
  fs::create_directories(out);
  DirLock lock(out);

  const irtmix::ModelSpec spec = irtmix::load_model_spec(spec_path);
  irtmix::IngestReport report;
  const irtmix::Dataset data = irtmix::ingest_csv(data_path, spec, &report);
  const irtmix::ScoreSeries scores = irtmix::scores_from_dataset(spec, data, group_column);
  irtmix::write_scores_csv((out / "scores.csv").string(), scores);

  json log;
  log["command"] = "score";
  log["data"] = data_path;
  log["spec"] = spec_path;
  log["ingest"] = {{"rows", report.rows},
                   {"missing", report.missing},
                   {"subjects", report.n_subjects}};
  log["outputs"] = {"scores.csv"};
  write_json(out / "run_log.json", log);
  return 0;
}

int run_plotdata(const std::vector<double>& alphas, const CommonArgs& args) {
  const fs::path out(args.out_dir);
  fs::create_directories(out);
  DirLock lock(out);

  irtmix::write_cdf_curves_csv((out / "cdf_curves.csv").string(), -4.0, 4.0, 0.05);
  irtmix::write_discrimination_curves_csv((out / "discrimination_curves.csv").string(), alphas,
                                          -4.0, 4.0, 0.05);
  json log;
  log["command"] = "plotdata";
  log["alphas"] = alphas;
  log["outputs"] = {"cdf_curves.csv", "discrimination_curves.csv"};
  write_json(out / "run_log.json", log);
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Longitudinal item-response mixed models for ordinal questionnaire data"};
  app.require_subcommand(1);

  CommonArgs common;
  std::string data_path, spec_path, manifest, group_column;
  int replications = 0;
  long long seed_override = -1;
  std::vector<double> alphas = {0.5, 1.0, 2.0};

  auto add_common = [&](CLI::App* cmd, bool with_out = true) {
    if (with_out) cmd->add_option("--out", common.out_dir, "output directory")->required();
    cmd->add_option("--seed", common.seed, "random seed");
    cmd->add_option("--nodes", common.nodes, "quadrature nodes per dimension")
        ->check(CLI::PositiveNumber);
    cmd->add_option("--threads", common.threads, "worker threads")->check(CLI::PositiveNumber);
    cmd->add_flag("-v,--verbose", common.verbosity, "progress output on stderr");
  };

  CLI::App* cmd_fit = app.add_subcommand("fit", "fit a model to a dataset");
  cmd_fit->add_option("--data", data_path, "long-format CSV")->required();
  cmd_fit->add_option("--spec", spec_path, "model spec config")->required();
  add_common(cmd_fit);

  CLI::App* cmd_sim = app.add_subcommand("simulate", "run a model-selection scenario study");
  cmd_sim->add_option("--manifest", manifest, "scenario manifest (table4, table5, or a file)")
      ->required();
  cmd_sim->add_option("--replications", replications, "override replication count");
  cmd_sim->add_option("--override-seed", seed_override, "override scenario seed");
  add_common(cmd_sim);

  CLI::App* cmd_score = app.add_subcommand("score", "compute 0-100 questionnaire scores");
  cmd_score->add_option("--data", data_path, "long-format CSV")->required();
  cmd_score->add_option("--spec", spec_path, "model spec config")->required();
  cmd_score->add_option("--group-column", group_column, "covariate column carried to the output");
  add_common(cmd_score);

  CLI::App* cmd_plot = app.add_subcommand("plotdata", "emit CdF curve data");
  cmd_plot->add_option("--alphas", alphas, "discrimination values for the adjusted curves");
  add_common(cmd_plot);

  CLI11_PARSE(app, argc, argv);

  try {
    if (cmd_fit->parsed()) return run_fit(data_path, spec_path, common);
    if (cmd_sim->parsed()) return run_simulate(manifest, replications, seed_override, common);
    if (cmd_score->parsed()) return run_score(data_path, spec_path, group_column, common);
    if (cmd_plot->parsed()) return run_plotdata(alphas, common);
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 0;
}
