#include "irtmix/io.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <map>
#include <set>
#include <sstream>

#include "irtmix/errors.hpp"
#include "irtmix/link.hpp"

namespace irtmix {

namespace {

std::string trim(const std::string& s) {
  std::size_t a = s.find_first_not_of(" \t\r\n");
  if (a == std::string::npos) return "";
  std::size_t b = s.find_last_not_of(" \t\r\n");
  return s.substr(a, b - a + 1);
}

std::vector<std::string> split(const std::string& line, char sep) {
  std::vector<std::string> out;
  std::size_t start = 0;
  while (true) {
    const std::size_t pos = line.find(sep, start);
    if (pos == std::string::npos) {
      out.push_back(line.substr(start));
      break;
    }
    out.push_back(line.substr(start, pos - start));
    start = pos + 1;
  }
  return out;
}

double parse_number(const std::string& s, long line) {
  const std::string t = trim(s);
  try {
    std::size_t used = 0;
    const double v = std::stod(t, &used);
    if (used != t.size()) throw std::invalid_argument(t);
    return v;
  } catch (const std::exception&) {
    throw ParseError("not a number: '" + t + "'", line);
  }
}

long parse_integer(const std::string& s, long line) {
  const std::string t = trim(s);
  try {
    std::size_t used = 0;
    const long v = std::stol(t, &used);
    if (used != t.size()) throw std::invalid_argument(t);
    return v;
  } catch (const std::exception&) {
    throw ParseError("not an integer: '" + t + "'", line);
  }
}

}  // namespace

std::string format_double(double v) {
  if (std::isnan(v)) return "nan";
  char buf[40];
  const auto res = std::to_chars(buf, buf + sizeof(buf), v);
  return std::string(buf, res.ptr);
}

// ---------------------------------------------------------------------------
// dataset ingestion
// ---------------------------------------------------------------------------

Dataset ingest_csv(const std::string& path, const ModelSpec& spec, IngestReport* report) {
  std::ifstream in(path);
  if (!in) throw ParseError("cannot open data file: " + path);
  return ingest_csv(in, spec, report);
}

Dataset ingest_csv(std::istream& in, const ModelSpec& spec, IngestReport* report) {
  spec.validate();
  std::string line;
  if (!std::getline(in, line)) throw ParseError("empty data file", 1);
  std::vector<std::string> header = split(trim(line), ',');
  for (std::string& h : header) h = trim(h);
  const std::vector<std::string> required = {"subject", "visit", "time", "item", "response"};
  for (std::size_t c = 0; c < required.size(); ++c)
    if (c >= header.size() || header[c] != required[c])
      throw ParseError("header must start with subject,visit,time,item,response", 1);
  std::vector<std::string> cov_cols(header.begin() + 5, header.end());

  Dataset data;
  data.covariate_columns = cov_cols;
  std::map<std::string, int> subject_of;
  long lineno = 1;
  long rows = 0;

  while (std::getline(in, line)) {
    ++lineno;
    const std::string t = trim(line);
    if (t.empty()) continue;
    const std::vector<std::string> cells = split(t, ',');
    if (cells.size() != header.size())
      throw ParseError("expected " + std::to_string(header.size()) + " fields, got " +
                           std::to_string(cells.size()),
                       lineno);
    ++rows;
    const std::string sid = trim(cells[0]);
    if (sid.empty()) throw ParseError("empty subject id", lineno);
    const int visit = static_cast<int>(parse_integer(cells[1], lineno));
    const double time = parse_number(cells[2], lineno);
    const int item_id = static_cast<int>(parse_integer(cells[3], lineno));
    const int j = spec.item_index(item_id);
    if (j < 0) throw DataError("line " + std::to_string(lineno) + ": undeclared item " +
                               std::to_string(item_id));

    auto [it, inserted] = subject_of.try_emplace(sid, static_cast<int>(data.subjects.size()));
    if (inserted) {
      data.subjects.emplace_back();
      data.subjects.back().id = sid;
    }
    SubjectData& subj = data.subjects[it->second];

    VisitData* visit_ptr = nullptr;
    for (VisitData& v : subj.visits)
      if (v.visit == visit) visit_ptr = &v;
    if (visit_ptr == nullptr) {
      VisitData v;
      v.visit = visit;
      v.time = time;
      v.covariates.resize(cov_cols.size());
      for (std::size_t c = 0; c < cov_cols.size(); ++c)
        v.covariates[c] = parse_number(cells[5 + c], lineno);
      subj.visits.push_back(std::move(v));
      visit_ptr = &subj.visits.back();
    } else {
      if (visit_ptr->time != time)
        throw DataError("line " + std::to_string(lineno) + ": inconsistent time for subject " +
                        sid + " visit " + std::to_string(visit));
      for (std::size_t c = 0; c < cov_cols.size(); ++c)
        if (visit_ptr->covariates[c] != parse_number(cells[5 + c], lineno))
          throw DataError("line " + std::to_string(lineno) +
                          ": inconsistent covariate '" + cov_cols[c] + "' within a visit");
    }

    const std::string resp = trim(cells[4]);
    if (resp.empty()) {
      ++data.n_missing;
      continue;
    }
    int y = static_cast<int>(parse_integer(resp, lineno));
    const int M = spec.items[j].n_categories - 1;
    if (y < 0 || y > M)
      throw CategoryError("line " + std::to_string(lineno) + ": response " + std::to_string(y) +
                          " outside 0.." + std::to_string(M) + " for item " +
                          std::to_string(item_id));
    if (spec.items[j].reversed) y = M - y;
    for (auto [jj, yy] : visit_ptr->obs)
      if (jj == j)
        throw DataError("line " + std::to_string(lineno) + ": duplicate response for subject " +
                        sid + " visit " + std::to_string(visit) + " item " +
                        std::to_string(item_id));
    visit_ptr->obs.emplace_back(j, y);
  }

  // order visits within subject by visit index
  for (SubjectData& s : data.subjects)
    std::sort(s.visits.begin(), s.visits.end(),
              [](const VisitData& a, const VisitData& b) { return a.visit < b.visit; });

  validate_dataset(spec, data);
  if (report != nullptr) {
    report->rows = rows;
    report->missing = data.n_missing;
    report->n_subjects = data.n_subjects();
    std::set<int> items_seen;
    for (const SubjectData& s : data.subjects)
      for (const VisitData& v : s.visits)
        for (auto [j, y] : v.obs) items_seen.insert(j);
    report->n_items_seen = static_cast<int>(items_seen.size());
    report->n_obs = data.n_obs();
    report->covariate_columns = cov_cols;
  }
  return data;
}

// ---------------------------------------------------------------------------
// key/value config format
// ---------------------------------------------------------------------------

namespace {

struct KvConfig {
  std::map<std::string, std::string> scalars;
  std::map<std::string, std::vector<std::string>> arrays;
  std::map<std::string, long> lines;

  bool has(const std::string& key) const {
    return scalars.count(key) > 0 || arrays.count(key) > 0;
  }
  std::string get(const std::string& key) const {
    const auto it = scalars.find(key);
    if (it == scalars.end()) throw ParseError("missing config key: " + key);
    return it->second;
  }
  std::string get_or(const std::string& key, const std::string& fallback) const {
    const auto it = scalars.find(key);
    return it == scalars.end() ? fallback : it->second;
  }
  const std::vector<std::string>& get_array(const std::string& key) const {
    const auto it = arrays.find(key);
    if (it == arrays.end()) throw ParseError("missing config array: " + key);
    return it->second;
  }
};

KvConfig parse_kv(std::istream& in) {
  KvConfig cfg;
  std::string line;
  long lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    const std::size_t hash = line.find('#');
    if (hash != std::string::npos) line = line.substr(0, hash);
    line = trim(line);
    if (line.empty()) continue;
    const std::size_t eq = line.find('=');
    if (eq == std::string::npos) throw ParseError("expected 'key = value'", lineno);
    const std::string key = trim(line.substr(0, eq));
    const std::string value = trim(line.substr(eq + 1));
    if (key.empty()) throw ParseError("empty key", lineno);
    if (cfg.has(key)) throw ParseError("duplicate key: " + key, lineno);
    cfg.lines[key] = lineno;
    if (!value.empty() && value.front() == '[') {
      if (value.back() != ']') throw ParseError("unterminated array", lineno);
      const std::string body = value.substr(1, value.size() - 2);
      std::vector<std::string> items;
      if (!trim(body).empty())
        for (const std::string& cell : split(body, ',')) items.push_back(trim(cell));
      cfg.arrays[key] = std::move(items);
    } else {
      cfg.scalars[key] = value;
    }
  }
  return cfg;
}

ItemInfo parse_item_entry(const std::string& entry, long line) {
  // "<id>:<categories>" with optional trailing '!' marking a reversed item
  std::string body = entry;
  ItemInfo item;
  if (!body.empty() && body.back() == '!') {
    item.reversed = true;
    body.pop_back();
  }
  const std::vector<std::string> parts = split(body, ':');
  if (parts.size() != 2) throw ParseError("item entry must be id:categories, got '" + entry + "'",
                                          line);
  item.id = static_cast<int>(parse_integer(parts[0], line));
  item.n_categories = static_cast<int>(parse_integer(parts[1], line));
  return item;
}

FixedEffect parse_fixed_entry(const std::string& entry) {
  FixedEffect fe;
  fe.name = entry;
  if (entry == "time") {
    fe.with_time = true;
    return fe;
  }
  const std::size_t colon = entry.find(':');
  if (colon == std::string::npos) {
    fe.column = entry;
    return fe;
  }
  fe.column = entry.substr(0, colon);
  if (entry.substr(colon + 1) != "time")
    throw ParseError("fixed effect interactions are written column:time, got '" + entry + "'");
  fe.with_time = true;
  return fe;
}

}  // namespace

ModelSpec parse_model_spec(std::istream& in) {
  const KvConfig cfg = parse_kv(in);
  ModelSpec spec;
  spec.family = parse_family(cfg.get("family"));
  spec.kind = parse_cdf(cfg.get("cdf"));
  const std::string design = cfg.get_or("item_design", "per_item");
  if (design == "per_item")
    spec.item_design = ItemDesign::per_item_thresholds;
  else if (design == "rating_scale")
    spec.item_design = ItemDesign::rating_scale;
  else
    throw ParseError("item_design must be per_item or rating_scale");
  for (const std::string& entry : cfg.get_array("items"))
    spec.items.push_back(parse_item_entry(entry, cfg.lines.count("items") ? cfg.lines.at("items")
                                                                          : 0));
  if (cfg.arrays.count("fixed") > 0)
    for (const std::string& entry : cfg.get_array("fixed"))
      spec.fixed_effects.push_back(parse_fixed_entry(entry));
  const std::string random = cfg.get_or("random", "intercept");
  if (random == "intercept")
    spec.random_effects = RandomEffects::intercept_only;
  else if (random == "intercept_slope")
    spec.random_effects = RandomEffects::intercept_and_slope;
  else
    throw ParseError("random must be intercept or intercept_slope");
  const std::string cov = cfg.get_or("covariance", "diagonal");
  if (cov == "diagonal")
    spec.random_cov = RandomCov::diagonal;
  else if (cov == "unstructured")
    spec.random_cov = RandomCov::unstructured;
  else
    throw ParseError("covariance must be diagonal or unstructured");
  spec.validate();
  return spec;
}

ModelSpec load_model_spec(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ParseError("cannot open spec file: " + path);
  return parse_model_spec(in);
}

Scenario parse_scenario(std::istream& in) {
  const KvConfig cfg = parse_kv(in);
  Scenario sc;
  sc.generator = parse_family(cfg.get("generator"));
  sc.kind = parse_cdf(cfg.get_or("cdf", "logistic"));
  if (cfg.has("delta")) {
    const std::string which = cfg.get("delta");
    if (which == "near")
      sc.delta = delta_near();
    else if (which == "far")
      sc.delta = delta_far();
    else
      throw ParseError("delta must be near or far (or give delta_item<k> arrays)");
  } else {
    for (int j = 1;; ++j) {
      const std::string key = "delta_item" + std::to_string(j);
      if (cfg.arrays.count(key) == 0) break;
      std::vector<double> dj;
      for (const std::string& cell : cfg.get_array(key)) dj.push_back(parse_number(cell, 0));
      sc.delta.push_back(std::move(dj));
    }
    if (sc.delta.empty()) throw ParseError("no thresholds: give delta or delta_item1, ...");
  }
  sc.beta1 = parse_number(cfg.get_or("beta1", "0"), 0);
  sc.sigma0_sq = parse_number(cfg.get_or("sigma0_sq", "1.5"), 0);
  sc.sigma1_sq = parse_number(cfg.get_or("sigma1_sq", "0"), 0);
  sc.n_subjects = static_cast<int>(parse_integer(cfg.get_or("subjects", "300"), 0));
  if (cfg.arrays.count("times") > 0) {
    sc.times.clear();
    for (const std::string& cell : cfg.get_array("times"))
      sc.times.push_back(parse_number(cell, 0));
  }
  sc.replications = static_cast<int>(parse_integer(cfg.get_or("replications", "100"), 0));
  sc.seed = static_cast<std::uint64_t>(parse_integer(cfg.get_or("seed", "1"), 0));
  if (cfg.arrays.count("fit") > 0) {
    sc.fit_classes.clear();
    for (const std::string& cell : cfg.get_array("fit"))
      sc.fit_classes.push_back(parse_model_class(cell));
  }
  sc.name = cfg.get_or("name", "scenario");
  sc.validate();
  return sc;
}

std::vector<Scenario> load_manifest(const std::string& path_or_builtin, int replications_override,
                                    long long seed_override) {
  std::vector<Scenario> scenarios;
  if (path_or_builtin == "table4") {
    scenarios = builtin_table4(replications_override > 0 ? replications_override : 100,
                               seed_override >= 0 ? static_cast<std::uint64_t>(seed_override) : 1);
    return scenarios;
  }
  if (path_or_builtin == "table5") {
    scenarios = builtin_table5(replications_override > 0 ? replications_override : 100,
                               seed_override >= 0 ? static_cast<std::uint64_t>(seed_override) : 1);
    return scenarios;
  }
  std::ifstream in(path_or_builtin);
  if (!in) throw ParseError("cannot open manifest: " + path_or_builtin);
  Scenario sc = parse_scenario(in);
  if (replications_override > 0) sc.replications = replications_override;
  if (seed_override >= 0) sc.seed = static_cast<std::uint64_t>(seed_override);
  scenarios.push_back(std::move(sc));
  return scenarios;
}

// ---------------------------------------------------------------------------
// writers
// ---------------------------------------------------------------------------

namespace {

std::ofstream open_out(const std::string& path) {
  std::ofstream out(path, std::ios::binary);  // binary: no platform newline translation
  if (!out) throw Error("cannot write " + path);
  return out;
}

}  // namespace

void write_estimates_csv(const std::string& path, const FitResult& fit) {
  std::ofstream out = open_out(path);
  out << "parameter,estimate,se,z,p\n";
  const ModelSpec& spec = fit.spec;
  for (std::size_t p = 0; p < spec.fixed_effects.size(); ++p) {
    out << spec.fixed_effects[p].name << ',' << format_double(fit.params.beta[p]);
    if (fit.has_se())
      out << ',' << format_double(fit.beta_se[p]) << ',' << format_double(fit.beta_z[p]) << ','
          << format_double(fit.beta_p[p]);
    else
      out << ",,,";
    out << '\n';
  }
  if (spec.item_design == ItemDesign::per_item_thresholds) {
    for (int j = 0; j < spec.n_items(); ++j) {
      const std::vector<double>& delta = fit.params.items.thresholds[j];
      for (std::size_t m = 0; m < delta.size(); ++m) {
        out << "item" << spec.items[j].id << "_delta" << (m + 1) << ','
            << format_double(delta[m]);
        if (fit.has_se())
          out << ',' << format_double(fit.threshold_se[j][m]) << ",,";
        else
          out << ",,,";
        out << '\n';
      }
    }
  } else {
    const std::vector<double>& delta = fit.params.items.thresholds[0];
    for (std::size_t m = 0; m < delta.size(); ++m) {
      out << "delta" << (m + 1) << ',' << format_double(delta[m]);
      if (fit.has_se())
        out << ',' << format_double(fit.threshold_se[0][m]) << ",,";
      else
        out << ",,,";
      out << '\n';
    }
    for (int j = 1; j < spec.n_items(); ++j) {
      out << "item" << spec.items[j].id << "_tau," << format_double(fit.params.items.shift[j]);
      if (fit.has_se())
        out << ',' << format_double(fit.shift_se[j]) << ",,";
      else
        out << ",,,";
      out << '\n';
    }
  }
  for (std::size_t c = 0; c < fit.cov_estimates.size(); ++c) {
    out << fit.cov_names[c] << ',' << format_double(fit.cov_estimates[c]);
    if (fit.has_se())
      out << ',' << format_double(fit.cov_se[c]) << ",,";
    else
      out << ",,,";
    out << '\n';
  }
}

void write_fit_summary_json(const std::string& path, const FitResult& fit, int nodes) {
  std::ofstream out = open_out(path);
  out << "{\n";
  out << "  \"loglik\": " << format_double(fit.loglik) << ",\n";
  out << "  \"bic\": " << format_double(fit.bic) << ",\n";
  out << "  \"n_free_params\": " << fit.n_free_params << ",\n";
  out << "  \"n_subjects\": " << fit.n_subjects << ",\n";
  out << "  \"nodes_per_dimension\": " << nodes << ",\n";
  out << "  \"converged\": " << (fit.diag.converged ? "true" : "false") << ",\n";
  out << "  \"iterations\": " << fit.diag.iterations << ",\n";
  out << "  \"n_evals\": " << fit.diag.n_evals << ",\n";
  out << "  \"rel_grad\": " << format_double(fit.diag.rel_grad) << ",\n";
  out << "  \"clamp_count\": " << fit.diag.clamp_count << ",\n";
  out << "  \"adaptive_failures\": " << fit.diag.adaptive_failures << "\n";
  out << "}\n";
}

void write_probability_decomposition_csv(const std::string& path, const FitResult& fit,
                                         const Dataset& data) {
  std::ofstream out = open_out(path);
  out << "kind,item,profile,time,theta,category,prob\n";
  const ModelSpec& spec = fit.spec;

  auto emit_item_probs = [&](const std::string& kind, int j, const std::string& profile,
                             const std::string& time_str, double theta) {
    const std::vector<double> eta = item_predictors(spec, fit.params.items, j, theta);
    const CategoryDistribution probs = category_probs(spec.family, spec.kind, eta);
    for (std::size_t m = 0; m < probs.size(); ++m)
      out << kind << ',' << spec.items[j].id << ',' << profile << ',' << time_str << ','
          << format_double(theta) << ',' << m << ',' << format_double(probs[m]) << '\n';
  };

  // category probabilities across the latent scale
  for (int j = 0; j < spec.n_items(); ++j)
    for (int g = -80; g <= 80; ++g)
      emit_item_probs("theta_grid", j, "", "", 0.05 * g);

  // fitted trajectories: distinct covariate profiles at the population level
  std::vector<std::vector<double>> profiles;
  {
    std::vector<double> row(spec.fixed_effects.size(), 0.0);
    profiles.push_back(row);
    // binary covariate columns produce one profile per value
    for (std::size_t p = 0; p < spec.fixed_effects.size(); ++p) {
      if (spec.fixed_effects[p].column.empty()) continue;
      std::vector<std::vector<double>> expanded;
      for (const std::vector<double>& base : profiles)
        for (double v : {0.0, 1.0}) {
          std::vector<double> r = base;
          // all effects referencing the same column move together
          for (std::size_t q = 0; q < spec.fixed_effects.size(); ++q)
            if (spec.fixed_effects[q].column == spec.fixed_effects[p].column) r[q] = v;
          expanded.push_back(r);
        }
      std::sort(expanded.begin(), expanded.end());
      expanded.erase(std::unique(expanded.begin(), expanded.end()), expanded.end());
      profiles = std::move(expanded);
    }
  }
  std::vector<double> times;
  for (const SubjectData& s : data.subjects)
    for (const VisitData& v : s.visits) times.push_back(v.time);
  std::sort(times.begin(), times.end());
  times.erase(std::unique(times.begin(), times.end()), times.end());
  const double t0 = times.empty() ? 0.0 : times.front();

  for (const std::vector<double>& prof : profiles) {
    std::string label = "baseline";
    for (std::size_t p = 0; p < prof.size(); ++p) {
      if (spec.fixed_effects[p].column.empty()) continue;
      label = spec.fixed_effects[p].column + "=" + format_double(prof[p]);
      break;
    }
    for (double t : times) {
      std::array<double, 2> xi{0.0, 0.0};
      const double theta = latent_trait(
          spec, std::span<const double>(fit.params.beta.data(), fit.params.beta.size()),
          std::span<const double>(xi.data(), spec.n_random()), prof, t, t0);
      for (int j = 0; j < spec.n_items(); ++j)
        emit_item_probs("profile", j, label, format_double(t), theta);
    }
  }
}

void write_selection_summary_csv(const std::string& path,
                                 const std::vector<SelectionSummary>& summaries) {
  std::ofstream out = open_out(path);
  out << "scenario,generator,delta_set,beta1,sigma1_sq,replications,class,"
         "converged,failures,m1_count,m2_count,m1_freq,m2_freq\n";
  for (const SelectionSummary& s : summaries) {
    const Scenario& sc = s.scenario;
    const std::string delta_set = sc.delta == delta_near() ? "near"
                                  : sc.delta == delta_far() ? "far"
                                                            : "custom";
    for (const ClassSummary& c : s.classes) {
      out << sc.name << ',' << family_name(sc.generator) << ',' << delta_set << ','
          << format_double(sc.beta1) << ',' << format_double(sc.sigma1_sq) << ','
          << sc.replications << ',' << model_class_name(c.model_class) << ',' << c.converged()
          << ',' << c.failures << ',' << c.m1 << ',' << c.m2 << ','
          << format_double(c.m1_freq()) << ',' << format_double(c.m2_freq()) << '\n';
    }
  }
}

void write_table_layout_csv(const std::string& path,
                            const std::vector<SelectionSummary>& summaries, bool m1) {
  // collect the distinct generator cells (column groups) and settings (rows)
  std::vector<std::string> groups;
  std::vector<std::pair<double, double>> settings;  // (sigma1_sq, beta1)
  auto group_key = [](const Scenario& sc) {
    const std::string delta_set = sc.delta == delta_near() ? "near"
                                  : sc.delta == delta_far() ? "far"
                                                            : "custom";
    return family_name(sc.generator) + "_" + delta_set;
  };
  for (const SelectionSummary& s : summaries) {
    const std::string g = group_key(s.scenario);
    if (std::find(groups.begin(), groups.end(), g) == groups.end()) groups.push_back(g);
    const std::pair<double, double> row{s.scenario.sigma1_sq, s.scenario.beta1};
    if (std::find(settings.begin(), settings.end(), row) == settings.end())
      settings.push_back(row);
  }

  std::ofstream out = open_out(path);
  out << "sigma1_sq,beta1";
  for (const std::string& g : groups)
    for (const char* cls : {"lmm", "adjacent", "cumulative"})
      out << ',' << g << '_' << cls;
  out << ",failures\n";
  for (const auto& [s1, b1] : settings) {
    out << format_double(s1) << ',' << format_double(b1);
    long failures = 0;
    for (const std::string& g : groups) {
      const SelectionSummary* cell = nullptr;
      for (const SelectionSummary& s : summaries)
        if (group_key(s.scenario) == g && s.scenario.sigma1_sq == s1 && s.scenario.beta1 == b1)
          cell = &s;
      for (ModelClass cls : {ModelClass::lmm, ModelClass::adjacent, ModelClass::cumulative}) {
        out << ',';
        if (cell == nullptr) continue;
        for (const ClassSummary& c : cell->classes)
          if (c.model_class == cls) {
            out << format_double(m1 ? c.m1_freq() : c.m2_freq());
            failures += c.failures;
          }
      }
    }
    out << ',' << failures << "\n";
  }
}

void write_scores_csv(const std::string& path, const ScoreSeries& scores) {
  std::ofstream out = open_out(path);
  out << (scores.has_group ? "subject,visit,time,score,group\n" : "subject,visit,time,score\n");
  for (const ScoreSubject& s : scores.subjects)
    for (std::size_t v = 0; v < s.times.size(); ++v) {
      out << s.id << ',' << v << ',' << format_double(s.times[v]) << ','
          << format_double(s.scores[v]);
      if (scores.has_group) out << ',' << format_double(s.group);
      out << '\n';
    }
}

void write_cdf_curves_csv(const std::string& path, double eta_min, double eta_max, double step) {
  std::ofstream out = open_out(path);
  out << "eta,logistic,gaussian,gumbel_max,gumbel_min\n";
  const int n = static_cast<int>(std::round((eta_max - eta_min) / step));
  for (int i = 0; i <= n; ++i) {
    const double eta = eta_min + i * step;
    out << format_double(eta);
    for (CdfKind kind : {CdfKind::logistic, CdfKind::gaussian, CdfKind::gumbel_max,
                         CdfKind::gumbel_min})
      out << ',' << format_double(cdf_eval(kind, eta));
    out << '\n';
  }
}

void write_discrimination_curves_csv(const std::string& path, const std::vector<double>& alphas,
                                     double theta_min, double theta_max, double step) {
  std::ofstream out = open_out(path);
  out << "theta,alpha,value\n";
  const int n = static_cast<int>(std::round((theta_max - theta_min) / step));
  for (double alpha : alphas)
    for (int i = 0; i <= n; ++i) {
      const double theta = theta_min + i * step;
      out << format_double(theta) << ',' << format_double(alpha) << ','
          << format_double(cdf_eval(CdfKind::logistic, alpha * theta)) << '\n';
    }
}

}  // namespace irtmix
