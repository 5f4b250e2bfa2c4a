#include "drpool/io.h"

#include <yaml-cpp/yaml.h>

#include <charconv>
#include <chrono>
#include <cstdio>
#include <fstream>
#include <set>
#include <sstream>

#include "drpool/serialize.h"

namespace drpool {

using nlohmann::json;

int exit_code_for(const std::exception& e) {
  if (dynamic_cast<const ValidationError*>(&e) != nullptr) return kExitValidation;
  if (dynamic_cast<const SolverError*>(&e) != nullptr) return kExitSolver;
  if (dynamic_cast<const IoError*>(&e) != nullptr) return kExitIo;
  if (dynamic_cast<const fs::filesystem_error*>(&e) != nullptr) return kExitIo;
  return kExitValidation;
}

std::string format_double(double value) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.17g", value);
  return buf;
}

// ---------------------------------------------------------------------------
// CSV

namespace {

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return "";
  const auto e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

std::vector<std::string> split(const std::string& line) {
  std::vector<std::string> out;
  std::string cell;
  std::istringstream in(line);
  while (std::getline(in, cell, ',')) out.push_back(trim(cell));
  if (!line.empty() && line.back() == ',') out.emplace_back();
  return out;
}

struct CsvRow {
  std::size_t line = 0;
  std::vector<std::string> cells;
};

struct Csv {
  std::string name;
  std::vector<std::string> header;
  std::vector<CsvRow> rows;
};

Csv read_csv(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open " + path.string());
  Csv csv;
  csv.name = path.filename().string();
  std::string line;
  std::size_t number = 0;
  while (std::getline(in, line)) {
    ++number;
    if (trim(line).empty()) continue;
    if (csv.header.empty()) {
      csv.header = split(line);
      continue;
    }
    CsvRow row{number, split(line)};
    if (row.cells.size() != csv.header.size()) {
      throw ValidationError(csv.name + " line " + std::to_string(number) + ": expected " +
                            std::to_string(csv.header.size()) + " fields, got " +
                            std::to_string(row.cells.size()));
    }
    csv.rows.push_back(std::move(row));
  }
  if (in.bad()) throw IoError("read error on " + path.string());
  if (csv.header.empty()) throw ValidationError(csv.name + ": missing header");
  return csv;
}

double parse_number(const Csv& csv, const CsvRow& row, std::size_t col) {
  const std::string& text = row.cells[col];
  double value = 0.0;
  const auto res = std::from_chars(text.data(), text.data() + text.size(), value);
  if (text.empty() || res.ec != std::errc() || res.ptr != text.data() + text.size() ||
      !std::isfinite(value)) {
    throw ValidationError(csv.name + " line " + std::to_string(row.line) + ": column '" +
                          csv.header[col] + "': '" + text + "' is not a finite number");
  }
  return value;
}

// Returns p: the header must read id, x_1..x_p, then `tail`.
std::size_t check_header(const Csv& csv, const std::vector<std::string>& tail,
                         std::size_t optional_tail) {
  const auto& h = csv.header;
  if (h.empty() || h.front() != "id") {
    throw ValidationError(csv.name + ": first column must be 'id'");
  }
  std::size_t p = 0;
  while (1 + p < h.size() && h[1 + p] == "x_" + std::to_string(p + 1)) ++p;
  const std::size_t rest = h.size() - 1 - p;
  if (rest + optional_tail < tail.size() || rest > tail.size()) {
    std::string expect = "id, x_1..x_p";
    for (const auto& t : tail) expect += ", " + t;
    throw ValidationError(csv.name + ": header must be " + expect);
  }
  for (std::size_t k = 0; k < rest; ++k) {
    if (h[1 + p + k] != tail[k]) {
      throw ValidationError(csv.name + ": unexpected column '" + h[1 + p + k] + "'");
    }
  }
  return p;
}

Vector covariates(const Csv& csv, const CsvRow& row, std::size_t p) {
  Vector x(static_cast<Eigen::Index>(p + 1));
  x[0] = 1.0;
  for (std::size_t j = 0; j < p; ++j) x[static_cast<Eigen::Index>(j + 1)] = parse_number(csv, row, 1 + j);
  return x;
}

void write_header(std::ostream& out, Eigen::Index dim) {
  out << "id";
  for (Eigen::Index j = 1; j < dim; ++j) out << ",x_" << j;
}

void write_covariates(std::ostream& out, std::size_t id, const Vector& x) {
  out << id;
  for (Eigen::Index j = 1; j < x.size(); ++j) out << ',' << format_double(x[j]);
}

std::ofstream open_output(const fs::path& path) {
  std::ofstream out(path);
  if (!out) throw IoError("cannot write " + path.string());
  return out;
}

void finish(std::ofstream& out, const fs::path& path) {
  out.flush();
  if (!out) throw IoError("write error on " + path.string());
}

}  // namespace

ObservedData read_samples(const fs::path& sample_a, const fs::path& sample_b,
                          std::size_t n_population, const DesignDescriptor& design) {
  const Csv a = read_csv(sample_a);
  const Csv b = read_csv(sample_b);
  const std::size_t pa = check_header(a, {"pi_a", "y"}, 1);
  const std::size_t pb = check_header(b, {"y"}, 0);
  if (pa != pb) {
    throw ValidationError("dimension mismatch: " + a.name + " has " + std::to_string(pa) +
                          " covariates, " + b.name + " has " + std::to_string(pb));
  }
  const bool a_has_y = a.header.back() == "y";

  ObservedData obs;
  obs.n_population = n_population;
  obs.design = design;
  for (const auto& row : a.rows) {
    SampleAUnit unit;
    unit.unit.x = covariates(a, row, pa);
    unit.pi_a = parse_number(a, row, 1 + pa);
    if (!(unit.pi_a > 0.0 && unit.pi_a <= 1.0)) {
      throw ValidationError(a.name + " line " + std::to_string(row.line) + ": pi_a = " +
                            row.cells[1 + pa] + " outside (0, 1]");
    }
    if (a_has_y && !row.cells[2 + pa].empty()) unit.unit.y = parse_number(a, row, 2 + pa);
    obs.sample_a.push_back(std::move(unit));
  }
  for (const auto& row : b.rows) {
    UnitRecord unit;
    unit.x = covariates(b, row, pb);
    if (row.cells[1 + pb].empty()) {
      throw ValidationError(b.name + " line " + std::to_string(row.line) + ": missing outcome y");
    }
    unit.y = parse_number(b, row, 1 + pb);
    obs.sample_b.push_back(std::move(unit));
  }
  return validate(std::move(obs));
}

void write_sample_a(const fs::path& path, const ObservedData& observed,
                    const std::vector<std::size_t>& ids) {
  auto out = open_output(path);
  const bool with_y = observed.has_sample_a_outcome();
  write_header(out, static_cast<Eigen::Index>(observed.dimension()));
  out << ",pi_a" << (with_y ? ",y" : "") << '\n';
  for (std::size_t i = 0; i < observed.sample_a.size(); ++i) {
    const auto& row = observed.sample_a[i];
    write_covariates(out, ids.empty() ? i + 1 : ids[i], row.unit.x);
    out << ',' << format_double(row.pi_a);
    if (with_y) out << ',' << format_double(*row.unit.y);
    out << '\n';
  }
  finish(out, path);
}

void write_sample_b(const fs::path& path, const ObservedData& observed,
                    const std::vector<std::size_t>& ids) {
  auto out = open_output(path);
  write_header(out, static_cast<Eigen::Index>(observed.dimension()));
  out << ",y\n";
  for (std::size_t i = 0; i < observed.sample_b.size(); ++i) {
    const auto& row = observed.sample_b[i];
    write_covariates(out, ids.empty() ? i + 1 : ids[i], row.x);
    out << ',' << format_double(*row.y) << '\n';
  }
  finish(out, path);
}

// ---------------------------------------------------------------------------
// Configuration

namespace {

void check_keys(const YAML::Node& node, const std::set<std::string>& allowed,
                const std::string& where) {
  if (!node.IsMap()) throw ValidationError("config: '" + where + "' must be a mapping");
  for (const auto& kv : node) {
    const auto key = kv.first.as<std::string>();
    if (!allowed.count(key)) {
      throw ValidationError("config: unknown key '" + key + "' in " + where);
    }
  }
}

template <typename T>
T get(const YAML::Node& node, const std::string& key, const std::string& where) {
  try {
    return node[key].as<T>();
  } catch (const YAML::Exception&) {
    throw ValidationError("config: invalid value for '" + where + "." + key + "'");
  }
}

template <typename T>
void maybe(const YAML::Node& node, const std::string& key, const std::string& where, T& out) {
  if (node[key]) out = get<T>(node, key, where);
}

Vector get_vector(const YAML::Node& node, const std::string& key, const std::string& where) {
  const auto v = get<std::vector<double>>(node, key, where);
  return Eigen::Map<const Vector>(v.data(), static_cast<Eigen::Index>(v.size()));
}

fs::path resolve(const fs::path& base, const std::string& p) {
  const fs::path path(p);
  return path.is_absolute() || base.empty() ? path : base / path;
}

EstimatorTarget parse_estimator_target(const YAML::Node& n) {
  check_keys(n, {"estimator", "regime"}, "estimators");
  EstimatorTarget t;
  t.kind = parse_estimator_kind(get<std::string>(n, "estimator", "estimators"));
  if (n["regime"]) {
    t.regime = parse_regime(get<std::string>(n, "regime", "estimators"));
  } else if (!is_probability_kind(t.kind)) {
    throw ValidationError("config: estimator " + to_string(t.kind) + " needs a regime");
  }
  if (!is_probability_kind(t.kind) && !is_supported(t.kind, t.regime)) {
    throw ValidationError("config: unsupported estimator/regime " + to_string(t.kind) + "/" +
                          to_string(t.regime));
  }
  return t;
}

PairTarget parse_pair_target(const YAML::Node& n, const std::string& where) {
  check_keys(n, {"estimator", "regime", "partner"}, where);
  PairTarget t;
  t.kind = parse_estimator_kind(get<std::string>(n, "estimator", where));
  t.regime = parse_regime(get<std::string>(n, "regime", where));
  t.partner = parse_estimator_kind(get<std::string>(n, "partner", where));
  if (!is_supported(t.kind, t.regime) || !is_probability_kind(t.partner)) {
    throw ValidationError("config: unsupported " + where + " entry " + to_string(t.kind) + "/" +
                          to_string(t.regime) + " with " + to_string(t.partner));
  }
  return t;
}

template <typename T, typename F>
std::vector<T> parse_list(const YAML::Node& node, const std::string& key, F parse) {
  std::vector<T> out;
  const YAML::Node list = node[key];
  if (!list.IsSequence()) throw ValidationError("config: '" + key + "' must be a list");
  for (const auto& item : list) out.push_back(parse(item));
  return out;
}

CovariateSpec parse_covariate(const YAML::Node& n) {
  check_keys(n, {"distribution", "mean", "sd", "lower", "upper", "p"}, "scenario.covariates");
  CovariateSpec c;
  const auto dist = get<std::string>(n, "distribution", "scenario.covariates");
  const std::string where = "scenario.covariates";
  if (dist == "normal") {
    c.distribution = CovariateSpec::Distribution::kNormal;
    c.first = 0.0;
    c.second = 1.0;
    maybe(n, "mean", where, c.first);
    maybe(n, "sd", where, c.second);
  } else if (dist == "uniform") {
    c.distribution = CovariateSpec::Distribution::kUniform;
    c.first = 0.0;
    c.second = 1.0;
    maybe(n, "lower", where, c.first);
    maybe(n, "upper", where, c.second);
  } else if (dist == "bernoulli") {
    c.distribution = CovariateSpec::Distribution::kBernoulli;
    c.first = get<double>(n, "p", where);
  } else {
    throw ValidationError("config: unknown covariate distribution '" + dist + "'");
  }
  return c;
}

void parse_scenario(const YAML::Node& n, ScenarioConfig& s) {
  check_keys(n,
             {"name", "n_population", "replicates", "redraw_outcomes", "threads",
              "max_draw_attempts", "max_failure_fraction", "covariates", "outcome", "selection",
              "sample_a", "misspecification"},
             "scenario");
  const std::string w = "scenario";
  maybe(n, "name", w, s.name);
  maybe(n, "n_population", w, s.n_population);
  maybe(n, "replicates", w, s.replicates);
  maybe(n, "redraw_outcomes", w, s.redraw_outcomes);
  maybe(n, "threads", w, s.threads);
  maybe(n, "max_draw_attempts", w, s.max_draw_attempts);
  maybe(n, "max_failure_fraction", w, s.max_failure_fraction);
  if (n["covariates"]) s.covariates = parse_list<CovariateSpec>(n, "covariates", parse_covariate);
  if (const auto o = n["outcome"]) {
    const std::string wo = "scenario.outcome";
    check_keys(o, {"family", "beta", "quadratic", "quadratic_column", "noise_variance",
                   "noise_slope"}, wo);
    if (o["family"]) s.outcome.family = parse_outcome_family(get<std::string>(o, "family", wo));
    if (o["beta"]) s.outcome.beta = get_vector(o, "beta", wo);
    maybe(o, "quadratic", wo, s.outcome.quadratic);
    maybe(o, "quadratic_column", wo, s.outcome.quadratic_column);
    maybe(o, "noise_variance", wo, s.outcome.noise_variance);
    maybe(o, "noise_slope", wo, s.outcome.noise_slope);
  }
  if (const auto sel = n["selection"]) {
    check_keys(sel, {"alpha"}, "scenario.selection");
    s.alpha = get_vector(sel, "alpha", "scenario.selection");
  }
  if (const auto a = n["sample_a"]) {
    const std::string wa = "scenario.sample_a";
    check_keys(a, {"design", "size", "size_link"}, wa);
    if (a["design"]) s.sample_a.kind = parse_design_kind(get<std::string>(a, "design", wa));
    maybe(a, "size", wa, s.sample_a.size);
    maybe(a, "size_link", wa, s.sample_a.size_link);
  }
  if (const auto m = n["misspecification"]) {
    const std::string wm = "scenario.misspecification";
    check_keys(m, {"outcome_wrong", "selection_wrong", "omit_columns"}, wm);
    maybe(m, "outcome_wrong", wm, s.misspecification.outcome_wrong);
    maybe(m, "selection_wrong", wm, s.misspecification.selection_wrong);
    maybe(m, "omit_columns", wm, s.misspecification.omit_columns);
  }
}

}  // namespace

RunConfig parse_run_config(const std::string& text, const fs::path& base_dir) {
  YAML::Node root;
  try {
    root = YAML::Load(text);
  } catch (const YAML::Exception& e) {
    throw ValidationError(std::string("config: ") + e.what());
  }
  check_keys(root,
             {"mode", "seed", "level", "output", "data", "model", "estimators", "covariances",
              "pooled", "scenario"},
             "the top level");
  RunConfig c;
  c.config_text = text;
  const std::string w = "config";
  const auto mode = root["mode"] ? get<std::string>(root, "mode", w) : std::string("estimate");
  if (mode == "estimate") {
    c.mode = RunMode::kEstimate;
  } else if (mode == "simulate") {
    c.mode = RunMode::kSimulate;
  } else {
    throw ValidationError("config: mode must be 'estimate' or 'simulate'");
  }
  maybe(root, "level", w, c.level);
  if (!(c.level > 0.0 && c.level < 1.0)) throw ValidationError("config: level outside (0, 1)");
  if (root["output"]) c.output = resolve(base_dir, get<std::string>(root, "output", w));

  if (const auto m = root["model"]) {
    check_keys(m, {"family", "method", "outcome_columns", "selection_columns", "sigma2"}, "model");
    if (m["family"]) c.model.family = parse_outcome_family(get<std::string>(m, "family", "model"));
    if (m["method"]) c.model.method = parse_fit_method(get<std::string>(m, "method", "model"));
    maybe(m, "outcome_columns", "model", c.model.outcome_columns);
    maybe(m, "selection_columns", "model", c.model.selection_columns);
    if (m["sigma2"]) c.sigma2 = parse_sigma2_model(get<std::string>(m, "sigma2", "model"));
  }
  if (root["estimators"]) {
    c.estimators = parse_list<EstimatorTarget>(root, "estimators", parse_estimator_target);
  }
  auto pairs = [&](const std::string& key) {
    return parse_list<PairTarget>(root, key,
                                  [&](const YAML::Node& n) { return parse_pair_target(n, key); });
  };
  if (root["covariances"]) c.covariances = pairs("covariances");
  if (root["pooled"]) c.pooled = pairs("pooled");

  if (c.mode == RunMode::kEstimate) {
    if (root["scenario"]) throw ValidationError("config: 'scenario' is only used in simulate mode");
    const auto d = root["data"];
    if (!d) throw ValidationError("config: estimate mode needs a 'data' section");
    check_keys(d, {"sample_a", "sample_b", "n_population", "design"}, "data");
    c.sample_a = resolve(base_dir, get<std::string>(d, "sample_a", "data"));
    c.sample_b = resolve(base_dir, get<std::string>(d, "sample_b", "data"));
    c.n_population = get<std::size_t>(d, "n_population", "data");
    if (const auto des = d["design"]) {
      check_keys(des, {"kind", "sample_size"}, "data.design");
      c.design.kind = parse_design_kind(get<std::string>(des, "kind", "data.design"));
      maybe(des, "sample_size", "data.design", c.design.sample_size);
    }
    if (c.estimators.empty() && c.covariances.empty() && c.pooled.empty()) {
      throw ValidationError("config: nothing requested (estimators, covariances, pooled)");
    }
    for (const auto& t : c.estimators) {
      if (t.regime == Regime::kKHDoublyRobust && !is_probability_kind(t.kind) &&
          c.model.method != FitMethod::kKimHaziza) {
        throw ValidationError("config: regime kh_doubly_robust needs model.method kim_haziza");
      }
    }
  } else {
    if (root["data"]) throw ValidationError("config: 'data' is only used in estimate mode");
    if (!c.model.outcome_columns.empty() || !c.model.selection_columns.empty()) {
      throw ValidationError(
          "config: simulate mode sets analysis covariates through scenario.misspecification");
    }
    ScenarioConfig& s = c.scenario;
    s = default_scenario();
    if (root["scenario"]) parse_scenario(root["scenario"], s);
    maybe(root, "seed", w, s.seed);
    s.level = c.level;
    s.analysis_family = c.model.family;
    s.analysis_method = c.model.method;
    s.sigma2 = c.sigma2;
    if (root["estimators"]) s.estimators = c.estimators;
    if (root["covariances"]) s.covariances = c.covariances;
    if (root["pooled"]) s.pooled = c.pooled;
    s.check();
  }
  return c;
}

RunConfig load_run_config(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open config " + path.string());
  std::stringstream buf;
  buf << in.rdbuf();
  RunConfig c = parse_run_config(buf.str(), path.parent_path());
  c.config_path = path;
  return c;
}

json scenario_to_json(const ScenarioConfig& s) {
  json covs = json::array();
  for (const auto& c : s.covariates) {
    switch (c.distribution) {
      case CovariateSpec::Distribution::kNormal:
        covs.push_back({{"distribution", "normal"}, {"mean", c.first}, {"sd", c.second}});
        break;
      case CovariateSpec::Distribution::kUniform:
        covs.push_back({{"distribution", "uniform"}, {"lower", c.first}, {"upper", c.second}});
        break;
      case CovariateSpec::Distribution::kBernoulli:
        covs.push_back({{"distribution", "bernoulli"}, {"p", c.first}});
        break;
    }
  }
  auto targets = [](const std::vector<PairTarget>& v) {
    json out = json::array();
    for (const auto& t : v) {
      out.push_back({{"estimator", to_string(t.kind)},
                     {"regime", to_string(t.regime)},
                     {"partner", to_string(t.partner)}});
    }
    return out;
  };
  json est = json::array();
  for (const auto& t : s.estimators) {
    est.push_back({{"estimator", to_string(t.kind)},
                   {"regime", is_probability_kind(t.kind) ? "design" : to_string(t.regime)}});
  }
  return {
      {"name", s.name},
      {"n_population", s.n_population},
      {"seed", s.seed},
      {"replicates", s.replicates},
      {"redraw_outcomes", s.redraw_outcomes},
      {"level", s.level},
      {"max_draw_attempts", s.max_draw_attempts},
      {"max_failure_fraction", s.max_failure_fraction},
      {"covariates", covs},
      {"outcome",
       {{"family", to_string(s.outcome.family)},
        {"beta", vector_to_json(s.outcome.beta)},
        {"quadratic", s.outcome.quadratic},
        {"quadratic_column", s.outcome.quadratic_column},
        {"noise_variance", s.outcome.noise_variance},
        {"noise_slope", s.outcome.noise_slope}}},
      {"selection", {{"alpha", vector_to_json(s.alpha)}}},
      {"sample_a",
       {{"design", to_string(s.sample_a.kind)},
        {"size", s.sample_a.size},
        {"size_link", s.sample_a.size_link}}},
      {"misspecification",
       {{"outcome_wrong", s.misspecification.outcome_wrong},
        {"selection_wrong", s.misspecification.selection_wrong},
        {"omit_columns", s.misspecification.omit_columns}}},
      {"analysis_model", s.analysis_spec()},
      {"sigma2", to_string(s.sigma2)},
      {"estimators", est},
      {"covariances", targets(s.covariances)},
      {"pooled", targets(s.pooled)},
  };
}

// ---------------------------------------------------------------------------
// Estimate reports

EstimateReport estimate_report(const RunConfig& config, const ObservedData& observed) {
  EstimateReport r;
  r.n_population = observed.n_population;
  r.n_a = observed.sample_a.size();
  r.n_b = observed.sample_b.size();
  r.level = config.level;
  const Analysis analysis = Analysis::fit(observed, config.model);
  r.fit = analysis.nuisance();
  const VarianceOptions options{config.sigma2};
  const double z = normal_critical_value(config.level);

  for (const auto& t : config.estimators) {
    EstimateRow row;
    row.target = t;
    row.estimate = analysis.point(t.kind);
    if (is_probability_kind(t.kind)) {
      row.variance = var_prob_estimate(t.kind, analysis.frame(), analysis.provider());
    } else {
      row.detail = var_estimate(t.kind, t.regime, analysis, options);
      row.deltas = delta_set(t.kind, t.regime, analysis);
      row.variance = row.detail.total;
    }
    const double half = z * std::sqrt(row.variance);
    row.ci_low = row.estimate - half;
    row.ci_high = row.estimate + half;
    r.estimates.push_back(row);
  }
  for (const auto& t : config.covariances) {
    r.covariances.push_back({t, cov_estimate(t.kind, t.regime, t.partner, analysis)});
  }
  for (const auto& t : config.pooled) {
    r.pooled.emplace_back(t, pool(analysis, t.kind, t.regime, t.partner, config.level, options));
  }
  return r;
}

json to_json(const EstimateReport& r) {
  json est = json::array();
  for (const auto& row : r.estimates) {
    json j = {{"estimator", to_string(row.target.kind)},
              {"regime",
               is_probability_kind(row.target.kind) ? "design" : to_string(row.target.regime)},
              {"estimate", row.estimate},
              {"variance", row.variance},
              {"std_error", std::sqrt(row.variance)},
              {"ci_low", row.ci_low},
              {"ci_high", row.ci_high}};
    if (!is_probability_kind(row.target.kind)) {
      j["design_term"] = row.detail.design_term;
      j["selection_term"] = row.detail.selection_term;
      j["correction"] = row.detail.correction;
      j["floored"] = row.detail.floored;
      j["large_population_approximation"] = row.detail.large_population_approximation;
      j["formulas_derived_under_pml"] = row.detail.formulas_derived_under_pml;
    }
    if (row.deltas) {
      j["m_bar_hat"] = row.deltas->m_bar_hat;
      j["b_hat"] = row.deltas->b_hat ? vector_to_json(*row.deltas->b_hat) : json(nullptr);
      j["delta_m"] = vector_to_json(row.deltas->delta_m);
      j["delta_y"] = vector_to_json(row.deltas->delta_y);
    }
    est.push_back(j);
  }
  json cov = json::array();
  for (const auto& c : r.covariances) {
    cov.push_back({{"estimator", to_string(c.target.kind)},
                   {"regime", to_string(c.target.regime)},
                   {"partner", to_string(c.target.partner)},
                   {"covariance", c.covariance}});
  }
  json pooled = json::array();
  for (const auto& [t, p] : r.pooled) {
    pooled.push_back({{"estimator", to_string(t.kind)},
                      {"regime", to_string(t.regime)},
                      {"partner", to_string(t.partner)},
                      {"w", p.w},
                      {"pooled_estimate", p.pooled_estimate},
                      {"pooled_variance", p.pooled_variance},
                      {"ci_low", p.ci_low},
                      {"ci_high", p.ci_high},
                      {"inputs",
                       {{"est_p", p.inputs.est_p},
                        {"var_p", p.inputs.var_p},
                        {"est_dr", p.inputs.est_dr},
                        {"var_dr", p.inputs.var_dr},
                        {"cov", p.inputs.cov}}},
                      {"fallback_used", p.fallback_used},
                      {"weight_treated_as_known", p.weight_treated_as_known}});
  }
  return {{"tool", "drpool"},
          {"version", kVersion},
          {"n_population", r.n_population},
          {"n_a", r.n_a},
          {"n_b", r.n_b},
          {"level", r.level},
          {"model", r.fit.spec},
          {"fit",
           {{"alpha", vector_to_json(r.fit.alpha)},
            {"beta", vector_to_json(r.fit.beta)},
            {"iterations", r.fit.iterations},
            {"max_abs_score", r.fit.max_abs_score},
            {"tolerance", r.fit.tolerance},
            {"outcome_weighted", r.fit.outcome_weighted}}},
          {"estimates", est},
          {"covariances", cov},
          {"pooled", pooled}};
}

std::string to_text(const EstimateReport& r) {
  std::ostringstream out;
  char line[512];
  out << "drpool " << kVersion << " estimate report\n";
  out << "N = " << r.n_population << ", |A| = " << r.n_a << ", |B| = " << r.n_b
      << ", method = " << to_string(r.fit.spec.method)
      << ", family = " << to_string(r.fit.spec.family) << "\n";
  out << "alpha =";
  for (Eigen::Index i = 0; i < r.fit.alpha.size(); ++i) out << ' ' << format_double(r.fit.alpha[i]);
  out << "\nbeta  =";
  for (Eigen::Index i = 0; i < r.fit.beta.size(); ++i) out << ' ' << format_double(r.fit.beta[i]);
  out << "\n\n";
  const int pct = static_cast<int>(std::lround(100.0 * r.level));
  if (!r.estimates.empty()) {
    std::snprintf(line, sizeof line, "%-6s %-18s %24s %24s %24s %24s\n", "est", "regime",
                  "estimate", "variance", "ci_low", "ci_high");
    out << "Estimates (" << pct << "% normal intervals)\n" << line;
    for (const auto& row : r.estimates) {
      const std::string regime =
          is_probability_kind(row.target.kind) ? "design" : to_string(row.target.regime);
      std::snprintf(line, sizeof line, "%-6s %-18s %24s %24s %24s %24s%s\n",
                    to_string(row.target.kind).c_str(), regime.c_str(),
                    format_double(row.estimate).c_str(), format_double(row.variance).c_str(),
                    format_double(row.ci_low).c_str(), format_double(row.ci_high).c_str(),
                    row.detail.floored ? "  (variance floored at 0)" : "");
      out << line;
    }
    out << '\n';
  }
  if (!r.covariances.empty()) {
    out << "Covariances\n";
    for (const auto& c : r.covariances) {
      std::snprintf(line, sizeof line, "Cov(%s [%s], %s) = %s\n", to_string(c.target.kind).c_str(),
                    to_string(c.target.regime).c_str(), to_string(c.target.partner).c_str(),
                    format_double(c.covariance).c_str());
      out << line;
    }
    out << '\n';
  }
  for (const auto& [t, p] : r.pooled) {
    out << "Pooled " << to_string(t.partner) << " + " << to_string(t.kind) << " ["
        << to_string(t.regime) << "]\n";
    out << "  w         = " << format_double(p.w) << (p.fallback_used ? "  (fallback)" : "")
        << "\n  estimate  = " << format_double(p.pooled_estimate)
        << "\n  variance  = " << format_double(p.pooled_variance) << "  (w treated as known)"
        << "\n  interval  = [" << format_double(p.ci_low) << ", " << format_double(p.ci_high)
        << "]\n";
  }
  return out.str();
}

// ---------------------------------------------------------------------------
// Simulation summaries

std::string summary_csv(const MonteCarloSummary& s) {
  std::ostringstream out;
  out << "kind,estimator,regime,partner,replicates,mc_mean,mc_bias,mc_bias_se,"
         "empirical_variance,empirical_variance_se,mean_variance_estimate,"
         "mean_variance_estimate_se,relative_variance_bias,relative_variance_bias_se,coverage,"
         "coverage_se,floored,mean_weight,fallbacks,empirical_covariance,"
         "empirical_covariance_se,t_stat,mean_covariance_estimate,mean_covariance_estimate_se,"
         "relative_covariance_bias\n";
  auto f = format_double;
  auto estimator_line = [&](const char* kind, const EstimatorRow& r, bool pooled) {
    out << kind << ',' << r.estimator << ',' << r.regime << ",," << r.replicates << ','
        << f(r.mc_mean) << ',' << f(r.mc_bias) << ',' << f(r.mc_bias_se) << ','
        << f(r.empirical_variance) << ',' << f(r.empirical_variance_se) << ','
        << f(r.mean_variance_estimate) << ',' << f(r.mean_variance_estimate_se) << ','
        << f(r.relative_variance_bias) << ',' << f(r.relative_variance_bias_se) << ','
        << f(r.coverage) << ',' << f(r.coverage_se) << ',' << r.floored << ',';
    if (pooled) out << f(r.mean_weight) << ',' << r.fallbacks;
    else out << ',';
    out << ",,,,,,\n";
  };
  for (const auto& r : s.estimators) estimator_line("estimator", r, false);
  for (const auto& r : s.pooled) estimator_line("pooled", r, true);
  for (const auto& r : s.covariances) {
    out << "covariance," << r.estimator << ',' << r.regime << ',' << r.partner << ','
        << r.replicates << ",,,,,,,,,,,,,,," << f(r.empirical_covariance) << ','
        << f(r.empirical_covariance_se) << ',' << f(r.t_stat) << ','
        << f(r.mean_covariance_estimate) << ',' << f(r.mean_covariance_estimate_se) << ','
        << f(r.relative_bias) << '\n';
  }
  return out.str();
}

// ---------------------------------------------------------------------------
// Drivers

OutputLock::OutputLock(const fs::path& dir) {
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec) throw IoError("cannot create output directory " + dir.string() + ": " + ec.message());
  path_ = dir / ".drpool.lock";
  std::FILE* f = std::fopen(path_.c_str(), "wx");
  if (f == nullptr) {
    throw IoError("output directory " + dir.string() + " is in use (remove " +
                  path_.string() + " if no other run is active)");
  }
  std::fclose(f);
}

OutputLock::~OutputLock() {
  std::error_code ec;
  fs::remove(path_, ec);
}

namespace {

void write_text(const fs::path& path, const std::string& text) {
  auto out = open_output(path);
  out << text;
  finish(out, path);
}

fs::path require_output(const RunConfig& config) {
  if (config.output.empty()) throw ValidationError("no output directory given");
  return config.output;
}

}  // namespace

EstimateReport run_estimate(const RunConfig& config) {
  const fs::path dir = require_output(config);
  const ObservedData observed =
      read_samples(config.sample_a, config.sample_b, config.n_population, config.design);
  const EstimateReport report = estimate_report(config, observed);
  OutputLock lock(dir);
  write_text(dir / "report.txt", to_text(report));
  write_text(dir / "report.json", to_json(report).dump(2) + "\n");
  return report;
}

MonteCarloSummary run_simulate(const RunConfig& config) {
  const fs::path dir = require_output(config);
  OutputLock lock(dir);
  const auto start = std::chrono::steady_clock::now();
  const MonteCarloSummary summary = run_replications(config.scenario);
  const double seconds =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  write_text(dir / "summary.csv", summary_csv(summary));
  const json manifest = {
      {"tool", "drpool"},
      {"version", kVersion},
      {"mode", "simulate"},
      {"seed", config.scenario.seed},
      {"threads", config.scenario.threads},
      {"config_path", config.config_path.string()},
      {"config_text", config.config_text},
      {"scenario", scenario_to_json(config.scenario)},
      {"replicates_requested", summary.replicates_requested},
      {"replicates_completed", summary.replicates_completed},
      {"failures", summary.failures},
      {"failure_messages", summary.failure_messages},
      {"wall_time_seconds", seconds},
      {"outputs", {"summary.csv"}},
  };
  write_text(dir / "manifest.json", manifest.dump(2) + "\n");
  return summary;
}

SampleDraw run_draw(const RunConfig& config, std::uint64_t replicate, const fs::path& output) {
  if (config.mode != RunMode::kSimulate) {
    throw ValidationError("draw needs a simulate-mode config");
  }
  const ScenarioConfig& s = config.scenario;
  if (replicate >= s.replicates) throw ValidationError("replicate index out of range");
  const SimulatedPopulation sim = generate_population(s, s.seed);
  SampleDraw draw = replicate_samples(s, sim, replicate);

  OutputLock lock(output);
  std::vector<std::size_t> a_ids(draw.a_index.size());
  std::vector<std::size_t> b_ids(draw.b_index.size());
  for (std::size_t i = 0; i < a_ids.size(); ++i) a_ids[i] = draw.a_index[i] + 1;
  for (std::size_t i = 0; i < b_ids.size(); ++i) b_ids[i] = draw.b_index[i] + 1;
  write_sample_a(output / "sample_a.csv", draw.observed, a_ids);
  write_sample_b(output / "sample_b.csv", draw.observed, b_ids);

  const ModelSpec spec = s.analysis_spec();
  const std::size_t dim = s.dimension();
  YAML::Emitter y;
  y << YAML::BeginMap;
  y << YAML::Key << "mode" << YAML::Value << "estimate";
  y << YAML::Key << "level" << YAML::Value << format_double(s.level);
  y << YAML::Key << "output" << YAML::Value << "report";
  y << YAML::Key << "data" << YAML::Value << YAML::BeginMap;
  y << YAML::Key << "sample_a" << YAML::Value << "sample_a.csv";
  y << YAML::Key << "sample_b" << YAML::Value << "sample_b.csv";
  y << YAML::Key << "n_population" << YAML::Value << s.n_population;
  y << YAML::Key << "design" << YAML::Value << YAML::BeginMap;
  y << YAML::Key << "kind" << YAML::Value << to_string(draw.observed.design.kind);
  if (draw.observed.design.kind == DesignKind::kSrswor) {
    y << YAML::Key << "sample_size" << YAML::Value << draw.observed.design.sample_size;
  }
  y << YAML::EndMap << YAML::EndMap;
  y << YAML::Key << "model" << YAML::Value << YAML::BeginMap;
  y << YAML::Key << "family" << YAML::Value << to_string(spec.family);
  y << YAML::Key << "method" << YAML::Value << to_string(spec.method);
  y << YAML::Key << "outcome_columns" << YAML::Value << YAML::Flow
    << spec.resolved_outcome_columns(dim);
  y << YAML::Key << "selection_columns" << YAML::Value << YAML::Flow
    << spec.resolved_selection_columns(dim);
  y << YAML::Key << "sigma2" << YAML::Value << to_string(s.sigma2);
  y << YAML::EndMap;
  y << YAML::Key << "estimators" << YAML::Value << YAML::BeginSeq;
  for (const auto& t : s.estimators) {
    y << YAML::Flow << YAML::BeginMap << YAML::Key << "estimator" << YAML::Value
      << to_string(t.kind);
    if (!is_probability_kind(t.kind)) y << YAML::Key << "regime" << YAML::Value << to_string(t.regime);
    y << YAML::EndMap;
  }
  y << YAML::EndSeq;
  for (const auto& [key, list] : {std::pair{"covariances", &s.covariances},
                                  std::pair{"pooled", &s.pooled}}) {
    if (list->empty()) continue;
    y << YAML::Key << key << YAML::Value << YAML::BeginSeq;
    for (const auto& t : *list) {
      y << YAML::Flow << YAML::BeginMap << YAML::Key << "estimator" << YAML::Value
        << to_string(t.kind) << YAML::Key << "regime" << YAML::Value << to_string(t.regime)
        << YAML::Key << "partner" << YAML::Value << to_string(t.partner) << YAML::EndMap;
    }
    y << YAML::EndSeq;
  }
  y << YAML::EndMap;
  write_text(output / "estimate.yaml", std::string(y.c_str()) + "\n");
  return draw;
}

}  // namespace drpool
