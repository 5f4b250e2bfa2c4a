#include "drpool/simulate.h"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <numeric>
#include <random>
#include <thread>

namespace drpool {

namespace {

std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

constexpr std::uint64_t kPopulationReplicate = ~std::uint64_t{0};
constexpr std::size_t kMaxFailureMessages = 5;

double draw_covariate(const CovariateSpec& spec, std::mt19937_64& rng) {
  switch (spec.distribution) {
    case CovariateSpec::Distribution::kNormal:
      return std::normal_distribution<double>(spec.first, spec.second)(rng);
    case CovariateSpec::Distribution::kUniform:
      return std::uniform_real_distribution<double>(spec.first, spec.second)(rng);
    case CovariateSpec::Distribution::kBernoulli:
      return std::bernoulli_distribution(spec.first)(rng) ? 1.0 : 0.0;
  }
  return 0.0;
}

std::vector<double> outcomes_of(const FinitePopulation& population) {
  std::vector<double> y(population.size());
  for (std::size_t i = 0; i < y.size(); ++i) y[i] = *population.units[i].y;
  return y;
}

double mean_of(const std::vector<double>& v) {
  return std::accumulate(v.begin(), v.end(), 0.0) / static_cast<double>(v.size());
}

Matrix stack_rows(const FinitePopulation& population, const std::vector<std::size_t>& cols) {
  Matrix x(static_cast<Eigen::Index>(population.size()), static_cast<Eigen::Index>(cols.size()));
  for (std::size_t i = 0; i < population.size(); ++i) {
    for (std::size_t c = 0; c < cols.size(); ++c) {
      x(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(c)) =
          population.units[i].x[static_cast<Eigen::Index>(cols[c])];
    }
  }
  return x;
}

std::string pooled_name(const PairTarget& t) {
  return "pooled(" + to_string(t.kind) + "+" + to_string(t.partner) + ")";
}

std::string regime_name(const EstimatorTarget& t) {
  return is_probability_kind(t.kind) ? "design" : to_string(t.regime);
}

struct Moments {
  double mean = 0.0;
  double variance = 0.0;  // R - 1 denominator
  double variance_se = 0.0;
  double mean_se = 0.0;
};

Moments moments(const std::vector<double>& v) {
  Moments m;
  const double r = static_cast<double>(v.size());
  m.mean = mean_of(v);
  double s2 = 0.0;
  double s4 = 0.0;
  for (double x : v) {
    const double d = (x - m.mean) * (x - m.mean);
    s2 += d;
    s4 += d * d;
  }
  m.variance = v.size() > 1 ? s2 / (r - 1.0) : 0.0;
  m.mean_se = std::sqrt(m.variance / r);
  const double m2 = s2 / r;
  const double m4 = s4 / r;
  m.variance_se = std::sqrt(std::max(0.0, m4 - m2 * m2) / r);
  return m;
}

EstimatorRow estimator_row(const std::vector<double>& est, const std::vector<double>& var,
                           const std::vector<char>& covered, const std::vector<double>& truth) {
  EstimatorRow row;
  const std::size_t r = est.size();
  row.replicates = r;
  std::vector<double> diff(r);
  for (std::size_t i = 0; i < r; ++i) diff[i] = est[i] - truth[i];
  row.mc_mean = mean_of(est);
  const Moments d = moments(diff);
  row.mc_bias = d.mean;
  row.mc_bias_se = d.mean_se;
  row.empirical_variance = d.variance;
  row.empirical_variance_se = d.variance_se;
  const Moments v = moments(var);
  row.mean_variance_estimate = v.mean;
  row.mean_variance_estimate_se = v.mean_se;
  if (d.variance > 0.0) {
    row.relative_variance_bias = v.mean / d.variance - 1.0;
    const double ra = v.mean > 0.0 ? v.mean_se / v.mean : 0.0;
    const double rb = d.variance_se / d.variance;
    row.relative_variance_bias_se = (v.mean / d.variance) * std::sqrt(ra * ra + rb * rb);
  }
  const double hits =
      static_cast<double>(std::count(covered.begin(), covered.end(), char{1}));
  row.coverage = hits / static_cast<double>(r);
  row.coverage_se = std::sqrt(row.coverage * (1.0 - row.coverage) / static_cast<double>(r));
  return row;
}

}  // namespace

ModelSpec ScenarioConfig::analysis_spec() const {
  ModelSpec spec;
  spec.family = analysis_family;
  spec.method = analysis_method;
  const std::size_t dim = dimension();
  auto reduced = [&]() {
    std::vector<std::size_t> cols;
    for (std::size_t c = 0; c < dim; ++c) {
      const auto& omit = misspecification.omit_columns;
      if (std::find(omit.begin(), omit.end(), c) == omit.end()) cols.push_back(c);
    }
    return cols;
  };
  if (misspecification.outcome_wrong) spec.outcome_columns = reduced();
  if (misspecification.selection_wrong) spec.selection_columns = reduced();
  return spec;
}

void ScenarioConfig::check() const {
  const auto dim = static_cast<Eigen::Index>(dimension());
  if (n_population < 2) throw ValidationError("population size must be at least 2");
  if (replicates < 2) throw ValidationError("at least 2 replicates are required");
  if (alpha.size() != dim) throw ValidationError("alpha has the wrong dimension");
  if (outcome.beta.size() != dim) throw ValidationError("beta has the wrong dimension");
  if (outcome.quadratic != 0.0 &&
      (outcome.quadratic_column == 0 || outcome.quadratic_column >= dimension())) {
    throw ValidationError("quadratic column out of range");
  }
  if (outcome.noise_variance < 0.0) throw ValidationError("negative noise variance");
  if (sample_a.size == 0 || sample_a.size > n_population) {
    throw ValidationError("Sample A size must be in [1, N]");
  }
  if (sample_a.kind == DesignKind::kSrswor && sample_a.size >= n_population) {
    throw ValidationError("SRSWOR target size must be below N");
  }
  if (!(level > 0.0 && level < 1.0)) throw ValidationError("confidence level outside (0, 1)");
  if (max_draw_attempts < 1) throw ValidationError("max_draw_attempts must be positive");
  for (std::size_t c : misspecification.omit_columns) {
    if (c == 0 || c >= dimension()) throw ValidationError("omitted column out of range");
  }
  if ((misspecification.outcome_wrong || misspecification.selection_wrong) &&
      misspecification.omit_columns.empty()) {
    throw ValidationError("misspecification requested without omitted columns");
  }
  for (const auto& c : covariates) {
    if (c.distribution == CovariateSpec::Distribution::kBernoulli &&
        !(c.first >= 0.0 && c.first <= 1.0)) {
      throw ValidationError("bernoulli covariate probability outside [0, 1]");
    }
    if (c.distribution == CovariateSpec::Distribution::kNormal && !(c.second >= 0.0)) {
      throw ValidationError("normal covariate needs sd >= 0");
    }
    if (c.distribution == CovariateSpec::Distribution::kUniform && !(c.second > c.first)) {
      throw ValidationError("uniform covariate needs lower < upper");
    }
  }
  analysis_spec().check(dimension());
  for (const auto& t : estimators) {
    if (!is_probability_kind(t.kind) && !is_supported(t.kind, t.regime)) {
      throw ValidationError("unsupported estimator/regime " + to_string(t.kind) + "/" +
                            to_string(t.regime));
    }
  }
  for (const auto* list : {&covariances, &pooled}) {
    for (const auto& t : *list) {
      if (!is_supported(t.kind, t.regime) || !is_probability_kind(t.partner)) {
        throw ValidationError("unsupported pair " + to_string(t.kind) + "/" +
                              to_string(t.regime) + " with " + to_string(t.partner));
      }
    }
  }
}

ScenarioConfig default_scenario() {
  ScenarioConfig c;
  c.name = "default";
  c.covariates = {{CovariateSpec::Distribution::kNormal, 0.0, 1.0},
                  {CovariateSpec::Distribution::kNormal, 0.0, 1.0}};
  c.outcome.beta = Vector::Constant(3, 1.0);
  c.alpha = (Vector(3) << -2.25, 0.25, 0.25).finished();
  c.sample_a = {DesignKind::kPoisson, 500, 0.3};
  c.misspecification.omit_columns = {2};
  using K = EstimatorKind;
  using R = Regime;
  c.estimators = {{K::kHT, R::kBothCorrect},         {K::kHajek, R::kBothCorrect},
                  {K::kDR1, R::kBothCorrect},        {K::kDR1, R::kSelectionCorrect},
                  {K::kDR2, R::kBothCorrect},        {K::kDR2, R::kSelectionCorrect},
                  {K::kIPW1, R::kSelectionCorrect},  {K::kIPW2, R::kSelectionCorrect}};
  c.covariances = {{K::kDR2, R::kBothCorrect, K::kHajek}, {K::kDR1, R::kBothCorrect, K::kHT}};
  c.pooled = {{K::kDR2, R::kBothCorrect, K::kHajek}};
  return c;
}

std::uint64_t stream_seed(std::uint64_t master, std::uint64_t replicate, Stream stream,
                          std::uint64_t attempt) {
  std::uint64_t h = splitmix64(master);
  h = splitmix64(h ^ replicate);
  h = splitmix64(h ^ static_cast<std::uint64_t>(stream));
  return splitmix64(h ^ attempt);
}

std::vector<double> draw_outcomes(const SimulatedPopulation& population, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  const std::size_t n = population.conditional_mean.size();
  std::vector<double> y(n);
  for (std::size_t i = 0; i < n; ++i) {
    const double m = population.conditional_mean[i];
    if (population.family == OutcomeFamily::kLogisticBinary) {
      y[i] = std::bernoulli_distribution(m)(rng) ? 1.0 : 0.0;
    } else {
      y[i] = m + std::sqrt(population.noise_variance[i]) *
                     std::normal_distribution<double>(0.0, 1.0)(rng);
    }
  }
  return y;
}

SimulatedPopulation generate_population(const ScenarioConfig& config, std::uint64_t seed) {
  config.check();
  SimulatedPopulation sim;
  FinitePopulation& pop = sim.population;
  const std::size_t n = config.n_population;
  const auto dim = static_cast<Eigen::Index>(config.dimension());
  pop.units.resize(n);
  pop.pi_a.resize(n);
  pop.pi_b_true.resize(n);
  sim.conditional_mean.resize(n);
  sim.noise_variance.resize(n);

  std::mt19937_64 rng(stream_seed(seed, kPopulationReplicate, Stream::kCovariates));
  for (auto& unit : pop.units) {
    unit.x.resize(dim);
    unit.x[0] = 1.0;
    for (Eigen::Index j = 1; j < dim; ++j) {
      unit.x[j] = draw_covariate(config.covariates[static_cast<std::size_t>(j - 1)], rng);
    }
  }

  const OutcomeTruth& truth = config.outcome;
  for (std::size_t i = 0; i < n; ++i) {
    const Vector& x = pop.units[i].x;
    double eta = truth.beta.dot(x);
    if (truth.quadratic != 0.0) {
      const double q = x[static_cast<Eigen::Index>(truth.quadratic_column)];
      eta += truth.quadratic * (q * q - 1.0);
    }
    if (truth.family == OutcomeFamily::kLinearGaussian) {
      const double x1 = dim > 1 ? x[1] : 0.0;
      sim.conditional_mean[i] = eta;
      sim.noise_variance[i] = truth.noise_variance * (1.0 + truth.noise_slope * x1 * x1);
    } else {
      const double p = expit(eta);
      sim.conditional_mean[i] = p;
      sim.noise_variance[i] = p * (1.0 - p);
    }
    pop.pi_b_true[i] = expit(config.alpha.dot(x));
  }

  pop.design.kind = config.sample_a.kind;
  if (config.sample_a.kind == DesignKind::kSrswor) {
    pop.design.sample_size = config.sample_a.size;
    std::fill(pop.pi_a.begin(), pop.pi_a.end(),
              static_cast<double>(config.sample_a.size) / static_cast<double>(n));
  } else {
    std::vector<double> w(n);
    for (std::size_t i = 0; i < n; ++i) {
      const double x1 = dim > 1 ? pop.units[i].x[1] : 0.0;
      w[i] = std::exp(config.sample_a.size_link * x1);
    }
    const double total = std::accumulate(w.begin(), w.end(), 0.0);
    for (std::size_t i = 0; i < n; ++i) {
      pop.pi_a[i] = std::min(1.0, static_cast<double>(config.sample_a.size) * w[i] / total);
    }
  }

  // Initial outcome draw (the fixed outcomes when they are not redrawn).
  sim.family = truth.family;
  const std::vector<double> y =
      draw_outcomes(sim, stream_seed(seed, kPopulationReplicate, Stream::kOutcome));
  for (std::size_t i = 0; i < n; ++i) pop.units[i].y = y[i];
  check_population(pop);
  return sim;
}

SampleDraw draw_samples(const FinitePopulation& population, std::uint64_t seed,
                        std::uint64_t replicate, std::span<const double> outcomes,
                        int max_attempts) {
  const std::size_t n = population.size();
  if (n == 0) throw ValidationError("empty population");
  if (!outcomes.empty() && outcomes.size() != n) {
    throw ValidationError("outcome vector does not match the population");
  }
  auto y_of = [&](std::size_t i) {
    return outcomes.empty() ? *population.units[i].y : outcomes[i];
  };
  const std::size_t min_rows = static_cast<std::size_t>(population.units.front().x.size()) + 1;

  SampleDraw draw;
  for (int attempt = 0; attempt < max_attempts; ++attempt) {
    draw.a_index.clear();
    draw.b_index.clear();
    const auto att = static_cast<std::uint64_t>(attempt);
    std::mt19937_64 rng_a(stream_seed(seed, replicate, Stream::kSampleA, att));
    std::mt19937_64 rng_b(stream_seed(seed, replicate, Stream::kSampleB, att));
    if (population.design.kind == DesignKind::kSrswor) {
      std::vector<std::size_t> all(n);
      std::iota(all.begin(), all.end(), std::size_t{0});
      draw.a_index.reserve(population.design.sample_size);
      std::sample(all.begin(), all.end(), std::back_inserter(draw.a_index),
                  static_cast<std::ptrdiff_t>(population.design.sample_size), rng_a);
    } else {
      std::uniform_real_distribution<double> u(0.0, 1.0);
      for (std::size_t i = 0; i < n; ++i) {
        if (u(rng_a) < population.pi_a[i]) draw.a_index.push_back(i);
      }
    }
    std::uniform_real_distribution<double> u(0.0, 1.0);
    for (std::size_t i = 0; i < n; ++i) {
      if (u(rng_b) < population.pi_b_true[i]) draw.b_index.push_back(i);
    }
    draw.attempts = attempt + 1;
    if (draw.a_index.size() >= min_rows && draw.b_index.size() >= min_rows) break;
    if (attempt + 1 == max_attempts) {
      throw ValidationError("sample too small to fit after " + std::to_string(max_attempts) +
                            " draws");
    }
  }

  ObservedData& obs = draw.observed;
  obs.n_population = n;
  obs.design = population.design;
  obs.sample_a.reserve(draw.a_index.size());
  for (std::size_t i : draw.a_index) {
    SampleAUnit row{population.units[i], population.pi_a[i]};
    row.unit.y = y_of(i);
    obs.sample_a.push_back(std::move(row));
  }
  obs.sample_b.reserve(draw.b_index.size());
  for (std::size_t i : draw.b_index) {
    UnitRecord row = population.units[i];
    row.y = y_of(i);
    obs.sample_b.push_back(std::move(row));
  }
  double total = 0.0;
  for (std::size_t i = 0; i < n; ++i) total += y_of(i);
  draw.population_mean = total / static_cast<double>(n);
  return draw;
}

Vector population_outcome_limit(const FinitePopulation& population,
                                std::span<const double> outcomes, const ModelSpec& spec) {
  const std::size_t dim = static_cast<std::size_t>(population.units.front().x.size());
  const Matrix x = stack_rows(population, spec.resolved_outcome_columns(dim));
  const Vector y = Eigen::Map<const Vector>(outcomes.data(),
                                            static_cast<Eigen::Index>(outcomes.size()));
  const Vector w = Eigen::Map<const Vector>(population.pi_b_true.data(),
                                            static_cast<Eigen::Index>(population.size()));
  if (spec.family == OutcomeFamily::kLinearGaussian) {
    const Matrix g = x.transpose() * w.asDiagonal() * x;
    return g.ldlt().solve(x.transpose() * (w.array() * y.array()).matrix());
  }
  auto system = [&](const Vector& beta) {
    const Vector p = (x * beta).unaryExpr([](double t) { return expit(t); });
    EquationSystem s;
    s.value = x.transpose() * (w.array() * (y - p).array()).matrix() /
              static_cast<double>(population.size());
    const Vector d = w.array() * p.array() * (1.0 - p.array());
    s.jacobian = -(x.transpose() * d.asDiagonal() * x) / static_cast<double>(population.size());
    return s;
  };
  return newton_solve(system, Vector::Zero(x.cols()), {}, "population outcome limit").solution;
}

Vector population_b_vector(BVariant variant, const FinitePopulation& population,
                           std::span<const double> outcomes, const ModelSpec& spec,
                           const Vector& beta_star) {
  const std::size_t dim = static_cast<std::size_t>(population.units.front().x.size());
  const Matrix xs = stack_rows(population, spec.resolved_selection_columns(dim));
  const Matrix xo = stack_rows(population, spec.resolved_outcome_columns(dim));
  const Vector pi = Eigen::Map<const Vector>(population.pi_b_true.data(),
                                             static_cast<Eigen::Index>(population.size()));
  Vector r = Eigen::Map<const Vector>(outcomes.data(), static_cast<Eigen::Index>(outcomes.size()));
  if (variant == BVariant::kB3 || variant == BVariant::kB4) {
    Vector m = xo * beta_star;
    if (spec.family == OutcomeFamily::kLogisticBinary) m = m.unaryExpr([](double t) { return expit(t); });
    r -= m;
  }
  if (variant == BVariant::kB2 || variant == BVariant::kB3) r.array() -= r.mean();
  const Vector one_minus = 1.0 - pi.array();
  const Matrix g = xs.transpose() * (pi.array() * one_minus.array()).matrix().asDiagonal() * xs;
  return g.ldlt().solve(xs.transpose() * (one_minus.array() * r.array()).matrix());
}

SampleDraw replicate_samples(const ScenarioConfig& config, const SimulatedPopulation& sim,
                             std::uint64_t replicate) {
  const std::vector<double> y =
      config.redraw_outcomes
          ? draw_outcomes(sim, stream_seed(config.seed, replicate, Stream::kOutcome))
          : outcomes_of(sim.population);
  return draw_samples(sim.population, config.seed, replicate, y, config.max_draw_attempts);
}

ReplicateResult run_replicate(const ScenarioConfig& config, const SimulatedPopulation& sim,
                              std::uint64_t replicate) {
  ReplicateResult res;
  try {
    const SampleDraw draw = replicate_samples(config, sim, replicate);
    res.population_mean = draw.population_mean;
    const Analysis analysis = Analysis::fit(draw.observed, config.analysis_spec());
    const double z = normal_critical_value(config.level);
    const VarianceOptions options{config.sigma2};

    for (const auto& t : config.estimators) {
      const double est = analysis.point(t.kind);
      double var = 0.0;
      bool floored = false;
      if (is_probability_kind(t.kind)) {
        var = var_prob_estimate(t.kind, analysis.frame(), analysis.provider());
      } else {
        const VarianceEstimate v = var_estimate(t.kind, t.regime, analysis, options);
        var = v.total;
        floored = v.floored;
      }
      const double half = z * std::sqrt(var);
      res.estimate.push_back(est);
      res.variance.push_back(var);
      res.covered.push_back(std::abs(est - draw.population_mean) <= half ? 1 : 0);
      res.floored.push_back(floored ? 1 : 0);
    }
    for (const auto& t : config.covariances) {
      res.cov_left.push_back(analysis.point(t.kind));
      res.cov_right.push_back(analysis.point(t.partner));
      res.cov_estimate.push_back(cov_estimate(t.kind, t.regime, t.partner, analysis));
    }
    for (const auto& t : config.pooled) {
      const PooledReport p = pool(analysis, t.kind, t.regime, t.partner, config.level, options);
      res.pooled_estimate.push_back(p.pooled_estimate);
      res.pooled_variance.push_back(p.pooled_variance);
      res.pooled_weight.push_back(p.w);
      res.pooled_covered.push_back(
          p.ci_low <= draw.population_mean && draw.population_mean <= p.ci_high ? 1 : 0);
      res.pooled_fallback.push_back(p.fallback_used ? 1 : 0);
    }
    res.ok = true;
  } catch (const Error& e) {
    res = ReplicateResult{};
    res.error = "replicate " + std::to_string(replicate) + ": " + e.what();
  }
  return res;
}

MonteCarloSummary summarise(const ScenarioConfig& config,
                            const std::vector<ReplicateResult>& results) {
  MonteCarloSummary s;
  s.scenario = config.name;
  s.seed = config.seed;
  s.replicates_requested = results.size();
  s.redraw_outcomes = config.redraw_outcomes;
  std::vector<const ReplicateResult*> ok;
  for (const auto& r : results) {
    if (r.ok) {
      ok.push_back(&r);
    } else {
      ++s.failures;
      if (s.failure_messages.size() < kMaxFailureMessages) s.failure_messages.push_back(r.error);
    }
  }
  s.replicates_completed = ok.size();
  if (ok.size() < 2) return s;

  std::vector<double> truth;
  for (const auto* r : ok) truth.push_back(r->population_mean);
  auto column = [&](auto member, std::size_t k) {
    using T = typename std::decay_t<decltype(ok.front()->*member)>::value_type;
    std::vector<T> out;
    out.reserve(ok.size());
    for (const auto* r : ok) out.push_back((r->*member)[k]);
    return out;
  };

  for (std::size_t k = 0; k < config.estimators.size(); ++k) {
    EstimatorRow row = estimator_row(column(&ReplicateResult::estimate, k),
                                     column(&ReplicateResult::variance, k),
                                     column(&ReplicateResult::covered, k), truth);
    row.estimator = to_string(config.estimators[k].kind);
    row.regime = regime_name(config.estimators[k]);
    const auto fl = column(&ReplicateResult::floored, k);
    row.floored = static_cast<std::size_t>(std::count(fl.begin(), fl.end(), char{1}));
    s.estimators.push_back(row);
  }

  for (std::size_t k = 0; k < config.covariances.size(); ++k) {
    const auto& t = config.covariances[k];
    const auto left = column(&ReplicateResult::cov_left, k);
    const auto right = column(&ReplicateResult::cov_right, k);
    std::vector<double> dl(ok.size());
    std::vector<double> dr(ok.size());
    for (std::size_t i = 0; i < ok.size(); ++i) {
      dl[i] = left[i] - truth[i];
      dr[i] = right[i] - truth[i];
    }
    const double ml = mean_of(dl);
    const double mr = mean_of(dr);
    std::vector<double> prod(ok.size());
    for (std::size_t i = 0; i < ok.size(); ++i) prod[i] = (dl[i] - ml) * (dr[i] - mr);
    const double r = static_cast<double>(ok.size());
    CovarianceRow row;
    row.estimator = to_string(t.kind);
    row.regime = to_string(t.regime);
    row.partner = to_string(t.partner);
    row.replicates = ok.size();
    row.empirical_covariance = std::accumulate(prod.begin(), prod.end(), 0.0) / (r - 1.0);
    row.empirical_covariance_se = moments(prod).mean_se;
    row.t_stat = row.empirical_covariance_se > 0.0
                     ? row.empirical_covariance / row.empirical_covariance_se
                     : 0.0;
    const Moments c = moments(column(&ReplicateResult::cov_estimate, k));
    row.mean_covariance_estimate = c.mean;
    row.mean_covariance_estimate_se = c.mean_se;
    if (row.empirical_covariance != 0.0) {
      row.relative_bias = c.mean / row.empirical_covariance - 1.0;
    }
    s.covariances.push_back(row);
  }

  for (std::size_t k = 0; k < config.pooled.size(); ++k) {
    const auto& t = config.pooled[k];
    EstimatorRow row = estimator_row(column(&ReplicateResult::pooled_estimate, k),
                                     column(&ReplicateResult::pooled_variance, k),
                                     column(&ReplicateResult::pooled_covered, k), truth);
    row.estimator = pooled_name(t);
    row.regime = to_string(t.regime);
    row.mean_weight = mean_of(column(&ReplicateResult::pooled_weight, k));
    const auto fb = column(&ReplicateResult::pooled_fallback, k);
    row.fallbacks = static_cast<std::size_t>(std::count(fb.begin(), fb.end(), char{1}));
    s.pooled.push_back(row);
  }
  return s;
}

MonteCarloSummary run_replications(const ScenarioConfig& config,
                                   std::vector<ReplicateResult>* per_replicate) {
  config.check();
  const SimulatedPopulation sim = generate_population(config, config.seed);
  std::vector<ReplicateResult> results(config.replicates);

  unsigned threads = config.threads == 0 ? std::thread::hardware_concurrency() : config.threads;
  threads = std::max(1u, std::min<unsigned>(threads, static_cast<unsigned>(config.replicates)));
  if (threads == 1) {
    for (std::size_t r = 0; r < config.replicates; ++r) results[r] = run_replicate(config, sim, r);
  } else {
    std::atomic<std::size_t> next{0};
    auto worker = [&]() {
      for (std::size_t r = next++; r < config.replicates; r = next++) {
        results[r] = run_replicate(config, sim, r);
      }
    };
    std::vector<std::thread> pool;
    for (unsigned t = 0; t < threads; ++t) pool.emplace_back(worker);
    for (auto& t : pool) t.join();
  }

  MonteCarloSummary summary = summarise(config, results);
  const double fraction =
      static_cast<double>(summary.failures) / static_cast<double>(config.replicates);
  if (fraction > config.max_failure_fraction) {
    std::string msg = std::to_string(summary.failures) + " of " +
                      std::to_string(config.replicates) + " replicates failed";
    if (!summary.failure_messages.empty()) msg += " (" + summary.failure_messages.front() + ")";
    throw SolverError(msg);
  }
  if (per_replicate != nullptr) *per_replicate = std::move(results);
  return summary;
}

}  // namespace drpool
