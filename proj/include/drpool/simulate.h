// Monte Carlo harness. One finite population (covariates fixed) is generated
// per scenario; each replicate redraws outcome noise, Sample A and Sample B
// and evaluates the requested estimators, variances, covariances and pooled
// reports. Summaries compare estimates with the replicate's population mean.

#ifndef DRPOOL_SIMULATE_H_
#define DRPOOL_SIMULATE_H_

#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "drpool/combiner.h"

namespace drpool {

struct CovariateSpec {
  enum class Distribution { kNormal, kUniform, kBernoulli };
  Distribution distribution = Distribution::kNormal;
  // normal: mean, sd; uniform: lower, upper; bernoulli: p (first only).
  double first = 0.0;
  double second = 1.0;
};

struct OutcomeTruth {
  OutcomeFamily family = OutcomeFamily::kLinearGaussian;
  Vector beta;                     // over x including the intercept
  double quadratic = 0.0;          // adds quadratic * (x_q^2 - 1) to the linear predictor
  std::size_t quadratic_column = 1;
  double noise_variance = 1.0;     // linear family: v(x) = noise_variance * (1 + noise_slope * x_1^2)
  double noise_slope = 0.0;
};

struct SampleADesignSpec {
  DesignKind kind = DesignKind::kPoisson;
  std::size_t size = 500;  // expected size (Poisson) or fixed n (SRSWOR)
  double size_link = 0.0;  // Poisson: pi^A proportional to exp(size_link * x_1), capped at 1
};

// Misspecification acts on the analysis models only: a "wrong" model drops
// omit_columns from its covariates.
struct Misspecification {
  bool outcome_wrong = false;
  bool selection_wrong = false;
  std::vector<std::size_t> omit_columns;
};

struct EstimatorTarget {
  EstimatorKind kind = EstimatorKind::kDR1;
  Regime regime = Regime::kBothCorrect;  // ignored for HT / Hajek
};

struct PairTarget {
  EstimatorKind kind = EstimatorKind::kDR2;
  Regime regime = Regime::kBothCorrect;
  EstimatorKind partner = EstimatorKind::kHajek;
};

struct ScenarioConfig {
  std::string name = "scenario";
  std::size_t n_population = 10000;
  std::uint64_t seed = 1;
  std::vector<CovariateSpec> covariates;  // x_1..x_p
  OutcomeTruth outcome;
  Vector alpha;                           // true selection coefficients
  SampleADesignSpec sample_a;
  Misspecification misspecification;
  OutcomeFamily analysis_family = OutcomeFamily::kLinearGaussian;
  FitMethod analysis_method = FitMethod::kPseudoML;
  Sigma2Model sigma2 = Sigma2Model::kConstant;
  std::size_t replicates = 1000;
  bool redraw_outcomes = true;
  double level = 0.95;
  unsigned threads = 1;                   // 0: hardware concurrency
  int max_draw_attempts = 10;
  double max_failure_fraction = 0.01;
  std::vector<EstimatorTarget> estimators;
  std::vector<PairTarget> covariances;
  std::vector<PairTarget> pooled;

  std::size_t dimension() const { return covariates.size() + 1; }
  ModelSpec analysis_spec() const;
  void check() const;
};

// N = 10^4, x_1, x_2 ~ N(0, 1), E|B| ~ 1000, Poisson Sample A of expected
// size 500 with pi^A depending on x_1, linear outcome, logistic selection.
ScenarioConfig default_scenario();

struct SimulatedPopulation {
  FinitePopulation population;     // y holds the initial outcome draw
  std::vector<double> conditional_mean;
  std::vector<double> noise_variance;
  OutcomeFamily family = OutcomeFamily::kLinearGaussian;
};

enum class Stream : std::uint64_t { kCovariates = 1, kOutcome = 2, kSampleA = 3, kSampleB = 4 };

// Counter-based seed for (master, replicate, stream, attempt).
std::uint64_t stream_seed(std::uint64_t master, std::uint64_t replicate, Stream stream,
                          std::uint64_t attempt = 0);

SimulatedPopulation generate_population(const ScenarioConfig& config, std::uint64_t seed);

// Fresh outcomes for every unit given the fixed covariates.
std::vector<double> draw_outcomes(const SimulatedPopulation& population, std::uint64_t seed);

struct SampleDraw {
  ObservedData observed;
  std::vector<std::size_t> a_index;
  std::vector<std::size_t> b_index;
  double population_mean = 0.0;
  int attempts = 1;
};

// Draws A and B from independent streams. Outcomes come from `outcomes`
// when given, otherwise from the population records. Redraws while either
// sample is too small to fit, up to max_attempts.
SampleDraw draw_samples(const FinitePopulation& population, std::uint64_t seed,
                        std::uint64_t replicate, std::span<const double> outcomes = {},
                        int max_attempts = 10);

// Population-level limit beta* of the Sample B outcome fit: the pi^B-weighted
// score sum_U pi^B_i x_i (y_i - m(x_i; beta)) = 0 over the outcome columns.
Vector population_outcome_limit(const FinitePopulation& population,
                                std::span<const double> outcomes, const ModelSpec& spec);

// Population b-vector with the true selection probabilities and beta*:
//   [sum_U pi (1 - pi) x x']^{-1} sum_U (1 - pi) r x
// with r as in the sample estimate (centred by the population mean for b2/b3).
Vector population_b_vector(BVariant variant, const FinitePopulation& population,
                           std::span<const double> outcomes, const ModelSpec& spec,
                           const Vector& beta_star);

struct EstimatorRow {
  std::string estimator;
  std::string regime;
  std::size_t replicates = 0;
  double mc_mean = 0.0;
  double mc_bias = 0.0;
  double mc_bias_se = 0.0;
  double empirical_variance = 0.0;
  double empirical_variance_se = 0.0;
  double mean_variance_estimate = 0.0;
  double mean_variance_estimate_se = 0.0;
  double relative_variance_bias = 0.0;
  double relative_variance_bias_se = 0.0;
  double coverage = 0.0;
  double coverage_se = 0.0;
  std::size_t floored = 0;
  double mean_weight = 0.0;  // pooled rows
  std::size_t fallbacks = 0;  // pooled rows
};

struct CovarianceRow {
  std::string estimator;
  std::string regime;
  std::string partner;
  std::size_t replicates = 0;
  double empirical_covariance = 0.0;
  double empirical_covariance_se = 0.0;
  double t_stat = 0.0;
  double mean_covariance_estimate = 0.0;
  double mean_covariance_estimate_se = 0.0;
  double relative_bias = 0.0;
};

struct MonteCarloSummary {
  std::string scenario;
  std::uint64_t seed = 0;
  std::size_t replicates_requested = 0;
  std::size_t replicates_completed = 0;
  std::size_t failures = 0;
  std::vector<std::string> failure_messages;  // first few, by replicate
  bool redraw_outcomes = true;
  std::vector<EstimatorRow> estimators;
  std::vector<CovarianceRow> covariances;
  std::vector<EstimatorRow> pooled;
};

// Per-replicate values, mostly for tests and diagnostics.
struct ReplicateResult {
  bool ok = false;
  std::string error;
  double population_mean = 0.0;
  std::vector<double> estimate, variance;
  std::vector<char> covered, floored;
  std::vector<double> cov_left, cov_right, cov_estimate;
  std::vector<double> pooled_estimate, pooled_variance, pooled_weight;
  std::vector<char> pooled_covered, pooled_fallback;
};

// The outcomes and samples of one replicate, exactly as run_replicate sees them.
SampleDraw replicate_samples(const ScenarioConfig& config, const SimulatedPopulation& population,
                             std::uint64_t replicate);

ReplicateResult run_replicate(const ScenarioConfig& config, const SimulatedPopulation& population,
                              std::uint64_t replicate);

MonteCarloSummary summarise(const ScenarioConfig& config,
                            const std::vector<ReplicateResult>& results);

// Generates the population once, runs every replicate (in parallel when
// config.threads != 1) and aggregates in replicate order. Throws SolverError
// when the failure fraction exceeds config.max_failure_fraction.
MonteCarloSummary run_replications(const ScenarioConfig& config,
                                   std::vector<ReplicateResult>* per_replicate = nullptr);

}  // namespace drpool

#endif  // DRPOOL_SIMULATE_H_
