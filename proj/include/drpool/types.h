// Shared data model: finite populations, the two observed samples, and the
// nuisance-model specification.

#ifndef DRPOOL_TYPES_H_
#define DRPOOL_TYPES_H_

#include <cstddef>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include <Eigen/Dense>

namespace drpool {

using Vector = Eigen::VectorXd;
using Matrix = Eigen::MatrixXd;

class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Malformed or inconsistent input data/configuration.
class ValidationError : public Error {
 public:
  using Error::Error;
};

// An estimating-equation solver failed (non-convergence, singular system,
// degenerate fitted probabilities).
class SolverError : public Error {
 public:
  using Error::Error;
};

class IoError : public Error {
 public:
  using Error::Error;
};

// One unit's data. x carries the intercept explicitly as x[0] == 1.
struct UnitRecord {
  Vector x;
  Vector z;  // auxiliary covariates; stored, never consumed by an estimator
  std::optional<double> y;
};

enum class DesignKind { kPoisson, kSrswor };

struct DesignDescriptor {
  DesignKind kind = DesignKind::kPoisson;
  std::size_t sample_size = 0;  // fixed n, SRSWOR only
};

struct FinitePopulation {
  std::vector<UnitRecord> units;
  std::vector<double> pi_a;       // first-order inclusion probability, Sample A
  std::vector<double> pi_b_true;  // true selection probability, Sample B
  DesignDescriptor design;

  std::size_t size() const { return units.size(); }
};

struct SampleAUnit {
  UnitRecord unit;
  double pi_a = 1.0;
};

// What an analyst has: the probability sample A (covariates, design weights,
// optionally outcomes), the nonprobability sample B (covariates, outcomes)
// and the population size N.
struct ObservedData {
  std::size_t n_population = 0;
  std::vector<SampleAUnit> sample_a;
  std::vector<UnitRecord> sample_b;
  DesignDescriptor design;

  // Covariate dimension including the intercept.
  std::size_t dimension() const;
  // True when every Sample A row carries an outcome.
  bool has_sample_a_outcome() const;
};

enum class OutcomeFamily { kLinearGaussian, kLogisticBinary };
enum class FitMethod { kPseudoML, kCalibration, kKimHaziza };

// Selection model is always logistic in its covariates. Column masks index
// into x (0 is the intercept and must be present); an empty mask selects
// every column.
struct ModelSpec {
  OutcomeFamily family = OutcomeFamily::kLinearGaussian;
  FitMethod method = FitMethod::kPseudoML;
  std::vector<std::size_t> outcome_columns;
  std::vector<std::size_t> selection_columns;

  std::vector<std::size_t> resolved_outcome_columns(std::size_t dimension) const;
  std::vector<std::size_t> resolved_selection_columns(std::size_t dimension) const;

  // Throws ValidationError on out-of-range or missing-intercept masks, and
  // when KimHaziza is requested with differing masks.
  void check(std::size_t dimension) const;
};

// Throws ValidationError describing the first violated invariant.
void check_observed(const ObservedData& observed);

// Returns the input unchanged when every invariant holds.
ObservedData validate(ObservedData observed);

void check_population(const FinitePopulation& population);

std::string to_string(DesignKind kind);
std::string to_string(OutcomeFamily family);
std::string to_string(FitMethod method);
DesignKind parse_design_kind(const std::string& text);
OutcomeFamily parse_outcome_family(const std::string& text);
FitMethod parse_fit_method(const std::string& text);

}  // namespace drpool

#endif  // DRPOOL_TYPES_H_
