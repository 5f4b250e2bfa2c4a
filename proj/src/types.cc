#include "drpool/types.h"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <sstream>

namespace drpool {

namespace {

bool all_finite(const Vector& v) { return v.allFinite(); }

void check_unit(const UnitRecord& unit, std::size_t dimension,
                const std::string& where) {
  if (static_cast<std::size_t>(unit.x.size()) != dimension) {
    throw ValidationError(where + ": dimension mismatch (expected " +
                          std::to_string(dimension) + " covariates, got " +
                          std::to_string(unit.x.size()) + ")");
  }
  if (unit.x.size() == 0 || unit.x[0] != 1.0) {
    throw ValidationError(where + ": x[0] must be the intercept 1");
  }
  if (!all_finite(unit.x) || !all_finite(unit.z) ||
      (unit.y && !std::isfinite(*unit.y))) {
    throw ValidationError(where + ": non-finite value");
  }
}

std::vector<std::size_t> resolve(const std::vector<std::size_t>& mask,
                                 std::size_t dimension) {
  if (mask.empty()) {
    std::vector<std::size_t> all(dimension);
    std::iota(all.begin(), all.end(), std::size_t{0});
    return all;
  }
  std::vector<std::size_t> sorted = mask;
  std::sort(sorted.begin(), sorted.end());
  sorted.erase(std::unique(sorted.begin(), sorted.end()), sorted.end());
  return sorted;
}

void check_mask(const std::vector<std::size_t>& mask, std::size_t dimension,
                const char* name) {
  const auto cols = resolve(mask, dimension);
  if (cols.empty() || cols.front() != 0) {
    throw ValidationError(std::string(name) +
                          " covariate mask must include the intercept column 0");
  }
  if (cols.back() >= dimension) {
    throw ValidationError(std::string(name) + " covariate mask column " +
                          std::to_string(cols.back()) + " out of range");
  }
}

}  // namespace

std::size_t ObservedData::dimension() const {
  if (!sample_b.empty()) return static_cast<std::size_t>(sample_b.front().x.size());
  if (!sample_a.empty()) return static_cast<std::size_t>(sample_a.front().unit.x.size());
  return 0;
}

bool ObservedData::has_sample_a_outcome() const {
  return !sample_a.empty() &&
         std::all_of(sample_a.begin(), sample_a.end(),
                     [](const SampleAUnit& u) { return u.unit.y.has_value(); });
}

std::vector<std::size_t> ModelSpec::resolved_outcome_columns(
    std::size_t dimension) const {
  return resolve(outcome_columns, dimension);
}

std::vector<std::size_t> ModelSpec::resolved_selection_columns(
    std::size_t dimension) const {
  return resolve(selection_columns, dimension);
}

void ModelSpec::check(std::size_t dimension) const {
  check_mask(outcome_columns, dimension, "outcome");
  check_mask(selection_columns, dimension, "selection");
  if (method == FitMethod::kKimHaziza &&
      resolved_outcome_columns(dimension) != resolved_selection_columns(dimension)) {
    throw ValidationError(
        "Kim-Haziza fitting requires the same covariates in both models");
  }
}

void check_observed(const ObservedData& observed) {
  const std::size_t dim = observed.dimension();
  if (dim == 0) throw ValidationError("empty samples");
  if (observed.sample_a.empty()) throw ValidationError("Sample A is empty");
  if (observed.sample_b.empty()) throw ValidationError("Sample B is empty");

  for (std::size_t i = 0; i < observed.sample_a.size(); ++i) {
    const auto& row = observed.sample_a[i];
    const std::string where = "sample_a row " + std::to_string(i + 1);
    check_unit(row.unit, dim, where);
    if (!(row.pi_a > 0.0)) {
      throw ValidationError(where + ": nonpositive inclusion probability");
    }
    if (!(row.pi_a <= 1.0)) {
      std::ostringstream msg;
      msg << where << ": inclusion probability " << row.pi_a
          << " outside (0, 1]";
      throw ValidationError(msg.str());
    }
  }
  for (std::size_t i = 0; i < observed.sample_b.size(); ++i) {
    const auto& row = observed.sample_b[i];
    const std::string where = "sample_b row " + std::to_string(i + 1);
    check_unit(row, dim, where);
    if (!row.y) throw ValidationError(where + ": missing outcome y");
  }

  if (observed.sample_a.size() < dim + 1 || observed.sample_b.size() < dim + 1) {
    throw ValidationError("underdetermined fit: each sample needs at least " +
                          std::to_string(dim + 1) + " rows");
  }
  if (observed.n_population < observed.sample_a.size() ||
      observed.n_population < observed.sample_b.size()) {
    throw ValidationError("population size smaller than a sample size");
  }
  if (observed.design.kind == DesignKind::kSrswor) {
    const std::size_t n = observed.design.sample_size;
    if (!(n > 1 && n < observed.n_population)) {
      throw ValidationError("SRSWOR requires 1 < n < N");
    }
    if (observed.sample_a.size() != n) {
      throw ValidationError("SRSWOR sample size does not match the design");
    }
  }
}

ObservedData validate(ObservedData observed) {
  check_observed(observed);
  return observed;
}

void check_population(const FinitePopulation& population) {
  const std::size_t n = population.size();
  if (n == 0) throw ValidationError("empty population");
  if (population.pi_a.size() != n || population.pi_b_true.size() != n) {
    throw ValidationError("population probability vectors have wrong length");
  }
  const std::size_t dim = static_cast<std::size_t>(population.units.front().x.size());
  for (std::size_t i = 0; i < n; ++i) {
    check_unit(population.units[i], dim, "population unit " + std::to_string(i));
    if (!(population.pi_a[i] > 0.0 && population.pi_a[i] <= 1.0)) {
      throw ValidationError("population unit " + std::to_string(i) +
                            ": pi_a outside (0, 1]");
    }
    if (!(population.pi_b_true[i] > 0.0 && population.pi_b_true[i] < 1.0)) {
      throw ValidationError("population unit " + std::to_string(i) +
                            ": selection probability outside (0, 1)");
    }
  }
  if (population.design.kind == DesignKind::kSrswor) {
    const std::size_t m = population.design.sample_size;
    if (!(m > 1 && m < n)) throw ValidationError("SRSWOR requires 1 < n < N");
  }
}

std::string to_string(DesignKind kind) {
  return kind == DesignKind::kPoisson ? "poisson" : "srswor";
}

std::string to_string(OutcomeFamily family) {
  return family == OutcomeFamily::kLinearGaussian ? "linear_gaussian"
                                                  : "logistic_binary";
}

std::string to_string(FitMethod method) {
  switch (method) {
    case FitMethod::kPseudoML: return "pseudo_ml";
    case FitMethod::kCalibration: return "calibration";
    case FitMethod::kKimHaziza: return "kim_haziza";
  }
  return "unknown";
}

DesignKind parse_design_kind(const std::string& text) {
  if (text == "poisson") return DesignKind::kPoisson;
  if (text == "srswor") return DesignKind::kSrswor;
  throw ValidationError("unknown design kind '" + text + "'");
}

OutcomeFamily parse_outcome_family(const std::string& text) {
  if (text == "linear_gaussian" || text == "linear") return OutcomeFamily::kLinearGaussian;
  if (text == "logistic_binary" || text == "logistic") return OutcomeFamily::kLogisticBinary;
  throw ValidationError("unknown outcome family '" + text + "'");
}

FitMethod parse_fit_method(const std::string& text) {
  if (text == "pseudo_ml" || text == "pml") return FitMethod::kPseudoML;
  if (text == "calibration") return FitMethod::kCalibration;
  if (text == "kim_haziza" || text == "kh") return FitMethod::kKimHaziza;
  throw ValidationError("unknown fit method '" + text + "'");
}

}  // namespace drpool
