// Variance and covariance estimation for the IPW / DR estimators.
//
// Every variance has the form
//   Var_HT( m - Delta_m over Sample A ) + (1/N^2) sum_B (1 - pi) / pi^2 (y - Delta_y)^2 + C
// where the per-unit centring terms Delta_m, Delta_y depend on the estimator
// and on which nuisance models are assumed correct (the regime). C is the
// Kim-Haziza correction and vanishes outside that regime.

#ifndef DRPOOL_UNCERTAINTY_H_
#define DRPOOL_UNCERTAINTY_H_

#include <optional>
#include <string>

#include "drpool/designs.h"
#include "drpool/estimators.h"
#include "drpool/nuisance.h"

namespace drpool {

enum class Regime { kBothCorrect, kSelectionCorrect, kKHDoublyRobust };

std::string to_string(Regime regime);
Regime parse_regime(const std::string& text);

// b4 / b3 come from the DR1 / DR2 expansions; b1 / b2 are the same vectors
// with the outcome model set to zero (the IPW reductions).
enum class BVariant { kB1, kB2, kB3, kB4 };

enum class Sigma2Model { kConstant, kLinearInX };

std::string to_string(Sigma2Model model);
Sigma2Model parse_sigma2_model(const std::string& text);

// One dataset with its fitted nuisance models: the frame, the fit, the fitted
// values and the Sample A design. Built once and shared by every estimator,
// variance and covariance computed on the same data.
class Analysis {
 public:
  Analysis(ModelFrame frame, NuisanceFit fit);

  static Analysis fit(const ObservedData& observed, const ModelSpec& spec);
  static Analysis with_fit(const ObservedData& observed, const NuisanceFit& fit);

  const ModelFrame& frame() const { return frame_; }
  const NuisanceFit& nuisance() const { return fit_; }
  const FittedValues& fitted() const { return fitted_; }
  const JointProbProvider& provider() const { return provider_; }
  double n_population() const { return static_cast<double>(frame_.n_population); }

  double point(EstimatorKind kind) const;

 private:
  ModelFrame frame_;
  NuisanceFit fit_;
  FittedValues fitted_;
  JointProbProvider provider_;
};

struct DeltaSet {
  Vector delta_m;              // one per Sample A unit
  Vector delta_y;              // one per Sample B unit
  std::optional<Vector> b_hat;
  double m_bar_hat = 0.0;      // HT mean of m-hat over Sample A
};

// Estimated residual variance sigma^2(x) of y - m(x; beta) given covariates.
struct Sigma2Fit {
  Sigma2Model model = Sigma2Model::kConstant;
  Vector coefficients;  // constant: one entry; linear: outcome covariates

  // Rows of x are outcome-model covariates; truncated below at 0.
  Vector evaluate(const Matrix& x) const;
};

struct VarianceOptions {
  Sigma2Model sigma2 = Sigma2Model::kConstant;
};

struct VarianceEstimate {
  double total = 0.0;           // floored at 0
  double design_term = 0.0;     // HT variance over Sample A
  double selection_term = 0.0;  // Sample B term
  double correction = 0.0;      // Kim-Haziza C
  bool floored = false;         // raw total was negative
  // DR2 under both-correct drops Var(m-bar* - Y-bar), negligible when N is
  // large relative to Sample B.
  bool large_population_approximation = false;
  // The regime formulas were derived for pseudo-ML alpha; set when the fit
  // came from calibration.
  bool formulas_derived_under_pml = false;
};

bool is_supported(EstimatorKind kind, Regime regime);

Vector b_hat(BVariant variant, const Analysis& analysis);
Vector b_hat(BVariant variant, const ObservedData& observed, const NuisanceFit& fit);

DeltaSet delta_set(EstimatorKind kind, Regime regime, const Analysis& analysis);
DeltaSet delta_set(EstimatorKind kind, Regime regime, const ObservedData& observed,
                   const NuisanceFit& fit);

Sigma2Fit sigma2_hat(const Analysis& analysis, Sigma2Model model);
Sigma2Fit sigma2_hat(const ObservedData& observed, const NuisanceFit& fit,
                     Sigma2Model model);

// (1/N^2) [ sum_A sigma2(x)/pi^A - sum_B sigma2(x)/pi^B-hat ].
double kh_correction(const Analysis& analysis, const Sigma2Fit& sigma2);

VarianceEstimate var_estimate(EstimatorKind kind, Regime regime, const Analysis& analysis,
                              const VarianceOptions& options = {});
VarianceEstimate var_estimate(EstimatorKind kind, Regime regime, const ObservedData& observed,
                              const NuisanceFit& fit, const JointProbProvider& provider,
                              const VarianceOptions& options = {});

// Design variance of the HT or Hajek estimator from Sample A outcomes.
double var_prob_estimate(EstimatorKind prob_kind, const ObservedData& observed,
                         const JointProbProvider& provider);
double var_prob_estimate(EstimatorKind prob_kind, const ModelFrame& frame,
                         const JointProbProvider& provider);

// Cov(DR or IPW estimate, HT or Hajek estimate).
double cov_estimate(EstimatorKind kind, Regime regime, EstimatorKind prob_kind,
                    const Analysis& analysis);
double cov_estimate(EstimatorKind kind, Regime regime, EstimatorKind prob_kind,
                    const ObservedData& observed, const NuisanceFit& fit,
                    const JointProbProvider& provider);

}  // namespace drpool

#endif  // DRPOOL_UNCERTAINTY_H_
