// Fitting of the selection model pi^B(x; alpha) (logistic) and the outcome
// model m(x; beta) by pseudo maximum likelihood, calibration, or the joint
// Kim-Haziza estimating equations.

#ifndef DRPOOL_NUISANCE_H_
#define DRPOOL_NUISANCE_H_

#include <functional>
#include <optional>

#include "drpool/types.h"

namespace drpool {

inline constexpr double kSelectionTolerance = 1e-10;
inline constexpr double kKimHazizaTolerance = 1e-8;
inline constexpr double kMinSelectionProbability = 1e-8;
inline constexpr int kMaxNewtonIterations = 100;

struct SolverOptions {
  double tolerance = kSelectionTolerance;
  int max_iterations = kMaxNewtonIterations;
};

// Per-sample design matrices restricted to each model's covariate columns.
struct ModelFrame {
  ModelSpec spec;
  DesignDescriptor design;
  std::size_t n_population = 0;
  Matrix xa_selection;
  Matrix xb_selection;
  Matrix xa_outcome;
  Matrix xb_outcome;
  Vector pi_a;
  Vector y_b;
  std::optional<Vector> y_a;

  Eigen::Index n_a() const { return pi_a.size(); }
  Eigen::Index n_b() const { return y_b.size(); }
};

ModelFrame make_frame(const ObservedData& observed, const ModelSpec& spec);

// Value and analytic Jacobian of an estimating function.
struct EquationSystem {
  Vector value;
  Matrix jacobian;
};

namespace equations {

// (1/N) [ sum_B x - sum_A x pi^B(x; alpha) / pi^A ]
EquationSystem pseudo_ml(const ModelFrame& frame, const Vector& alpha);

// (1/N) [ sum_B x / pi^B(x; alpha) - sum_A x / pi^A ]
EquationSystem calibration(const ModelFrame& frame, const Vector& alpha);

// Unweighted ML score on Sample B, scaled by 1/n_B.
EquationSystem outcome_score(const ModelFrame& frame, const Vector& beta);

// Stacked Kim-Haziza system in theta = (alpha, beta):
//   (1/N) sum_B x (1 - pi^B) / pi^B (y - m)                    = 0
//   (1/N) sum (R^A / pi^A - R^B / pi^B) dm/dbeta              = 0
EquationSystem kim_haziza(const ModelFrame& frame, const Vector& theta);

}  // namespace equations

struct NewtonResult {
  Vector solution;
  int iterations = 0;
  double max_abs_residual = 0.0;
};

// Newton iteration with step halving on the residual norm. Throws
// SolverError on a singular Jacobian or when the tolerance is not reached.
NewtonResult newton_solve(const std::function<EquationSystem(const Vector&)>& system,
                          Vector start, const SolverOptions& options,
                          const std::string& what);

struct SelectionFit {
  Vector alpha;
  int iterations = 0;
  double max_abs_score = 0.0;
};

struct OutcomeFit {
  Vector beta;
  int iterations = 0;
  double max_abs_score = 0.0;
};

struct NuisanceFit {
  ModelSpec spec;
  Vector alpha;
  Vector beta;
  int iterations = 0;
  double max_abs_score = 0.0;
  double tolerance = kSelectionTolerance;
  // The outcome model is fitted by unweighted ML on Sample B (not 1/pi^B
  // weighted) unless the Kim-Haziza system determines beta.
  bool outcome_weighted = false;
};

SelectionFit fit_selection_pml(const ModelFrame& frame);
SelectionFit fit_selection_pml(const ObservedData& observed, const ModelSpec& spec);
SelectionFit fit_selection_calibration(const ModelFrame& frame);
SelectionFit fit_selection_calibration(const ObservedData& observed,
                                       const ModelSpec& spec);
OutcomeFit fit_outcome_ml(const ModelFrame& frame);
OutcomeFit fit_outcome_ml(const ObservedData& observed, const ModelSpec& spec);
NuisanceFit fit_kh(const ModelFrame& frame);
NuisanceFit fit_kh(const ObservedData& observed, const ModelSpec& spec);

// Dispatches on spec.method.
NuisanceFit fit_nuisance(const ModelFrame& frame);
NuisanceFit fit_nuisance(const ObservedData& observed, const ModelSpec& spec);

double expit(double t);
double logit(double p);
double predict_selection(const Vector& alpha, const Vector& x);
double predict_outcome(const Vector& beta, const Vector& x, OutcomeFamily family);

// m-hat on both samples; pi^B-hat on Sample B and evaluated at the Sample A
// covariates.
struct FittedValues {
  Vector m_a;
  Vector m_b;
  Vector pi_b;
  Vector pi_b_on_a;
};

FittedValues fitted_values(const ModelFrame& frame, const NuisanceFit& fit);

}  // namespace drpool

#endif  // DRPOOL_NUISANCE_H_
