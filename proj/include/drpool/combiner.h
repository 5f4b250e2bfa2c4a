// Pooling of a probability-sample estimate (HT or Hajek) with a DR / IPW
// estimate: (1 - w) est_P + w est_DR with the variance-minimising w.

#ifndef DRPOOL_COMBINER_H_
#define DRPOOL_COMBINER_H_

#include "drpool/uncertainty.h"

namespace drpool {

inline constexpr double kWeightDenominatorEpsilon = 1e-10;

struct WeightChoice {
  double w = 0.0;
  bool fallback_used = false;
};

// w = (var_p - cov) / (var_p + var_dr - 2 cov). On a degenerate denominator
// the smaller-variance estimator gets all the weight. w is not clipped.
WeightChoice optimal_weight(double var_p, double var_dr, double cov);

// (1 - w)^2 var_p + 2 (1 - w) w cov + w^2 var_dr.
double pooled_variance(double w, double var_p, double var_dr, double cov);

struct PooledInputs {
  double est_p = 0.0;
  double var_p = 0.0;
  double est_dr = 0.0;
  double var_dr = 0.0;
  double cov = 0.0;
};

struct PooledReport {
  double w = 0.0;
  double pooled_estimate = 0.0;
  double pooled_variance = 0.0;
  double ci_low = 0.0;
  double ci_high = 0.0;
  PooledInputs inputs;
  bool fallback_used = false;
  // The variance ignores the sampling variability of w-hat.
  bool weight_treated_as_known = true;
};

// Two-sided normal quantile z_{(1 + level)/2}.
double normal_critical_value(double level);

PooledReport combine(const PooledInputs& inputs, double level);

PooledReport pool(const Analysis& analysis, EstimatorKind kind_dr, Regime regime,
                  EstimatorKind prob_kind, double level,
                  const VarianceOptions& options = {});
PooledReport pool(const ObservedData& observed, const NuisanceFit& fit, EstimatorKind kind_dr,
                  Regime regime, EstimatorKind prob_kind, double level,
                  const VarianceOptions& options = {});

}  // namespace drpool

#endif  // DRPOOL_COMBINER_H_
