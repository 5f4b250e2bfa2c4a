#include "drpool/combiner.h"

#include <cmath>

#include <boost/math/distributions/normal.hpp>

namespace drpool {

WeightChoice optimal_weight(double var_p, double var_dr, double cov) {
  if (!(var_p >= 0.0) || !(var_dr >= 0.0)) {
    throw ValidationError("negative input variance");
  }
  const double denom = var_p + var_dr - 2.0 * cov;
  if (denom <= kWeightDenominatorEpsilon * (var_p + var_dr)) {
    return {var_dr < var_p ? 1.0 : 0.0, true};
  }
  return {(var_p - cov) / denom, false};
}

double pooled_variance(double w, double var_p, double var_dr, double cov) {
  return (1.0 - w) * (1.0 - w) * var_p + 2.0 * (1.0 - w) * w * cov + w * w * var_dr;
}

double normal_critical_value(double level) {
  if (!(level > 0.0 && level < 1.0)) throw ValidationError("confidence level outside (0, 1)");
  static const boost::math::normal standard;
  return boost::math::quantile(standard, 0.5 * (1.0 + level));
}

PooledReport combine(const PooledInputs& inputs, double level) {
  const double z = normal_critical_value(level);
  const WeightChoice choice = optimal_weight(inputs.var_p, inputs.var_dr, inputs.cov);
  PooledReport r;
  r.inputs = inputs;
  r.w = choice.w;
  r.fallback_used = choice.fallback_used;
  r.pooled_estimate = (1.0 - r.w) * inputs.est_p + r.w * inputs.est_dr;
  r.pooled_variance =
      std::max(0.0, pooled_variance(r.w, inputs.var_p, inputs.var_dr, inputs.cov));
  const double half = z * std::sqrt(r.pooled_variance);
  r.ci_low = r.pooled_estimate - half;
  r.ci_high = r.pooled_estimate + half;
  return r;
}

PooledReport pool(const Analysis& analysis, EstimatorKind kind_dr, Regime regime,
                  EstimatorKind prob_kind, double level, const VarianceOptions& options) {
  if (!is_probability_kind(prob_kind)) throw ValidationError("pooling partner must be HT or Hajek");
  PooledInputs in;
  in.est_p = analysis.point(prob_kind);
  in.var_p = var_prob_estimate(prob_kind, analysis.frame(), analysis.provider());
  in.est_dr = analysis.point(kind_dr);
  in.var_dr = var_estimate(kind_dr, regime, analysis, options).total;
  in.cov = cov_estimate(kind_dr, regime, prob_kind, analysis);
  return combine(in, level);
}

PooledReport pool(const ObservedData& observed, const NuisanceFit& fit, EstimatorKind kind_dr,
                  Regime regime, EstimatorKind prob_kind, double level,
                  const VarianceOptions& options) {
  return pool(Analysis::with_fit(observed, fit), kind_dr, regime, prob_kind, level, options);
}

}  // namespace drpool
