// Point estimators of the population mean: Horvitz-Thompson and Hajek on
// Sample A, and the IPW / doubly robust estimators built on Sample B.

#ifndef DRPOOL_ESTIMATORS_H_
#define DRPOOL_ESTIMATORS_H_

#include <string>

#include "drpool/nuisance.h"
#include "drpool/types.h"

namespace drpool {

enum class EstimatorKind { kHT, kHajek, kIPW1, kIPW2, kDR1, kDR2 };

std::string to_string(EstimatorKind kind);
EstimatorKind parse_estimator_kind(const std::string& text);

inline bool is_probability_kind(EstimatorKind k) {
  return k == EstimatorKind::kHT || k == EstimatorKind::kHajek;
}
inline bool is_ipw_kind(EstimatorKind k) {
  return k == EstimatorKind::kIPW1 || k == EstimatorKind::kIPW2;
}
inline bool is_dr_kind(EstimatorKind k) {
  return k == EstimatorKind::kDR1 || k == EstimatorKind::kDR2;
}
// DR1 / IPW1 normalise by N; DR2 / IPW2 by the estimated population sizes.
inline bool is_size_normalised(EstimatorKind k) {
  return k == EstimatorKind::kDR1 || k == EstimatorKind::kIPW1;
}

// HT or Hajek from Sample A outcomes.
double point_estimate(EstimatorKind kind, const ObservedData& observed);

// Any kind. IPW kinds read alpha only; DR kinds read alpha and beta.
double point_estimate(EstimatorKind kind, const ObservedData& observed,
                      const NuisanceFit& fit);

// Frame-level variants; `fitted` is required for IPW/DR kinds.
double point_estimate(EstimatorKind kind, const ModelFrame& frame,
                      const FittedValues* fitted);

// sum_A 1/pi^A.
double estimated_size_a(const ModelFrame& frame);
// sum_B 1/pi^B-hat.
double estimated_size_b(const Vector& pi_b);

}  // namespace drpool

#endif  // DRPOOL_ESTIMATORS_H_
