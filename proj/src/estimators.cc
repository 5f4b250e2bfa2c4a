#include "drpool/estimators.h"

#include "drpool/designs.h"

namespace drpool {

std::string to_string(EstimatorKind kind) {
  switch (kind) {
    case EstimatorKind::kHT: return "HT";
    case EstimatorKind::kHajek: return "Hajek";
    case EstimatorKind::kIPW1: return "IPW1";
    case EstimatorKind::kIPW2: return "IPW2";
    case EstimatorKind::kDR1: return "DR1";
    case EstimatorKind::kDR2: return "DR2";
  }
  return "unknown";
}

EstimatorKind parse_estimator_kind(const std::string& text) {
  for (auto k : {EstimatorKind::kHT, EstimatorKind::kHajek, EstimatorKind::kIPW1,
                 EstimatorKind::kIPW2, EstimatorKind::kDR1, EstimatorKind::kDR2}) {
    if (text == to_string(k)) return k;
  }
  throw ValidationError("unknown estimator '" + text + "'");
}

double estimated_size_a(const ModelFrame& frame) { return frame.pi_a.cwiseInverse().sum(); }

double estimated_size_b(const Vector& pi_b) { return pi_b.cwiseInverse().sum(); }

double point_estimate(EstimatorKind kind, const ModelFrame& frame,
                      const FittedValues* fitted) {
  if (is_probability_kind(kind)) {
    if (!frame.y_a) throw ValidationError(to_string(kind) + " needs outcomes on Sample A");
    return kind == EstimatorKind::kHT
               ? ht_mean(as_span(*frame.y_a), as_span(frame.pi_a), frame.n_population)
               : hajek_mean(as_span(*frame.y_a), as_span(frame.pi_a));
  }
  if (fitted == nullptr) throw ValidationError(to_string(kind) + " needs a nuisance fit");

  const bool ipw = is_ipw_kind(kind);
  const double a_total = ipw ? 0.0 : (fitted->m_a.array() / frame.pi_a.array()).sum();
  const Vector resid = ipw ? frame.y_b : Vector(frame.y_b - fitted->m_b);
  const double b_total = (resid.array() / fitted->pi_b.array()).sum();
  if (is_size_normalised(kind)) {
    return (a_total + b_total) / static_cast<double>(frame.n_population);
  }
  const double a_part = ipw ? 0.0 : a_total / estimated_size_a(frame);
  return a_part + b_total / estimated_size_b(fitted->pi_b);
}

double point_estimate(EstimatorKind kind, const ObservedData& observed) {
  if (!is_probability_kind(kind)) {
    throw ValidationError(to_string(kind) + " needs a nuisance fit");
  }
  if (!observed.has_sample_a_outcome()) {
    throw ValidationError(to_string(kind) + " needs outcomes on Sample A");
  }
  std::vector<double> y;
  std::vector<double> pi;
  for (const auto& row : observed.sample_a) {
    y.push_back(*row.unit.y);
    pi.push_back(row.pi_a);
  }
  return kind == EstimatorKind::kHT ? ht_mean(y, pi, observed.n_population)
                                    : hajek_mean(y, pi);
}

double point_estimate(EstimatorKind kind, const ObservedData& observed,
                      const NuisanceFit& fit) {
  if (is_probability_kind(kind)) return point_estimate(kind, observed);
  const ModelFrame frame = make_frame(observed, fit.spec);
  const FittedValues fitted = fitted_values(frame, fit);
  return point_estimate(kind, frame, &fitted);
}

}  // namespace drpool
