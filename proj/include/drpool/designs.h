// Inclusion probabilities for the supported Sample A designs and the
// Horvitz-Thompson mean / variance / covariance estimators built on them.

#ifndef DRPOOL_DESIGNS_H_
#define DRPOOL_DESIGNS_H_

#include <cstddef>
#include <span>
#include <vector>

#include "drpool/types.h"

namespace drpool {

// First- and second-order inclusion probabilities for the sampled units of a
// without-replacement design. Indices refer to positions within the sample.
class JointProbProvider {
 public:
  JointProbProvider(DesignDescriptor design, std::size_t n_population,
                    std::vector<double> pi);

  static JointProbProvider from_observed(const ObservedData& observed);

  std::size_t size() const { return pi_.size(); }
  std::size_t n_population() const { return n_population_; }
  const DesignDescriptor& design() const { return design_; }

  double pi(std::size_t i) const { return pi_.at(i); }
  std::span<const double> pi() const { return pi_; }

  // pi_ij; equals pi_i on the diagonal.
  double joint_prob(std::size_t i, std::size_t j) const;

 private:
  DesignDescriptor design_;
  std::size_t n_population_;
  std::vector<double> pi_;
};

double joint_prob(const JointProbProvider& provider, std::size_t i, std::size_t j);

// (1/N) sum z_i / pi_i over the sample.
double ht_mean(std::span<const double> values, std::span<const double> pi,
               std::size_t n_population);

// (sum z_i / pi_i) / (sum 1 / pi_i). Throws ValidationError on an empty sample.
double hajek_mean(std::span<const double> values, std::span<const double> pi);

// Unbiased estimator of the design variance of the HT mean of u:
//   (1/N^2) sum_i sum_j (pi_ij - pi_i pi_j) / pi_ij * (u_i / pi_i) (u_j / pi_j)
// over sampled pairs.
double ht_var_estimate(std::span<const double> residuals,
                       const JointProbProvider& provider, std::size_t n_population);

// Same form with (u_i / pi_i)(v_j / pi_j): estimates Cov(HT(u), HT(v)).
double ht_cov_estimate(std::span<const double> residuals_u,
                       std::span<const double> residuals_v,
                       const JointProbProvider& provider, std::size_t n_population);

inline std::span<const double> as_span(const Vector& v) {
  return {v.data(), static_cast<std::size_t>(v.size())};
}

}  // namespace drpool

#endif  // DRPOOL_DESIGNS_H_
