#include "drpool/designs.h"

#include <string>

namespace drpool {

JointProbProvider::JointProbProvider(DesignDescriptor design,
                                     std::size_t n_population,
                                     std::vector<double> pi)
    : design_(design), n_population_(n_population), pi_(std::move(pi)) {
  for (double p : pi_) {
    if (!(p > 0.0 && p <= 1.0)) {
      throw ValidationError("inclusion probability outside (0, 1]");
    }
  }
  if (design_.kind == DesignKind::kSrswor) {
    const std::size_t n = design_.sample_size;
    if (!(n > 1 && n < n_population_)) {
      throw ValidationError("SRSWOR requires 1 < n < N");
    }
  }
}

JointProbProvider JointProbProvider::from_observed(const ObservedData& observed) {
  std::vector<double> pi;
  pi.reserve(observed.sample_a.size());
  for (const auto& row : observed.sample_a) pi.push_back(row.pi_a);
  return JointProbProvider(observed.design, observed.n_population, std::move(pi));
}

double JointProbProvider::joint_prob(std::size_t i, std::size_t j) const {
  const double pi_i = pi_.at(i);
  const double pi_j = pi_.at(j);
  if (i == j) return pi_i;
  if (design_.kind == DesignKind::kPoisson) return pi_i * pi_j;
  const double n = static_cast<double>(design_.sample_size);
  const double big_n = static_cast<double>(n_population_);
  return n * (n - 1.0) / (big_n * (big_n - 1.0));
}

double joint_prob(const JointProbProvider& provider, std::size_t i, std::size_t j) {
  return provider.joint_prob(i, j);
}

double ht_mean(std::span<const double> values, std::span<const double> pi,
               std::size_t n_population) {
  if (values.size() != pi.size()) throw ValidationError("length mismatch in ht_mean");
  double total = 0.0;
  for (std::size_t i = 0; i < values.size(); ++i) total += values[i] / pi[i];
  return total / static_cast<double>(n_population);
}

double hajek_mean(std::span<const double> values, std::span<const double> pi) {
  if (values.size() != pi.size()) throw ValidationError("length mismatch in hajek_mean");
  if (values.empty()) throw ValidationError("Hajek mean of an empty sample");
  double num = 0.0;
  double den = 0.0;
  for (std::size_t i = 0; i < values.size(); ++i) {
    num += values[i] / pi[i];
    den += 1.0 / pi[i];
  }
  return num / den;
}

double ht_cov_estimate(std::span<const double> residuals_u,
                       std::span<const double> residuals_v,
                       const JointProbProvider& provider, std::size_t n_population) {
  const std::size_t n = provider.size();
  if (residuals_u.size() != n || residuals_v.size() != n) {
    throw ValidationError("residual length does not match the sample");
  }
  // Diagonal: (pi_i - pi_i^2) / pi_i = 1 - pi_i.
  double diagonal = 0.0;
  double sum_u = 0.0, sum_v = 0.0, sum_uv = 0.0;
  double sum_pu = 0.0, sum_pv = 0.0, sum_ppuv = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    const double pi = provider.pi(i);
    const double eu = residuals_u[i] / pi;
    const double ev = residuals_v[i] / pi;
    // (pi_ii - pi_i^2) / pi_ii = 1 - pi_i
    diagonal += (1.0 - pi) * eu * ev;
    sum_u += eu;
    sum_v += ev;
    sum_uv += eu * ev;
    sum_pu += pi * eu;
    sum_pv += pi * ev;
    sum_ppuv += pi * pi * eu * ev;
  }
  double off_diagonal = 0.0;
  if (provider.design().kind == DesignKind::kSrswor && n > 1) {
    // pi_ij is a constant c off the diagonal, so
    //   sum_{i!=j} (1 - pi_i pi_j / c) eu_i ev_j
    // factors into sums over single units.
    const double c = provider.joint_prob(0, 1);
    off_diagonal = (sum_u * sum_v - sum_uv) - (sum_pu * sum_pv - sum_ppuv) / c;
  }
  // Poisson: pi_ij = pi_i pi_j off the diagonal, every cross term vanishes.
  const double big_n = static_cast<double>(n_population);
  return (diagonal + off_diagonal) / (big_n * big_n);
}

double ht_var_estimate(std::span<const double> residuals,
                       const JointProbProvider& provider, std::size_t n_population) {
  return ht_cov_estimate(residuals, residuals, provider, n_population);
}

}  // namespace drpool
