#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <cmath>
#include <random>

#include "drpool/combiner.h"
#include "test_data.h"

using namespace drpool;
using doctest::Approx;

TEST_CASE("weights on hand examples") {
  CHECK(optimal_weight(1.0, 1.0, 0.0).w == Approx(0.5));
  CHECK(optimal_weight(4.0, 1.0, 0.0).w == Approx(0.8));
  CHECK(optimal_weight(2.0, 1.0, 0.5).w == Approx(0.75));
  // Strongly correlated inputs push w outside [0, 1]; it is not clipped.
  const WeightChoice c = optimal_weight(4.0, 1.0, 1.8);
  CHECK(c.w == Approx(2.2 / 1.4));
  CHECK(c.w > 1.0);
  CHECK_FALSE(c.fallback_used);
  CHECK(pooled_variance(0.5, 1.0, 1.0, 0.0) == Approx(0.5));
  CHECK(pooled_variance(0.8, 4.0, 1.0, 0.0) == Approx(0.8));
}

TEST_CASE("degenerate denominators fall back to the smaller variance") {
  const WeightChoice equal = optimal_weight(1.0, 1.0, 1.0);
  CHECK(equal.fallback_used);
  CHECK(equal.w == 0.0);
  const WeightChoice dr_better = optimal_weight(2.0, 1.0, std::sqrt(2.0) * 1.0 + 0.1);
  CHECK(dr_better.fallback_used);
  CHECK(dr_better.w == 1.0);
  CHECK(optimal_weight(0.0, 0.0, 0.0).fallback_used);
  CHECK_THROWS_AS(optimal_weight(-1.0, 1.0, 0.0), ValidationError);
  CHECK_THROWS_AS(optimal_weight(1.0, NAN, 0.0), ValidationError);
}

TEST_CASE("the weight minimises the quadratic and beats both inputs") {
  std::mt19937_64 rng(3);
  std::uniform_real_distribution<double> unif(0.01, 5.0);
  std::uniform_real_distribution<double> corr(-0.99, 0.99);
  for (int rep = 0; rep < 1000; ++rep) {
    const double vp = unif(rng), vd = unif(rng);
    const double cov = corr(rng) * std::sqrt(vp * vd);
    const WeightChoice c = optimal_weight(vp, vd, cov);
    REQUIRE_FALSE(c.fallback_used);
    const double v = pooled_variance(c.w, vp, vd, cov);
    // Independent closed form of the minimum: (vp vd - cov^2) / (vp + vd - 2 cov).
    CHECK(v == Approx((vp * vd - cov * cov) / (vp + vd - 2.0 * cov)).epsilon(1e-9));
    CHECK(v <= std::min(vp, vd) * (1.0 + 1e-12));
    for (double h : {-1e-3, 1e-3}) CHECK(pooled_variance(c.w + h, vp, vd, cov) >= v);
    // Swapping the inputs swaps the weight.
    CHECK(optimal_weight(vd, vp, cov).w == Approx(1.0 - c.w).epsilon(1e-12));
  }
}

TEST_CASE("combine builds the interval") {
  const PooledReport r = combine({1.0, 4.0, 2.0, 1.0, 0.0}, 0.95);
  CHECK(r.w == Approx(0.8));
  CHECK(r.pooled_estimate == Approx(1.8));
  CHECK(r.pooled_variance == Approx(0.8));
  const double z = 1.959963984540054;
  CHECK(normal_critical_value(0.95) == Approx(z).epsilon(1e-14));
  CHECK(normal_critical_value(0.90) == Approx(1.6448536269514722).epsilon(1e-14));
  CHECK(r.ci_low == Approx(1.8 - z * std::sqrt(0.8)));
  CHECK(r.ci_high == Approx(1.8 + z * std::sqrt(0.8)));
  CHECK(r.weight_treated_as_known);
  CHECK_THROWS_AS(combine({}, 1.0), ValidationError);
  CHECK_THROWS_AS(normal_critical_value(0.0), ValidationError);
}

TEST_CASE("pool on data uses the estimator's own variances") {
  const ObservedData d = testing::toy_data(17);
  const Analysis an = Analysis::fit(d, ModelSpec{});
  const PooledReport r = pool(an, EstimatorKind::kDR2, Regime::kBothCorrect, EstimatorKind::kHajek, 0.95);
  CHECK(r.inputs.est_p == an.point(EstimatorKind::kHajek));
  CHECK(r.inputs.est_dr == an.point(EstimatorKind::kDR2));
  CHECK(r.inputs.var_dr == var_estimate(EstimatorKind::kDR2, Regime::kBothCorrect, an).total);
  CHECK(r.inputs.cov == cov_estimate(EstimatorKind::kDR2, Regime::kBothCorrect, EstimatorKind::kHajek, an));
  CHECK(r.pooled_variance <= std::min(r.inputs.var_p, r.inputs.var_dr));
  const NuisanceFit fit = fit_nuisance(d, ModelSpec{});
  const PooledReport again = pool(d, fit, EstimatorKind::kDR2, Regime::kBothCorrect, EstimatorKind::kHajek, 0.95);
  CHECK(again.pooled_estimate == r.pooled_estimate);
  CHECK_THROWS_AS(pool(an, EstimatorKind::kDR2, Regime::kBothCorrect, EstimatorKind::kDR1, 0.95),
                  ValidationError);
}
