#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <algorithm>
#include <numeric>
#include <random>

#include "drpool/designs.h"

using namespace drpool;
using doctest::Approx;

namespace {

JointProbProvider poisson(std::vector<double> pi, std::size_t n_pop) {
  return JointProbProvider({DesignKind::kPoisson, 0}, n_pop, std::move(pi));
}

JointProbProvider srswor(std::size_t n, std::size_t n_pop) {
  return JointProbProvider({DesignKind::kSrswor, n}, n_pop,
                           std::vector<double>(n, double(n) / double(n_pop)));
}

// Every sample of a design with its probability.
struct Sample {
  std::vector<std::size_t> units;
  double probability = 0.0;
};

std::vector<Sample> all_srswor_samples(std::size_t n_pop, std::size_t n) {
  std::vector<Sample> out;
  std::vector<bool> mask(n_pop, false);
  std::fill(mask.begin(), mask.begin() + static_cast<std::ptrdiff_t>(n), true);
  do {
    Sample s;
    for (std::size_t i = 0; i < n_pop; ++i) {
      if (mask[i]) s.units.push_back(i);
    }
    out.push_back(s);
  } while (std::prev_permutation(mask.begin(), mask.end()));
  for (auto& s : out) s.probability = 1.0 / static_cast<double>(out.size());
  return out;
}

std::vector<Sample> all_poisson_samples(const std::vector<double>& pi) {
  std::vector<Sample> out;
  const std::size_t n_pop = pi.size();
  for (std::size_t m = 1; m < (std::size_t{1} << n_pop); ++m) {
    Sample s;
    s.probability = 1.0;
    for (std::size_t i = 0; i < n_pop; ++i) {
      const bool in = (m >> i) & 1U;
      s.probability *= in ? pi[i] : 1.0 - pi[i];
      if (in) s.units.push_back(i);
    }
    out.push_back(s);
  }
  return out;
}

// Exact E over samples of f(sample).
template <typename F>
double expectation(const std::vector<Sample>& samples, F f) {
  double total = 0.0;
  for (const auto& s : samples) total += s.probability * f(s);
  return total;
}

struct Enumerated {
  double true_cov = 0.0;
  double mean_estimate = 0.0;
};

// Exact design covariance of the HT means of u and v, and the exact
// expectation of ht_cov_estimate, over all samples.
Enumerated enumerate(const std::vector<Sample>& samples, const std::vector<double>& pi,
                     const std::vector<double>& u, const std::vector<double>& v,
                     const DesignDescriptor& design) {
  const std::size_t n_pop = pi.size();
  auto ht = [&](const Sample& s, const std::vector<double>& z) {
    double t = 0.0;
    for (std::size_t i : s.units) t += z[i] / pi[i];
    return t / static_cast<double>(n_pop);
  };
  const double mu = std::accumulate(u.begin(), u.end(), 0.0) / double(n_pop);
  const double mv = std::accumulate(v.begin(), v.end(), 0.0) / double(n_pop);
  Enumerated e;
  e.true_cov = expectation(samples, [&](const Sample& s) { return (ht(s, u) - mu) * (ht(s, v) - mv); });
  e.mean_estimate = expectation(samples, [&](const Sample& s) {
    std::vector<double> su, sv, sp;
    for (std::size_t i : s.units) {
      su.push_back(u[i]);
      sv.push_back(v[i]);
      sp.push_back(pi[i]);
    }
    JointProbProvider provider(design, n_pop, sp);
    return ht_cov_estimate(su, sv, provider, n_pop);
  });
  return e;
}

}  // namespace

TEST_CASE("second-order inclusion probabilities") {
  const auto p = poisson({0.2, 0.5, 0.3}, 10);
  CHECK(joint_prob(p, 0, 1) == Approx(0.10));
  CHECK(joint_prob(p, 2, 2) == Approx(0.3));
  CHECK(joint_prob(p, 1, 0) == joint_prob(p, 0, 1));

  const auto s = srswor(4, 10);
  CHECK(joint_prob(s, 0, 3) == Approx(2.0 / 15.0));
  CHECK(joint_prob(s, 2, 2) == Approx(0.4));
  CHECK_THROWS_AS(srswor(1, 10), ValidationError);
  CHECK_THROWS_AS(srswor(10, 10), ValidationError);
  CHECK_THROWS_AS(poisson({0.0}, 10), ValidationError);
  CHECK_THROWS_AS(poisson({1.2}, 10), ValidationError);
}

TEST_CASE("HT and Hajek means on hand examples") {
  CHECK(ht_mean(std::vector{1.0, 3.0}, std::vector{0.5, 0.5}, 4) == Approx(2.0));
  CHECK(ht_mean(std::vector{5.0}, std::vector{0.25}, 2) == Approx(10.0));
  const std::vector<double> y{2.0, -1.0, 4.5, 0.5};
  CHECK(ht_mean(y, std::vector<double>(4, 1.0), 4) == Approx(1.5));

  CHECK(hajek_mean(std::vector{7.0, 7.0, 7.0}, std::vector{0.1, 0.6, 0.9}) == Approx(7.0));
  CHECK(hajek_mean(std::vector{1.0, 3.0}, std::vector{0.5, 0.5}) == Approx(2.0));
  CHECK(hajek_mean(std::vector{0.0, 4.0}, std::vector{0.8, 0.2}) == Approx(3.2));
  CHECK_THROWS_AS(hajek_mean(std::vector<double>{}, std::vector<double>{}), ValidationError);
}

TEST_CASE("HT variance and covariance estimators on hand examples") {
  const auto one = poisson({0.5}, 10);
  CHECK(ht_var_estimate(std::vector{2.0}, one, 10) == Approx(0.08));
  const auto p = poisson({0.2, 0.4, 0.9}, 20);
  CHECK(ht_var_estimate(std::vector{0.0, 0.0, 0.0}, p, 20) == 0.0);
  const std::vector<double> u{1.0, -2.0, 0.5};
  const std::vector<double> v{0.3, 1.1, -4.0};
  CHECK(ht_cov_estimate(u, u, p, 20) == Approx(ht_var_estimate(u, p, 20)));
  CHECK(ht_cov_estimate(u, std::vector{0.0, 0.0, 0.0}, p, 20) == 0.0);
  CHECK_THROWS_AS(ht_var_estimate(std::vector{1.0}, p, 20), ValidationError);
}

TEST_CASE("SRSWOR N=6, n=3: full enumeration shows exact unbiasedness") {
  const std::vector<double> u{1.3, -0.7, 2.9, 0.4, 5.1, -2.2};
  const std::vector<double> v{0.2, 1.7, -1.1, 3.3, 0.9, 2.4};
  const auto samples = all_srswor_samples(6, 3);
  REQUIRE(samples.size() == 20);
  const std::vector<double> pi(6, 0.5);
  const DesignDescriptor des{DesignKind::kSrswor, 3};

  const Enumerated var = enumerate(samples, pi, u, u, des);
  CHECK(var.true_cov > 0.0);
  CHECK(std::abs(var.mean_estimate - var.true_cov) <= 1e-14 * std::abs(var.true_cov) + 1e-15);

  const Enumerated cov = enumerate(samples, pi, u, v, des);
  CHECK(std::abs(cov.mean_estimate - cov.true_cov) <= 1e-14 * std::abs(var.true_cov) + 1e-15);

  // The textbook SRSWOR variance (1 - f) S^2 / n as an independent check.
  const double mean = std::accumulate(u.begin(), u.end(), 0.0) / 6.0;
  double s2 = 0.0;
  for (double x : u) s2 += (x - mean) * (x - mean);
  s2 /= 5.0;
  CHECK(var.true_cov == Approx((1.0 - 0.5) * s2 / 3.0).epsilon(1e-13));
}

TEST_CASE("Poisson, unequal probabilities: full enumeration shows exact unbiasedness") {
  const std::vector<double> pi{0.2, 0.7, 0.45, 0.9, 0.3, 0.55, 0.15};
  const std::vector<double> u{1.0, -2.0, 0.5, 3.5, -1.25, 2.0, 4.0};
  const std::vector<double> v{0.5, 0.25, -3.0, 1.0, 2.0, -0.5, 1.5};
  const auto samples = all_poisson_samples(pi);
  const DesignDescriptor des{DesignKind::kPoisson, 0};
  // The empty sample contributes an estimate of 0 and is omitted above; the
  // true covariance needs it, so add it back explicitly.
  double p_empty = 1.0;
  for (double p : pi) p_empty *= 1.0 - p;
  const double mu = std::accumulate(u.begin(), u.end(), 0.0) / 7.0;
  const double mv = std::accumulate(v.begin(), v.end(), 0.0) / 7.0;
  const Enumerated e = enumerate(samples, pi, u, v, des);
  const double true_cov = e.true_cov + p_empty * mu * mv;
  CHECK(std::abs(e.mean_estimate - true_cov) <= 1e-13 * std::abs(true_cov));
}

TEST_CASE("Poisson covariance estimator collapses to its diagonal form") {
  std::mt19937_64 rng(11);
  std::uniform_real_distribution<double> unif(0.05, 1.0);
  std::normal_distribution<double> normal;
  for (int rep = 0; rep < 20; ++rep) {
    const std::size_t n = 1 + rep * 3;
    std::vector<double> pi(n), u(n), v(n);
    double expected = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
      pi[i] = unif(rng);
      u[i] = normal(rng);
      v[i] = normal(rng);
      expected += (1.0 - pi[i]) * u[i] * v[i] / (pi[i] * pi[i]);
    }
    expected /= 400.0 * 400.0;
    CHECK(ht_cov_estimate(u, v, poisson(pi, 400), 400) ==
          Approx(expected).epsilon(1e-12));
  }
}

TEST_CASE("properties: permutation symmetry, scaling, bilinearity, symmetry") {
  std::mt19937_64 rng(5);
  std::normal_distribution<double> normal;
  for (auto design : {DesignKind::kPoisson, DesignKind::kSrswor}) {
    const std::size_t n = 12;
    const std::size_t n_pop = 50;
    std::vector<double> pi(n, double(n) / double(n_pop));
    if (design == DesignKind::kPoisson) {
      for (std::size_t i = 0; i < n; ++i) pi[i] = 0.1 + 0.05 * double(i);
    }
    JointProbProvider provider({design, n}, n_pop, pi);
    std::vector<double> u(n), v(n), w(n);
    for (std::size_t i = 0; i < n; ++i) {
      u[i] = normal(rng);
      v[i] = normal(rng);
      w[i] = normal(rng);
    }
    const double var_u = ht_var_estimate(u, provider, n_pop);
    const double tol = 1e-12;

    std::vector<std::size_t> perm(n);
    std::iota(perm.begin(), perm.end(), std::size_t{0});
    std::shuffle(perm.begin(), perm.end(), rng);
    std::vector<double> pu(n), ppi(n);
    for (std::size_t i = 0; i < n; ++i) {
      pu[i] = u[perm[i]];
      ppi[i] = pi[perm[i]];
    }
    JointProbProvider permuted({design, n}, n_pop, ppi);
    CHECK(ht_var_estimate(pu, permuted, n_pop) == Approx(var_u).epsilon(tol));

    std::vector<double> cu(n);
    for (std::size_t i = 0; i < n; ++i) cu[i] = -3.5 * u[i];
    CHECK(ht_var_estimate(cu, provider, n_pop) == Approx(12.25 * var_u).epsilon(tol));

    CHECK(ht_cov_estimate(u, v, provider, n_pop) ==
          Approx(ht_cov_estimate(v, u, provider, n_pop)).epsilon(tol));
    std::vector<double> combo(n);
    for (std::size_t i = 0; i < n; ++i) combo[i] = 2.0 * v[i] - 0.5 * w[i];
    CHECK(ht_cov_estimate(u, combo, provider, n_pop) ==
          Approx(2.0 * ht_cov_estimate(u, v, provider, n_pop) -
                 0.5 * ht_cov_estimate(u, w, provider, n_pop))
              .epsilon(1e-10));
  }
}

TEST_CASE("SRSWOR factored covariance matches the explicit double sum") {
  std::mt19937_64 rng(9);
  std::normal_distribution<double> normal;
  const std::size_t n = 9;
  const std::size_t n_pop = 40;
  const auto provider = srswor(n, n_pop);
  std::vector<double> u(n), v(n);
  for (std::size_t i = 0; i < n; ++i) {
    u[i] = normal(rng);
    v[i] = normal(rng);
  }
  double direct = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = 0; j < n; ++j) {
      const double pij = provider.joint_prob(i, j);
      const double pi = provider.pi(i);
      const double pj = provider.pi(j);
      direct += (pij - pi * pj) / pij * (u[i] / pi) * (v[j] / pj);
    }
  }
  direct /= double(n_pop * n_pop);
  CHECK(ht_cov_estimate(u, v, provider, n_pop) == Approx(direct).epsilon(1e-12));
}
