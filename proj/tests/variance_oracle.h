// Reference implementations of the variance and covariance estimators,
// written directly from the raw records with scalar loops. They share no
// code with the library beyond the prediction helpers.

#ifndef DRPOOL_TESTS_VARIANCE_ORACLE_H_
#define DRPOOL_TESTS_VARIANCE_ORACLE_H_

#include <cmath>
#include <vector>

#include "drpool/uncertainty.h"

namespace drpool::testing {

struct OracleUnit {
  std::vector<double> x;  // selection covariates
  double m = 0.0;         // fitted outcome (0 for IPW)
  double pi = 0.0;        // pi^A on A, pi^B-hat on B
  double pi_b = 0.0;      // pi^B-hat (A units)
  double y = 0.0;
};

struct OracleData {
  double n = 0.0;
  DesignDescriptor design;
  std::vector<OracleUnit> a, b;
};

inline std::vector<double> pick(const Vector& x, const std::vector<std::size_t>& cols) {
  std::vector<double> out;
  for (std::size_t c : cols) out.push_back(x[static_cast<Eigen::Index>(c)]);
  return out;
}

inline OracleData oracle_data(const ObservedData& d, const NuisanceFit& fit, bool zero_outcome) {
  OracleData o;
  o.n = static_cast<double>(d.n_population);
  o.design = d.design;
  const auto sel = fit.spec.resolved_selection_columns(d.dimension());
  const auto out = fit.spec.resolved_outcome_columns(d.dimension());
  auto unit = [&](const UnitRecord& r) {
    OracleUnit u;
    u.x = pick(r.x, sel);
    Vector xo(static_cast<Eigen::Index>(out.size())), xs(static_cast<Eigen::Index>(sel.size()));
    for (std::size_t k = 0; k < out.size(); ++k) xo[static_cast<Eigen::Index>(k)] = r.x[static_cast<Eigen::Index>(out[k])];
    for (std::size_t k = 0; k < sel.size(); ++k) xs[static_cast<Eigen::Index>(k)] = u.x[k];
    u.m = zero_outcome ? 0.0 : predict_outcome(fit.beta, xo, fit.spec.family);
    u.pi_b = predict_selection(fit.alpha, xs);
    u.y = r.y.value_or(0.0);
    return u;
  };
  for (const auto& a : d.sample_a) {
    OracleUnit u = unit(a.unit);
    u.pi = a.pi_a;
    o.a.push_back(u);
  }
  for (const auto& b : d.sample_b) {
    OracleUnit u = unit(b);
    u.pi = u.pi_b;
    o.b.push_back(u);
  }
  return o;
}

// (1/N^2) sum_ij (pi_ij - pi_i pi_j) / pi_ij * u_i/pi_i * v_j/pi_j over A.
inline double oracle_design_cov(const OracleData& o, const std::vector<double>& u,
                                const std::vector<double>& v) {
  const std::size_t n_a = o.a.size();
  double total = 0.0;
  for (std::size_t i = 0; i < n_a; ++i) {
    for (std::size_t j = 0; j < n_a; ++j) {
      const double pi = o.a[i].pi, pj = o.a[j].pi;
      double pij;
      if (i == j) {
        pij = pi;
      } else if (o.design.kind == DesignKind::kPoisson) {
        pij = pi * pj;
      } else {
        const double n = static_cast<double>(o.design.sample_size);
        pij = n * (n - 1.0) / (o.n * (o.n - 1.0));
      }
      total += (pij - pi * pj) / pij * (u[i] / pi) * (v[j] / pj);
    }
  }
  return total / (o.n * o.n);
}

// b = [sum_B (1 - pi) x x']^{-1} sum_B (1 - pi)/pi r x, optionally centring r
// at sum(r/pi) / sum(1/pi).
inline std::vector<double> oracle_b(const OracleData& o, bool centre) {
  std::vector<double> r;
  double num = 0.0, den = 0.0;
  for (const auto& u : o.b) {
    r.push_back(u.y - u.m);
    num += (u.y - u.m) / u.pi;
    den += 1.0 / u.pi;
  }
  if (centre) {
    for (double& v : r) v -= num / den;
  }
  const std::size_t p = o.b.front().x.size();
  Matrix g = Matrix::Zero(static_cast<Eigen::Index>(p), static_cast<Eigen::Index>(p));
  Vector h = Vector::Zero(static_cast<Eigen::Index>(p));
  for (std::size_t k = 0; k < o.b.size(); ++k) {
    const auto& u = o.b[k];
    for (std::size_t i = 0; i < p; ++i) {
      h[static_cast<Eigen::Index>(i)] += (1.0 - u.pi) / u.pi * r[k] * u.x[i];
      for (std::size_t j = 0; j < p; ++j) {
        g(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) += (1.0 - u.pi) * u.x[i] * u.x[j];
      }
    }
  }
  const Vector b = g.fullPivLu().solve(h);
  return std::vector<double>(b.data(), b.data() + b.size());
}

inline double dot(const std::vector<double>& a, const std::vector<double>& b) {
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) s += a[i] * b[i];
  return s;
}

struct OracleCentring {
  std::vector<double> delta_m, delta_y;
};

inline OracleCentring oracle_centring(EstimatorKind kind, Regime regime, const OracleData& o) {
  const bool normalised_by_n = kind == EstimatorKind::kDR1 || kind == EstimatorKind::kIPW1;
  double m_bar = 0.0, size_a = 0.0, size_b = 0.0, dr_b = 0.0;
  for (const auto& u : o.a) {
    m_bar += u.m / u.pi;
    size_a += 1.0 / u.pi;
  }
  m_bar /= o.n;
  for (const auto& u : o.b) {
    size_b += 1.0 / u.pi;
    dr_b += (u.y - u.m) / u.pi;
  }
  OracleCentring c;
  if (regime != Regime::kSelectionCorrect) {
    for (std::size_t i = 0; i < o.a.size(); ++i) c.delta_m.push_back(normalised_by_n ? 0.0 : m_bar);
    for (const auto& u : o.b) c.delta_y.push_back(u.m);
    return c;
  }
  const std::vector<double> b = oracle_b(o, !normalised_by_n);
  if (normalised_by_n) {
    for (const auto& u : o.a) c.delta_m.push_back(-u.pi_b * dot(b, u.x));
    for (const auto& u : o.b) c.delta_y.push_back(u.m + u.pi * dot(b, u.x));
  } else {
    // The DR2 / IPW2 point estimate minus the HT mean of m.
    double sum_m = 0.0;
    for (const auto& u : o.a) sum_m += u.m / u.pi;
    const double estimate = sum_m / size_a + dr_b / size_b;
    for (const auto& u : o.a) c.delta_m.push_back(m_bar - u.pi_b * dot(b, u.x));
    for (const auto& u : o.b) c.delta_y.push_back(u.m + (estimate - m_bar) + u.pi * dot(b, u.x));
  }
  return c;
}

struct OracleVariance {
  double design = 0.0, selection = 0.0, correction = 0.0;
  double total() const { return std::max(0.0, design + selection + correction); }
};

// Constant residual variance for the Kim-Haziza correction.
inline OracleVariance oracle_variance(EstimatorKind kind, Regime regime, const ObservedData& d,
                                      const NuisanceFit& fit) {
  const bool ipw = kind == EstimatorKind::kIPW1 || kind == EstimatorKind::kIPW2;
  const OracleData o = oracle_data(d, fit, ipw);
  const OracleCentring c = oracle_centring(kind, regime, o);
  std::vector<double> u;
  for (std::size_t i = 0; i < o.a.size(); ++i) u.push_back(o.a[i].m - c.delta_m[i]);
  OracleVariance v;
  v.design = oracle_design_cov(o, u, u);
  for (std::size_t k = 0; k < o.b.size(); ++k) {
    const double e = o.b[k].y - c.delta_y[k];
    v.selection += (1.0 - o.b[k].pi) / (o.b[k].pi * o.b[k].pi) * e * e;
  }
  v.selection /= o.n * o.n;
  if (regime == Regime::kKHDoublyRobust) {
    double s2 = 0.0, inv_a = 0.0, inv_b = 0.0;
    for (const auto& b : o.b) s2 += (b.y - b.m) * (b.y - b.m);
    s2 /= static_cast<double>(o.b.size());
    for (const auto& a : o.a) inv_a += 1.0 / a.pi;
    for (const auto& b : o.b) inv_b += 1.0 / b.pi;
    v.correction = s2 * (inv_a - inv_b) / (o.n * o.n);
  }
  return v;
}

inline double oracle_covariance(EstimatorKind kind, Regime regime, EstimatorKind prob_kind,
                                const ObservedData& d, const NuisanceFit& fit) {
  const bool ipw = kind == EstimatorKind::kIPW1 || kind == EstimatorKind::kIPW2;
  const OracleData o = oracle_data(d, fit, ipw);
  const OracleCentring c = oracle_centring(kind, regime, o);
  double hajek = 0.0, size_a = 0.0;
  for (const auto& a : o.a) {
    hajek += a.y / a.pi;
    size_a += 1.0 / a.pi;
  }
  hajek /= size_a;
  std::vector<double> u, v;
  for (std::size_t i = 0; i < o.a.size(); ++i) {
    u.push_back(o.a[i].m - c.delta_m[i]);
    v.push_back(o.a[i].y - (prob_kind == EstimatorKind::kHajek ? hajek : 0.0));
  }
  return oracle_design_cov(o, u, v);
}

}  // namespace drpool::testing

#endif  // DRPOOL_TESTS_VARIANCE_ORACLE_H_
