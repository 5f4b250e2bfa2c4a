#include "drpool/uncertainty.h"

#include <algorithm>
#include <vector>

namespace drpool {

namespace {

JointProbProvider provider_for(const ModelFrame& frame) {
  return JointProbProvider(frame.design, frame.n_population,
                           std::vector<double>(frame.pi_a.data(),
                                               frame.pi_a.data() + frame.pi_a.size()));
}

void require_sample_a_outcome(const ModelFrame& frame) {
  if (!frame.y_a) throw ValidationError("Sample A outcomes are required");
}

void require_supported(EstimatorKind kind, Regime regime, const NuisanceFit& fit) {
  if (!is_supported(kind, regime)) {
    throw ValidationError("unsupported estimator/regime pair " + to_string(kind) + "/" +
                          to_string(regime));
  }
  if (regime == Regime::kKHDoublyRobust && fit.spec.method != FitMethod::kKimHaziza) {
    throw ValidationError("the Kim-Haziza regime needs a Kim-Haziza fit");
  }
}

// m-hat over Sample A, or zero for the IPW estimators.
Vector outcome_on_a(EstimatorKind kind, const Analysis& analysis) {
  return is_ipw_kind(kind) ? Vector::Zero(analysis.frame().n_a()) : analysis.fitted().m_a;
}

Vector outcome_on_b(EstimatorKind kind, const Analysis& analysis) {
  return is_ipw_kind(kind) ? Vector::Zero(analysis.frame().n_b()) : analysis.fitted().m_b;
}

// [sum_B (1 - pi) x x']^{-1} sum_B (1 - pi)/pi r x, with x the selection
// covariates. The 1/N factors of both sums cancel.
Vector regression_on_selection(const Analysis& analysis, const Vector& r) {
  const Matrix& x = analysis.frame().xb_selection;
  const Vector& pi = analysis.fitted().pi_b;
  const Vector one_minus = 1.0 - pi.array();
  const Matrix gram = x.transpose() * one_minus.asDiagonal() * x;
  const Vector rhs = x.transpose() * (one_minus.array() / pi.array() * r.array()).matrix();
  Eigen::LLT<Matrix> llt(gram);
  if (llt.info() != Eigen::Success || !(llt.rcond() > 1e-14)) {
    throw SolverError("singular Gram matrix in b-vector estimate");
  }
  return llt.solve(rhs);
}

}  // namespace

std::string to_string(Regime regime) {
  switch (regime) {
    case Regime::kBothCorrect: return "both_correct";
    case Regime::kSelectionCorrect: return "selection_correct";
    case Regime::kKHDoublyRobust: return "kh_doubly_robust";
  }
  return "unknown";
}

Regime parse_regime(const std::string& text) {
  for (auto r : {Regime::kBothCorrect, Regime::kSelectionCorrect, Regime::kKHDoublyRobust}) {
    if (text == to_string(r)) return r;
  }
  throw ValidationError("unknown regime '" + text + "'");
}

std::string to_string(Sigma2Model model) {
  return model == Sigma2Model::kConstant ? "constant" : "linear_in_x";
}

Sigma2Model parse_sigma2_model(const std::string& text) {
  if (text == "constant") return Sigma2Model::kConstant;
  if (text == "linear_in_x") return Sigma2Model::kLinearInX;
  throw ValidationError("unknown sigma2 model '" + text + "'");
}

Analysis::Analysis(ModelFrame frame, NuisanceFit fit)
    : frame_(std::move(frame)),
      fit_(std::move(fit)),
      fitted_(fitted_values(frame_, fit_)),
      provider_(provider_for(frame_)) {}

Analysis Analysis::fit(const ObservedData& observed, const ModelSpec& spec) {
  ModelFrame frame = make_frame(observed, spec);
  NuisanceFit nuisance = fit_nuisance(frame);
  return Analysis(std::move(frame), std::move(nuisance));
}

Analysis Analysis::with_fit(const ObservedData& observed, const NuisanceFit& fit) {
  return Analysis(make_frame(observed, fit.spec), fit);
}

double Analysis::point(EstimatorKind kind) const {
  return point_estimate(kind, frame_, &fitted_);
}

bool is_supported(EstimatorKind kind, Regime regime) {
  switch (kind) {
    case EstimatorKind::kDR1: return true;
    case EstimatorKind::kDR2: return regime != Regime::kKHDoublyRobust;
    case EstimatorKind::kIPW1:
    case EstimatorKind::kIPW2: return regime == Regime::kSelectionCorrect;
    default: return false;
  }
}

Vector b_hat(BVariant variant, const Analysis& analysis) {
  const Vector& y = analysis.frame().y_b;
  const bool zero_outcome = variant == BVariant::kB1 || variant == BVariant::kB2;
  Vector r = zero_outcome ? y : Vector(y - analysis.fitted().m_b);
  if (variant == BVariant::kB2 || variant == BVariant::kB3) {
    // Centre by the N-hat^B-normalised IPW mean of r, so that b3 with m = 0
    // is exactly b2.
    const Vector& pi = analysis.fitted().pi_b;
    const double centre = (r.array() / pi.array()).sum() / estimated_size_b(pi);
    r.array() -= centre;
  }
  return regression_on_selection(analysis, r);
}

Vector b_hat(BVariant variant, const ObservedData& observed, const NuisanceFit& fit) {
  return b_hat(variant, Analysis::with_fit(observed, fit));
}

DeltaSet delta_set(EstimatorKind kind, Regime regime, const Analysis& analysis) {
  require_supported(kind, regime, analysis.nuisance());
  const ModelFrame& frame = analysis.frame();
  const FittedValues& fv = analysis.fitted();
  const Vector m_a = outcome_on_a(kind, analysis);
  const Vector m_b = outcome_on_b(kind, analysis);

  DeltaSet d;
  d.m_bar_hat = ht_mean(as_span(m_a), as_span(frame.pi_a), frame.n_population);

  if (regime != Regime::kSelectionCorrect) {
    // Both models correct, or DR1 with Kim-Haziza fitting.
    d.delta_m = kind == EstimatorKind::kDR1 ? Vector::Zero(frame.n_a())
                                            : Vector::Constant(frame.n_a(), d.m_bar_hat);
    d.delta_y = m_b;
    return d;
  }

  BVariant variant = BVariant::kB4;
  switch (kind) {
    case EstimatorKind::kDR1: variant = BVariant::kB4; break;
    case EstimatorKind::kDR2: variant = BVariant::kB3; break;
    case EstimatorKind::kIPW1: variant = BVariant::kB1; break;
    case EstimatorKind::kIPW2: variant = BVariant::kB2; break;
    default: break;
  }
  const Vector b = b_hat(variant, analysis);
  const Vector lin_a = fv.pi_b_on_a.array() * (frame.xa_selection * b).array();
  const Vector lin_b = fv.pi_b.array() * (frame.xb_selection * b).array();
  d.b_hat = b;

  if (is_size_normalised(kind)) {
    // DR1 (b4) and IPW1 (b1, m = 0).
    d.delta_m = -lin_a;
    d.delta_y = m_b + lin_b;
  } else {
    // DR2 (b3) and IPW2 (b2, m = 0, m-bar-hat = 0). The shift DR2 - m-bar-hat
    // reduces to IPW2 when m = 0.
    const double shift = analysis.point(kind) - d.m_bar_hat;
    d.delta_m = d.m_bar_hat - lin_a.array();
    d.delta_y = m_b.array() + shift + lin_b.array();
  }
  return d;
}

DeltaSet delta_set(EstimatorKind kind, Regime regime, const ObservedData& observed,
                   const NuisanceFit& fit) {
  return delta_set(kind, regime, Analysis::with_fit(observed, fit));
}

Vector Sigma2Fit::evaluate(const Matrix& x) const {
  if (model == Sigma2Model::kConstant) {
    return Vector::Constant(x.rows(), std::max(0.0, coefficients[0]));
  }
  return (x * coefficients).cwiseMax(0.0);
}

Sigma2Fit sigma2_hat(const Analysis& analysis, Sigma2Model model) {
  const Vector resid = analysis.frame().y_b - analysis.fitted().m_b;
  const Vector sq = resid.array().square();
  Sigma2Fit fit;
  fit.model = model;
  if (model == Sigma2Model::kConstant) {
    fit.coefficients = Vector::Constant(1, sq.mean());
  } else {
    const Matrix& x = analysis.frame().xb_outcome;
    fit.coefficients = x.colPivHouseholderQr().solve(sq);
  }
  return fit;
}

Sigma2Fit sigma2_hat(const ObservedData& observed, const NuisanceFit& fit, Sigma2Model model) {
  return sigma2_hat(Analysis::with_fit(observed, fit), model);
}

double kh_correction(const Analysis& analysis, const Sigma2Fit& sigma2) {
  const ModelFrame& frame = analysis.frame();
  const Vector s_a = sigma2.evaluate(frame.xa_outcome);
  const Vector s_b = sigma2.evaluate(frame.xb_outcome);
  const double n = analysis.n_population();
  return ((s_a.array() / frame.pi_a.array()).sum() -
          (s_b.array() / analysis.fitted().pi_b.array()).sum()) /
         (n * n);
}

namespace {

VarianceEstimate var_with_provider(EstimatorKind kind, Regime regime, const Analysis& analysis,
                                   const JointProbProvider& provider,
                                   const VarianceOptions& options) {
  const DeltaSet d = delta_set(kind, regime, analysis);
  const ModelFrame& frame = analysis.frame();
  const Vector& pi_b = analysis.fitted().pi_b;
  const double n = analysis.n_population();

  VarianceEstimate v;
  const Vector u = outcome_on_a(kind, analysis) - d.delta_m;
  v.design_term = ht_var_estimate(as_span(u), provider, frame.n_population);
  const Vector e = frame.y_b - d.delta_y;
  v.selection_term =
      ((1.0 - pi_b.array()) / pi_b.array().square() * e.array().square()).sum() / (n * n);
  if (regime == Regime::kKHDoublyRobust) {
    v.correction = kh_correction(analysis, sigma2_hat(analysis, options.sigma2));
  }
  const double raw = v.design_term + v.selection_term + v.correction;
  v.floored = raw < 0.0;
  v.total = v.floored ? 0.0 : raw;
  v.large_population_approximation =
      kind == EstimatorKind::kDR2 && regime == Regime::kBothCorrect;
  v.formulas_derived_under_pml = analysis.nuisance().spec.method == FitMethod::kCalibration;
  return v;
}

void check_provider(const JointProbProvider& provider, const ModelFrame& frame) {
  if (provider.size() != static_cast<std::size_t>(frame.n_a()) ||
      provider.n_population() != frame.n_population) {
    throw ValidationError("design provider does not match Sample A");
  }
}

}  // namespace

VarianceEstimate var_estimate(EstimatorKind kind, Regime regime, const Analysis& analysis,
                              const VarianceOptions& options) {
  return var_with_provider(kind, regime, analysis, analysis.provider(), options);
}

VarianceEstimate var_estimate(EstimatorKind kind, Regime regime, const ObservedData& observed,
                              const NuisanceFit& fit, const JointProbProvider& provider,
                              const VarianceOptions& options) {
  const Analysis analysis = Analysis::with_fit(observed, fit);
  check_provider(provider, analysis.frame());
  return var_with_provider(kind, regime, analysis, provider, options);
}

double var_prob_estimate(EstimatorKind prob_kind, const ModelFrame& frame,
                         const JointProbProvider& provider) {
  if (!is_probability_kind(prob_kind)) {
    throw ValidationError("var_prob_estimate needs HT or Hajek");
  }
  require_sample_a_outcome(frame);
  Vector u = *frame.y_a;
  if (prob_kind == EstimatorKind::kHajek) {
    u.array() -= hajek_mean(as_span(*frame.y_a), as_span(frame.pi_a));
  }
  return ht_var_estimate(as_span(u), provider, frame.n_population);
}

double var_prob_estimate(EstimatorKind prob_kind, const ObservedData& observed,
                         const JointProbProvider& provider) {
  if (!observed.has_sample_a_outcome()) throw ValidationError("Sample A outcomes are required");
  std::vector<double> y;
  std::vector<double> pi;
  for (const auto& row : observed.sample_a) {
    y.push_back(*row.unit.y);
    pi.push_back(row.pi_a);
  }
  if (prob_kind == EstimatorKind::kHajek) {
    const double h = hajek_mean(y, pi);
    for (double& v : y) v -= h;
  } else if (prob_kind != EstimatorKind::kHT) {
    throw ValidationError("var_prob_estimate needs HT or Hajek");
  }
  return ht_var_estimate(y, provider, observed.n_population);
}

namespace {

double cov_with_provider(EstimatorKind kind, Regime regime, EstimatorKind prob_kind,
                         const Analysis& analysis, const JointProbProvider& provider) {
  if (!is_probability_kind(prob_kind)) {
    throw ValidationError("covariance partner must be HT or Hajek");
  }
  if (is_probability_kind(kind)) {
    throw ValidationError("covariance needs an IPW or DR estimator");
  }
  const ModelFrame& frame = analysis.frame();
  require_sample_a_outcome(frame);
  const DeltaSet d = delta_set(kind, regime, analysis);
  const Vector u = outcome_on_a(kind, analysis) - d.delta_m;
  Vector v = *frame.y_a;
  if (prob_kind == EstimatorKind::kHajek) {
    v.array() -= hajek_mean(as_span(*frame.y_a), as_span(frame.pi_a));
  }
  return ht_cov_estimate(as_span(u), as_span(v), provider, frame.n_population);
}

}  // namespace

double cov_estimate(EstimatorKind kind, Regime regime, EstimatorKind prob_kind,
                    const Analysis& analysis) {
  return cov_with_provider(kind, regime, prob_kind, analysis, analysis.provider());
}

double cov_estimate(EstimatorKind kind, Regime regime, EstimatorKind prob_kind,
                    const ObservedData& observed, const NuisanceFit& fit,
                    const JointProbProvider& provider) {
  const Analysis analysis = Analysis::with_fit(observed, fit);
  check_provider(provider, analysis.frame());
  return cov_with_provider(kind, regime, prob_kind, analysis, provider);
}

}  // namespace drpool
