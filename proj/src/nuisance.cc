#include "drpool/nuisance.h"

#include <cmath>
#include <limits>
#include <sstream>

namespace drpool {

namespace {

Matrix select_columns(const std::vector<const Vector*>& rows,
                      const std::vector<std::size_t>& cols) {
  Matrix out(static_cast<Eigen::Index>(rows.size()), static_cast<Eigen::Index>(cols.size()));
  for (std::size_t i = 0; i < rows.size(); ++i) {
    for (std::size_t c = 0; c < cols.size(); ++c) {
      out(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(c)) =
          (*rows[i])[static_cast<Eigen::Index>(cols[c])];
    }
  }
  return out;
}

Vector expit(const Vector& eta) {
  return eta.unaryExpr([](double t) { return drpool::expit(t); });
}

double max_abs(const Vector& v) { return v.size() ? v.cwiseAbs().maxCoeff() : 0.0; }

void check_selection_probabilities(const ModelFrame& frame, const Vector& alpha) {
  const Vector pi_b = expit(Vector(frame.xb_selection * alpha));
  const double smallest = pi_b.size() ? pi_b.minCoeff() : 1.0;
  if (!(smallest >= kMinSelectionProbability)) {
    std::ostringstream msg;
    msg << "fitted selection probability " << smallest << " below "
        << kMinSelectionProbability;
    throw SolverError(msg.str());
  }
}

// Outcome mean, first and second derivative factors for each family:
//   m = mean(eta), dm/dbeta = d1 * x, d2m/dbeta dbeta' = d2 * x x'.
struct LinkTerms {
  Vector mean;
  Vector d1;
  Vector d2;
};

LinkTerms link_terms(const Vector& eta, OutcomeFamily family) {
  LinkTerms t;
  if (family == OutcomeFamily::kLinearGaussian) {
    t.mean = eta;
    t.d1 = Vector::Ones(eta.size());
    t.d2 = Vector::Zero(eta.size());
  } else {
    t.mean = expit(eta);
    t.d1 = t.mean.array() * (1.0 - t.mean.array());
    t.d2 = t.d1.array() * (1.0 - 2.0 * t.mean.array());
  }
  return t;
}

}  // namespace

double expit(double t) {
  if (t >= 0.0) return 1.0 / (1.0 + std::exp(-t));
  const double e = std::exp(t);
  return e / (1.0 + e);
}

double logit(double p) { return std::log(p / (1.0 - p)); }

double predict_selection(const Vector& alpha, const Vector& x) {
  if (alpha.size() != x.size()) throw ValidationError("dimension mismatch in predict_selection");
  return expit(alpha.dot(x));
}

double predict_outcome(const Vector& beta, const Vector& x, OutcomeFamily family) {
  if (beta.size() != x.size()) throw ValidationError("dimension mismatch in predict_outcome");
  const double eta = beta.dot(x);
  return family == OutcomeFamily::kLinearGaussian ? eta : expit(eta);
}

ModelFrame make_frame(const ObservedData& observed, const ModelSpec& spec) {
  const std::size_t dim = observed.dimension();
  spec.check(dim);
  ModelFrame frame;
  frame.spec = spec;
  frame.design = observed.design;
  frame.n_population = observed.n_population;

  std::vector<const Vector*> xa;
  std::vector<const Vector*> xb;
  xa.reserve(observed.sample_a.size());
  xb.reserve(observed.sample_b.size());
  frame.pi_a.resize(static_cast<Eigen::Index>(observed.sample_a.size()));
  frame.y_b.resize(static_cast<Eigen::Index>(observed.sample_b.size()));
  bool a_has_y = observed.has_sample_a_outcome();
  Vector y_a(static_cast<Eigen::Index>(observed.sample_a.size()));
  for (std::size_t i = 0; i < observed.sample_a.size(); ++i) {
    const auto& row = observed.sample_a[i];
    xa.push_back(&row.unit.x);
    frame.pi_a[static_cast<Eigen::Index>(i)] = row.pi_a;
    if (a_has_y) y_a[static_cast<Eigen::Index>(i)] = *row.unit.y;
  }
  for (std::size_t i = 0; i < observed.sample_b.size(); ++i) {
    const auto& row = observed.sample_b[i];
    if (!row.y) throw ValidationError("sample_b row " + std::to_string(i + 1) + ": missing outcome y");
    xb.push_back(&row.x);
    frame.y_b[static_cast<Eigen::Index>(i)] = *row.y;
  }
  if (a_has_y) frame.y_a = std::move(y_a);

  const auto sel = spec.resolved_selection_columns(dim);
  const auto out = spec.resolved_outcome_columns(dim);
  frame.xa_selection = select_columns(xa, sel);
  frame.xb_selection = select_columns(xb, sel);
  frame.xa_outcome = select_columns(xa, out);
  frame.xb_outcome = select_columns(xb, out);
  return frame;
}

namespace equations {

EquationSystem pseudo_ml(const ModelFrame& frame, const Vector& alpha) {
  const double inv_n = 1.0 / static_cast<double>(frame.n_population);
  const Vector pi = expit(Vector(frame.xa_selection * alpha));
  const Vector d = frame.pi_a.cwiseInverse();
  EquationSystem s;
  s.value = inv_n * (frame.xb_selection.colwise().sum().transpose() -
                     frame.xa_selection.transpose() * (d.array() * pi.array()).matrix());
  const Vector w = d.array() * pi.array() * (1.0 - pi.array());
  s.jacobian = -inv_n * frame.xa_selection.transpose() * w.asDiagonal() * frame.xa_selection;
  return s;
}

EquationSystem calibration(const ModelFrame& frame, const Vector& alpha) {
  const double inv_n = 1.0 / static_cast<double>(frame.n_population);
  const Vector eta = frame.xb_selection * alpha;
  // 1 / pi = 1 + exp(-eta); d(1/pi)/d alpha = -exp(-eta) x.
  const Vector odds_inv = (-eta.array()).exp();
  const Vector inv_pi = 1.0 + odds_inv.array();
  const Vector d = frame.pi_a.cwiseInverse();
  EquationSystem s;
  s.value = inv_n * (frame.xb_selection.transpose() * inv_pi - frame.xa_selection.transpose() * d);
  s.jacobian = -inv_n * frame.xb_selection.transpose() * odds_inv.asDiagonal() * frame.xb_selection;
  return s;
}

EquationSystem outcome_score(const ModelFrame& frame, const Vector& beta) {
  const double inv_nb = 1.0 / static_cast<double>(frame.n_b());
  const Vector eta = frame.xb_outcome * beta;
  EquationSystem s;
  if (frame.spec.family == OutcomeFamily::kLinearGaussian) {
    s.value = inv_nb * frame.xb_outcome.transpose() * (frame.y_b - eta);
    s.jacobian = -inv_nb * frame.xb_outcome.transpose() * frame.xb_outcome;
  } else {
    const Vector p = expit(eta);
    s.value = inv_nb * frame.xb_outcome.transpose() * (frame.y_b - p);
    const Vector w = p.array() * (1.0 - p.array());
    s.jacobian = -inv_nb * frame.xb_outcome.transpose() * w.asDiagonal() * frame.xb_outcome;
  }
  return s;
}

EquationSystem kim_haziza(const ModelFrame& frame, const Vector& theta) {
  const Eigen::Index ps = frame.xb_selection.cols();
  const Eigen::Index po = frame.xb_outcome.cols();
  if (theta.size() != ps + po) throw ValidationError("Kim-Haziza parameter has wrong length");
  const Vector alpha = theta.head(ps);
  const Vector beta = theta.tail(po);
  const double inv_n = 1.0 / static_cast<double>(frame.n_population);

  const Vector eta_sel = frame.xb_selection * alpha;
  const Vector odds_inv = (-eta_sel.array()).exp();  // (1 - pi) / pi
  const Vector inv_pi = 1.0 + odds_inv.array();
  const LinkTerms lb = link_terms(Vector(frame.xb_outcome * beta), frame.spec.family);
  const LinkTerms la = link_terms(Vector(frame.xa_outcome * beta), frame.spec.family);
  const Vector resid = frame.y_b - lb.mean;
  const Vector d = frame.pi_a.cwiseInverse();

  // dm/dbeta rows: g_i = d1_i x_i.
  const Matrix gb = lb.d1.asDiagonal() * frame.xb_outcome;
  const Matrix ga = la.d1.asDiagonal() * frame.xa_outcome;

  EquationSystem s;
  s.value.resize(ps + po);
  s.value.head(ps) = inv_n * frame.xb_selection.transpose() * (odds_inv.array() * resid.array()).matrix();
  s.value.tail(po) = inv_n * (ga.transpose() * d - gb.transpose() * inv_pi);

  s.jacobian.resize(ps + po, ps + po);
  const Vector w_resid = odds_inv.array() * resid.array();
  s.jacobian.topLeftCorner(ps, ps) =
      -inv_n * frame.xb_selection.transpose() * w_resid.asDiagonal() * frame.xb_selection;
  s.jacobian.topRightCorner(ps, po) =
      -inv_n * frame.xb_selection.transpose() * odds_inv.asDiagonal() * gb;
  s.jacobian.bottomLeftCorner(po, ps) =
      inv_n * gb.transpose() * odds_inv.asDiagonal() * frame.xb_selection;
  const Vector ha = d.array() * la.d2.array();
  const Vector hb = inv_pi.array() * lb.d2.array();
  s.jacobian.bottomRightCorner(po, po) =
      inv_n * (frame.xa_outcome.transpose() * ha.asDiagonal() * frame.xa_outcome -
               frame.xb_outcome.transpose() * hb.asDiagonal() * frame.xb_outcome);
  return s;
}

}  // namespace equations

NewtonResult newton_solve(const std::function<EquationSystem(const Vector&)>& system,
                          Vector start, const SolverOptions& options,
                          const std::string& what) {
  NewtonResult result;
  result.solution = std::move(start);
  EquationSystem current = system(result.solution);
  if (!current.value.allFinite()) {
    throw SolverError(what + ": estimating equations not finite at the starting point");
  }
  double norm = current.value.norm();
  for (int iter = 0; iter <= options.max_iterations; ++iter) {
    result.iterations = iter;
    result.max_abs_residual = max_abs(current.value);
    if (result.max_abs_residual <= options.tolerance) return result;
    if (iter == options.max_iterations) break;

    Eigen::FullPivLU<Matrix> lu(current.jacobian);
    if (!current.jacobian.allFinite() || !lu.isInvertible()) {
      throw SolverError(what + ": singular Jacobian");
    }
    const Vector step = lu.solve(-current.value);

    double scale = 1.0;
    bool accepted = false;
    for (int halving = 0; halving < 50; ++halving, scale *= 0.5) {
      Vector candidate = result.solution + scale * step;
      EquationSystem next = system(candidate);
      if (!next.value.allFinite()) continue;
      const double next_norm = next.value.norm();
      if (next_norm < norm) {
        result.solution = std::move(candidate);
        current = std::move(next);
        norm = next_norm;
        accepted = true;
        break;
      }
    }
    if (!accepted) break;
  }
  std::ostringstream msg;
  msg << what << ": no convergence (max |residual| " << result.max_abs_residual
      << " after " << result.iterations << " iterations, tolerance " << options.tolerance << ")";
  throw SolverError(msg.str());
}

SelectionFit fit_selection_pml(const ModelFrame& frame) {
  const auto res = newton_solve(
      [&](const Vector& a) { return equations::pseudo_ml(frame, a); },
      Vector::Zero(frame.xb_selection.cols()), {kSelectionTolerance, kMaxNewtonIterations},
      "pseudo-ML selection fit");
  check_selection_probabilities(frame, res.solution);
  return {res.solution, res.iterations, res.max_abs_residual};
}

SelectionFit fit_selection_pml(const ObservedData& observed, const ModelSpec& spec) {
  return fit_selection_pml(make_frame(observed, spec));
}

SelectionFit fit_selection_calibration(const ModelFrame& frame) {
  const auto res = newton_solve(
      [&](const Vector& a) { return equations::calibration(frame, a); },
      Vector::Zero(frame.xb_selection.cols()), {kSelectionTolerance, kMaxNewtonIterations},
      "calibration selection fit");
  check_selection_probabilities(frame, res.solution);
  return {res.solution, res.iterations, res.max_abs_residual};
}

SelectionFit fit_selection_calibration(const ObservedData& observed, const ModelSpec& spec) {
  return fit_selection_calibration(make_frame(observed, spec));
}

OutcomeFit fit_outcome_ml(const ModelFrame& frame) {
  const Matrix& x = frame.xb_outcome;
  if (x.rows() < x.cols()) throw SolverError("outcome fit: fewer Sample B rows than covariates");
  Eigen::ColPivHouseholderQR<Matrix> qr(x);
  if (qr.rank() < x.cols()) throw SolverError("outcome fit: rank-deficient Sample B covariates");

  OutcomeFit fit;
  if (frame.spec.family == OutcomeFamily::kLinearGaussian) {
    fit.beta = qr.solve(frame.y_b);
    fit.iterations = 1;
  } else {
    for (Eigen::Index i = 0; i < frame.y_b.size(); ++i) {
      if (frame.y_b[i] < 0.0 || frame.y_b[i] > 1.0) {
        throw ValidationError("logistic outcome model needs y in [0, 1]");
      }
    }
    NewtonResult res;
    try {
      res = newton_solve([&](const Vector& b) { return equations::outcome_score(frame, b); },
                         Vector::Zero(x.cols()), {kSelectionTolerance, kMaxNewtonIterations},
                         "logistic outcome fit");
    } catch (const SolverError& e) {
      throw SolverError(std::string("logistic outcome fit: separation / non-convergence (") +
                        e.what() + ")");
    }
    // Fitted probabilities numerically 0 or 1 signal (quasi-)separation.
    if (!((x * res.solution).cwiseAbs().maxCoeff() <= 30.0)) {
      throw SolverError("logistic outcome fit: separation / non-convergence");
    }
    fit.beta = res.solution;
    fit.iterations = res.iterations;
  }
  fit.max_abs_score = max_abs(equations::outcome_score(frame, fit.beta).value);
  return fit;
}

OutcomeFit fit_outcome_ml(const ObservedData& observed, const ModelSpec& spec) {
  return fit_outcome_ml(make_frame(observed, spec));
}

NuisanceFit fit_kh(const ModelFrame& frame) {
  if (frame.xb_selection.cols() != frame.xb_outcome.cols() ||
      frame.xb_selection != frame.xb_outcome) {
    throw ValidationError("Kim-Haziza fitting requires the same covariates in both models");
  }
  const SelectionFit start_alpha = fit_selection_pml(frame);
  const OutcomeFit start_beta = fit_outcome_ml(frame);
  const Eigen::Index ps = frame.xb_selection.cols();
  const Eigen::Index po = frame.xb_outcome.cols();
  Vector theta(ps + po);
  theta << start_alpha.alpha, start_beta.beta;

  const auto res = newton_solve(
      [&](const Vector& t) { return equations::kim_haziza(frame, t); }, theta,
      {kKimHazizaTolerance, kMaxNewtonIterations}, "Kim-Haziza fit");
  NuisanceFit fit;
  fit.spec = frame.spec;
  fit.spec.method = FitMethod::kKimHaziza;
  fit.alpha = res.solution.head(ps);
  fit.beta = res.solution.tail(po);
  fit.iterations = res.iterations;
  fit.max_abs_score = res.max_abs_residual;
  fit.tolerance = kKimHazizaTolerance;
  check_selection_probabilities(frame, fit.alpha);
  return fit;
}

NuisanceFit fit_kh(const ObservedData& observed, const ModelSpec& spec) {
  ModelSpec kh = spec;
  kh.method = FitMethod::kKimHaziza;
  return fit_kh(make_frame(observed, kh));
}

NuisanceFit fit_nuisance(const ModelFrame& frame) {
  if (frame.spec.method == FitMethod::kKimHaziza) return fit_kh(frame);
  const SelectionFit sel = frame.spec.method == FitMethod::kPseudoML
                               ? fit_selection_pml(frame)
                               : fit_selection_calibration(frame);
  const OutcomeFit out = fit_outcome_ml(frame);
  NuisanceFit fit;
  fit.spec = frame.spec;
  fit.alpha = sel.alpha;
  fit.beta = out.beta;
  fit.iterations = sel.iterations + out.iterations;
  fit.max_abs_score = std::max(sel.max_abs_score, out.max_abs_score);
  fit.tolerance = kSelectionTolerance;
  return fit;
}

NuisanceFit fit_nuisance(const ObservedData& observed, const ModelSpec& spec) {
  return fit_nuisance(make_frame(observed, spec));
}

FittedValues fitted_values(const ModelFrame& frame, const NuisanceFit& fit) {
  if (fit.alpha.size() != frame.xb_selection.cols() || fit.beta.size() != frame.xb_outcome.cols()) {
    throw ValidationError("fit dimensions do not match the model frame");
  }
  FittedValues v;
  v.pi_b = expit(Vector(frame.xb_selection * fit.alpha));
  v.pi_b_on_a = expit(Vector(frame.xa_selection * fit.alpha));
  const Vector eta_a = frame.xa_outcome * fit.beta;
  const Vector eta_b = frame.xb_outcome * fit.beta;
  if (frame.spec.family == OutcomeFamily::kLinearGaussian) {
    v.m_a = eta_a;
    v.m_b = eta_b;
  } else {
    v.m_a = expit(eta_a);
    v.m_b = expit(eta_b);
  }
  return v;
}

}  // namespace drpool
