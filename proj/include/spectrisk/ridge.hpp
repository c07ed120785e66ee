#pragma once

#include <array>
#include <cmath>
#include <string>

#include "spectrisk/error.hpp"
#include "spectrisk/silverstein.hpp"
#include "spectrisk/spectra.hpp"

namespace spectrisk::ridge {

// Limiting risks of ridge regression, w_λ = (XᵀX + nλI)⁻¹XᵀY, under the
// random-effects model Var(w) = α²/p·I with unit noise variance. Callers with a
// different noise level rescale externally.

namespace detail {
inline void check_positive(const char* who, const char* name, double x) {
  if (!(std::isfinite(x) && x > 0.0)) {
    fail(ErrorCode::BadArgument, std::string(who) + ": " + name + "=" + std::to_string(x) + " must be > 0");
  }
}
}  // namespace detail

/// R_λ = (1/(λv))·{1 + (λα²/γ - 1)(1 - λv'/v)} evaluated at a transform point.
///
/// 1 - λv'/v is computed as γ s2/(λ + γ s2), its exact value at the root.
inline double predictive_risk(const TransformPoint& tp, double alpha2) {
  const double lambda = tp.lambda;
  const double gamma = tp.gamma;
  const double denom = lambda + gamma * tp.integrals.s2;
  const double one_minus = gamma * tp.integrals.s2 / denom;
  return (1.0 / (lambda * tp.v)) * (1.0 + (lambda * alpha2 / gamma - 1.0) * one_minus);
}

inline double predictive_risk(const SpectralDistribution& h, double gamma, double alpha2, double lambda,
                              const SolverOptions& opts = {}) {
  detail::check_positive("predictive_risk", "alpha2", alpha2);
  return predictive_risk(transform_point(h, gamma, lambda, opts), alpha2);
}

struct OptimalRisk {
  double lambda_star = 0.0;
  double risk_star = 0.0;
};

/// λ* = γ/α² and R* = 1/(λ* v(-λ*)).
///
/// As a guard, R* is checked against R_λ on λ*·{1/4, 1/2, 1, 2, 4}; a violation
/// beyond rounding raises NoConvergence since it can only come from a bad solve.
inline OptimalRisk optimal_risk(const SpectralDistribution& h, double gamma, double alpha2,
                                const SolverOptions& opts = {}) {
  detail::check_positive("optimal_risk", "alpha2", alpha2);
  detail::check_positive("optimal_risk", "gamma", gamma);
  OptimalRisk out;
  out.lambda_star = gamma / alpha2;
  const auto tp = transform_point(h, gamma, out.lambda_star, opts);
  out.risk_star = 1.0 / (out.lambda_star * tp.v);
  for (double f : {0.25, 0.5, 1.0, 2.0, 4.0}) {
    const double r = predictive_risk(h, gamma, alpha2, f * out.lambda_star, opts);
    if (r < out.risk_star * (1.0 - 1e-9)) {
      fail(ErrorCode::NoConvergence, "optimal_risk: R(" + std::to_string(f) + "·λ*) = " + std::to_string(r) +
                                         " below R* = " + std::to_string(out.risk_star));
    }
  }
  return out;
}

/// Marchenko-Pastur Stieltjes transform m_I(-λ; γ) for identity covariance.
///
/// -b + √(b² + 4γλ) is rewritten as 4γλ/(b + √(b² + 4γλ)) when b = 1 - γ + λ > 0.
inline double identity_stieltjes(double gamma, double lambda) {
  detail::check_positive("identity_stieltjes", "gamma", gamma);
  detail::check_positive("identity_stieltjes", "lambda", lambda);
  const double b = 1.0 - gamma + lambda;
  const double root = std::sqrt(b * b + 4.0 * gamma * lambda);
  if (b > 0.0) return 2.0 / (b + root);
  return (-b + root) / (2.0 * gamma * lambda);
}

/// dm_I/dz at z = -λ, from differentiating the Marchenko-Pastur equation:
/// m' = m²(1 + γm)/(1 + γλm²).
inline double identity_stieltjes_derivative(double gamma, double lambda) {
  const double m = identity_stieltjes(gamma, lambda);
  return m * m * (1.0 + gamma * m) / (1.0 + gamma * lambda * m * m);
}

/// R_λ = 1 + γ m_I + λ(λα² - γ) m_I' for identity covariance.
inline double identity_predictive_risk(double gamma, double alpha2, double lambda) {
  const double m = identity_stieltjes(gamma, lambda);
  const double mp = identity_stieltjes_derivative(gamma, lambda);
  return 1.0 + gamma * m + lambda * (lambda * alpha2 - gamma) * mp;
}

/// Closed-form optimal risk for identity covariance.
inline double identity_optimal_risk(double gamma, double alpha2) {
  detail::check_positive("identity_optimal_risk", "gamma", gamma);
  detail::check_positive("identity_optimal_risk", "alpha2", alpha2);
  const double k = (gamma - 1.0) / gamma * alpha2;
  return 0.5 * (1.0 + k + std::sqrt((1.0 - k) * (1.0 - k) + 4.0 * alpha2));
}

/// R_E = γ m(-λ*), the limiting estimation error ‖w_λ* - w‖² at the optimum.
inline double estimation_risk(const SpectralDistribution& h, double gamma, double alpha2,
                              const SolverOptions& opts = {}) {
  detail::check_positive("estimation_risk", "alpha2", alpha2);
  detail::check_positive("estimation_risk", "gamma", gamma);
  return gamma * transform_point(h, gamma, gamma / alpha2, opts).m;
}

/// |(1 - 1/R*) - γ(1 - R_E/α²)|, which vanishes for every H.
inline double inaccuracy_gap(const SpectralDistribution& h, double gamma, double alpha2,
                             const SolverOptions& opts = {}) {
  const double risk_star = optimal_risk(h, gamma, alpha2, opts).risk_star;
  const double re = estimation_risk(h, gamma, alpha2, opts);
  return std::abs((1.0 - 1.0 / risk_star) - gamma * (1.0 - re / alpha2));
}

struct RidgeRiskReport {
  double gamma = 0.0;
  double alpha2 = 0.0;
  double lambda = 0.0;
  double risk = 0.0;
  double lambda_star = 0.0;
  double risk_star = 0.0;
  double estimation_risk = 0.0;
  TransformPoint transform;
};

inline RidgeRiskReport risk_report(const SpectralDistribution& h, double gamma, double alpha2, double lambda,
                                   const SolverOptions& opts = {}) {
  RidgeRiskReport rep;
  rep.gamma = gamma;
  rep.alpha2 = alpha2;
  rep.lambda = lambda;
  rep.transform = transform_point(h, gamma, lambda, opts);
  rep.risk = predictive_risk(rep.transform, alpha2);
  const auto opt = optimal_risk(h, gamma, alpha2, opts);
  rep.lambda_star = opt.lambda_star;
  rep.risk_star = opt.risk_star;
  rep.estimation_risk = estimation_risk(h, gamma, alpha2, opts);
  return rep;
}

enum class StrongSignalRegime {
  Bounded,    // γ < 1: R* → 1/(1-γ)
  Sqrt,       // γ = 1: R* ~ α / √E[1/T]
  Quadratic,  // γ > 1: R* ~ α² / (γ v(0))
};

inline std::string_view to_string(StrongSignalRegime r) noexcept {
  switch (r) {
    case StrongSignalRegime::Bounded: return "bounded";
    case StrongSignalRegime::Sqrt: return "linear_in_alpha";
    case StrongSignalRegime::Quadratic: return "quadratic_in_alpha";
  }
  return "unknown";
}

/// Weak- and strong-signal behaviour of the optimal risk.
///
/// weak_slope is lim (R* - 1)/α² as α² → 0, i.e. E_H[T]. coefficient is the
/// constant, α-coefficient, or α²-coefficient of R* as α² → ∞ depending on the
/// regime. Coefficients, not extrapolated risks, are returned.
struct RegimeReport {
  double gamma = 0.0;
  double weak_slope = 0.0;
  StrongSignalRegime regime = StrongSignalRegime::Bounded;
  double coefficient = 0.0;
};

inline RegimeReport regimes(const SpectralDistribution& h, double gamma) {
  detail::check_positive("regimes", "gamma", gamma);
  RegimeReport rep;
  rep.gamma = gamma;
  const auto mom = moments(h);
  rep.weak_slope = mom.mean;
  if (std::abs(gamma - 1.0) <= 1e-12) {
    if (mom.inverse_infinite()) {
      fail(ErrorCode::InverseMomentInfinite, "regimes: E_H[1/T] is infinite (support touches 0) at gamma=1");
    }
    rep.regime = StrongSignalRegime::Sqrt;
    rep.coefficient = 1.0 / std::sqrt(*mom.inverse);
  } else if (gamma < 1.0) {
    rep.regime = StrongSignalRegime::Bounded;
    rep.coefficient = 1.0 / (1.0 - gamma);
  } else {
    rep.regime = StrongSignalRegime::Quadratic;
    rep.coefficient = 1.0 / (gamma * v_at_zero(h, gamma));
  }
  return rep;
}

}  // namespace spectrisk::ridge
