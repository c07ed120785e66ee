#pragma once

#include <cmath>
#include <limits>
#include <string>
#include <vector>

#include "spectrisk/error.hpp"
#include "spectrisk/numerics.hpp"
#include "spectrisk/ridge.hpp"
#include "spectrisk/silverstein.hpp"
#include "spectrisk/spectra.hpp"

namespace spectrisk::rda {

// Regularized discriminant analysis, ŵ_λ = (Σ̂ + λI)⁻¹δ̂ with class means
// μ± = μ̄ ± δ, δ̂ = (μ̂₊ - μ̂₋)/2, and α² = lim ‖δ‖².

using ridge::detail::check_positive;

struct Margin {
  double tau = 0.0;  // λ m v
  double eta = 0.0;  // (v - λv')/γ
  double xi = 0.0;   // v'/v² - 1
  double theta = 0.0;
  bool xi_clamped = false;  // ξ came out negative by cancellation and was set to 0
};

/// Θ(λ) = α²τ/√(α²η + ξ) from the transforms at z = -λ.
///
/// η and ξ are formed from the companion integrals: η = v s2/(λ + γ s2) and
/// ξ = γ v q2/(λ + γ s2). Both are exact at the root and keep full precision
/// where the differences v - λv' and v'/v² - 1 cancel.
inline Margin margin(const TransformPoint& tp, double alpha2) {
  const double lambda = tp.lambda;
  const double gamma = tp.gamma;
  const auto& in = tp.integrals;
  const double denom = lambda + gamma * in.s2;
  Margin out;
  out.tau = tp.v * (1.0 - tp.v * in.s1);
  out.eta = tp.v * in.s2 / denom;
  out.xi = gamma * tp.v * in.q2 / denom;
  if (out.xi < 0.0) {
    out.xi = 0.0;
    out.xi_clamped = true;
  }
  out.theta = alpha2 * out.tau / std::sqrt(alpha2 * out.eta + out.xi);
  return out;
}

inline Margin margin(const SpectralDistribution& h, double gamma, double alpha2, double lambda,
                     const SolverOptions& opts = {}) {
  check_positive("margin", "alpha2", alpha2);
  return margin(transform_point(h, gamma, lambda, opts), alpha2);
}

/// Θ assembled from (v, v', m) directly,
/// α²m / √(α²(v - λv')/(γ(λv)²) + (v' - v²)/(λ²v⁴)).
/// Independent of margin's rearrangement; used to cross-check it.
inline double margin_trace_form(const TransformPoint& tp, double alpha2) {
  const double l = tp.lambda;
  const double v = tp.v;
  const double vp = tp.v_prime;
  const double lv = l * v;
  const double q = alpha2 * (v - l * vp) / (tp.gamma * lv * lv) + (vp - v * v) / (l * l * v * v * v * v);
  return alpha2 * tp.m / std::sqrt(q);
}

inline double error(const SpectralDistribution& h, double gamma, double alpha2, double lambda,
                    const SolverOptions& opts = {}) {
  return normal_cdf(-margin(h, gamma, alpha2, lambda, opts).theta);
}

struct BayesMargin {
  double delta = 0.0;
  double error = 0.0;
  // E[1/T] is finite for this discretization but diverges for the family's
  // limit, so Δ depends on the resolution.
  bool resolution_dependent = false;
};

/// Δ = α√E_H[1/T], half the Mahalanobis distance between the class means.
inline BayesMargin bayes_margin(const SpectralDistribution& h, double alpha2) {
  check_positive("bayes_margin", "alpha2", alpha2);
  const auto mom = moments(h);
  if (mom.inverse_infinite()) {
    fail(ErrorCode::InverseMomentInfinite, "bayes_margin: E_H[1/T] is infinite (support touches 0)");
  }
  BayesMargin out;
  out.delta = std::sqrt(alpha2 * *mom.inverse);
  out.error = normal_cdf(-out.delta);
  out.resolution_dependent = mom.small_atom_warning;
  return out;
}

/// Γ = Θ/Δ, the cosine between ŵ_λ's limit direction and the Bayes direction.
inline double cosine(const SpectralDistribution& h, double gamma, double alpha2, double lambda,
                     const SolverOptions& opts = {}) {
  return margin(h, gamma, alpha2, lambda, opts).theta / bayes_margin(h, alpha2).delta;
}

/// Identity covariance: Γ = α/√(α²+γ) · √((1 + γλm²)/(1 + γm)) with m = m_I(-λ; γ).
inline double cosine_identity(double gamma, double alpha2, double lambda) {
  check_positive("cosine_identity", "alpha2", alpha2);
  const double m = ridge::identity_stieltjes(gamma, lambda);
  return std::sqrt(alpha2 / (alpha2 + gamma)) * std::sqrt((1.0 + gamma * lambda * m * m) / (1.0 + gamma * m));
}

/// Identity covariance at γ = 1:
/// Γ = α/√(α²+1) · 2(λ(λ+4))^{1/4} / (√λ + √(λ+4)).
inline double cosine_identity_gamma1(double alpha2, double lambda) {
  check_positive("cosine_identity_gamma1", "alpha2", alpha2);
  check_positive("cosine_identity_gamma1", "lambda", lambda);
  return std::sqrt(alpha2 / (alpha2 + 1.0)) * 2.0 * std::pow(lambda * (lambda + 4.0), 0.25) /
         (std::sqrt(lambda) + std::sqrt(lambda + 4.0));
}

/// α² → ∞ limit of Γ: τ/√(η E_H[1/T]).
inline double cosine_strong_limit(const SpectralDistribution& h, double gamma, double lambda,
                                  const SolverOptions& opts = {}) {
  const auto mom = moments(h);
  if (mom.inverse_infinite()) {
    fail(ErrorCode::InverseMomentInfinite, "cosine_strong_limit: E_H[1/T] is infinite");
  }
  const auto mg = margin(transform_point(h, gamma, lambda, opts), 1.0);
  return mg.tau / std::sqrt(mg.eta * *mom.inverse);
}

/// λ → 0 endpoint, valid for γ < 1: α²√(1-γ) E[1/T] / √(α² E[1/T] + γ).
inline double lda_margin(const SpectralDistribution& h, double gamma, double alpha2) {
  check_positive("lda_margin", "alpha2", alpha2);
  if (!(gamma > 0.0 && gamma < 1.0)) {
    fail(ErrorCode::BadArgument, "lda_margin: gamma=" + std::to_string(gamma) + " must lie in (0, 1)");
  }
  const auto mom = moments(h);
  if (mom.inverse_infinite()) fail(ErrorCode::InverseMomentInfinite, "lda_margin: E_H[1/T] is infinite");
  const double e_inv = *mom.inverse;
  return alpha2 * std::sqrt(1.0 - gamma) * e_inv / std::sqrt(alpha2 * e_inv + gamma);
}

/// λ → ∞ endpoint: α² / √(α² E[T] + γ E[T²]).
inline double ir_margin(const SpectralDistribution& h, double gamma, double alpha2) {
  check_positive("ir_margin", "alpha2", alpha2);
  check_positive("ir_margin", "gamma", gamma);
  const auto mom = moments(h);
  return alpha2 / std::sqrt(alpha2 * mom.mean + gamma * mom.second);
}

struct WorstCaseReport {
  double k1 = 0.0;
  double k2 = 0.0;
  double gamma = 0.0;
  double alpha2 = 0.0;
  double lda_margin = 0.0;  // NaN when γ >= 1
  double ir_margin = 0.0;
  SpectralDistribution lda_least_favorable = identity_spectrum();
  SpectralDistribution ir_least_favorable = identity_spectrum();
  bool ir_beats_lda = false;  // only meaningful when γ < 1
};

/// Worst-case margins over mean-1 spectra supported in [k1, k2].
///
/// LDA is minimized by δ₁ (Jensen on E[1/T]). IR is minimized by maximizing
/// E[T²], which for a mean-1 law on [k1, k2] is the two-point law on the
/// endpoints; then E[T²] = k1 + k2 - k1k2.
inline WorstCaseReport worst_case(double k1, double k2, double gamma, double alpha2) {
  if (!(k1 > 0.0 && k1 <= 1.0 && k2 >= 1.0 && std::isfinite(k2))) {
    fail(ErrorCode::BadArgument, "worst_case: need 0 < k1 <= 1 <= k2, got k1=" + std::to_string(k1) +
                                     ", k2=" + std::to_string(k2));
  }
  check_positive("worst_case", "gamma", gamma);
  check_positive("worst_case", "alpha2", alpha2);
  WorstCaseReport rep;
  rep.k1 = k1;
  rep.k2 = k2;
  rep.gamma = gamma;
  rep.alpha2 = alpha2;
  const double spread = k1 + k2 - k1 * k2;
  rep.ir_margin = alpha2 / std::sqrt(alpha2 + gamma * spread);
  if (k1 < k2) {
    const double w1 = (k2 - 1.0) / (k2 - k1);
    const double w2 = (1.0 - k1) / (k2 - k1);
    std::vector<Atom> atoms;
    if (w1 > 0.0) atoms.push_back({k1, w1});
    if (w2 > 0.0) atoms.push_back({k2, w2});
    rep.ir_least_favorable = SpectralDistribution::point_masses(std::move(atoms));
  }
  if (gamma < 1.0) {
    rep.lda_margin = alpha2 * std::sqrt(1.0 - gamma) / std::sqrt(alpha2 + gamma);
    rep.ir_beats_lda = alpha2 + 1.0 > (1.0 - gamma) * spread;
  } else {
    rep.lda_margin = std::numeric_limits<double>::quiet_NaN();
  }
  return rep;
}

struct UnequalSampling {
  double gamma_plus = 0.0;   // p/n₊
  double gamma_minus = 0.0;  // p/n₋
  double pi_plus = 0.5;
  double pi_minus = 0.5;
  double c = 0.0;  // intercept added to -μ̂ᵀŵ
};

enum class QVariant {
  Derived,   // ((γ₋+γ₊)/(4γ))·(v'-v²)/(λ²v⁴); reduces to the balanced margin
  NoGamma,   // same term without the 1/γ
};

struct UnequalReport {
  double gamma = 0.0;  // γ₊γ₋/(γ₊+γ₋)
  double theta_plus = 0.0;
  double theta_minus = 0.0;
  double error = 0.0;
};

/// Limiting error π₋Φ(-Θ₋) + π₊Φ(-Θ₊) with unequal class sample sizes.
///
/// Θ± = (α²m ± (s + c))/√Q with s = ((γ₋-γ₊)/4)·(1/γ)(1/(λv) - 1) and
/// Q = α²(v-λv')/(γ(λv)²) + ((γ₋+γ₊)/(4γ))·(v'-v²)/(λ²v⁴).
inline UnequalReport unequal_error(const SpectralDistribution& h, const UnequalSampling& u, double alpha2,
                                   double lambda, QVariant variant = QVariant::Derived,
                                   const SolverOptions& opts = {}) {
  check_positive("unequal_error", "gamma_plus", u.gamma_plus);
  check_positive("unequal_error", "gamma_minus", u.gamma_minus);
  if (!(std::isfinite(alpha2) && alpha2 >= 0.0)) fail(ErrorCode::BadArgument, "unequal_error: alpha2 must be >= 0");
  if (!(u.pi_plus > 0.0 && u.pi_minus > 0.0 && std::abs(u.pi_plus + u.pi_minus - 1.0) <= 1e-12)) {
    fail(ErrorCode::BadArgument, "unequal_error: class priors must be positive and sum to 1");
  }
  if (!std::isfinite(u.c)) fail(ErrorCode::BadArgument, "unequal_error: intercept c must be finite");
  UnequalReport rep;
  rep.gamma = u.gamma_plus * u.gamma_minus / (u.gamma_plus + u.gamma_minus);
  const auto tp = transform_point(h, rep.gamma, lambda, opts);
  const auto mg = margin(tp, 1.0);
  const double g = rep.gamma;
  const double lv = lambda * tp.v;
  // η/(λv)² = (v-λv')/(γ(λv)²) and ξ/(λv)² = (v'-v²)/(λ²v⁴), in stable form.
  const double first = alpha2 * mg.eta / (lv * lv);
  const double noise = mg.xi / (lv * lv);
  const double scale = (u.gamma_minus + u.gamma_plus) / 4.0 / (variant == QVariant::Derived ? g : 1.0);
  const double q = first + scale * noise;
  // At the root 1/(λv) - 1 = γ s1/λ, so κ = s1/λ.
  const double kappa = tp.integrals.s1 / lambda;
  const double s = (u.gamma_minus - u.gamma_plus) / 4.0 * kappa;
  const double root = std::sqrt(q);
  rep.theta_plus = (alpha2 * tp.m + s + u.c) / root;
  rep.theta_minus = (alpha2 * tp.m - s - u.c) / root;
  rep.error = u.pi_minus * normal_cdf(-rep.theta_minus) + u.pi_plus * normal_cdf(-rep.theta_plus);
  return rep;
}

struct RdaErrorReport {
  double gamma = 0.0;
  double alpha2 = 0.0;
  double lambda = 0.0;
  double tau = 0.0;
  double eta = 0.0;
  double xi = 0.0;
  double theta = 0.0;
  double error = 0.0;
  double bayes_margin = 0.0;
  double bayes_error = 0.0;
  double cosine = 0.0;
  bool xi_clamped = false;
};

/// Full report. When E_H[1/T] is infinite the Bayes fields and cosine are NaN.
inline RdaErrorReport error_report(const SpectralDistribution& h, double gamma, double alpha2, double lambda,
                                   const SolverOptions& opts = {}) {
  const auto mg = margin(h, gamma, alpha2, lambda, opts);
  RdaErrorReport rep;
  rep.gamma = gamma;
  rep.alpha2 = alpha2;
  rep.lambda = lambda;
  rep.tau = mg.tau;
  rep.eta = mg.eta;
  rep.xi = mg.xi;
  rep.xi_clamped = mg.xi_clamped;
  rep.theta = mg.theta;
  rep.error = normal_cdf(-mg.theta);
  if (h.has_zero_atom()) {
    rep.bayes_margin = rep.bayes_error = rep.cosine = std::numeric_limits<double>::quiet_NaN();
  } else {
    const auto bm = bayes_margin(h, alpha2);
    rep.bayes_margin = bm.delta;
    rep.bayes_error = bm.error;
    rep.cosine = mg.theta / bm.delta;
  }
  return rep;
}

}  // namespace spectrisk::rda
