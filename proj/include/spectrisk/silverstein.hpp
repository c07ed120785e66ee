#pragma once

#include <algorithm>
#include <cmath>
#include <limits>
#include <string>
#include <vector>

#include "spectrisk/error.hpp"
#include "spectrisk/spectra.hpp"

namespace spectrisk {

struct SolverOptions {
  double tol = 1e-12;
  int max_iter = 10000;
  // Fixed-point steps tried before switching to bracketed refinement.
  int fixed_point_budget = 200;
};

/// The three H-integrals the transforms are assembled from, at a given v.
struct CompanionIntegrals {
  double s1 = 0.0;  // ∫ t/(1+tv) dH
  double s2 = 0.0;  // ∫ t/(1+tv)² dH
  double q2 = 0.0;  // ∫ t²/(1+tv)² dH
};

inline CompanionIntegrals companion_integrals(const SpectralDistribution& h, double v) {
  CompanionIntegrals out;
  CompensatedSum s1, s2, q2;
  for (const auto& a : h.rule()) {
    const double d = 1.0 / (1.0 + a.t * v);
    s1.add(a.w * a.t * d);
    s2.add(a.w * a.t * d * d);
    q2.add(a.w * a.t * a.t * d * d);
  }
  out.s1 = s1.value();
  out.s2 = s2.value();
  out.q2 = q2.value();
  if (!std::isfinite(out.s1) || !std::isfinite(out.s2) || !std::isfinite(out.q2)) {
    fail(ErrorCode::NonFiniteIntegrand, "companion_integrals: non-finite integral at v=" + std::to_string(v));
  }
  return out;
}

/// 1/v - λ - γ∫ t dH/(1+tv); zero exactly at the companion transform v(-λ).
inline double silverstein_residual(const SpectralDistribution& h, double gamma, double lambda, double v) {
  return 1.0 / v - lambda - gamma * companion_integrals(h, v).s1;
}

/// Functional inverse of v ↦ z on the real axis: z(v) = -1/v + γ∫ t dH/(1+tv).
inline double inverse_map(const SpectralDistribution& h, double gamma, double v) {
  return -1.0 / v + gamma * companion_integrals(h, v).s1;
}

struct CompanionSolution {
  double v = 0.0;
  double residual = 0.0;
  int iterations = 0;
  bool bracketed = false;  // true if the fixed-point phase handed off to bracketing
};

namespace detail {

inline void check_arguments(const char* who, double gamma, double lambda) {
  if (!(std::isfinite(lambda) && lambda > 0.0)) {
    fail(ErrorCode::BadArgument, std::string(who) + ": lambda=" + std::to_string(lambda) + " must be > 0");
  }
  if (!(std::isfinite(gamma) && gamma > 0.0)) {
    fail(ErrorCode::BadArgument, std::string(who) + ": gamma=" + std::to_string(gamma) + " must be > 0");
  }
}

/// Newton refinement on G(v) = λv + γ∫ tv/(1+tv) dH - 1, whose terms are O(1)
/// so G carries absolute error near machine epsilon, unlike the residual
/// 1/v - λ - γ s1 whose terms grow like 1/v. G is increasing and concave, so
/// steps from either side settle monotonically onto the root.
inline double polish_companion(const SpectralDistribution& h, double gamma, double lambda, double v) {
  for (int i = 0; i < 8; ++i) {
    CompensatedSum g, dg;
    g.add(lambda * v - 1.0);
    dg.add(lambda);
    for (const auto& a : h.rule()) {
      const double d = 1.0 / (1.0 + a.t * v);
      g.add(gamma * a.w * a.t * v * d);
      dg.add(gamma * a.w * a.t * d * d);
    }
    const double step = g.value() / dg.value();
    const double next = v - step;
    if (!(next > 0.0) || !std::isfinite(next)) return v;
    v = next;
    if (std::abs(step) <= 2.0 * std::numeric_limits<double>::epsilon() * v) break;
  }
  return v;
}

}  // namespace detail

/// Companion Stieltjes transform v(-λ) > 0, the unique positive root of
/// 1/v = λ + γ∫ t dH(t)/(1+tv).
///
/// Multiplying through by v gives λv + γ∫ tv/(1+tv) dH = 1, whose left side is
/// strictly increasing in v, so the root is unique and lies in
/// [1/(λ + γE[T]), 1/λ]. The solver runs damped fixed-point iteration from the
/// lower end of that bracket and, if the contraction is too slow (λ small near
/// γ = 1) or oscillates, finishes with safeguarded Newton steps on the bracket.
///
/// Convergence is declared when |residual| <= tol · max(1, 1/v); the residual
/// is a difference of terms of size 1/v, so an unscaled test is unattainable for
/// large λ. The accepted point is then polished to full precision.
inline CompanionSolution solve_companion(const SpectralDistribution& h, double gamma, double lambda,
                                         const SolverOptions& opts = {}) {
  detail::check_arguments("solve_companion", gamma, lambda);
  if (!(opts.tol > 0.0)) fail(ErrorCode::BadArgument, "solve_companion: tol must be > 0");

  const double mean = h.integrate([](double t) { return t; });
  double lo = 1.0 / (lambda + gamma * mean);
  double hi = 1.0 / lambda;
  auto converged = [&](double r, double v) { return std::abs(r) <= opts.tol * std::max(1.0, 1.0 / v); };

  CompanionSolution sol;
  double v = lo;
  bool damped = false;
  double prev_r = 0.0;
  int iter = 0;
  for (; iter < std::min(opts.fixed_point_budget, opts.max_iter); ++iter) {
    const auto ints = companion_integrals(h, v);
    const double r = 1.0 / v - lambda - gamma * ints.s1;
    if (converged(r, v)) {
      v = detail::polish_companion(h, gamma, lambda, v);
      return {v, silverstein_residual(h, gamma, lambda, v), iter, false};
    }
    // r > 0 exactly when v lies below the root.
    if (r > 0.0) {
      lo = std::max(lo, v);
    } else {
      hi = std::min(hi, v);
    }
    if (iter > 0 && (r > 0.0) != (prev_r > 0.0)) damped = true;
    prev_r = r;
    const double next = 1.0 / (lambda + gamma * ints.s1);
    v = damped ? 0.5 * (v + next) : next;
  }

  sol.bracketed = true;
  for (; iter < opts.max_iter; ++iter) {
    const auto ints = companion_integrals(h, v);
    const double r = 1.0 / v - lambda - gamma * ints.s1;
    if (converged(r, v)) {
      sol.v = detail::polish_companion(h, gamma, lambda, v);
      sol.residual = silverstein_residual(h, gamma, lambda, sol.v);
      sol.iterations = iter;
      return sol;
    }
    if (r > 0.0) {
      lo = std::max(lo, v);
    } else {
      hi = std::min(hi, v);
    }
    // Newton on G(v) = λv + γ∫ tv/(1+tv) - 1 = -v·r, with G'(v) = λ + γ s2.
    const double g = -v * r;
    const double dg = lambda + gamma * ints.s2;
    double next = v - g / dg;
    if (!(next > lo && next < hi)) next = 0.5 * (lo + hi);
    if (next == v || hi - lo <= 4.0 * std::numeric_limits<double>::epsilon() * hi) {
      // Bracket collapsed to adjacent doubles; accept only if the residual is at
      // the rounding floor of its terms.
      const double floor = 16.0 * std::numeric_limits<double>::epsilon() * (1.0 / v + lambda + gamma * ints.s1);
      if (std::abs(r) <= std::max(floor, opts.tol * std::max(1.0, 1.0 / v))) {
        v = detail::polish_companion(h, gamma, lambda, v);
        return {v, silverstein_residual(h, gamma, lambda, v), iter, true};
      }
      break;
    }
    v = next;
  }
  fail(ErrorCode::NoConvergence, "solve_companion: no convergence for gamma=" + std::to_string(gamma) +
                                     ", lambda=" + std::to_string(lambda) + " after " +
                                     std::to_string(opts.max_iter) + " iterations");
}

/// Transforms at z = -λ.
///
/// v       companion transform, v(-λ)
/// v_prime dv/dz at z = -λ
/// m       Stieltjes transform of the limiting ESD, m(-λ)
/// m_prime dm/dz at z = -λ
struct TransformPoint {
  double lambda = 0.0;
  double gamma = 0.0;
  double v = 0.0;
  double v_prime = 0.0;
  double m = 0.0;
  double m_prime = 0.0;
  double residual = 0.0;
  int iterations = 0;
  CompanionIntegrals integrals;
};

/// Evaluates (v, v', m, m') at z = -λ.
///
/// The textbook expressions v' = (1/v² - γ∫t²/(1+tv)²)⁻¹ and
/// m = (v - 1/λ)/γ + 1/λ lose all precision at large λ. At the root they are
/// algebraically equal to v' = v/(λ + γ s2) and m = (1 - v s1)/λ, which are
/// used instead. The textbook forms remain tested against these.
inline TransformPoint transform_point(const SpectralDistribution& h, double gamma, double lambda,
                                      const SolverOptions& opts = {}) {
  const auto sol = solve_companion(h, gamma, lambda, opts);
  TransformPoint tp;
  tp.lambda = lambda;
  tp.gamma = gamma;
  tp.v = sol.v;
  tp.residual = sol.residual;
  tp.iterations = sol.iterations;
  tp.integrals = companion_integrals(h, sol.v);
  const auto& in = tp.integrals;
  const double denom = lambda + gamma * in.s2;
  if (!(denom > 0.0) || !std::isfinite(denom)) {
    fail(ErrorCode::SingularDerivative, "transform_point: derivative denominator is not positive");
  }
  tp.v_prime = tp.v / denom;
  tp.m = (1.0 - tp.v * in.s1) / lambda;
  tp.m_prime = tp.m / denom + (gamma - 1.0) * in.s2 / (lambda * lambda * denom);
  return tp;
}

/// v(0) for γ > 1: the unique c > 0 with ∫ tc/(1+tc) dH = 1/γ, by bisection.
inline double v_at_zero(const SpectralDistribution& h, double gamma) {
  if (!(std::isfinite(gamma) && gamma > 1.0)) {
    fail(ErrorCode::BadArgument, "v_at_zero: gamma=" + std::to_string(gamma) + " must be > 1");
  }
  const double target = 1.0 / gamma;
  auto lhs = [&](double c) { return h.integrate([c](double t) { return t * c / (1.0 + t * c); }); };
  const double positive_mass = h.integrate([](double t) { return t > 0.0 ? 1.0 : 0.0; });
  if (positive_mass <= target) {
    fail(ErrorCode::BadArgument, "v_at_zero: mass of H away from 0 does not exceed 1/gamma; v(0) is infinite");
  }
  double lo = 0.0;
  double hi = 1.0;
  for (int i = 0; lhs(hi) < target; ++i) {
    if (i > 2000) fail(ErrorCode::NoConvergence, "v_at_zero: could not bracket the root");
    lo = hi;
    hi *= 2.0;
  }
  for (int i = 0; i < 400 && hi - lo > 4.0 * std::numeric_limits<double>::epsilon() * hi; ++i) {
    const double mid = 0.5 * (lo + hi);
    (lhs(mid) < target ? lo : hi) = mid;
  }
  return 0.5 * (lo + hi);
}

/// One tabulated pair of the inverse map with its acceptance verdict.
struct InverseMapSample {
  double v = 0.0;
  double z = 0.0;
  bool accepted = false;  // z < 0, z increasing at v, and residual at λ = -z within tolerance
};

/// Tabulates z(v_i) on a grid. A pair is accepted as v(z_i) = v_i only if
/// z_i < 0, dz/dv > 0 there, and the fixed-point residual at λ = -z_i passes.
inline std::vector<InverseMapSample> tabulate_inverse_map(const SpectralDistribution& h, double gamma,
                                                          const std::vector<double>& v_grid,
                                                          double tol = 1e-10) {
  std::vector<InverseMapSample> out;
  out.reserve(v_grid.size());
  for (double v : v_grid) {
    InverseMapSample s;
    s.v = v;
    const auto in = companion_integrals(h, v);
    s.z = -1.0 / v + gamma * in.s1;
    const double dz_dv = 1.0 / (v * v) - gamma * in.q2;
    if (s.z < 0.0 && dz_dv > 0.0) {
      const double r = silverstein_residual(h, gamma, -s.z, v);
      s.accepted = std::abs(r) <= tol * std::max(1.0, 1.0 / v);
    }
    out.push_back(s);
  }
  return out;
}

/// Cross-check route: linear interpolation of v(-λ) from an accepted tabulation.
/// Throws BadArgument if -λ is not bracketed by accepted neighbours.
inline double companion_from_table(const std::vector<InverseMapSample>& table, double lambda) {
  const double z = -lambda;
  for (std::size_t i = 0; i + 1 < table.size(); ++i) {
    const auto& a = table[i];
    const auto& b = table[i + 1];
    if (!a.accepted || !b.accepted) continue;
    if ((a.z - z) * (b.z - z) <= 0.0 && a.z != b.z) {
      return a.v + (b.v - a.v) * (z - a.z) / (b.z - a.z);
    }
  }
  fail(ErrorCode::BadArgument, "companion_from_table: lambda=" + std::to_string(lambda) + " not covered by table");
}

}  // namespace spectrisk
