#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <numbers>
#include <span>
#include <vector>

#include "spectrisk/error.hpp"

namespace spectrisk {

// Neumaier-compensated accumulator; result is independent of thread layout as
// long as values are added in a fixed index order.
class CompensatedSum {
 public:
  void add(double x) noexcept {
    const double t = sum_ + x;
    if (std::abs(sum_) >= std::abs(x)) {
      comp_ += (sum_ - t) + x;
    } else {
      comp_ += (x - t) + sum_;
    }
    sum_ = t;
  }
  double value() const noexcept { return sum_ + comp_; }

 private:
  double sum_ = 0.0;
  double comp_ = 0.0;
};

inline double compensated_sum(std::span<const double> xs) noexcept {
  CompensatedSum acc;
  for (double x : xs) acc.add(x);
  return acc.value();
}

struct QuadratureRule {
  std::vector<double> nodes;
  std::vector<double> weights;
};

/// Gauss-Legendre rule of the given order on [a, b].
///
/// Nodes are found by Newton iteration on the three-term Legendre recurrence,
/// started from the Tricomi asymptotic guess; weights use the derivative at the
/// converged node. Accurate to roughly machine precision for orders in the
/// thousands.
inline QuadratureRule gauss_legendre(std::size_t order, double a, double b) {
  if (order == 0) fail(ErrorCode::BadArgument, "gauss_legendre: order must be positive");
  QuadratureRule rule;
  rule.nodes.resize(order);
  rule.weights.resize(order);
  const double n = static_cast<double>(order);
  const double half_width = 0.5 * (b - a);
  const double mid = 0.5 * (b + a);
  for (std::size_t i = 0; i < (order + 1) / 2; ++i) {
    const double k = static_cast<double>(i) + 1.0;
    double x = std::cos(std::numbers::pi * (k - 0.25) / (n + 0.5)) *
               (1.0 - (n - 1.0) / (8.0 * n * n * n));
    double dp = 0.0;
    for (int iter = 0; iter < 100; ++iter) {
      double p0 = 1.0;
      double p1 = x;
      for (std::size_t j = 2; j <= order; ++j) {
        const double jj = static_cast<double>(j);
        const double p2 = ((2.0 * jj - 1.0) * x * p1 - (jj - 1.0) * p0) / jj;
        p0 = p1;
        p1 = p2;
      }
      dp = n * (x * p1 - p0) / (x * x - 1.0);
      const double dx = p1 / dp;
      x -= dx;
      if (std::abs(dx) < 1e-16) break;
    }
    const double w = 2.0 / ((1.0 - x * x) * dp * dp);
    rule.nodes[i] = mid - half_width * x;
    rule.weights[i] = half_width * w;
    rule.nodes[order - 1 - i] = mid + half_width * x;
    rule.weights[order - 1 - i] = half_width * w;
  }
  return rule;
}

/// Standard normal CDF via the complementary error function.
inline double normal_cdf(double x) noexcept { return 0.5 * std::erfc(-x / std::numbers::sqrt2); }

inline double normal_pdf(double x) noexcept {
  return std::exp(-0.5 * x * x) / std::sqrt(2.0 * std::numbers::pi);
}

/// Inverse of normal_cdf. Acklam's rational approximation seeds a Halley
/// refinement against normal_cdf.
inline double normal_quantile(double q) {
  if (!(q > 0.0 && q < 1.0)) fail(ErrorCode::BadArgument, "normal_quantile: q must lie in (0, 1)");
  static constexpr double a[] = {-3.969683028665376e+01, 2.209460984245205e+02,
                                 -2.759285104469687e+02, 1.383577518672690e+02,
                                 -3.066479806614716e+01, 2.506628277459239e+00};
  static constexpr double b[] = {-5.447609879822406e+01, 1.615858368580409e+02,
                                 -1.556989798598866e+02, 6.680131188771972e+01,
                                 -1.328068155288572e+01};
  static constexpr double c[] = {-7.784894002430293e-03, -3.223964580411365e-01,
                                 -2.400758277161838e+00, -2.549732539343734e+00,
                                 4.374664141464968e+00,  2.938163982698783e+00};
  static constexpr double d[] = {7.784695709041462e-03, 3.224671290700398e-01,
                                 2.445134137142996e+00, 3.754408661907416e+00};
  constexpr double low = 0.02425;
  double x;
  if (q < low) {
    const double r = std::sqrt(-2.0 * std::log(q));
    x = (((((c[0] * r + c[1]) * r + c[2]) * r + c[3]) * r + c[4]) * r + c[5]) /
        ((((d[0] * r + d[1]) * r + d[2]) * r + d[3]) * r + 1.0);
  } else if (q > 1.0 - low) {
    const double r = std::sqrt(-2.0 * std::log1p(-q));
    x = -(((((c[0] * r + c[1]) * r + c[2]) * r + c[3]) * r + c[4]) * r + c[5]) /
        ((((d[0] * r + d[1]) * r + d[2]) * r + d[3]) * r + 1.0);
  } else {
    const double s = q - 0.5;
    const double r = s * s;
    x = (((((a[0] * r + a[1]) * r + a[2]) * r + a[3]) * r + a[4]) * r + a[5]) * s /
        (((((b[0] * r + b[1]) * r + b[2]) * r + b[3]) * r + b[4]) * r + 1.0);
  }
  for (int iter = 0; iter < 8; ++iter) {
    // Work in the tail that keeps the residual well conditioned.
    const double e = (x < 0.0) ? normal_cdf(x) - q : (1.0 - q) - normal_cdf(-x);
    const double u = e / normal_pdf(x);
    const double step = u / (1.0 + 0.5 * x * u);
    x -= step;
    if (std::abs(step) <= 1e-15 * std::max(1.0, std::abs(x))) break;
  }
  return x;
}

}  // namespace spectrisk
