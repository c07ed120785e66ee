#pragma once

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstddef>
#include <numbers>
#include <optional>
#include <span>
#include <string>
#include <utility>
#include <variant>
#include <vector>

#include <Eigen/Dense>

#include "spectrisk/error.hpp"
#include "spectrisk/numerics.hpp"

namespace spectrisk {

/// One atom of a discrete population spectrum: eigenvalue `t` carrying mass `w`.
struct Atom {
  double t;
  double w;
};

enum class SpectrumKind { PointMasses, Ar1Limit, ExponentialQuantiles, Eigenvalues };

inline constexpr std::size_t kDefaultAr1Nodes = 2000;
inline constexpr int kMaxBinaryTreeDepth = 14;

/// Toeplitz symbol of the AR-1 covariance, f(θ) = (1-ρ²)/(1+ρ²-2ρcosθ).
inline double ar1_symbol(double rho, double theta) noexcept {
  return (1.0 - rho * rho) / (1.0 + rho * rho - 2.0 * rho * std::cos(theta));
}

/// Limiting population spectral distribution H of a covariance family.
///
/// Every family is reduced at construction to a finite rule {(t_i, w_i)} so that
/// ∫ f dH = Σ w_i f(t_i). For atomic families the rule is the atoms themselves.
/// For the AR-1 limit it is a Gauss-Legendre rule in the angle θ over [0, π]
/// pushed through the Toeplitz symbol (the symbol is even in θ, so half the
/// circle suffices).
///
/// Values are immutable after construction and safe to share across threads.
class SpectralDistribution {
 public:
  static SpectralDistribution point_masses(std::vector<Atom> atoms) {
    if (atoms.empty()) fail(ErrorCode::BadWeights, "point_masses: at least one atom required");
    double total = 0.0;
    for (const auto& a : atoms) {
      if (!std::isfinite(a.t) || a.t < 0.0) {
        fail(ErrorCode::NegativeAtom, "point_masses: atom t=" + std::to_string(a.t) + " must be >= 0");
      }
      if (!std::isfinite(a.w) || a.w <= 0.0 || a.w > 1.0 + 1e-9) {
        fail(ErrorCode::BadWeights, "point_masses: weight w=" + std::to_string(a.w) + " must lie in (0, 1]");
      }
      total += a.w;
    }
    if (std::abs(total - 1.0) > 1e-9) {
      fail(ErrorCode::BadWeights, "point_masses: weights sum to " + std::to_string(total) + ", expected 1");
    }
    for (auto& a : atoms) a.w /= total;
    SpectralDistribution h;
    h.kind_ = SpectrumKind::PointMasses;
    h.rule_ = std::move(atoms);
    h.label_ = "point_masses";
    return h;
  }

  static SpectralDistribution ar1_limit(double rho, std::size_t nodes = kDefaultAr1Nodes) {
    if (!(rho >= 0.0 && rho < 1.0)) {
      fail(ErrorCode::BadArgument, "ar1_limit: rho=" + std::to_string(rho) + " must lie in [0, 1)");
    }
    SpectralDistribution h;
    h.kind_ = SpectrumKind::Ar1Limit;
    h.rho_ = rho;
    h.nodes_ = nodes;
    h.rule_ = ar1_rule(rho, nodes);
    h.label_ = "ar1_limit";
    return h;
  }

  /// Equal-weight atoms at the Exp(1) quantiles F⁻¹((i - 1/2)/p), i = 1..p.
  static SpectralDistribution exponential_quantiles(std::size_t count) {
    if (count == 0) fail(ErrorCode::BadArgument, "exponential_quantiles: count must be positive");
    std::vector<Atom> rule(count);
    const double p = static_cast<double>(count);
    for (std::size_t i = 0; i < count; ++i) {
      const double q = (static_cast<double>(i) + 0.5) / p;
      rule[i] = {-std::log1p(-q), 1.0 / p};
    }
    SpectralDistribution h;
    h.kind_ = SpectrumKind::ExponentialQuantiles;
    h.nodes_ = count;
    h.rule_ = std::move(rule);
    h.label_ = "exponential_quantiles";
    return h;
  }

  static SpectralDistribution eigenvalues(std::vector<double> values, std::string label = "eigenvalues") {
    if (values.empty()) fail(ErrorCode::BadWeights, "eigenvalues: empty list");
    std::vector<Atom> rule;
    rule.reserve(values.size());
    const double w = 1.0 / static_cast<double>(values.size());
    for (double t : values) {
      if (!std::isfinite(t) || t < 0.0) {
        fail(ErrorCode::NegativeAtom, "eigenvalues: value " + std::to_string(t) + " must be >= 0");
      }
      rule.push_back({t, w});
    }
    SpectralDistribution h;
    h.kind_ = SpectrumKind::Eigenvalues;
    h.rule_ = std::move(rule);
    h.label_ = std::move(label);
    return h;
  }

  SpectrumKind kind() const noexcept { return kind_; }
  const std::string& label() const noexcept { return label_; }
  double rho() const noexcept { return rho_; }
  std::size_t order() const noexcept { return nodes_; }

  /// Discrete rule used by integrate.
  std::span<const Atom> rule() const noexcept { return rule_; }

  bool has_zero_atom() const noexcept {
    return std::any_of(rule_.begin(), rule_.end(), [](const Atom& a) { return a.t == 0.0; });
  }

  double min_support() const noexcept {
    return std::min_element(rule_.begin(), rule_.end(), [](auto& a, auto& b) { return a.t < b.t; })->t;
  }
  double max_support() const noexcept {
    return std::max_element(rule_.begin(), rule_.end(), [](auto& a, auto& b) { return a.t < b.t; })->t;
  }

  /// Σ w_i f(t_i); throws NonFiniteIntegrand if f is not finite on the support.
  template <class F>
  double integrate(F&& f) const {
    return integrate_rule(rule_, std::forward<F>(f));
  }

  template <class F>
  static double integrate_rule(std::span<const Atom> rule, F&& f) {
    CompensatedSum acc;
    for (const auto& a : rule) {
      const double y = f(a.t);
      if (!std::isfinite(y)) {
        fail(ErrorCode::NonFiniteIntegrand, "integrate: integrand is not finite at t=" + std::to_string(a.t));
      }
      acc.add(a.w * y);
    }
    return acc.value();
  }

  static std::vector<Atom> ar1_rule(double rho, std::size_t nodes) {
    const auto gl = gauss_legendre(nodes, 0.0, std::numbers::pi);
    std::vector<Atom> rule(nodes);
    for (std::size_t i = 0; i < nodes; ++i) {
      rule[i] = {ar1_symbol(rho, gl.nodes[i]), gl.weights[i] / std::numbers::pi};
    }
    return rule;
  }

 private:
  SpectralDistribution() = default;

  SpectrumKind kind_ = SpectrumKind::PointMasses;
  std::vector<Atom> rule_;
  double rho_ = 0.0;
  std::size_t nodes_ = 0;
  std::string label_;
};

inline SpectralDistribution make_point_masses(std::vector<Atom> atoms) {
  return SpectralDistribution::point_masses(std::move(atoms));
}

inline SpectralDistribution identity_spectrum() { return SpectralDistribution::point_masses({{1.0, 1.0}}); }

template <class F>
double integrate(const SpectralDistribution& h, F&& f) {
  return h.integrate(std::forward<F>(f));
}

/// Integral with an explicit quadrature order. Only the AR-1 limit has a
/// quadrature to refine; atomic families are integrated exactly regardless.
template <class F>
double integrate(const SpectralDistribution& h, F&& f, std::size_t nodes) {
  if (nodes == 0) fail(ErrorCode::BadArgument, "integrate: nodes must be positive");
  if (h.kind() != SpectrumKind::Ar1Limit || nodes == h.order()) return h.integrate(std::forward<F>(f));
  const auto rule = SpectralDistribution::ar1_rule(h.rho(), nodes);
  return SpectralDistribution::integrate_rule(rule, std::forward<F>(f));
}

struct MomentSummary {
  double mean = 0.0;
  double second = 0.0;
  std::optional<double> inverse;  // empty when the support touches 0
  // Set when E[1/T] is finite here but the family's limit has an atom
  // approaching 0 (small quantiles), so the value grows with resolution.
  bool small_atom_warning = false;

  bool inverse_infinite() const noexcept { return !inverse.has_value(); }
};

inline MomentSummary moments(const SpectralDistribution& h) {
  MomentSummary m;
  m.mean = h.integrate([](double t) { return t; });
  m.second = h.integrate([](double t) { return t * t; });
  if (!h.has_zero_atom()) m.inverse = h.integrate([](double t) { return 1.0 / t; });
  m.small_atom_warning = h.kind() == SpectrumKind::ExponentialQuantiles ||
                         (!h.has_zero_atom() && h.min_support() < 1e-3 * m.mean);
  return m;
}

/// Σ = C/d for the depth-d binary tree, C_ij = number of root-to-leaf edges
/// shared by leaves i and j (the depth of their lowest common ancestor).
inline Eigen::MatrixXd binary_tree_covariance(int depth) {
  if (depth < 1 || depth > kMaxBinaryTreeDepth) {
    fail(ErrorCode::DepthTooLarge, "binary_tree: depth=" + std::to_string(depth) + " must lie in [1, " +
                                       std::to_string(kMaxBinaryTreeDepth) + "]");
  }
  const std::size_t p = std::size_t{1} << depth;
  Eigen::MatrixXd sigma(p, p);
  for (std::size_t i = 0; i < p; ++i) {
    for (std::size_t j = 0; j < p; ++j) {
      const int split = static_cast<int>(std::bit_width(i ^ j));
      sigma(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) =
          static_cast<double>(depth - split) / depth;
    }
  }
  return sigma;
}

/// Eigenvalues of the binary-tree covariance under the 1/d normalization, from a
/// dense symmetric eigendecomposition.
inline SpectralDistribution binary_tree_spectrum(int depth) {
  const Eigen::MatrixXd sigma = binary_tree_covariance(depth);
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(sigma, Eigen::EigenvaluesOnly);
  std::vector<double> values(eig.eigenvalues().data(), eig.eigenvalues().data() + eig.eigenvalues().size());
  for (auto& v : values) v = std::max(v, 0.0);
  return SpectralDistribution::eigenvalues(std::move(values),
                                           "binary_tree(depth=" + std::to_string(depth) + ", normalization=1/d)");
}

}  // namespace spectrisk
