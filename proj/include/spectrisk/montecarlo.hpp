#pragma once

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <exception>
#include <limits>
#include <mutex>
#include <optional>
#include <random>
#include <string>
#include <thread>
#include <variant>
#include <vector>

#include <Eigen/Dense>

#include "spectrisk/error.hpp"
#include "spectrisk/numerics.hpp"
#include "spectrisk/rda.hpp"
#include "spectrisk/ridge.hpp"
#include "spectrisk/silverstein.hpp"
#include "spectrisk/spectra.hpp"

namespace spectrisk::mc {

using Eigen::MatrixXd;
using Eigen::VectorXd;

struct IdentityModel {};
struct Ar1Model {
  double rho = 0.0;
};
struct ExponentialModel {};  // diagonal Σ with Exp(1) quantile entries
struct BinaryTreeModel {
  int depth = 1;
};
struct ExplicitModel {
  MatrixXd sigma;
};

using CovarianceModel = std::variant<IdentityModel, Ar1Model, ExponentialModel, BinaryTreeModel, ExplicitModel>;

/// Dimension implied by a model. Binary trees and explicit matrices fix p; for
/// them a nonzero requested p must agree.
inline std::size_t model_dimension(const CovarianceModel& model, std::size_t p) {
  std::size_t fixed = 0;
  if (const auto* bt = std::get_if<BinaryTreeModel>(&model)) {
    if (bt->depth < 1 || bt->depth > kMaxBinaryTreeDepth) {
      fail(ErrorCode::DepthTooLarge, "model_dimension: binary_tree depth=" + std::to_string(bt->depth));
    }
    fixed = std::size_t{1} << bt->depth;
  } else if (const auto* ex = std::get_if<ExplicitModel>(&model)) {
    fixed = static_cast<std::size_t>(ex->sigma.rows());
  }
  if (fixed != 0) {
    if (p != 0 && p != fixed) {
      fail(ErrorCode::BadArgument, "model_dimension: p=" + std::to_string(p) + " but the model fixes p=" +
                                       std::to_string(fixed));
    }
    return fixed;
  }
  if (p == 0) fail(ErrorCode::BadArgument, "model_dimension: p must be given for this covariance model");
  return p;
}

struct Covariance {
  MatrixXd sigma;
  MatrixXd factor;  // lower triangular, Σ = L Lᵀ
  bool diagonal = false;
};

/// Σ and its Cholesky factor. Built-in families are positive definite by
/// construction; only explicit input can raise NotPositiveDefinite.
inline Covariance build_covariance(const CovarianceModel& model, std::size_t p_requested) {
  const std::size_t p = model_dimension(model, p_requested);
  const auto n = static_cast<Eigen::Index>(p);
  Covariance cov;
  std::visit(
      [&](const auto& m) {
        using M = std::decay_t<decltype(m)>;
        if constexpr (std::is_same_v<M, IdentityModel>) {
          cov.sigma = MatrixXd::Identity(n, n);
          cov.diagonal = true;
        } else if constexpr (std::is_same_v<M, Ar1Model>) {
          if (!(m.rho >= 0.0 && m.rho < 1.0)) {
            fail(ErrorCode::BadArgument, "build_covariance: ar1 rho=" + std::to_string(m.rho) + " must lie in [0, 1)");
          }
          cov.sigma.resize(n, n);
          for (Eigen::Index i = 0; i < n; ++i) {
            for (Eigen::Index j = 0; j < n; ++j) {
              cov.sigma(i, j) = i == j ? 1.0 : std::pow(m.rho, static_cast<double>(std::abs(i - j)));
            }
          }
        } else if constexpr (std::is_same_v<M, ExponentialModel>) {
          const auto h = SpectralDistribution::exponential_quantiles(p);
          cov.sigma = MatrixXd::Zero(n, n);
          for (Eigen::Index i = 0; i < n; ++i) cov.sigma(i, i) = h.rule()[static_cast<std::size_t>(i)].t;
          cov.diagonal = true;
        } else if constexpr (std::is_same_v<M, BinaryTreeModel>) {
          cov.sigma = binary_tree_covariance(m.depth);
        } else {
          if (!m.sigma.allFinite()) fail(ErrorCode::NotPositiveDefinite, "build_covariance: explicit sigma has non-finite entries");
          if (!m.sigma.isApprox(m.sigma.transpose(), 1e-12)) {
            fail(ErrorCode::NotPositiveDefinite, "build_covariance: explicit sigma is not symmetric");
          }
          cov.sigma = m.sigma;
        }
      },
      model);
  if (cov.diagonal) {
    cov.factor = cov.sigma.diagonal().cwiseSqrt().asDiagonal();
    return cov;
  }
  Eigen::LLT<MatrixXd> llt(cov.sigma);
  if (llt.info() != Eigen::Success) {
    fail(ErrorCode::NotPositiveDefinite, "build_covariance: Cholesky factorization failed");
  }
  cov.factor = llt.matrixL();
  return cov;
}

enum class SpectrumSource {
  Finite,  // eigenvalues of the p×p Σ actually simulated
  Limit,   // the family's p → ∞ limit where one exists
};

inline SpectralDistribution population_spectrum(const CovarianceModel& model, std::size_t p,
                                                SpectrumSource source = SpectrumSource::Finite) {
  p = model_dimension(model, p);
  if (std::holds_alternative<IdentityModel>(model)) return identity_spectrum();
  if (std::holds_alternative<ExponentialModel>(model)) return SpectralDistribution::exponential_quantiles(p);
  if (const auto* bt = std::get_if<BinaryTreeModel>(&model)) return binary_tree_spectrum(bt->depth);
  if (const auto* ar = std::get_if<Ar1Model>(&model); ar && source == SpectrumSource::Limit) {
    return SpectralDistribution::ar1_limit(ar->rho);
  }
  const auto cov = build_covariance(model, p);
  Eigen::SelfAdjointEigenSolver<MatrixXd> eig(cov.sigma, Eigen::EigenvaluesOnly);
  std::vector<double> values(eig.eigenvalues().data(), eig.eigenvalues().data() + eig.eigenvalues().size());
  for (auto& v : values) v = std::max(v, 0.0);
  return SpectralDistribution::eigenvalues(std::move(values), "finite_sigma");
}

/// p⁻¹ tr(Σ⁻¹).
inline double mean_inverse_eigenvalue(const MatrixXd& sigma) {
  Eigen::LLT<MatrixXd> llt(sigma);
  if (llt.info() != Eigen::Success) fail(ErrorCode::SingularSigma, "calibrate_alpha: sigma is not invertible");
  const MatrixXd inv = llt.solve(MatrixXd::Identity(sigma.rows(), sigma.cols()));
  return inv.trace() / static_cast<double>(sigma.rows());
}

namespace detail {
inline double target_margin(double target) {
  if (!(target > 0.0 && target < 0.5)) {
    fail(ErrorCode::BadArgument, "calibrate_alpha: target_bayes_error=" + std::to_string(target) +
                                     " must lie in (0, 0.5)");
  }
  return normal_quantile(1.0 - target);
}
}  // namespace detail

/// α² with Φ(-α√(p⁻¹ tr Σ⁻¹)) = target.
inline double calibrate_alpha(const MatrixXd& sigma, double target) {
  const double d = detail::target_margin(target);
  return d * d / mean_inverse_eigenvalue(sigma);
}

/// α² with Φ(-α√E_H[1/T]) = target.
inline double calibrate_alpha(const SpectralDistribution& h, double target) {
  const double d = detail::target_margin(target);
  const auto mom = moments(h);
  if (mom.inverse_infinite()) fail(ErrorCode::InverseMomentInfinite, "calibrate_alpha: E_H[1/T] is infinite");
  return d * d / *mom.inverse;
}

enum class RidgeEval {
  Realized,          // 1 + (ŵ-w)ᵀΣ(ŵ-w)
  ConditionalTrace,  // E[risk | X] over w and ε, by traces
  TestSet,           // mean squared error on fresh draws
};

struct RidgeSimConfig {
  CovarianceModel model = IdentityModel{};
  std::size_t p = 0;
  double gamma = 1.0;  // n = round(p/γ)
  double alpha2 = 1.0;
  std::vector<double> lambdas;
  std::size_t replicates = 100;
  std::size_t test_size = 0;  // > 0 selects TestSet
  RidgeEval eval = RidgeEval::Realized;
  std::uint64_t seed = 0;
  SpectrumSource theory_source = SpectrumSource::Finite;
  unsigned threads = 0;  // 0 = hardware concurrency
};

enum class Calibration { Finite, Asymptotic };
enum class RdaWeight {
  Regularized,   // (Σ̂_c + λI)⁻¹ δ̂
  Independence,  // δ̂, the λ → ∞ direction; one row with λ = inf
};

struct RdaSimConfig {
  CovarianceModel model = IdentityModel{};
  std::size_t p = 0;
  double gamma = 1.0;
  std::size_t n_plus = 0;  // both 0: balanced split of round(p/γ)
  std::size_t n_minus = 0;
  std::optional<double> alpha2;
  std::optional<double> target_bayes_error;
  Calibration calibration = Calibration::Finite;
  std::vector<double> lambdas;
  std::size_t replicates = 20;
  std::size_t test_size = 0;
  double c = 0.0;
  std::optional<double> pi_plus;  // default n₊/n
  RdaWeight weight = RdaWeight::Regularized;
  bool mean_stress = false;  // μ̄ ≠ 0 with ‖μ̄‖² = p^{1/4}
  std::uint64_t seed = 0;
  SpectrumSource theory_source = SpectrumSource::Finite;
  unsigned threads = 0;
};

struct SimRow {
  double lambda = 0.0;
  double empirical_mean = 0.0;
  double standard_error = 0.0;
  double theory = 0.0;
  double oracle = 0.0;
};

struct SimResult {
  std::vector<SimRow> rows;
  std::uint64_t seed = 0;
  std::uint64_t config_hash = 0;
  std::size_t p = 0;
  std::size_t n_plus = 0;  // ridge: n, with n_minus = 0
  std::size_t n_minus = 0;
  double alpha2 = 0.0;
  double gamma = 0.0;
};

inline std::uint64_t fnv1a64(std::string_view s, std::uint64_t h = 0xcbf29ce484222325ULL) noexcept {
  for (unsigned char ch : s) {
    h ^= ch;
    h *= 0x100000001b3ULL;
  }
  return h;
}

inline std::string format_double(double x) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.17g", x);
  return buf;
}

namespace detail {

inline std::string describe(const CovarianceModel& model) {
  return std::visit(
      [](const auto& m) -> std::string {
        using M = std::decay_t<decltype(m)>;
        if constexpr (std::is_same_v<M, IdentityModel>) return "identity";
        else if constexpr (std::is_same_v<M, Ar1Model>) return "ar1:" + format_double(m.rho);
        else if constexpr (std::is_same_v<M, ExponentialModel>) return "exponential";
        else if constexpr (std::is_same_v<M, BinaryTreeModel>) return "binary_tree:" + std::to_string(m.depth);
        else {
          std::string s = "explicit:" + std::to_string(m.sigma.rows());
          for (Eigen::Index i = 0; i < m.sigma.size(); ++i) s += "," + format_double(m.sigma.data()[i]);
          return s;
        }
      },
      model);
}

inline std::string describe_grid(const std::vector<double>& grid) {
  std::string s;
  for (double l : grid) s += format_double(l) + ",";
  return s;
}

inline std::vector<double> sorted_grid(std::vector<double> grid, const char* who) {
  if (grid.empty()) fail(ErrorCode::BadArgument, std::string(who) + ": lambda grid is empty");
  for (double l : grid) {
    if (!(std::isfinite(l) && l > 0.0)) {
      fail(ErrorCode::BadArgument, std::string(who) + ": lambda=" + format_double(l) + " must be > 0");
    }
  }
  std::sort(grid.begin(), grid.end());
  return grid;
}

inline unsigned worker_count(unsigned requested, std::size_t jobs) {
  unsigned t = requested == 0 ? std::max(1u, std::thread::hardware_concurrency()) : requested;
  return static_cast<unsigned>(std::min<std::size_t>(t, std::max<std::size_t>(jobs, 1)));
}

/// Runs body(r) for r in [0, count) on up to `threads` workers. The first
/// exception thrown is rethrown after all workers stop.
template <class Body>
void parallel_replicates(std::size_t count, unsigned threads, Body&& body) {
  const unsigned workers = worker_count(threads, count);
  std::atomic<std::size_t> next{0};
  std::exception_ptr first_error;
  std::mutex error_mutex;
  auto run = [&] {
    for (;;) {
      const std::size_t r = next.fetch_add(1);
      if (r >= count) return;
      try {
        body(r);
      } catch (...) {
        std::lock_guard<std::mutex> lock(error_mutex);
        if (!first_error) first_error = std::current_exception();
        next.store(count);
        return;
      }
    }
  };
  if (workers <= 1) {
    run();
  } else {
    std::vector<std::thread> pool;
    pool.reserve(workers);
    for (unsigned i = 0; i < workers; ++i) pool.emplace_back(run);
    for (auto& t : pool) t.join();
  }
  if (first_error) std::rethrow_exception(first_error);
}

/// Independent stream for one replicate, a function of (seed, replicate) only.
inline std::mt19937_64 replicate_rng(std::uint64_t seed, std::size_t replicate) {
  std::seed_seq seq{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32),
                    static_cast<std::uint32_t>(replicate), static_cast<std::uint32_t>(std::uint64_t{replicate} >> 32)};
  return std::mt19937_64(seq);
}

inline MatrixXd gaussian_matrix(std::mt19937_64& rng, Eigen::Index rows, Eigen::Index cols) {
  std::normal_distribution<double> z;
  MatrixXd out(rows, cols);
  // Fill row by row so the draw order is independent of storage order.
  for (Eigen::Index i = 0; i < rows; ++i) {
    for (Eigen::Index j = 0; j < cols; ++j) out(i, j) = z(rng);
  }
  return out;
}

inline VectorXd gaussian_vector(std::mt19937_64& rng, Eigen::Index n, double sd) {
  std::normal_distribution<double> z;
  VectorXd out(n);
  for (Eigen::Index i = 0; i < n; ++i) out(i) = sd * z(rng);
  return out;
}

/// Rows x_i = L z_i, i.e. X = Z Lᵀ.
inline MatrixXd sample_rows(std::mt19937_64& rng, const Covariance& cov, Eigen::Index rows) {
  MatrixXd z = gaussian_matrix(rng, rows, cov.sigma.rows());
  if (cov.diagonal) return z * cov.factor.diagonal().asDiagonal();
  return z * cov.factor.transpose();
}

struct Moments {
  double mean = 0.0;
  double standard_error = 0.0;
};

/// Mean and standard error of the sample, summed in index order.
inline Moments summarize(const std::vector<double>& xs) {
  Moments out;
  const double n = static_cast<double>(xs.size());
  out.mean = compensated_sum(xs) / n;
  if (xs.size() < 2) return out;
  CompensatedSum ss;
  for (double x : xs) ss.add((x - out.mean) * (x - out.mean));
  out.standard_error = std::sqrt(ss.value() / (n - 1.0)) / std::sqrt(n);
  return out;
}

inline void solve_failed(const char* who, double lambda) {
  fail(ErrorCode::SingularSolve, std::string(who) + ": factorization failed at lambda=" + format_double(lambda));
}

}  // namespace detail

inline std::size_t ridge_sample_size(std::size_t p, double gamma) {
  if (!(std::isfinite(gamma) && gamma > 0.0)) fail(ErrorCode::BadArgument, "sim: gamma must be > 0");
  const auto n = static_cast<std::size_t>(std::llround(static_cast<double>(p) / gamma));
  if (n < 2) fail(ErrorCode::BadArgument, "sim: n = round(p/gamma) = " + std::to_string(n) + " must be >= 2");
  return n;
}

inline std::uint64_t config_hash(const RidgeSimConfig& c) {
  std::string s = "ridge|" + detail::describe(c.model) + "|p=" + std::to_string(c.p) + "|gamma=" +
                  format_double(c.gamma) + "|alpha2=" + format_double(c.alpha2) + "|grid=" +
                  detail::describe_grid(c.lambdas) + "|reps=" + std::to_string(c.replicates) + "|test=" +
                  std::to_string(c.test_size) + "|eval=" + std::to_string(static_cast<int>(c.eval)) +
                  "|source=" + std::to_string(static_cast<int>(c.theory_source)) + "|seed=" + std::to_string(c.seed);
  return fnv1a64(s);
}

inline std::uint64_t config_hash(const RdaSimConfig& c) {
  std::string s = "rda|" + detail::describe(c.model) + "|p=" + std::to_string(c.p) + "|gamma=" +
                  format_double(c.gamma) + "|n+=" + std::to_string(c.n_plus) + "|n-=" + std::to_string(c.n_minus) +
                  "|alpha2=" + (c.alpha2 ? format_double(*c.alpha2) : "none") + "|target=" +
                  (c.target_bayes_error ? format_double(*c.target_bayes_error) : "none") + "|cal=" +
                  std::to_string(static_cast<int>(c.calibration)) + "|grid=" + detail::describe_grid(c.lambdas) +
                  "|reps=" + std::to_string(c.replicates) + "|test=" + std::to_string(c.test_size) + "|c=" +
                  format_double(c.c) + "|pi+=" + (c.pi_plus ? format_double(*c.pi_plus) : "auto") + "|weight=" +
                  std::to_string(static_cast<int>(c.weight)) + "|stress=" + (c.mean_stress ? "1" : "0") +
                  "|source=" + std::to_string(static_cast<int>(c.theory_source)) + "|seed=" + std::to_string(c.seed);
  return fnv1a64(s);
}

/// Ridge regression with w ~ N(0, α²/p·I), x ~ N(0, Σ), unit noise, and
/// ŵ_λ = (XᵀX + nλI)⁻¹Xᵀy. Replicates share nothing but the seed.
inline SimResult simulate_ridge(const RidgeSimConfig& cfg) {
  const auto grid = detail::sorted_grid(cfg.lambdas, "simulate_ridge");
  if (cfg.replicates == 0) fail(ErrorCode::BadArgument, "simulate_ridge: replicates must be positive");
  if (!(std::isfinite(cfg.alpha2) && cfg.alpha2 >= 0.0)) fail(ErrorCode::BadArgument, "simulate_ridge: alpha2 must be >= 0");
  const std::size_t p = model_dimension(cfg.model, cfg.p);
  if (p < 2) fail(ErrorCode::BadArgument, "simulate_ridge: p must be >= 2");
  const std::size_t n = ridge_sample_size(p, cfg.gamma);
  const auto cov = build_covariance(cfg.model, p);
  const auto pe = static_cast<Eigen::Index>(p);
  const auto ne = static_cast<Eigen::Index>(n);
  const double gamma_p = static_cast<double>(p) / static_cast<double>(n);
  const RidgeEval eval = cfg.test_size > 0 ? RidgeEval::TestSet : cfg.eval;
  if (eval == RidgeEval::TestSet && cfg.test_size == 0) {
    fail(ErrorCode::BadArgument, "simulate_ridge: test-set evaluation needs test_size > 0");
  }

  std::vector<std::vector<double>> risk(grid.size(), std::vector<double>(cfg.replicates));
  detail::parallel_replicates(cfg.replicates, cfg.threads, [&](std::size_t r) {
    auto rng = detail::replicate_rng(cfg.seed, r);
    const VectorXd w = detail::gaussian_vector(rng, pe, std::sqrt(cfg.alpha2 / static_cast<double>(p)));
    const MatrixXd x = detail::sample_rows(rng, cov, ne);
    const VectorXd y = x * w + detail::gaussian_vector(rng, ne, 1.0);
    MatrixXd x_test;
    VectorXd y_test;
    if (eval == RidgeEval::TestSet) {
      x_test = detail::sample_rows(rng, cov, static_cast<Eigen::Index>(cfg.test_size));
      y_test = x_test * w + detail::gaussian_vector(rng, x_test.rows(), 1.0);
    }
    const MatrixXd gram = x.transpose() * x;
    const VectorXd xty = x.transpose() * y;
    for (std::size_t k = 0; k < grid.size(); ++k) {
      const double lambda = grid[k];
      MatrixXd a = gram;
      a.diagonal().array() += static_cast<double>(n) * lambda;
      Eigen::LLT<MatrixXd> llt(a);
      if (llt.info() != Eigen::Success) detail::solve_failed("simulate_ridge", lambda);
      const VectorXd w_hat = llt.solve(xty);
      double value = 0.0;
      switch (eval) {
        case RidgeEval::Realized: {
          const VectorXd e = w_hat - w;
          value = 1.0 + e.dot(cov.sigma * e);
          break;
        }
        case RidgeEval::ConditionalTrace: {
          // R = (Σ̂ + λI)⁻¹ = n·A⁻¹ with Σ̂ = XᵀX/n. A⁻¹ and Σ are symmetric, so
          // tr(ΣR) and tr(ΣR²) reduce to elementwise sums.
          const double nd = static_cast<double>(n);
          const MatrixXd r_mat = nd * llt.solve(MatrixXd::Identity(pe, pe));
          const double tr1 = r_mat.cwiseProduct(cov.sigma).sum();
          double tr2 = 0.0;
          if (cov.diagonal) {
            tr2 = (r_mat.cwiseProduct(r_mat) * cov.sigma.diagonal()).sum();
          } else {
            tr2 = (r_mat * cov.sigma).cwiseProduct(r_mat).sum();
          }
          const double pd = static_cast<double>(p);
          value = 1.0 + gamma_p / pd * tr1 + (lambda * cfg.alpha2 - gamma_p) * lambda / pd * tr2;
          break;
        }
        case RidgeEval::TestSet: {
          value = (y_test - x_test * w_hat).squaredNorm() / static_cast<double>(y_test.size());
          break;
        }
      }
      risk[k][r] = value;
    }
  });

  const auto h = population_spectrum(cfg.model, p, cfg.theory_source);
  SimResult out;
  out.seed = cfg.seed;
  out.config_hash = config_hash(cfg);
  out.p = p;
  out.n_plus = n;
  out.alpha2 = cfg.alpha2;
  out.gamma = gamma_p;
  for (std::size_t k = 0; k < grid.size(); ++k) {
    const auto m = detail::summarize(risk[k]);
    const auto tp = transform_point(h, gamma_p, grid[k]);
    out.rows.push_back({grid[k], m.mean, m.standard_error, ridge::predictive_risk(tp, cfg.alpha2), 1.0});
  }
  return out;
}

struct ResolvedRda {
  std::size_t p = 0;
  std::size_t n_plus = 0;
  std::size_t n_minus = 0;
  double alpha2 = 0.0;
  double pi_plus = 0.5;
};

inline ResolvedRda resolve(const RdaSimConfig& cfg, const Covariance& cov) {
  ResolvedRda r;
  r.p = static_cast<std::size_t>(cov.sigma.rows());
  if (cfg.n_plus == 0 && cfg.n_minus == 0) {
    const std::size_t n = ridge_sample_size(r.p, cfg.gamma);
    r.n_minus = n / 2;
    r.n_plus = n - r.n_minus;
  } else {
    r.n_plus = cfg.n_plus;
    r.n_minus = cfg.n_minus;
  }
  if (r.n_plus < 1 || r.n_minus < 1 || r.n_plus + r.n_minus <= 2) {
    fail(ErrorCode::BadClassSizes, "simulate_rda: need n_plus, n_minus >= 1 and n_plus + n_minus > 2, got " +
                                       std::to_string(r.n_plus) + ", " + std::to_string(r.n_minus));
  }
  if (cfg.alpha2 && cfg.target_bayes_error) {
    fail(ErrorCode::ConfigError, "simulate_rda: give either alpha2 or target_bayes_error, not both");
  }
  if (cfg.alpha2) {
    if (!(std::isfinite(*cfg.alpha2) && *cfg.alpha2 >= 0.0)) {
      fail(ErrorCode::BadArgument, "simulate_rda: alpha2 must be >= 0");
    }
    r.alpha2 = *cfg.alpha2;
  } else if (cfg.target_bayes_error) {
    r.alpha2 = cfg.calibration == Calibration::Finite
                   ? calibrate_alpha(cov.sigma, *cfg.target_bayes_error)
                   : calibrate_alpha(population_spectrum(cfg.model, r.p, SpectrumSource::Limit), *cfg.target_bayes_error);
  } else {
    fail(ErrorCode::ConfigError, "simulate_rda: one of alpha2 or target_bayes_error is required");
  }
  r.pi_plus = cfg.pi_plus.value_or(static_cast<double>(r.n_plus) / static_cast<double>(r.n_plus + r.n_minus));
  if (!(r.pi_plus > 0.0 && r.pi_plus < 1.0)) fail(ErrorCode::BadArgument, "simulate_rda: pi_plus must lie in (0, 1)");
  return r;
}

/// Two-class Gaussian discrimination, x | y ~ N(μ̄ + yδ, Σ) with δ ~ N(0, α²/p·I),
/// classified by sign(xᵀŵ + b̂), ŵ = (Σ̂_c + λI)⁻¹δ̂, b̂ = -μ̂ᵀŵ + c.
inline SimResult simulate_rda(const RdaSimConfig& cfg) {
  if (cfg.replicates == 0) fail(ErrorCode::BadArgument, "simulate_rda: replicates must be positive");
  const bool independence = cfg.weight == RdaWeight::Independence;
  const auto grid = independence ? std::vector<double>{std::numeric_limits<double>::infinity()}
                                 : detail::sorted_grid(cfg.lambdas, "simulate_rda");
  if (!std::isfinite(cfg.c)) fail(ErrorCode::BadArgument, "simulate_rda: c must be finite");
  const auto cov = build_covariance(cfg.model, cfg.p);
  const auto rs = resolve(cfg, cov);
  const auto pe = static_cast<Eigen::Index>(rs.p);
  const std::size_t n = rs.n_plus + rs.n_minus;
  const double pi_minus = 1.0 - rs.pi_plus;

  std::optional<Eigen::LLT<MatrixXd>> sigma_llt;
  if (!cov.diagonal) sigma_llt.emplace(cov.sigma);

  std::vector<std::vector<double>> err(grid.size(), std::vector<double>(cfg.replicates));
  std::vector<double> oracle(cfg.replicates);
  detail::parallel_replicates(cfg.replicates, cfg.threads, [&](std::size_t r) {
    auto rng = detail::replicate_rng(cfg.seed, r);
    const VectorXd delta = detail::gaussian_vector(rng, pe, std::sqrt(rs.alpha2 / static_cast<double>(rs.p)));
    VectorXd mu_bar = VectorXd::Zero(pe);
    if (cfg.mean_stress) {
      mu_bar = detail::gaussian_vector(rng, pe, 1.0);
      mu_bar *= std::pow(static_cast<double>(rs.p), 0.125) / mu_bar.norm();
    }
    const VectorXd mu_plus = mu_bar + delta;
    const VectorXd mu_minus = mu_bar - delta;
    MatrixXd xp = detail::sample_rows(rng, cov, static_cast<Eigen::Index>(rs.n_plus));
    MatrixXd xm = detail::sample_rows(rng, cov, static_cast<Eigen::Index>(rs.n_minus));
    xp.rowwise() += mu_plus.transpose();
    xm.rowwise() += mu_minus.transpose();
    const VectorXd mhat_plus = xp.colwise().mean().transpose();
    const VectorXd mhat_minus = xm.colwise().mean().transpose();
    const VectorXd delta_hat = 0.5 * (mhat_plus - mhat_minus);
    const VectorXd mu_hat = 0.5 * (mhat_plus + mhat_minus);

    double delta_np2;
    if (cov.diagonal) {
      delta_np2 = (delta.array().square() / cov.sigma.diagonal().array()).sum();
    } else {
      delta_np2 = delta.dot(sigma_llt->solve(delta));
    }
    oracle[r] = normal_cdf(-std::sqrt(delta_np2));

    MatrixXd test_x;
    std::vector<int> test_y;
    if (cfg.test_size > 0) {
      std::bernoulli_distribution label(rs.pi_plus);
      test_y.resize(cfg.test_size);
      for (auto& y : test_y) y = label(rng) ? 1 : -1;
      test_x = detail::sample_rows(rng, cov, static_cast<Eigen::Index>(cfg.test_size));
      for (std::size_t i = 0; i < cfg.test_size; ++i) {
        test_x.row(static_cast<Eigen::Index>(i)) += (test_y[i] > 0 ? mu_plus : mu_minus).transpose();
      }
    }

    MatrixXd scatter;
    if (!independence) {
      xp.rowwise() -= mhat_plus.transpose();
      xm.rowwise() -= mhat_minus.transpose();
      scatter = xp.transpose() * xp;
      scatter.noalias() += xm.transpose() * xm;
      scatter /= static_cast<double>(n - 2);
    }
    for (std::size_t k = 0; k < grid.size(); ++k) {
      VectorXd w;
      if (independence) {
        w = delta_hat;
      } else {
        MatrixXd a = scatter;
        a.diagonal().array() += grid[k];
        Eigen::LLT<MatrixXd> llt(a);
        if (llt.info() != Eigen::Success) detail::solve_failed("simulate_rda", grid[k]);
        w = llt.solve(delta_hat);
      }
      const double b = -mu_hat.dot(w) + cfg.c;
      if (cfg.test_size > 0) {
        const VectorXd score = test_x * w;
        std::size_t wrong = 0;
        for (std::size_t i = 0; i < cfg.test_size; ++i) {
          const int pred = score(static_cast<Eigen::Index>(i)) + b >= 0.0 ? 1 : -1;
          wrong += pred != test_y[i];
        }
        err[k][r] = static_cast<double>(wrong) / static_cast<double>(cfg.test_size);
      } else {
        const double s = std::sqrt(w.dot(cov.sigma * w));
        if (!(s > 0.0)) {
          err[k][r] = 0.5;
        } else {
          err[k][r] = pi_minus * normal_cdf((w.dot(mu_minus) + b) / s) + rs.pi_plus * normal_cdf(-(w.dot(mu_plus) + b) / s);
        }
      }
    }
  });

  const double gamma = static_cast<double>(rs.p) / static_cast<double>(n);
  const auto h = population_spectrum(cfg.model, rs.p, cfg.theory_source);
  const bool balanced = rs.n_plus == rs.n_minus && std::abs(rs.pi_plus - 0.5) <= 1e-15 && cfg.c == 0.0;
  SimResult out;
  out.seed = cfg.seed;
  out.config_hash = config_hash(cfg);
  out.p = rs.p;
  out.n_plus = rs.n_plus;
  out.n_minus = rs.n_minus;
  out.alpha2 = rs.alpha2;
  out.gamma = gamma;
  const auto oracle_mean = detail::summarize(oracle).mean;
  for (std::size_t k = 0; k < grid.size(); ++k) {
    const auto m = detail::summarize(err[k]);
    double theory = 0.5;
    if (independence) {
      if (rs.alpha2 > 0.0) theory = normal_cdf(-rda::ir_margin(h, gamma, rs.alpha2));
    } else if (balanced) {
      theory = normal_cdf(-rda::margin(transform_point(h, gamma, grid[k]), rs.alpha2).theta);
    } else {
      rda::UnequalSampling u;
      u.gamma_plus = static_cast<double>(rs.p) / static_cast<double>(rs.n_plus);
      u.gamma_minus = static_cast<double>(rs.p) / static_cast<double>(rs.n_minus);
      u.pi_plus = rs.pi_plus;
      u.pi_minus = pi_minus;
      u.c = cfg.c;
      theory = rda::unequal_error(h, u, rs.alpha2, grid[k]).error;
    }
    out.rows.push_back({grid[k], m.mean, m.standard_error, theory, oracle_mean});
  }
  return out;
}

}  // namespace spectrisk::mc
