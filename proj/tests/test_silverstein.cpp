#include <cmath>
#include <vector>

#include <gtest/gtest.h>

#include "oracle_support.hpp"
#include "spectrisk/silverstein.hpp"

using namespace spectrisk;

namespace {

// Marchenko-Pastur m(-λ) for identity covariance, as the positive root of
// γλm² + (1 - γ + λ)m - 1 = 0, solved here without the library.
double mp_stieltjes(double gamma, double lambda) {
  const long double b = 1.0L - gamma + lambda;
  const long double disc = std::sqrt(b * b + 4.0L * gamma * lambda);
  return static_cast<double>(b > 0 ? 2.0L / (b + disc) : (disc - b) / (2.0L * gamma * lambda));
}

std::vector<double> log_grid(double lo, double hi, int n) {
  std::vector<double> g;
  for (int i = 0; i < n; ++i) g.push_back(std::exp(std::log(lo) + (std::log(hi) - std::log(lo)) * i / (n - 1)));
  return g;
}

double central_difference(auto&& f, double x, double h) { return (f(x + h) - f(x - h)) / (2 * h); }

}  // namespace

TEST(SolveCompanion, IdentityExampleGammaOneLambdaFour) {
  const auto h = identity_spectrum();
  const auto s = solve_companion(h, 1.0, 4.0);
  EXPECT_NEAR(s.v, (std::sqrt(2.0) - 1.0) / 2.0, 1e-13);
  EXPECT_NEAR(1.0 / s.v, 4.0 + 1.0 / (1.0 + s.v), 1e-12);
}

TEST(SolveCompanion, IdentityClosedFormAcrossGrid) {
  const auto h = identity_spectrum();
  for (double gamma : {0.25, 0.5, 1.0, 2.0, 4.0}) {
    for (double lambda : log_grid(1e-3, 1e3, 25)) {
      // Dual relation: v = γm - (γ - 1)/λ.
      const double m = mp_stieltjes(gamma, lambda);
      const double want = static_cast<double>(gamma * static_cast<long double>(m) - (gamma - 1.0L) / lambda);
      const double got = solve_companion(h, gamma, lambda).v;
      EXPECT_NEAR(got, want, 1e-9 * std::max(1.0, want)) << gamma << " " << lambda;
    }
  }
}

TEST(SolveCompanion, TwoPointMatchesHighPrecisionReference) {
  const auto h = make_point_masses({{0.5, 2.0 / 3.0}, {2.0, 1.0 / 3.0}});
  struct Case {
    double gamma, lambda, v, v_prime;
  };
  // From tests/oracles/freeze.py (mpmath, 40 digits).
  const Case cases[] = {
      {0.5, 0.1, 5.9657950051403425477, 53.029464785982415195},
      {0.5, 1.0, 0.80193773580483825247, 0.70712660106067491997},
      {0.5, 10.0, 0.095796579718542940236, 0.0092231483809153206607},
      {2.0, 0.1, 1.0205599694872772059, 1.9024490682349947806},
      {2.0, 1.0, 0.44411800442170572325, 0.24397247546362154668},
      {2.0, 10.0, 0.084894490047794070297, 0.0073261642141510666503},
  };
  for (const auto& c : cases) {
    const auto tp = transform_point(h, c.gamma, c.lambda);
    EXPECT_NEAR(tp.v, c.v, 1e-13 * c.v) << c.gamma << " " << c.lambda;
    EXPECT_NEAR(tp.v_prime, c.v_prime, 1e-11 * c.v_prime) << c.gamma << " " << c.lambda;
  }
}

TEST(SolveCompanion, Ar1MatchesPoissonKernelReference) {
  struct Case {
    double rho, gamma, lambda, v;
  };
  const Case cases[] = {{0.5, 0.5, 1.0, 0.80641723010437463572},
                        {0.9, 1.0, 0.1, 5.3392445769287310428},
                        {0.9, 2.0, 1.0, 0.6501068577130082644}};
  for (const auto& c : cases) {
    const auto h = SpectralDistribution::ar1_limit(c.rho);
    const double got = solve_companion(h, c.gamma, c.lambda).v;
    EXPECT_NEAR(got, c.v, 1e-10 * c.v);
    const auto ref = oracle::v_ar1(c.rho, c.gamma, c.lambda);
    EXPECT_NEAR(got, static_cast<double>(ref), 1e-10 * c.v);
  }
}

TEST(SolveCompanion, LimitsInLambda) {
  const auto h = identity_spectrum();
  // λ v(-λ) → 1 - γ as λ → 0 for γ < 1.
  EXPECT_NEAR(1e-7 * solve_companion(h, 0.5, 1e-7).v, 0.5, 1e-5);
  for (const auto& hh : {identity_spectrum(), SpectralDistribution::ar1_limit(0.9),
                         make_point_masses({{0.5, 2.0 / 3.0}, {2.0, 1.0 / 3.0}})}) {
    EXPECT_NEAR(1e6 * solve_companion(hh, 2.0, 1e6).v, 1.0, 1e-3);
  }
}

TEST(SolveCompanion, RejectsBadArguments) {
  const auto h = identity_spectrum();
  for (double lambda : {0.0, -1.0, std::nan("")}) {
    try {
      solve_companion(h, 1.0, lambda);
      ADD_FAILURE();
    } catch (const Error& e) {
      EXPECT_EQ(e.code(), ErrorCode::BadArgument);
    }
  }
  EXPECT_THROW(solve_companion(h, 0.0, 1.0), Error);
}

TEST(SolveCompanion, ReportsNoConvergenceWhenBudgetTooSmall) {
  SolverOptions opts;
  opts.max_iter = 2;
  opts.fixed_point_budget = 2;
  try {
    solve_companion(SpectralDistribution::ar1_limit(0.9), 1.0, 1e-4, opts);
    ADD_FAILURE();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::NoConvergence);
  }
}

TEST(SolveCompanion, SlowContractionHandsOffToBracketing) {
  // Near γ = 1 with tiny λ the fixed-point map contracts very slowly.
  const auto s = solve_companion(identity_spectrum(), 1.0, 1e-8);
  EXPECT_TRUE(s.bracketed);
  const double m = mp_stieltjes(1.0, 1e-8);
  EXPECT_NEAR(s.v, m, 1e-9 * m);
}

TEST(TransformPoint, IdentityDerivativesMatchAnalyticForms) {
  const auto h = identity_spectrum();
  const auto tp = transform_point(h, 1.0, 4.0);
  EXPECT_NEAR(tp.m, 0.20710678118654752, 1e-13);
  EXPECT_NEAR(tp.v, tp.m, 1e-14);
  // d/dz of the closed form, by symbolic differentiation of γλm² + (1-γ+λ)m - 1 = 0
  // in λ = -z: dm/dz = m²(1 + γm)/(1 + γλm²).
  const double m = tp.m;
  EXPECT_NEAR(tp.m_prime, m * m * (1 + m) / (1 + 4 * m * m), 1e-12);

  const auto tp2 = transform_point(h, 2.0, 1.0);
  EXPECT_NEAR(tp2.m, std::sqrt(8.0) / 4.0, 1e-13);
  EXPECT_NEAR(tp2.v, std::sqrt(2.0) - 1.0, 1e-13);
}

TEST(TransformPoint, DerivativesMatchCentralDifferences) {
  const std::vector<SpectralDistribution> spectra = {identity_spectrum(), SpectralDistribution::ar1_limit(0.5),
                                                     make_point_masses({{0.5, 2.0 / 3.0}, {2.0, 1.0 / 3.0}})};
  for (const auto& h : spectra) {
    for (double gamma : {0.25, 0.5, 1.0, 2.0, 4.0}) {
      for (double lambda : log_grid(1e-2, 1e2, 9)) {
        const auto tp = transform_point(h, gamma, lambda);
        const double step = 1e-5 * lambda;
        // d/dz at z = -λ is -d/dλ.
        const double dv = -central_difference([&](double l) { return solve_companion(h, gamma, l).v; }, lambda, step);
        const double dm = -central_difference([&](double l) { return transform_point(h, gamma, l).m; }, lambda, step);
        EXPECT_NEAR(tp.v_prime, dv, 1e-6 * tp.v_prime) << h.label() << " " << gamma << " " << lambda;
        EXPECT_NEAR(tp.m_prime, dm, 1e-6 * tp.m_prime) << h.label() << " " << gamma << " " << lambda;
      }
    }
  }
}

TEST(TransformPoint, TextbookFormsAgreeWithStableForms) {
  const auto h = SpectralDistribution::ar1_limit(0.5);
  for (double gamma : {0.5, 2.0}) {
    for (double lambda : {0.1, 1.0, 10.0}) {
      const auto tp = transform_point(h, gamma, lambda);
      const double vp_text = 1.0 / (1.0 / (tp.v * tp.v) - gamma * tp.integrals.q2);
      const double m_text = (tp.v - 1.0 / lambda) / gamma + 1.0 / lambda;
      const double mp_text = (tp.v_prime - 1.0 / (lambda * lambda)) / gamma + 1.0 / (lambda * lambda);
      EXPECT_NEAR(tp.v_prime, vp_text, 1e-10 * tp.v_prime);
      EXPECT_NEAR(tp.m, m_text, 1e-10 * std::max(1.0, 1.0 / lambda));
      EXPECT_NEAR(tp.m_prime, mp_text, 1e-9 * std::max(1.0, 1.0 / (lambda * lambda)));
    }
  }
}

TEST(VAtZero, PointMassAndPreconditions) {
  EXPECT_NEAR(v_at_zero(identity_spectrum(), 2.0), 1.0, 1e-13);
  for (double gamma : {0.9, 1.0}) {
    try {
      v_at_zero(identity_spectrum(), gamma);
      ADD_FAILURE();
    } catch (const Error& e) {
      EXPECT_EQ(e.code(), ErrorCode::BadArgument);
    }
  }
  // v(0) is the λ → 0 limit of v(-λ) when γ > 1.
  const auto h = SpectralDistribution::ar1_limit(0.5);
  EXPECT_NEAR(v_at_zero(h, 3.0), solve_companion(h, 3.0, 1e-9).v, 1e-7);
}

TEST(InverseMap, TabulationAcceptsOnlyValidPairsAndInterpolates) {
  const auto h = make_point_masses({{0.5, 2.0 / 3.0}, {2.0, 1.0 / 3.0}});
  const double gamma = 2.0;
  std::vector<double> grid = log_grid(1e-3, 50.0, 4000);
  const auto table = tabulate_inverse_map(h, gamma, grid);
  int accepted = 0;
  for (const auto& s : table) {
    if (!s.accepted) continue;
    ++accepted;
    EXPECT_LT(s.z, 0.0);
    EXPECT_NEAR(solve_companion(h, gamma, -s.z).v, s.v, 1e-9 * std::max(1.0, s.v));
  }
  EXPECT_GT(accepted, 100);
  // For γ > 1 large v maps to z > 0, which must be rejected.
  EXPECT_FALSE(table.back().accepted);
  const double direct = solve_companion(h, gamma, 1.0).v;
  EXPECT_NEAR(companion_from_table(table, 1.0), direct, 1e-5);
}

TEST(Property, RandomSpectraSatisfyTransformInvariants) {
  oracle::Gen gen(99);
  for (int trial = 0; trial < 300; ++trial) {
    const auto atoms = gen.atoms();
    const auto h = make_point_masses(atoms);
    const double gamma = gen.log_uniform(0.1, 5.0);
    const double lambda = gen.log_uniform(1e-3, 1e3);
    const auto tp = transform_point(h, gamma, lambda);
    SCOPED_TRACE(::testing::Message() << "trial " << trial << " gamma=" << gamma << " lambda=" << lambda);
    EXPECT_GT(tp.v, 0.0);
    EXPECT_GE(tp.m, 0.0);
    EXPECT_GT(tp.v_prime, 0.0);
    EXPECT_GT(tp.m_prime, 0.0);
    EXPECT_GT(lambda * tp.v, 0.0);
    EXPECT_LT(lambda * tp.v, 1.0);
    EXPECT_LE(std::abs(silverstein_residual(h, gamma, lambda, tp.v)), 1e-10 * std::max(1.0, 1.0 / tp.v));
    const double scale = std::max(1.0, 1.0 / lambda);
    EXPECT_NEAR(gamma * (tp.m - 1.0 / lambda), tp.v - 1.0 / lambda, 1e-10 * scale * std::max(1.0, gamma));
    const auto ref = oracle::v_atoms(oracle::to_long(atoms), gamma, lambda);
    EXPECT_NEAR(tp.v, static_cast<double>(ref), 1e-11 * tp.v);
  }
}

TEST(Property, CompanionDecreasesInLambda) {
  oracle::Gen gen(5);
  for (int trial = 0; trial < 40; ++trial) {
    const auto h = make_point_masses(gen.atoms());
    const double gamma = gen.log_uniform(0.1, 5.0);
    double prev = std::numeric_limits<double>::infinity();
    for (double lambda : log_grid(1e-3, 1e3, 30)) {
      const double v = solve_companion(h, gamma, lambda).v;
      EXPECT_LT(v, prev);
      prev = v;
    }
  }
}
