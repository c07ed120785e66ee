#include <algorithm>
#include <cmath>
#include <numbers>
#include <vector>

#include <gtest/gtest.h>

#include "oracle_support.hpp"
#include "spectrisk/spectra.hpp"

using namespace spectrisk;

namespace {

ErrorCode code_of(auto&& f) {
  try {
    f();
  } catch (const Error& e) {
    return e.code();
  }
  ADD_FAILURE() << "no exception";
  return ErrorCode::ConfigError;
}

// Eigenvalues of C (before the 1/d normalization) for the depth-d tree:
// 2^d - 1 once (constant vector), then 2^{d-l} - 1 with multiplicity 2^l for
// l = 0..d-1, from Haar wavelets supported on each internal node.
std::vector<double> haar_tree_eigenvalues(int d) {
  std::vector<double> out{std::ldexp(1.0, d) - 1.0};
  for (int l = 0; l < d; ++l) {
    for (int k = 0; k < (1 << l); ++k) out.push_back(std::ldexp(1.0, d - l) - 1.0);
  }
  for (auto& x : out) x /= d;
  std::sort(out.begin(), out.end());
  return out;
}

}  // namespace

TEST(PointMasses, ValidatesAtomsAndWeights) {
  EXPECT_EQ(code_of([] { make_point_masses({{-1.0, 1.0}}); }), ErrorCode::NegativeAtom);
  EXPECT_EQ(code_of([] { make_point_masses({{1.0, 0.5}, {2.0, 0.4}}); }), ErrorCode::BadWeights);
  EXPECT_EQ(code_of([] { make_point_masses({{1.0, 0.0}, {2.0, 1.0}}); }), ErrorCode::BadWeights);
  EXPECT_EQ(code_of([] { make_point_masses({}); }), ErrorCode::BadWeights);
  EXPECT_NO_THROW(make_point_masses({{0.0, 0.5}, {2.0, 0.5}}));
}

TEST(PointMasses, IntegratesExactly) {
  const auto h = make_point_masses({{0.5, 2.0 / 3.0}, {2.0, 1.0 / 3.0}});
  EXPECT_NEAR(integrate(h, [](double t) { return t; }), 1.0, 1e-15);
  EXPECT_NEAR(integrate(h, [](double t) { return t * t; }), 0.5 * 0.5 * 2 / 3 + 4.0 / 3, 1e-15);
  const auto m = moments(h);
  ASSERT_TRUE(m.inverse.has_value());
  EXPECT_NEAR(*m.inverse, 2.0 * 2 / 3 + 0.5 / 3, 1e-15);
  EXPECT_FALSE(m.small_atom_warning);
}

TEST(PointMasses, ZeroAtomMakesInverseMomentInfinite) {
  const auto m = moments(make_point_masses({{0.0, 0.25}, {4.0 / 3.0, 0.75}}));
  EXPECT_TRUE(m.inverse_infinite());
  EXPECT_NEAR(m.mean, 1.0, 1e-15);
}

TEST(Ar1Limit, MomentsMatchClosedForms) {
  for (double rho : {0.0, 0.3, 0.5, 0.9}) {
    const auto h = SpectralDistribution::ar1_limit(rho);
    const auto m = moments(h);
    const double r = (1 + rho * rho) / (1 - rho * rho);
    EXPECT_NEAR(m.mean, 1.0, 1e-12) << rho;
    EXPECT_NEAR(m.second, r, 1e-10) << rho;
    ASSERT_TRUE(m.inverse.has_value());
    EXPECT_NEAR(*m.inverse, r, 1e-10) << rho;
  }
  EXPECT_NEAR(*moments(SpectralDistribution::ar1_limit(0.9)).inverse, 9.526315789473684, 1e-9);
}

TEST(Ar1Limit, ResolventIntegralMatchesPoissonKernel) {
  const auto h = SpectralDistribution::ar1_limit(0.9);
  for (double v : {0.01, 0.3, 1.0, 7.0}) {
    const double got = integrate(h, [v](double t) { return t / (1 + t * v); });
    EXPECT_NEAR(got, static_cast<double>(oracle::ar1_s1(0.9L, v)), 1e-12) << v;
  }
}

TEST(Ar1Limit, MatchesTrapezoidOverTheAngle) {
  const double rho = 0.7;
  auto g = [](double t) { return std::log1p(t) * std::sqrt(t); };
  const auto h = SpectralDistribution::ar1_limit(rho);
  const double got = integrate(h, g);
  const double want = oracle::trapezoid([&](double th) { return g(ar1_symbol(rho, th)); }, 0.0, std::numbers::pi,
                                        4000) / std::numbers::pi;
  EXPECT_NEAR(got, want, 1e-10);
}

TEST(Ar1Limit, QuadratureOrderCanBeRefined) {
  const auto h = SpectralDistribution::ar1_limit(0.9, 50);
  auto f = [](double t) { return t * t; };
  const double coarse = integrate(h, f);
  const double fine = integrate(h, f, 4000);
  EXPECT_NEAR(fine, 9.526315789473684, 1e-10);
  EXPECT_GT(std::abs(coarse - fine), 0.0);
  EXPECT_EQ(code_of([&] { integrate(h, f, 0); }), ErrorCode::BadArgument);
}

TEST(Ar1Limit, RejectsRhoOutsideUnitInterval) {
  EXPECT_EQ(code_of([] { SpectralDistribution::ar1_limit(1.0); }), ErrorCode::BadArgument);
  EXPECT_EQ(code_of([] { SpectralDistribution::ar1_limit(-0.2); }), ErrorCode::BadArgument);
}

TEST(ExponentialQuantiles, MidpointQuantilesAndWarning) {
  const auto h = SpectralDistribution::exponential_quantiles(4);
  ASSERT_EQ(h.rule().size(), 4u);
  EXPECT_NEAR(h.rule()[0].t, -std::log(1 - 0.125), 1e-15);
  EXPECT_NEAR(h.rule()[3].t, -std::log(0.125), 1e-15);
  EXPECT_TRUE(moments(h).small_atom_warning);
  // The mean tends to 1 as the count grows.
  EXPECT_NEAR(moments(SpectralDistribution::exponential_quantiles(100000)).mean, 1.0, 1e-4);
}

TEST(Integrate, NonFiniteIntegrandIsReported) {
  const auto h = make_point_masses({{0.0, 0.5}, {2.0, 0.5}});
  EXPECT_EQ(code_of([&] { integrate(h, [](double t) { return 1.0 / t; }); }), ErrorCode::NonFiniteIntegrand);
}

TEST(BinaryTree, CovarianceEntriesFollowSharedPathLength) {
  const auto s = binary_tree_covariance(2);
  const double want[4][4] = {{1, .5, 0, 0}, {.5, 1, 0, 0}, {0, 0, 1, .5}, {0, 0, .5, 1}};
  for (int i = 0; i < 4; ++i) {
    for (int j = 0; j < 4; ++j) EXPECT_DOUBLE_EQ(s(i, j), want[i][j]);
  }
}

TEST(BinaryTree, SpectrumMatchesHaarClosedForm) {
  for (int d : {1, 2, 4, 7}) {
    const auto h = binary_tree_spectrum(d);
    std::vector<double> got;
    for (const auto& a : h.rule()) got.push_back(a.t);
    std::sort(got.begin(), got.end());
    const auto want = haar_tree_eigenvalues(d);
    ASSERT_EQ(got.size(), want.size());
    for (std::size_t i = 0; i < got.size(); ++i) EXPECT_NEAR(got[i], want[i], 1e-10) << "d=" << d;
    EXPECT_NEAR(moments(h).mean, 1.0, 1e-12);
    EXPECT_NE(h.label().find("1/d"), std::string::npos);
  }
  const auto d2 = haar_tree_eigenvalues(2);
  EXPECT_EQ(d2, (std::vector<double>{0.5, 0.5, 1.5, 1.5}));
}

TEST(BinaryTree, DepthIsBounded) {
  EXPECT_EQ(code_of([] { binary_tree_covariance(0); }), ErrorCode::DepthTooLarge);
  EXPECT_EQ(code_of([] { binary_tree_covariance(kMaxBinaryTreeDepth + 1); }), ErrorCode::DepthTooLarge);
}

TEST(Property, RandomPointMassesHaveConsistentMoments) {
  oracle::Gen gen(2024);
  for (int trial = 0; trial < 100; ++trial) {
    const auto atoms = gen.atoms(6);
    const auto h = make_point_masses(atoms);
    double mean = 0, second = 0, inv = 0;
    for (const auto& a : atoms) {
      mean += a.w * a.t;
      second += a.w * a.t * a.t;
      inv += a.w / a.t;
    }
    const auto m = moments(h);
    EXPECT_NEAR(m.mean, mean, 1e-13 * mean);
    EXPECT_NEAR(m.second, second, 1e-13 * second);
    EXPECT_NEAR(*m.inverse, inv, 1e-13 * inv);
    // Jensen: E[T]·E[1/T] >= 1 and E[T²] >= E[T]².
    EXPECT_GE(m.mean * *m.inverse, 1.0 - 1e-14);
    EXPECT_GE(m.second, m.mean * m.mean * (1 - 1e-14));
  }
}
