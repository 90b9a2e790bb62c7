#include <algorithm>
#include <cmath>
#include <numbers>
#include <random>

#include <gtest/gtest.h>

#include <geoflow/simulation.hpp>
#include <geoflow/stability.hpp>

using namespace geoflow;

namespace {

constexpr double kPi = std::numbers::pi;

// Q splits into x-Fourier blocks: -L_m^{-1} - diag(1/Phi) with L_m the y operator minus k2(m)
std::vector<double> per_mode_spectrum(const ShearControl& c, const ChannelGeometry& g) {
  const auto phi = phi_half_rows(c, g);
  const int nr = g.Ny - 1;
  const double iy2 = 1 / (g.dy() * g.dy());
  std::vector<double> out;
  for (int m = 0; m <= g.Nx / 2; ++m) {
    Mat L = Mat::Zero(nr, nr);
    for (int r = 0; r < nr; ++r) {
      L(r, r) = -(phi[r] + phi[r + 1]) * iy2 - g.k2(m);
      if (r > 0) L(r, r - 1) = phi[r] * iy2;
      if (r + 1 < nr) L(r, r + 1) = phi[r + 1] * iy2;
    }
    Mat Q = -L.inverse();
    for (int r = 0; r < nr; ++r) Q(r, r) -= 1 / c.phi(g.y(r + 1));
    Eigen::SelfAdjointEigenSolver<Mat> es(0.5 * (Q + Q.transpose()));
    int copies = (m == 0 || 2 * m == g.Nx) ? 1 : 2;
    for (int k = 0; k < nr; ++k)
      for (int c2 = 0; c2 < copies; ++c2) out.push_back(es.eigenvalues()(k));
  }
  std::sort(out.begin(), out.end());
  return out;
}

double simpson_Z(const ShearControl& c, double H, int n) {
  double h = H / n, s = 0;
  for (int k = 0; k <= n; ++k) {
    double w = (k == 0 || k == n) ? 1 : (k % 2 ? 4 : 2);
    s += w / std::sqrt(c.phi(k * h));
  }
  return s * h / 3;
}

}  // namespace

TEST(SecondVariation, MatchesPerModeOracle) {
  ChannelGeometry g{2.0, 0.9, 16, 16};
  for (const auto& c : {ShearControl::designed(2.0, 0.9), ShearControl::off(2.0, 0.9)}) {
    Eigen::SelfAdjointEigenSolver<Mat> es(second_variation_matrix(c, g));
    auto ref = per_mode_spectrum(c, g);
    ASSERT_EQ(static_cast<size_t>(es.eigenvalues().size()), ref.size());
    for (size_t k = 0; k < ref.size(); ++k)
      EXPECT_NEAR(es.eigenvalues()(k), ref[k], 1e-9 * (1 + std::abs(ref[k])));
  }
}

TEST(SecondVariation, DesignedControlIsNegativeDefinite) {
  ChannelGeometry g{2.0, 0.9, 64, 32};
  auto e = definiteness(second_variation_matrix(ShearControl::designed(2.0, 0.9), g));
  EXPECT_LT(e.max, 0.0);
}

// Y < 1 puts every Dirichlet mode above the Arnold threshold, so the free shear is already definite
TEST(SecondVariation, UncontrolledNarrowChannelIsDefinite) {
  ChannelGeometry g{2.0, 0.9, 32, 32};
  auto e = definiteness(second_variation_matrix(ShearControl::off(2.0, 0.9), g));
  EXPECT_LT(e.max, 0.0);
  EXPECT_GT(e.max, -1.0);
}

TEST(SecondVariation, ConditionPassImpliesNegative) {
  ChannelGeometry g{2.0, 0.9, 16, 32};
  int passed = 0;
  for (double gm : {0.1, 0.25, 0.5, 0.75, 1.0}) {
    auto c = ShearControl::designed(2.0, 0.9, gm);
    if (!condition_report(c, g).all_pass()) continue;
    ++passed;
    EXPECT_LT(definiteness(second_variation_matrix(c, g)).max, 0.0) << gm;
  }
  EXPECT_GE(passed, 1);
}

// H2 along omega_e - t v.grad omega_e agrees with the quadratic form, centered differences of order 2
TEST(SecondVariation, FiniteDifferenceAlongCoadjointDirection) {
  ChannelGeometry g{2.0, 0.9, 32, 16};
  auto c = ShearControl::designed(2.0, 0.9);
  ShearDiagnostics diag(g, c, equilibrium_circulation(g));
  Mat Q = second_variation_matrix(c, g);
  const int nx = g.Nx, nr = g.Ny - 1;
  std::mt19937_64 rng(5);
  std::normal_distribution<double> N;
  for (int trial = 0; trial < 10; ++trial) {
    // stream function chi of v, vanishing on the walls; d omega = -chi_x omega_e'(y)
    double amp[3][3], ph[3][3];
    for (auto& row : amp)
      for (double& a : row) a = N(rng);
    for (auto& row : ph)
      for (double& p : row) p = 2 * kPi * std::uniform_real_distribution<double>()(rng);
    Field d = Field::Zero(nx, g.Ny + 1);
    for (int j = 1; j < g.Ny; ++j)
      for (int i = 0; i < nx; ++i) {
        double chi_x = 0;
        for (int m = 1; m <= 3; ++m)
          for (int n = 1; n <= 3; ++n)
            chi_x -= amp[m - 1][n - 1] * (2.0 * m / g.X) * std::sin(n * kPi * g.y(j) / g.H()) *
                     std::sin(2.0 * m * g.x(i) / g.X + ph[m - 1][n - 1]);
        d(i, j) = -chi_x * std::cos(g.y(j));
      }
    Vec dv(nx * nr);
    for (int r = 0; r < nr; ++r)
      for (int i = 0; i < nx; ++i) dv(i + nx * r) = d(i, r + 1);
    const double q = 0.5 * g.dx() * g.dy() * dv.dot(Q * dv);
    auto centered = [&](double t) {
      return (diag.H2(diag.omega_e() + t * d) + diag.H2(diag.omega_e() - t * d)) / (2 * t * t);
    };
    double e1 = std::abs(centered(2e-2) - q), e2 = std::abs(centered(1e-2) - q);
    EXPECT_LT(e1, 1e-3 * std::abs(q));
    if (e2 > 1e-12 * std::abs(q)) {
      EXPECT_GT(e1 / e2, 3.0) << trial;
    }
  }
}

TEST(Definiteness, SmallMatrices) {
  auto e = definiteness(Mat::Identity(5, 5));
  EXPECT_NEAR(e.max, 1, 1e-14);
  EXPECT_NEAR(e.min, 1, 1e-14);
  Mat D = Vec::LinSpaced(6, -2.0, 3.0).asDiagonal();
  e = definiteness(D);
  EXPECT_NEAR(e.max, 3, 1e-14);
  EXPECT_NEAR(e.min, -2, 1e-14);
  EXPECT_THROW(definiteness(Mat::Zero(2, 3)), config_error);
}

// above the dense cutoff: a reflected diagonal has known extremes
TEST(Definiteness, PowerIterationOnReflectedDiagonal) {
  std::mt19937_64 rng(3);
  std::normal_distribution<double> N;
  const int n = 4200;
  Vec diag = Vec::LinSpaced(n, -5.0, 5.0), v(n);
  diag(0) = -9.0;
  diag(n - 1) = 9.0;
  for (int k = 0; k < n; ++k) v(k) = N(rng);
  v.normalize();
  Mat H = Mat::Identity(n, n) - 2 * v * v.transpose();
  Mat A = H * diag.asDiagonal() * H;
  auto e = definiteness(A);
  EXPECT_NEAR(e.max, 9.0, 1e-6);
  EXPECT_NEAR(e.min, -9.0, 1e-6);
}

TEST(DriftedSetup, FlatMetric) {
  ChannelGeometry g{2.0, 0.9, 32, 32};
  auto s = drifted_setup(ShearControl::off(2.0, 0.9), g);
  EXPECT_NEAR(s.Z(), g.H(), 1e-12);
  for (double y : {0.0, 0.3, 1.7, g.H()}) {
    EXPECT_NEAR(s.z_of_y(y), y, 1e-12);
    EXPECT_NEAR(s.g_of_z(y), 0.0, 1e-14);
    EXPECT_NEAR(s.g_zz(y), 0.0, 1e-14);
  }
}

TEST(DriftedSetup, ConstantMetric) {
  ChannelGeometry g{2.0, 0.9, 32, 32};
  auto s = drifted_setup(ShearControl::constant(2.0, 0.9, 0.75, 1.0), g);  // Phi = 1/4
  EXPECT_NEAR(s.Z(), 2 * g.H(), 1e-12);
  EXPECT_NEAR(s.z_of_y(1.0), 2.0, 1e-12);
  EXPECT_NEAR(s.y_of_z(2.0), 1.0, 1e-12);
  EXPECT_NEAR(s.g_of_z(1.0), std::log(2.0), 1e-14);
}

TEST(DriftedSetup, DesignedControl) {
  ChannelGeometry g{2.0, 0.9, 64, 64};
  auto c = ShearControl::designed(2.0, 0.9);
  auto s = drifted_setup(c, g);
  EXPECT_NEAR(s.Z(), simpson_Z(c, g.H(), 1000000), 1e-8);
  for (int k = 0; k <= 200; ++k) {
    double y = g.H() * k / 200;
    EXPECT_NEAR(s.y_of_z(s.z_of_y(y)), y, 1e-10);
  }
  for (int k = 0; k <= 200; ++k) EXPECT_GE(s.g_zz(s.Z() * k / 200), -1e-10) << k;
  // g is -1/2 log Phi and its second derivative matches a difference quotient
  double z = 0.4 * s.Z(), h = 1e-4;
  double fd = (s.g_of_z(z + h) - 2 * s.g_of_z(z) + s.g_of_z(z - h)) / (h * h);
  EXPECT_NEAR(s.g_zz(z), fd, 1e-4 * (1 + std::abs(fd)));
}

TEST(DriftedSetup, RejectsIndefiniteMetric) {
  ChannelGeometry g{2.0, 0.9, 32, 32};
  EXPECT_THROW(drifted_setup(ShearControl::constant(2.0, 0.9, 1.5, 1.0), g), numerical_error);
}

TEST(Lambda1, FlatSquare) {
  for (int n : {32, 64}) {
    ChannelGeometry g{1.0, 1.0, n, n};
    auto s = drifted_setup(ShearControl::off(1.0, 1.0), g);
    EXPECT_NEAR(lambda1_drifted(s, g), 2.0, 2.0 / (n * n)) << n;
  }
}

TEST(Lambda1, FlatRectangleConverges) {
  double err[2];
  for (int r = 0; r < 2; ++r) {
    int n = 32 << r;
    ChannelGeometry g{2.0, 0.5, n, n};
    auto s = drifted_setup(ShearControl::off(2.0, 0.5), g);
    err[r] = std::abs(lambda1_drifted(s, g) - (1 / 4.0 + 1 / 0.25));
  }
  EXPECT_LT(err[1], 1e-2);
  EXPECT_GT(err[0] / err[1], 3.5);
}

TEST(Lambda1, SpectrumIsSortedSeparableSums) {
  ChannelGeometry g{1.0, 1.0, 32, 32};
  auto s = drifted_setup(ShearControl::off(1.0, 1.0), g);
  auto sp = drifted_spectrum(s, g, 10);
  ASSERT_EQ(sp.size(), 10u);
  EXPECT_TRUE(std::is_sorted(sp.begin(), sp.end()));
  EXPECT_NEAR(sp[1], 5.0, 0.05);  // modes (1, 2) and (2, 1)
  EXPECT_NEAR(sp[2], 5.0, 0.05);
}

TEST(Lambda1, DesignedBoundHoldsOnTheListedChannels) {
  for (double X : {0.5, 1.0, 2.0, 4.0})
    for (double Y : {0.6, 0.75, 0.9})
      for (int n : {64, 128}) {
        ChannelGeometry g{X, Y, n, n};
        auto s = drifted_setup(ShearControl::designed(X, Y), g);
        double bound = kPi * kPi / (kPi * kPi * X * X + s.Z() * s.Z());
        EXPECT_GT(lambda1_drifted(s, g), bound) << X << " " << Y << " " << n;
        EXPECT_NEAR(fll_bound(std::sqrt(kPi * kPi * X * X + s.Z() * s.Z()), 0.0), bound, 1e-14);
      }
}

TEST(FllBound, Edges) {
  EXPECT_NEAR(fll_bound(kPi, 0.0), 1.0, 1e-15);
  double d = 3.7, K = 4 * kPi * kPi / (d * d);
  EXPECT_NEAR(fll_bound(d, K), K, 1e-14);
  EXPECT_NEAR(fll_bound(d, 2 * K), 2 * K, 1e-14);
  EXPECT_THROW(fll_bound(0.0, 1.0), config_error);
}

TEST(FllBound, MatchesGridMaximum) {
  for (double d : {0.8, 2.0, 5.0})
    for (double K : {0.0, 0.3, 1.0, 4.0}) {
      const double a = kPi * kPi / (d * d);
      double best = 0;
      for (int k = 1; k < 1000000; ++k) {
        double s = k * 1e-6;
        best = std::max(best, 4 * s * (1 - s) * a + s * K);
      }
      best = std::max(best, K);  // limit s -> 1
      EXPECT_NEAR(fll_bound(d, K), best, 1e-9 * (1 + best)) << d << " " << K;
    }
}

TEST(ReversePoincare, GroundStateIsEquality) {
  ChannelGeometry g{2.0, 0.9, 32, 32};
  auto s = drifted_setup(ShearControl::designed(2.0, 0.9), g);
  DriftedOperator2D op(s, g);
  Field f = op.ground_state(s);
  Field Lf = op.apply(f);
  double lam = lambda1_drifted(s, g);
  EXPECT_NEAR(op.inner(Lf, Lf) / (lam * op.inner(f, Lf)), 1.0, 1e-6);
}

TEST(ReversePoincare, RandomTrials) {
  for (auto c : {ShearControl::designed(2.0, 0.9), ShearControl::off(1.0, 1.0)}) {
    ChannelGeometry g{c.X, c.Y, 32, 32};
    auto s = drifted_setup(c, g);
    DriftedOperator2D op(s, g);
    std::mt19937_64 rng(9);
    std::normal_distribution<double> N;
    std::vector<Field> trials;
    for (int k = 0; k < 20; ++k) {
      Field f(op.rows(), op.cols());
      for (int j = 0; j < op.cols(); ++j)
        for (int i = 0; i < op.rows(); ++i) f(i, j) = N(rng);
      trials.push_back(f);
    }
    trials.push_back(op.ground_state(s));
    double lam = lambda1_drifted(s, g);
    EXPECT_TRUE(reverse_poincare_check(s, g, trials, lam, 1e-9));
    EXPECT_FALSE(reverse_poincare_check(s, g, {trials.back()}, 1.01 * lam, 1e-9));
    if (c.kind == ControlKind::off) {
      EXPECT_NEAR(lam, 2.0, 0.01);
    }
  }
}
