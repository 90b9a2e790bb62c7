#pragma once

#include <algorithm>
#include <cmath>
#include <numbers>
#include <vector>

#include <Eigen/Eigenvalues>

#include "channel.hpp"
#include "control.hpp"

namespace geoflow {

/// Dense discrete Delta^C on interior nodes (Nx * (Ny-1) unknowns, x fastest), Dirichlet on both walls.
inline Mat modified_laplacian_matrix(const ShearControl& c, const ChannelGeometry& g) {
  const auto phi = phi_half_rows(c, g);
  const int nx = g.Nx, nr = g.Ny - 1, n = nx * nr;
  const double ix2 = 1 / (g.dx() * g.dx()), iy2 = 1 / (g.dy() * g.dy());
  Mat L = Mat::Zero(n, n);
  for (int r = 0; r < nr; ++r)
    for (int i = 0; i < nx; ++i) {
      const int j = r + 1, k = i + nx * r;
      L(k, k) = -2 * ix2 - (phi[j - 1] + phi[j]) * iy2;
      L(k, (i + 1) % nx + nx * r) += ix2;
      L(k, (i + nx - 1) % nx + nx * r) += ix2;
      if (r > 0) L(k, i + nx * (r - 1)) = phi[j - 1] * iy2;
      if (r + 1 < nr) L(k, i + nx * (r + 1)) = phi[j] * iy2;
    }
  return L;
}

/// Second variation of energy plus Casimir at the shear equilibrium, per unit node mass:
/// Q = -(Delta^C)^{-1} - diag(1 / Phi), acting on interior-node vorticity perturbations.
inline Mat second_variation_matrix(const ShearControl& c, const ChannelGeometry& g) {
  g.validate();
  Mat negL = -modified_laplacian_matrix(c, g);
  Eigen::LLT<Mat> llt(negL);
  if (llt.info() != Eigen::Success) throw numerical_error("elliptic operator not positive definite");
  Mat Q = llt.solve(Mat::Identity(negL.rows(), negL.cols()));
  const int nx = g.Nx;
  for (int r = 0; r < g.Ny - 1; ++r) {
    double w = 1.0 / c.phi(g.y(r + 1));
    for (int i = 0; i < nx; ++i) Q(i + nx * r, i + nx * r) -= w;
  }
  return 0.5 * (Q + Q.transpose());
}

struct Extremes {
  double max, min;
};

/// Extremal eigenvalues of a symmetric matrix; dense below 4096, shifted power iteration above.
inline Extremes definiteness(const Mat& A, int max_iter = 200000) {
  if (A.rows() != A.cols()) throw config_error("matrix must be square");
  if (A.rows() <= 4096) {
    Eigen::SelfAdjointEigenSolver<Mat> es(A, Eigen::EigenvaluesOnly);
    if (es.info() != Eigen::Success) throw numerical_error("eigensolver did not converge");
    return {es.eigenvalues().maxCoeff(), es.eigenvalues().minCoeff()};
  }
  auto power = [&](double shift) {
    Vec x = Vec::Ones(A.rows()).normalized();
    double lam = 0;
    for (int it = 0; it < max_iter; ++it) {
      Vec y = A * x - shift * x;
      lam = x.dot(y);
      double res = (y - lam * x).norm();
      x = y.normalized();
      if (res < 1e-8 * std::max(1.0, std::abs(lam))) return lam + shift;
    }
    throw numerical_error("power iteration did not converge");
  };
  double norm = A.cwiseAbs().rowwise().sum().maxCoeff();
  double hi = power(-norm), lo = power(norm);
  return {hi, lo};
}

// ---------------------------------------------------------------------------

/// y -> z = int_0^y Phi^{-1/2}, tabulated with Hermite interpolation; g(z) = -1/2 log Phi(y(z)).
class DriftedLaplacianSetup {
 public:
  DriftedLaplacianSetup(const ShearControl& c, const ChannelGeometry& g, int intervals = 4096)
      : c_(c), H_(g.H()), h_(g.H() / intervals) {
    z_.assign(intervals + 1, 0.0);
    for (int k = 0; k < intervals; ++k) {
      double a = k * h_, b = a + h_;
      z_[k + 1] = z_[k] + h_ / 6 * (dz(a) + 4 * dz(0.5 * (a + b)) + dz(b));
    }
    K = 0.0;
  }

  double Phi(double y) const {
    double p = c_.phi(y);
    if (!(p > 0)) throw numerical_error("metric not positive definite (gamma a0^2 >= 1)");
    return p;
  }
  double dz(double y) const { return 1.0 / std::sqrt(Phi(y)); }
  double Z() const { return z_.back(); }
  double height() const { return H_; }

  double z_of_y(double y) const {
    y = std::clamp(y, 0.0, H_);
    int k = std::min(static_cast<int>(y / h_), static_cast<int>(z_.size()) - 2);
    double x0 = k * h_, u = (y - x0) / h_;
    double h00 = (1 + 2 * u) * (1 - u) * (1 - u), h10 = u * (1 - u) * (1 - u);
    double h01 = u * u * (3 - 2 * u), h11 = u * u * (u - 1);
    return h00 * z_[k] + h10 * h_ * dz(x0) + h01 * z_[k + 1] + h11 * h_ * dz(x0 + h_);
  }
  double y_of_z(double z) const {
    double y = z / Z() * H_;
    for (int it = 0; it < 60; ++it) {
      double step = (z_of_y(y) - z) / dz(y);
      y = std::clamp(y - step, 0.0, H_);
      if (std::abs(step) < 1e-15 * (1 + H_)) break;
    }
    return y;
  }
  double g_of_z(double z) const { return -0.5 * std::log(Phi(y_of_z(z))); }
  /// d^2 g / dz^2 = -Phi''/2 + Phi'^2 / (4 Phi), derivatives in y
  double g_zz(double z) const {
    double y = y_of_z(z), a = c_.a0(y), a1 = c_.a0_y(y), a2 = c_.a0_yy(y), gm = c_.gamma;
    double p1 = -2 * gm * a * a1, p2 = -2 * gm * (a1 * a1 + a * a2);
    return -0.5 * p2 + p1 * p1 / (4 * Phi(y));
  }

  double K;  // lower bound on Hess g (zero under the no-inflection condition)

 private:
  ShearControl c_;
  double H_, h_;
  std::vector<double> z_;
};

inline DriftedLaplacianSetup drifted_setup(const ShearControl& c, const ChannelGeometry& g) {
  return DriftedLaplacianSetup(c, g);
}

/// Weighted 1D problem -(e^{-g} w')' = lambda e^{-g} w on [0, Z], Dirichlet; returns the symmetric
/// tridiagonal (diag, off) of W^{-1/2} A W^{-1/2} with n interior points.
inline std::pair<Vec, Vec> drifted_z_operator(const DriftedLaplacianSetup& s, int n_intervals) {
  const double hz = s.Z() / n_intervals;
  const int n = n_intervals - 1;
  std::vector<double> wh(n_intervals), wn(n);
  for (int k = 0; k < n_intervals; ++k) wh[k] = std::exp(-s.g_of_z((k + 0.5) * hz));
  for (int k = 0; k < n; ++k) wn[k] = std::exp(-s.g_of_z((k + 1) * hz));
  Vec d(n), e(std::max(n - 1, 0));
  for (int k = 0; k < n; ++k) d(k) = (wh[k] + wh[k + 1]) / (hz * hz) / wn[k];
  for (int k = 0; k + 1 < n; ++k) e(k) = -wh[k + 1] / (hz * hz) / std::sqrt(wn[k] * wn[k + 1]);
  return {d, e};
}

/// Dirichlet x-eigenvalue of the second difference on [0, X pi] with n intervals
inline double dirichlet_x_eigenvalue(double X, int n, int mode = 1) {
  double hx = X * std::numbers::pi / n;
  return (2 - 2 * std::cos(mode * std::numbers::pi / n)) / (hx * hx);
}

/// Lowest Dirichlet eigenvalues of the drifted Laplacian on [0, X pi] x [0, Z]; separable in x and z.
inline std::vector<double> drifted_spectrum(const DriftedLaplacianSetup& s, const ChannelGeometry& g, int count) {
  auto [d, e] = drifted_z_operator(s, g.Ny);
  Eigen::SelfAdjointEigenSolver<Mat> es;
  es.computeFromTridiagonal(d, e, Eigen::EigenvaluesOnly);
  if (es.info() != Eigen::Success) throw numerical_error("eigensolver did not converge");
  std::vector<double> all;
  for (int mx = 1; mx < g.Nx; ++mx)
    for (int k = 0; k < es.eigenvalues().size(); ++k) all.push_back(dirichlet_x_eigenvalue(g.X, g.Nx, mx) + es.eigenvalues()(k));
  std::partial_sort(all.begin(), all.begin() + std::min<size_t>(count, all.size()), all.end());
  all.resize(std::min<size_t>(count, all.size()));
  return all;
}

inline double lambda1_drifted(const DriftedLaplacianSetup& s, const ChannelGeometry& g) {
  return drifted_spectrum(s, g, 1).front();
}

/// sup over s in (0,1) of 4 s (1-s) pi^2 / d^2 + s K
inline double fll_bound(double d, double K) {
  if (!(d > 0)) throw config_error("diameter must be positive");
  const double a = std::numbers::pi * std::numbers::pi / (d * d);
  double s = 0.5 + K / (8 * a);
  if (s >= 1) return K;
  if (s <= 0) return 0.0;
  return 4 * s * (1 - s) * a + s * K;
}

/// Matrix-free 2D drifted operator on interior points of the transformed rectangle (fields (Nx-1, Nz-1)).
class DriftedOperator2D {
 public:
  DriftedOperator2D(const DriftedLaplacianSetup& s, const ChannelGeometry& g)
      : nx_(g.Nx), nz_(g.Ny), hx_(g.Lx() / g.Nx), hz_(s.Z() / g.Ny) {
    wh_.resize(nz_);
    wn_.resize(nz_ - 1);
    for (int k = 0; k < nz_; ++k) wh_[k] = std::exp(-s.g_of_z((k + 0.5) * hz_));
    for (int k = 0; k + 1 < nz_; ++k) wn_[k] = std::exp(-s.g_of_z((k + 1) * hz_));
  }
  int rows() const { return nx_ - 1; }
  int cols() const { return nz_ - 1; }

  /// -Delta_g f
  Field apply(const Field& f) const {
    Field out(rows(), cols());
    for (int k = 0; k < cols(); ++k)
      for (int i = 0; i < rows(); ++i) {
        double c = f(i, k);
        double l = i > 0 ? f(i - 1, k) : 0, r = i + 1 < rows() ? f(i + 1, k) : 0;
        double d = k > 0 ? f(i, k - 1) : 0, u = k + 1 < cols() ? f(i, k + 1) : 0;
        double ax = (2 * c - l - r) / (hx_ * hx_);
        double az = (wh_[k] * (c - d) + wh_[k + 1] * (c - u)) / (hz_ * hz_) / wn_[k];
        out(i, k) = ax + az;
      }
    return out;
  }
  /// weighted inner product sum a b e^{-g} hx hz
  double inner(const Field& a, const Field& b) const {
    double s = 0;
    for (int k = 0; k < cols(); ++k) s += wn_[k] * (a.col(k) * b.col(k)).sum();
    return s * hx_ * hz_;
  }
  /// first eigenfunction of the separable problem
  Field ground_state(const DriftedLaplacianSetup& s) const {
    auto [d, e] = drifted_z_operator(s, nz_);
    Eigen::SelfAdjointEigenSolver<Mat> es;
    es.computeFromTridiagonal(d, e, Eigen::ComputeEigenvectors);
    Vec v = es.eigenvectors().col(0);
    Field f(rows(), cols());
    for (int k = 0; k < cols(); ++k)
      for (int i = 0; i < rows(); ++i)
        f(i, k) = std::sin(std::numbers::pi * (i + 1) / nx_) * v(k) / std::sqrt(wn_[k]);
    return f;
  }

 private:
  int nx_, nz_;
  double hx_, hz_;
  std::vector<double> wh_, wn_;
};

/// int (Delta_g f)^2 e^{-g} >= -lambda1 int f Delta_g f e^{-g} for every trial field (zero on the boundary).
inline bool reverse_poincare_check(const DriftedLaplacianSetup& s, const ChannelGeometry& g,
                                   const std::vector<Field>& trials, double lambda1, double rel_tol = 1e-12) {
  DriftedOperator2D op(s, g);
  for (const auto& f : trials) {
    Field Lf = op.apply(f);
    double lhs = op.inner(Lf, Lf), rhs = lambda1 * op.inner(f, Lf);
    if (lhs < rhs * (1 - rel_tol)) return false;
  }
  return true;
}

}  // namespace geoflow
