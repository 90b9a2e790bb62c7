#pragma once

#include <cmath>
#include <complex>
#include <cstdlib>
#include <cstring>
#include <mutex>
#include <numbers>
#include <vector>

#include <Eigen/Dense>
#include <fftw3.h>

#include "kaluza_klein.hpp"

namespace geoflow {

using Field = Eigen::ArrayXXd;  // x fastest: (Nx, rows)
using cplx = std::complex<double>;

/// Channel [0, X pi] x [0, Y pi], periodic in x, walls at y = 0 and y = Y pi.
struct ChannelGeometry {
  double X = 2, Y = 0.9;
  int Nx = 128, Ny = 64;  // Ny intervals, Ny + 1 node rows

  double Lx() const { return X * std::numbers::pi; }
  double H() const { return Y * std::numbers::pi; }
  double dx() const { return Lx() / Nx; }
  double dy() const { return H() / Ny; }
  double x(int i) const { return i * dx(); }
  double y(int j) const { return j * dy(); }
  double yh(int j) const { return (j + 0.5) * dy(); }
  int modes() const { return Nx / 2 + 1; }

  void validate() const {
    if (!(X > 0) || !(Y > 0)) throw config_error("channel factors X, Y must be positive");
    if (Nx < 4 || (Nx & (Nx - 1)) != 0) throw config_error("Nx must be a power of two");
    if (Ny < 16) throw config_error("Ny must be at least 16");
  }

  /// x wavenumber of mode m
  double kappa(int m) const { return 2.0 * m / X; }
  /// symbol of the second difference in x, positive
  double k2(int m) const {
    double h = dx();
    return (2.0 - 2.0 * std::cos(kappa(m) * h)) / (h * h);
  }
  /// forward difference, samples at i -> i + 1/2
  cplx dplus(int m) const { return (std::polar(1.0, kappa(m) * dx()) - 1.0) / dx(); }
  /// backward difference, samples at i + 1/2 -> i
  cplx dminus(int m) const { return (1.0 - std::polar(1.0, -kappa(m) * dx())) / dx(); }

  Field nodes() const { return Field::Zero(Nx, Ny + 1); }
};

/// Staggered velocity: u1 at (i, j+1/2), u2 at (i+1/2, j); u2 vanishes on both walls.
struct MacField {
  Field u1, u2;

  static MacField zeros(const ChannelGeometry& g) { return {Field::Zero(g.Nx, g.Ny), Field::Zero(g.Nx, g.Ny + 1)}; }
  MacField& operator+=(const MacField& o) {
    u1 += o.u1;
    u2 += o.u2;
    return *this;
  }
  double dot(const MacField& o) const { return (u1 * o.u1).sum() + (u2 * o.u2).sum(); }
};

inline MacField axpy(double a, const MacField& x, const MacField& y) { return {y.u1 + a * x.u1, y.u2 + a * x.u2}; }

/// Batched real transforms along x for every column of an (Nx, rows) array.
class RowFFT {
 public:
  explicit RowFFT(int nx) : nx_(nx), nh_(nx / 2 + 1), rs_(nx + nx % 2) {
    std::lock_guard<std::mutex> lock(planner_mutex());
    real_ = static_cast<double*>(fftw_malloc(sizeof(double) * rs_));
    cplx_ = static_cast<fftw_complex*>(fftw_malloc(sizeof(fftw_complex) * nh_));
    fwd_ = fftw_plan_dft_r2c_1d(nx_, real_, cplx_, FFTW_ESTIMATE);
    inv_ = fftw_plan_dft_c2r_1d(nx_, cplx_, real_, FFTW_ESTIMATE);
  }
  RowFFT(const RowFFT&) = delete;
  RowFFT& operator=(const RowFFT&) = delete;
  ~RowFFT() {
    std::lock_guard<std::mutex> lock(planner_mutex());
    fftw_destroy_plan(fwd_);
    fftw_destroy_plan(inv_);
    fftw_free(real_);
    fftw_free(cplx_);
  }

  /// out: (Nx/2+1, rows), unnormalized
  void forward(const Field& in, Eigen::ArrayXXcd& out) {
    const int rows = static_cast<int>(in.cols());
    out.resize(nh_, rows);
    for (int r = 0; r < rows; ++r) {
      std::memcpy(real_, &in(0, r), sizeof(double) * nx_);
      fftw_execute_dft_r2c(fwd_, real_, cplx_);
      std::memcpy(static_cast<void*>(&out(0, r)), cplx_, sizeof(fftw_complex) * nh_);
    }
  }
  /// inverse with 1/Nx normalization
  void inverse(const Eigen::ArrayXXcd& in, Field& out) {
    const int rows = static_cast<int>(in.cols());
    out.resize(nx_, rows);
    const double s = 1.0 / nx_;
    for (int r = 0; r < rows; ++r) {
      std::memcpy(cplx_, &in(0, r), sizeof(fftw_complex) * nh_);
      fftw_execute_dft_c2r(inv_, cplx_, real_);
      double* o = &out(0, r);
      for (int i = 0; i < nx_; ++i) o[i] = real_[i] * s;
    }
  }

 private:
  static std::mutex& planner_mutex() {
    static std::mutex m;
    return m;
  }

  int nx_, nh_, rs_;
  fftw_plan fwd_ = nullptr, inv_ = nullptr;
  double* real_ = nullptr;
  fftw_complex* cplx_ = nullptr;
};

/// Thomas factorization of a real tridiagonal matrix (sub a, diag b, super c).
class Tridiag {
 public:
  Tridiag() = default;
  Tridiag(const std::vector<double>& a, const std::vector<double>& b, const std::vector<double>& c) {
    const size_t n = b.size();
    a_ = a;
    cp_.resize(n);
    inv_.resize(n);
    double den = b[0];
    if (den == 0.0) throw numerical_error("singular tridiagonal system");
    inv_[0] = 1.0 / den;
    cp_[0] = n > 1 ? c[0] * inv_[0] : 0.0;
    for (size_t j = 1; j < n; ++j) {
      den = b[j] - a[j] * cp_[j - 1];
      if (den == 0.0) throw numerical_error("singular tridiagonal system");
      inv_[j] = 1.0 / den;
      cp_[j] = j + 1 < n ? c[j] * inv_[j] : 0.0;
    }
  }

  /// in-place, x has given stride between consecutive unknowns
  template <class T>
  void solve(T* x, long stride = 1) const {
    const size_t n = inv_.size();
    x[0] *= inv_[0];
    for (size_t j = 1; j < n; ++j) x[j * stride] = (x[j * stride] - a_[j] * x[(j - 1) * stride]) * inv_[j];
    for (size_t j = n - 1; j-- > 0;) x[j * stride] -= cp_[j] * x[(j + 1) * stride];
  }
  size_t size() const { return inv_.size(); }

 private:
  std::vector<double> a_, cp_, inv_;
};

/// Thomas solves for a family of systems sharing off-diagonals, diagonal b_r - shift_m; unknowns stored (m, r).
class BatchTridiag {
 public:
  BatchTridiag() = default;
  BatchTridiag(const std::vector<double>& a, const std::vector<double>& b, const std::vector<double>& c,
               const std::vector<double>& shift)
      : BatchTridiag(a, c, diagonals(b, shift)) {}
  /// diag(m, r) is the diagonal of system m
  BatchTridiag(const std::vector<double>& a, const std::vector<double>& c, const Eigen::ArrayXXd& diag)
      : n_(static_cast<int>(diag.cols())), m_(static_cast<int>(diag.rows())), a_(a), cp_(m_, n_), inv_(m_, n_) {
    for (int m = 0; m < m_; ++m) {
      double den = diag(m, 0);
      if (den == 0.0) throw numerical_error("singular tridiagonal system");
      inv_(m, 0) = 1.0 / den;
      cp_(m, 0) = n_ > 1 ? c[0] * inv_(m, 0) : 0.0;
      for (int r = 1; r < n_; ++r) {
        den = diag(m, r) - a[r] * cp_(m, r - 1);
        if (den == 0.0) throw numerical_error("singular tridiagonal system");
        inv_(m, r) = 1.0 / den;
        cp_(m, r) = r + 1 < n_ ? c[r] * inv_(m, r) : 0.0;
      }
    }
  }

  /// x(m, r) = x[m + r * ld]
  void solve(std::complex<double>* x, long ld) const {
    for (int m = 0; m < m_; ++m) x[m] *= inv_(m, 0);
    for (int r = 1; r < n_; ++r) {
      std::complex<double>* cur = x + r * ld;
      const std::complex<double>* prev = cur - ld;
      const double ar = a_[r];
      const double* iv = &inv_(0, r);
      for (int m = 0; m < m_; ++m) cur[m] = (cur[m] - ar * prev[m]) * iv[m];
    }
    for (int r = n_ - 1; r-- > 0;) {
      std::complex<double>* cur = x + r * ld;
      const std::complex<double>* next = cur + ld;
      const double* cp = &cp_(0, r);
      for (int m = 0; m < m_; ++m) cur[m] -= cp[m] * next[m];
    }
  }

 private:
  static Eigen::ArrayXXd diagonals(const std::vector<double>& b, const std::vector<double>& shift) {
    Eigen::ArrayXXd d(shift.size(), b.size());
    for (size_t m = 0; m < shift.size(); ++m)
      for (size_t r = 0; r < b.size(); ++r) d(m, r) = b[r] - shift[m];
    return d;
  }

  int n_ = 0, m_ = 0;
  std::vector<double> a_;
  Eigen::ArrayXXd cp_, inv_;
};

/// Lumped P1 mass: dx dy inside, half on the walls.
inline Field node_mass(const ChannelGeometry& g) {
  Field m = Field::Constant(g.Nx, g.Ny + 1, g.dx() * g.dy());
  m.col(0) *= 0.5;
  m.col(g.Ny) *= 0.5;
  return m;
}

/// q grad X at the nodes, centered differences (one-sided at the walls); returns (x, y) parts.
inline std::pair<Field, Field> discrete_diamond(const Field& X, const Field& q, const ChannelGeometry& g) {
  if (X.rows() != q.rows() || X.cols() != q.cols() || X.rows() != g.Nx || X.cols() != g.Ny + 1)
    throw config_error("grid mismatch in discrete_diamond");
  const int nx = g.Nx, ny = g.Ny;
  Field gx(nx, ny + 1), gy(nx, ny + 1);
  for (int j = 0; j <= ny; ++j)
    for (int i = 0; i < nx; ++i) {
      int ip = i + 1 == nx ? 0 : i + 1, im = i == 0 ? nx - 1 : i - 1;
      gx(i, j) = (X(ip, j) - X(im, j)) / (2 * g.dx());
      if (j == 0)
        gy(i, j) = (-3 * X(i, 0) + 4 * X(i, 1) - X(i, 2)) / (2 * g.dy());
      else if (j == ny)
        gy(i, j) = (3 * X(i, ny) - 4 * X(i, ny - 1) + X(i, ny - 2)) / (2 * g.dy());
      else
        gy(i, j) = (X(i, j + 1) - X(i, j - 1)) / (2 * g.dy());
    }
  return {q * gx, q * gy};
}

}  // namespace geoflow
