#pragma once

#include <algorithm>
#include <cmath>
#include <complex>
#include <numbers>
#include <vector>

#include <Eigen/Eigenvalues>

#include "control.hpp"
#include "grid.hpp"

namespace geoflow {

struct EquilibriumProfiles {
  std::vector<double> y, u, omega, psi;
};

inline EquilibriumProfiles equilibrium_fields(const ChannelGeometry& g) {
  EquilibriumProfiles e;
  for (int j = 0; j <= g.Ny; ++j) {
    double y = g.y(j);
    e.y.push_back(y);
    e.u.push_back(shear_velocity(y));
    e.omega.push_back(shear_vorticity(y));
    e.psi.push_back(shear_stream(y));
  }
  return e;
}

/// omega_e sampled at every node
inline Field equilibrium_omega(const ChannelGeometry& g) {
  Field w(g.Nx, g.Ny + 1);
  for (int j = 0; j <= g.Ny; ++j) w.col(j).setConstant(shear_vorticity(g.y(j)));
  return w;
}

/// Kelvin circulation carried by the top wall in the equilibrium state
inline double equilibrium_circulation(const ChannelGeometry& g) { return -g.Lx() * shear_velocity(g.H()); }

/// Phi at the half rows y_{j+1/2}, j = 0..Ny-1
inline std::vector<double> phi_half_rows(const ShearControl& c, const ChannelGeometry& g) {
  std::vector<double> p(g.Ny);
  for (int j = 0; j < g.Ny; ++j) {
    p[j] = c.phi(g.yh(j));
    if (!(p[j] > 0)) throw numerical_error("metric not positive definite (gamma a0^2 >= 1)");
  }
  return p;
}

// Node integrals of J(psi, f) against the P1 hat functions, averaged over both diagonal splittings of each cell.
// J(psi, f) = psi_x f_y - psi_y f_x.
inline void jacobian_integrals(const Field& psi, const Field& f, Field& out) {
  const int nx = static_cast<int>(psi.rows()), ny = static_cast<int>(psi.cols()) - 1;
  out.setZero(nx, ny + 1);
  // per-cell shares for corners a = (i, j), b = (i+1, j), c = (i+1, j+1), d = (i, j+1)
  std::vector<double> sa(nx), sb(nx), sc(nx), sd(nx), pe(2 * (nx + 1)), fe(2 * (nx + 1));
  for (int j = 0; j < ny; ++j) {
    double* p0 = pe.data();
    double* p1 = p0 + nx + 1;
    double* f0 = fe.data();
    double* f1 = f0 + nx + 1;
    std::copy_n(&psi(0, j), nx, p0);
    std::copy_n(&psi(0, j + 1), nx, p1);
    std::copy_n(&f(0, j), nx, f0);
    std::copy_n(&f(0, j + 1), nx, f1);
    p0[nx] = p0[0], p1[nx] = p1[0], f0[nx] = f0[0], f1[nx] = f1[0];
    for (int i = 0; i < nx; ++i) {
      const double pb = p0[i + 1] - p0[i], pc = p1[i + 1] - p0[i], pd = p1[i] - p0[i];
      const double fb = f0[i + 1] - f0[i], fc = f1[i + 1] - f0[i], fd = f1[i] - f0[i];
      const double abc = pb * fc - pc * fb;
      const double acd = pc * fd - pd * fc;
      const double abd = pb * fd - pd * fb;
      const double bcd = (pc - pb) * (fd - fb) - (pd - pb) * (fc - fb);
      sa[i] = abc + acd + abd;
      sb[i] = abc + abd + bcd;
      sc[i] = abc + acd + bcd;
      sd[i] = acd + abd + bcd;
    }
    double* o0 = &out(0, j);
    double* o1 = &out(0, j + 1);
    o0[0] += sa[0] + sb[nx - 1];
    o1[0] += sd[0] + sc[nx - 1];
    for (int i = 1; i < nx; ++i) {
      o0[i] += sa[i] + sb[i - 1];
      o1[i] += sd[i] + sc[i - 1];
    }
  }
  out *= 1.0 / 12.0;
}

/// -u.grad f with u = (-psi_y, psi_x), as a lumped-mass nodal field.
inline Field advect_scalar(const Field& f, const Field& psi, const ChannelGeometry& g) {
  Field out;
  jacobian_integrals(psi, f, out);
  return -out / node_mass(g);
}

/// Solves d_xx psi + d_y(Phi d_y psi) = omega on interior nodes; finite differences in x, diagonalized by the DFT.
class ModifiedPoisson {
 public:
  ModifiedPoisson(const ChannelGeometry& g, std::vector<double> phi_half)
      : g_(g), phi_(std::move(phi_half)), fft_(g.Nx) {
    g.validate();
    if (static_cast<int>(phi_.size()) != g.Ny) throw config_error("Phi profile must have Ny entries");
    for (double p : phi_)
      if (!(p > 0)) throw numerical_error("metric not positive definite (gamma a0^2 >= 1)");
    const int n = g.Ny - 1;
    const double h2 = g.dy() * g.dy();
    std::vector<double> a(n), b(n), c(n), shift(g.modes());
    for (int r = 0; r < n; ++r) {
      const int j = r + 1;
      a[r] = phi_[j - 1] / h2;
      c[r] = phi_[j] / h2;
      b[r] = -(phi_[j - 1] + phi_[j]) / h2;
    }
    for (int m = 0; m < g.modes(); ++m) shift[m] = g.k2(m);
    solver_ = BatchTridiag(a, b, c, shift);
    // x-independent solution with h_0 = 0, h_Ny = 1
    hom_.assign(g.Ny + 1, 0.0);
    double total = 0;
    for (double p : phi_) total += 1.0 / p;
    for (int j = 1; j <= g.Ny; ++j) hom_[j] = hom_[j - 1] + 1.0 / phi_[j - 1] / total;
    hom_[g.Ny] = 1.0;
  }

  const ChannelGeometry& geometry() const { return g_; }
  const std::vector<double>& phi() const { return phi_; }

  /// psi = 0 on the bottom wall, psi = top on the top wall
  void solve_dirichlet(const Field& omega, double top, Field& psi) {
    const int n = g_.Ny - 1;
    psi.resize(g_.Nx, g_.Ny + 1);
    interior_ = omega.middleCols(1, n);
    fft_.forward(interior_, spec_);
    solver_.solve(spec_.data(), spec_.rows());
    fft_.inverse(spec_, interior_);
    psi.middleCols(1, n) = interior_;
    psi.col(0).setZero();
    psi.col(g_.Ny).setZero();
    if (top != 0.0)
      for (int j = 1; j <= g_.Ny; ++j) psi.col(j) += top * hom_[j];
  }

  /// Discrete circulation of the momentum along the top wall (up to sign), the gauge-fixing functional.
  double top_circulation(const Field& omega, const Field& psi) const {
    const int N = g_.Ny;
    double s = 0.5 * g_.dy() * omega.col(N).sum() + phi_[N - 1] * (psi.col(N) - psi.col(N - 1)).sum() / g_.dy();
    return g_.dx() * s;
  }

  /// Solves with the wall constant chosen so the top circulation equals `circulation`; returns that constant.
  double solve(const Field& omega, double circulation, Field& psi) {
    solve_dirichlet(omega, 0.0, psi);
    const int N = g_.Ny;
    double unit = g_.Lx() * phi_[N - 1] * (1.0 - hom_[N - 1]) / g_.dy();
    double c = (circulation - top_circulation(omega, psi)) / unit;
    for (int j = 1; j <= N; ++j) psi.col(j) += c * hom_[j];
    return c;
  }

  /// Apply the discrete operator on interior rows (walls of the result are zero).
  Field apply(const Field& psi) const {
    Field out = Field::Zero(g_.Nx, g_.Ny + 1);
    const double ix2 = 1.0 / (g_.dx() * g_.dx()), iy2 = 1.0 / (g_.dy() * g_.dy());
    for (int j = 1; j < g_.Ny; ++j)
      for (int i = 0; i < g_.Nx; ++i) {
        int ip = (i + 1) % g_.Nx, im = (i + g_.Nx - 1) % g_.Nx;
        out(i, j) = (psi(ip, j) - 2 * psi(i, j) + psi(im, j)) * ix2 +
                    (phi_[j] * (psi(i, j + 1) - psi(i, j)) - phi_[j - 1] * (psi(i, j) - psi(i, j - 1))) * iy2;
      }
    return out;
  }

  /// 1/2 sum over links of Phi-weighted squared differences
  double energy(const Field& psi) const {
    const double dx = g_.dx(), dy = g_.dy();
    double ex = 0, ey = 0;
    for (int j = 0; j <= g_.Ny; ++j) {
      double w = (j == 0 || j == g_.Ny) ? 0.5 : 1.0;
      double s = 0;
      for (int i = 0; i < g_.Nx; ++i) {
        double d = psi((i + 1) % g_.Nx, j) - psi(i, j);
        s += d * d;
      }
      ex += w * s;
    }
    for (int j = 0; j < g_.Ny; ++j) ey += phi_[j] * (psi.col(j + 1) - psi.col(j)).square().sum();
    return 0.5 * (ex * dy / dx + ey * dx / dy);
  }

  /// largest link speed |d psi| / h
  double max_speed(const Field& psi) const {
    double s = 0;
    for (int j = 0; j < g_.Ny; ++j) s = std::max(s, (psi.col(j + 1) - psi.col(j)).abs().maxCoeff() / g_.dy());
    for (int j = 1; j < g_.Ny; ++j)
      for (int i = 0; i < g_.Nx; ++i) s = std::max(s, std::abs(psi((i + 1) % g_.Nx, j) - psi(i, j)) / g_.dx());
    return s;
  }

 private:
  ChannelGeometry g_;
  std::vector<double> phi_;
  std::vector<double> hom_;
  BatchTridiag solver_;
  RowFFT fft_;
  Field interior_;
  Eigen::ArrayXXcd spec_;
};

inline Field poisson_solve_modified(const Field& omega, const std::vector<double>& phi_half, const ChannelGeometry& g,
                                   double circulation) {
  ModifiedPoisson p(g, phi_half);
  Field psi;
  p.solve(omega, circulation, psi);
  return psi;
}

/// Vorticity-form closed loop: omega_t = -J(psi_C, omega), Delta^C psi_C = omega.
class VorticityModel {
 public:
  VorticityModel(const ChannelGeometry& g, const ShearControl& c, double circulation)
      : g_(g), poisson_(g, phi_half_rows(c, g)), circ_(circulation), mass_(node_mass(g)),
        neg_inv_mass_(-mass_.inverse()) {}

  const ChannelGeometry& geometry() const { return g_; }
  double circulation() const { return circ_; }
  ModifiedPoisson& poisson() { return poisson_; }
  const Field& mass() const { return mass_; }

  const Field& stream(const Field& omega) {
    poisson_.solve(omega, circ_, psi_);
    return psi_;
  }

  Field rhs(const Field& omega) {
    Field out;
    rhs(omega, out);
    return out;
  }
  void rhs(const Field& omega, Field& out) {
    stream(omega);
    jacobian_integrals(psi_, omega, out);
    out *= neg_inv_mass_;
  }

  double energy(const Field& omega) { return poisson_.energy(stream(omega)); }
  double max_speed(const Field& omega) { return poisson_.max_speed(stream(omega)); }

 private:
  ChannelGeometry g_;
  ModifiedPoisson poisson_;
  double circ_;
  Field mass_, neg_inv_mass_, psi_;
};

// ---------------------------------------------------------------------------
// Staggered (MAC) velocity form.

inline MacField operator+(const MacField& a, const MacField& b) { return {a.u1 + b.u1, a.u2 + b.u2}; }
inline MacField operator-(const MacField& a, const MacField& b) { return {a.u1 - b.u1, a.u2 - b.u2}; }
inline MacField operator*(double s, const MacField& a) { return {s * a.u1, s * a.u2}; }

namespace detail {
// periodic neighbours of one x row: out[i] op= f(in[i+1]) or f(in[i-1]), written branch-free so the loops vectorize
inline void forward_diff(const double* in, double* out, int n, double s) {
  for (int i = 0; i + 1 < n; ++i) out[i] = (in[i + 1] - in[i]) * s;
  out[n - 1] = (in[0] - in[n - 1]) * s;
}
inline void backward_diff(const double* in, double* out, int n, double s) {
  out[0] = (in[0] - in[n - 1]) * s;
  for (int i = 1; i < n; ++i) out[i] = (in[i] - in[i - 1]) * s;
}
inline void forward_avg(const double* in, double* out, int n) {
  for (int i = 0; i + 1 < n; ++i) out[i] = 0.5 * (in[i] + in[i + 1]);
  out[n - 1] = 0.5 * (in[n - 1] + in[0]);
}
inline void backward_avg(const double* in, double* out, int n) {
  out[0] = 0.5 * (in[0] + in[n - 1]);
  for (int i = 1; i < n; ++i) out[i] = 0.5 * (in[i] + in[i - 1]);
}
}  // namespace detail

/// u1 = -d_y psi, u2 = d_x psi on the staggered points; divergence-free by construction.
inline MacField velocity_from_stream(const Field& psi, const ChannelGeometry& g) {
  MacField u = MacField::zeros(g);
  for (int j = 0; j < g.Ny; ++j) u.u1.col(j) = -(psi.col(j + 1) - psi.col(j)) / g.dy();
  for (int j = 1; j < g.Ny; ++j) detail::forward_diff(&psi(0, j), &u.u2(0, j), g.Nx, 1.0 / g.dx());
  return u;
}

/// divergence at cell centers, (Nx, Ny)
inline Field divergence(const MacField& v, const ChannelGeometry& g) {
  Field d(g.Nx, g.Ny);
  for (int j = 0; j < g.Ny; ++j) {
    detail::forward_diff(&v.u1(0, j), &d(0, j), g.Nx, 1.0 / g.dx());
    d.col(j) += (v.u2.col(j + 1) - v.u2.col(j)) / g.dy();
  }
  return d;
}

/// vorticity at the interior nodes; wall rows are left at zero
inline Field curl_nodes(const MacField& v, const ChannelGeometry& g) {
  Field w = Field::Zero(g.Nx, g.Ny + 1);
  const double idy = 1.0 / g.dy();
  for (int j = 1; j < g.Ny; ++j) {
    detail::backward_diff(&v.u2(0, j), &w(0, j), g.Nx, 1.0 / g.dx());
    w.col(j) -= (v.u1.col(j) - v.u1.col(j - 1)) * idy;
  }
  return w;
}

/// Skew-symmetric (for divergence-free v) centered flux form of v.grad s, s at the u1 points.
inline Field skew_advect(const MacField& v, const Field& s, const ChannelGeometry& g) {
  const int nx = g.Nx, ny = g.Ny;
  Field out(nx, ny);
  const double idx = 1.0 / g.dx(), idy = 1.0 / g.dy();
  Eigen::ArrayXd U(nx), S(nx), F(nx), back(nx);
  for (int j = 0; j < ny; ++j) {
    // flux through the face between i and i + 1
    detail::forward_avg(&v.u1(0, j), U.data(), nx);
    detail::forward_avg(&s(0, j), S.data(), nx);
    F = U * S * idx;
    detail::backward_diff(F.data(), &out(0, j), nx, 1.0);
  }
  Eigen::ArrayXd V(nx);
  for (int j = 1; j < ny; ++j) {
    detail::backward_avg(&v.u2(0, j), V.data(), nx);
    F = V * 0.5 * (s.col(j - 1) + s.col(j)) * idy;
    out.col(j - 1) += F;
    out.col(j) -= F;
  }
  return out;
}

/// sum over u1 points of q (v.grad X) dx dy, the pairing of the diamond term with v
inline double diamond_pairing(const Field& q, const Field& X, const MacField& v, const ChannelGeometry& g) {
  return (q * skew_advect(v, X, g)).sum() * g.dx() * g.dy();
}

/// -q grad X as the staggered field whose pairing with any v is -diamond_pairing(q, X, v)
inline MacField diamond_force(const Field& q, const Field& X, const ChannelGeometry& g) {
  const int nx = g.Nx, ny = g.Ny;
  MacField d = MacField::zeros(g);
  Eigen::ArrayXd Xs(nx), dq(nx), k(nx), kb(nx);
  for (int j = 0; j < ny; ++j) {
    detail::forward_avg(&X(0, j), Xs.data(), nx);
    detail::forward_diff(&q(0, j), dq.data(), nx, -1.0 / g.dx());
    k = Xs * dq;  // on the face between i and i + 1
    detail::backward_avg(k.data(), kb.data(), nx);
    d.u1.col(j) = -kb;
  }
  for (int j = 1; j < ny; ++j) {
    k = (X.col(j - 1) + X.col(j)) * (q.col(j - 1) - q.col(j)) / (2 * g.dy());
    detail::forward_avg(k.data(), &d.u2(0, j), nx);
    d.u2.col(j) = -d.u2.col(j);
  }
  return d;
}

/// Vortex force (ws * u2, -ws * u1) formed at the nodes and averaged back to the staggered points.
inline MacField vortex_force(const Field& ws, const MacField& u, const ChannelGeometry& g) {
  const int nx = g.Nx, ny = g.Ny;
  Field F1 = Field::Zero(nx, ny + 1), F2 = Field::Zero(nx, ny + 1);
  Eigen::ArrayXd u2(nx);
  for (int j = 1; j < ny; ++j) {
    detail::backward_avg(&u.u2(0, j), u2.data(), nx);
    F1.col(j) = ws.col(j) * u2;
    F2.col(j) = -0.5 * ws.col(j) * (u.u1.col(j - 1) + u.u1.col(j));
  }
  MacField f = MacField::zeros(g);
  for (int j = 0; j < ny; ++j) f.u1.col(j) = 0.5 * (F1.col(j) + F1.col(j + 1));
  for (int j = 1; j < ny; ++j) detail::forward_avg(&F2(0, j), &f.u2(0, j), nx);
  return f;
}

struct ForcedState {
  MacField w;
  Field q;  // at the u1 points
};
inline ForcedState operator+(const ForcedState& a, const ForcedState& b) { return {a.w + b.w, a.q + b.q}; }
inline ForcedState operator*(double s, const ForcedState& a) { return {s * a.w, s * a.q}; }

class MacModel {
 public:
  MacModel(const ChannelGeometry& g, const ShearControl& c) : g_(g), ctl_(c), fft_(g.Nx) {
    g.validate();
    phi_ = phi_half_rows(c, g);
    for (int j = 0; j < g.Ny; ++j) a0_.push_back(c.a0(g.yh(j)));
    const double hs = 1e-5;
    for (int j = 0; j <= g.Ny; ++j) B_.push_back(-(c.a0(g.y(j) + hs) - c.a0(g.y(j) - hs)) / (2 * hs));
    const int n = g.Ny, nm = g.modes() - 1;
    const double h2 = g.dy() * g.dy();
    std::vector<double> a(n, 1.0 / h2), cc(n, 1.0 / h2);
    a[0] = 0;
    cc[n - 1] = 0;
    // mode 0 is handled separately; the batched systems cover modes 1..Nx/2
    Eigen::ArrayXXd bn(nm, n), bf(nm, n);
    for (int m = 1; m <= nm; ++m) {
      dp_.push_back(g.dplus(m));
      dm_.push_back(g.dminus(m));
      for (int j = 0; j < n; ++j) {
        double nb = (j > 0) + (j < n - 1);
        bn(m - 1, j) = -nb / h2 - g.k2(m);
        bf(m - 1, j) = -nb / h2 - g.k2(m) / phi_[j];
      }
    }
    neumann_ = BatchTridiag(a, cc, bn);
    feedback_ = BatchTridiag(a, cc, bf);
  }

  const ChannelGeometry& geometry() const { return g_; }
  const ShearControl& control() const { return ctl_; }
  double gamma() const { return ctl_.gamma; }
  const std::vector<double>& a0() const { return a0_; }
  const std::vector<double>& phi() const { return phi_; }

  /// Leray projection with Neumann conditions
  void project(MacField& v) {
    fft_.forward(v.u1, s1_);
    fft_.forward(v.u2, s2_);
    project_spectral(s1_, s2_);
    fft_.inverse(s1_, v.u1);
    fft_.inverse(s2_, v.u2);
    v.u2.col(0).setZero();
    v.u2.col(g_.Ny).setZero();
  }
  MacField projected(MacField v) {
    project(v);
    return v;
  }

  /// Feedback charge c = C w (so q = -c) and the closed-loop velocity u = w + P(a0 c e_x), for divergence-free w.
  void feedback(const MacField& w, MacField& u, Field& c) {
    const int ny = g_.Ny, nm = g_.modes() - 1;
    const double gm = ctl_.gamma, idy = 1.0 / g_.dy();
    fft_.forward(w.u1, s1_);
    fft_.forward(w.u2, s2_);
    cs_.resize(s1_.rows(), ny);
    gs_.resize(s1_.rows(), ny);
    for (int j = 0; j < ny; ++j) {
      const double aj = a0_[j], f = gm * aj, g = aj / phi_[j];
      cplx* s = &s1_(0, j);
      cplx* cr = &cs_(0, j);
      cplx* gr = &gs_(0, j);
      cr[0] = f * s[0];
      gr[0] = 0.0;
      for (int m = 1; m <= nm; ++m) {
        cr[m] = f * s[m];
        gr[m] = dp_[m - 1] * (g * cr[m]);
      }
    }
    feedback_.solve(&gs_(1, 0), gs_.rows());
    for (int j = 0; j < ny; ++j) {
      const double aj = a0_[j], f = gm * aj, ip = 1.0 / phi_[j];
      cplx* s = &s1_(0, j);
      cplx* cr = &cs_(0, j);
      const cplx* gr = &gs_(0, j);
      cr[0] *= ip;
      s[0] += aj * cr[0];
      for (int m = 1; m <= nm; ++m) {
        const cplx dg = dm_[m - 1] * gr[m];
        cr[m] = (cr[m] - f * dg) * ip;
        s[m] += aj * cr[m] - dg;
      }
    }
    for (int j = 1; j < ny; ++j) {
      cplx* s = &s2_(0, j);
      const cplx *g1 = &gs_(0, j), *g0 = &gs_(0, j - 1);
      for (int m = 1; m <= nm; ++m) s[m] -= (g1[m] - g0[m]) * idy;
    }
    fft_.inverse(s1_, u.u1);
    fft_.inverse(s2_, u.u2);
    fft_.inverse(cs_, c);
    u.u2.col(0).setZero();
    u.u2.col(ny).setZero();
  }

  /// R^{-1} r for the operator R x = x - gamma a0 (P(a0 x e_x))_1
  Field apply_Rinv(const Field& r) {
    const int ny = g_.Ny, nm = g_.modes() - 1;
    const double gm = ctl_.gamma;
    fft_.forward(r, s1_);
    gs_.resize(s1_.rows(), ny);
    for (int j = 0; j < ny; ++j) {
      const double g = a0_[j] / phi_[j];
      gs_(0, j) = 0.0;
      for (int m = 1; m <= nm; ++m) gs_(m, j) = dp_[m - 1] * (g * s1_(m, j));
    }
    feedback_.solve(&gs_(1, 0), gs_.rows());
    for (int j = 0; j < ny; ++j) {
      const double f = gm * a0_[j], ip = 1.0 / phi_[j];
      s1_(0, j) *= ip;
      for (int m = 1; m <= nm; ++m) s1_(m, j) = (s1_(m, j) - f * dm_[m - 1] * gs_(m, j)) * ip;
    }
    Field out;
    fft_.inverse(s1_, out);
    return out;
  }
  Field apply_R(const Field& x) {
    MacField v = MacField::zeros(g_);
    for (int j = 0; j < g_.Ny; ++j) v.u1.col(j) = a0_[j] * x.col(j);
    project(v);
    Field out = x;
    for (int j = 0; j < g_.Ny; ++j) out.col(j) -= ctl_.gamma * a0_[j] * v.u1.col(j);
    return out;
  }
  /// C acting on a divergence-free momentum
  Field apply_C(const MacField& w) {
    Field r(g_.Nx, g_.Ny);
    for (int j = 0; j < g_.Ny; ++j) r.col(j) = ctl_.gamma * a0_[j] * w.u1.col(j);
    return apply_Rinv(r);
  }
  Field apply_T(const Field& x) { return (1.0 + ctl_.gamma) * apply_Rinv(x); }
  Field apply_Tinv(const Field& x) { return apply_R(x) / (1.0 + ctl_.gamma); }

  /// u = P(w - a0 q e_x)
  MacField velocity(const MacField& w, const Field& q) {
    MacField v = w;
    for (int j = 0; j < g_.Ny; ++j) v.u1.col(j) -= a0_[j] * q.col(j);
    project(v);
    return v;
  }
  /// fiber velocity X = q - a0 u1
  Field fiber_velocity(const Field& q, const MacField& u) const {
    Field X = q;
    for (int j = 0; j < g_.Ny; ++j) X.col(j) -= a0_[j] * u.u1.col(j);
    return X;
  }

  /// Closed loop on the momentum w with q = -C w.
  MacField rhs_closed(const MacField& w) {
    MacField u = MacField::zeros(g_);
    Field c;
    feedback(w, u, c);
    Field q = -c;
    MacField f = vortex_force(curl_nodes(w, g_), u, g_) + diamond_force(q, fiber_velocity(q, u), g_);
    project(f);
    return f;
  }

  /// Open-loop Lie-Poisson dynamics plus the fiber force that advects p = T^{-1}(q + C w).
  ForcedState rhs_forced(const ForcedState& s) {
    MacField u = velocity(s.w, s.q);
    MacField dw = vortex_force(curl_nodes(s.w, g_), u, g_) + diamond_force(s.q, fiber_velocity(s.q, u), g_);
    project(dw);
    Field p = momentum_p(s);
    Field dq = -apply_C(dw) - apply_T(skew_advect(u, p, g_));
    return {dw, dq};
  }
  Field momentum_p(const ForcedState& s) { return apply_Tinv(s.q + apply_C(s.w)); }

  /// Physical charged Euler: u_t = P((omega + q B)(u2, -u1)), q_t = -u.grad q, with B = -a0'.
  ForcedState rhs_charged(const ForcedState& s) {
    const MacField& u = s.w;
    Field ws = curl_nodes(u, g_);
    for (int j = 1; j < g_.Ny; ++j) ws.col(j) += B_[j] * 0.5 * (s.q.col(j - 1) + s.q.col(j));
    MacField du = vortex_force(ws, u, g_);
    project(du);
    return {du, -skew_advect(u, s.q, g_)};
  }

  double l2(const Field& f) const { return std::sqrt(f.square().sum() * g_.dx() * g_.dy()); }
  double inner(const MacField& a, const MacField& b) const { return a.dot(b) * g_.dx() * g_.dy(); }

 private:
  void project_spectral(Eigen::ArrayXXcd& a1, Eigen::ArrayXXcd& a2) {
    const int ny = g_.Ny, nm = g_.modes() - 1;
    const double idy = 1.0 / g_.dy();
    gs_.resize(a1.rows(), ny);
    for (int j = 0; j <= ny; ++j) a2(0, j) = 0.0;
    for (int j = 0; j < ny; ++j)
      for (int m = 1; m <= nm; ++m) gs_(m, j) = dp_[m - 1] * a1(m, j) + (a2(m, j + 1) - a2(m, j)) * idy;
    neumann_.solve(&gs_(1, 0), gs_.rows());
    for (int j = 0; j < ny; ++j)
      for (int m = 1; m <= nm; ++m) a1(m, j) -= dm_[m - 1] * gs_(m, j);
    for (int j = 1; j < ny; ++j)
      for (int m = 1; m <= nm; ++m) a2(m, j) -= (gs_(m, j) - gs_(m, j - 1)) * idy;
    for (int m = 1; m <= nm; ++m) {
      a2(m, 0) = 0.0;
      a2(m, ny) = 0.0;
    }
  }

  ChannelGeometry g_;
  ShearControl ctl_;
  RowFFT fft_;
  std::vector<double> phi_, a0_, B_;
  std::vector<cplx> dp_, dm_;
  BatchTridiag neumann_, feedback_;
  Eigen::ArrayXXcd s1_, s2_, cs_, gs_;
};

/// Pointwise (naive) feedback charge evaluated from the momentum, for comparison with the exact operator.
inline Field naive_feedback_charge(const MacField& w, const ShearControl& c, const ChannelGeometry& g) {
  return -apply_C(w, c, g);
}

// ---------------------------------------------------------------------------

struct RayleighResult {
  double rate = 0;         // largest real part
  double wavenumber = 0;   // x-wavenumber attaining it
  Eigen::VectorXcd mode;   // vorticity eigenvector on interior rows
};

/// Linearized vorticity advection about u_e per admissible x-wavenumber 2n/X, finite differences in y.
inline RayleighResult rayleigh_growth_rate(const ChannelGeometry& g, int n_max = 8) {
  g.validate();
  const int N = g.Ny - 1;
  const double h = g.dy();
  Eigen::MatrixXd D2 = Eigen::MatrixXd::Zero(N, N);
  Eigen::VectorXd U(N), Upp(N);
  for (int r = 0; r < N; ++r) {
    double y = g.y(r + 1);
    U(r) = shear_velocity(y);
    Upp(r) = -shear_velocity(y);
    D2(r, r) = -2 / (h * h);
    if (r > 0) D2(r, r - 1) = 1 / (h * h);
    if (r + 1 < N) D2(r, r + 1) = 1 / (h * h);
  }
  RayleighResult best;
  best.rate = -std::numeric_limits<double>::infinity();
  for (int n = 1; n <= std::min(n_max, g.Nx / 2); ++n) {
    double k = 2.0 * n / g.X;
    Eigen::MatrixXd A = D2 - k * k * Eigen::MatrixXd::Identity(N, N);
    Eigen::MatrixXd Ainv = A.inverse();
    Eigen::MatrixXcd L = (-cplx(0, k)) * (Eigen::MatrixXd(U.asDiagonal()) - Upp.asDiagonal() * Ainv).cast<cplx>();
    Eigen::ComplexEigenSolver<Eigen::MatrixXcd> es(L);
    if (es.info() != Eigen::Success) throw numerical_error("eigensolver did not converge");
    Eigen::Index idx;
    double r = es.eigenvalues().real().maxCoeff(&idx);
    if (r > best.rate) {
      best.rate = r;
      best.wavenumber = k;
      best.mode = es.eigenvectors().col(idx);
    }
  }
  return best;
}

}  // namespace geoflow
