#pragma once

#include <algorithm>
#include <cmath>
#include <numbers>
#include <optional>
#include <string>
#include <vector>

#include "grid.hpp"

namespace geoflow {

// Equilibrium shear: u_e = (sin(y + pi/2), 0), stream function cos(y + pi/2).
inline double shear_velocity(double y) { return std::sin(y + std::numbers::pi / 2); }
inline double shear_stream(double y) { return std::cos(y + std::numbers::pi / 2); }
inline double shear_vorticity(double y) { return -std::cos(y + std::numbers::pi / 2); }

struct DesignConstants {
  double b_bar, b_under, alpha, beta, r;
};

inline DesignConstants design_constants(double X, double Y, bool allow_narrow = false) {
  if (!(X > 0)) throw config_error("channel length factor X must be positive");
  if (!(Y < 1.0)) throw config_error("width out of validity range (need Y < 1)");
  if (!(Y >= 0.5) && !allow_narrow) throw config_error("width out of validity range (need Y >= 1/2)");
  if (!(Y > 0)) throw config_error("width out of validity range");
  DesignConstants d;
  d.r = (1.0 - Y * Y) / 3.0;
  d.alpha = d.r / (X * X);
  d.beta = (Y * Y + d.r) / (Y * Y);
  d.b_bar = std::sqrt(1.0 - d.alpha / d.beta);
  if (!(d.alpha < 1.0)) throw config_error("channel too short for this width (need (1 - Y^2) / 3 < X^2)");
  d.b_under = std::sqrt(1.0 - d.alpha);
  return d;
}

/// b(w) = b_bar - (b_bar - b_under) w on [0, 1], saturating smoothly to (b_under - eps, b_bar + eps) outside.
struct PotentialMap {
  double b_bar = 0, b_under = 0, eps = 0;
  double omega_scale = 1;  // divides w; differs from 1 only for narrow channels

  double slope() const { return (b_bar - b_under) / omega_scale; }
  double operator()(double w) const {
    double s = w / omega_scale;
    double d = b_bar - b_under;
    if (d == 0.0 || eps == 0.0 || (s >= 0.0 && s <= 1.0)) return b_bar - d * s;
    double width = eps / d;  // margin in the scaled variable
    if (s > 1.0) return b_bar - d * (1.0 + width * std::tanh((s - 1.0) / width));
    return b_bar - d * (width * std::tanh(s / width));
  }
  /// first and second derivatives in w
  double d1(double w) const {
    double s = w / omega_scale, d = b_bar - b_under;
    if (d == 0.0 || eps == 0.0 || (s >= 0.0 && s <= 1.0)) return -d / omega_scale;
    double width = eps / d, a = (s > 1.0 ? s - 1.0 : s) / width;
    double sech = 1.0 / std::cosh(a);
    return -d * sech * sech / omega_scale;
  }
  double d2(double w) const {
    double s = w / omega_scale, d = b_bar - b_under;
    if (d == 0.0 || eps == 0.0 || (s >= 0.0 && s <= 1.0)) return 0.0;
    double width = eps / d, a = (s > 1.0 ? s - 1.0 : s) / width;
    double sech = 1.0 / std::cosh(a);
    return 2 * d / width * sech * sech * std::tanh(a) / (omega_scale * omega_scale);
  }
};

enum class ControlKind { off, designed, constant };

struct ShearControl {
  ControlKind kind = ControlKind::off;
  double gamma = 0;
  double X = 2, Y = 0.9;
  std::optional<DesignConstants> design;
  PotentialMap b;
  double a0_constant = 0;

  static ShearControl off(double X, double Y) {
    ShearControl c;
    c.X = X;
    c.Y = Y;
    return c;
  }

  static ShearControl constant(double X, double Y, double gamma, double a0) {
    ShearControl c;
    c.kind = ControlKind::constant;
    c.X = X;
    c.Y = Y;
    c.gamma = gamma;
    c.a0_constant = a0;
    c.b = {a0, a0, 0.0, 1.0};
    return c;
  }

  /// eps < 0 picks the largest margin with kappa * Phi_max < r / 2
  static ShearControl designed(double X, double Y, double gamma = 1.0, double eps = -1, bool allow_narrow = false) {
    ShearControl c;
    c.kind = ControlKind::designed;
    c.X = X;
    c.Y = Y;
    c.gamma = gamma;
    c.design = design_constants(X, Y, allow_narrow);
    const auto& d = *c.design;
    double scale = Y >= 0.5 ? 1.0 : std::sin(Y * std::numbers::pi);
    c.b = {d.b_bar, d.b_under, 0.0, scale};
    if (eps < 0) {
      double pm = 1.0 - d.b_under * d.b_under;
      double s = 0.5 * d.r * pm / (1.0 - 0.5 * d.r);
      eps = 0.999 * (d.b_under - std::sqrt(d.b_under * d.b_under - s));
      eps = std::min(eps, 0.5 * (1.0 - d.b_bar));
    }
    c.b.eps = eps;
    return c;
  }

  double a0_of_omega(double w) const { return kind == ControlKind::off ? 0.0 : b(w); }
  double a0(double y) const { return a0_of_omega(shear_vorticity(y)); }
  /// d a0 / dy and d^2 a0 / dy^2
  double a0_y(double y) const {
    if (kind == ControlKind::off) return 0.0;
    return b.d1(shear_vorticity(y)) * std::cos(y);
  }
  double a0_yy(double y) const {
    if (kind == ControlKind::off) return 0.0;
    double w = shear_vorticity(y), c = std::cos(y);
    return b.d2(w) * c * c - b.d1(w) * std::sin(y);
  }
  double phi(double y) const { return 1.0 - gamma * a0(y) * a0(y); }
  double phi_of_omega(double w) const {
    double a = a0_of_omega(w);
    return 1.0 - gamma * a * a;
  }
  /// pointwise T = (1 + gamma) / Phi
  double T(double y) const { return (1.0 + gamma) / phi(y); }

  /// range of the equilibrium vorticity over the channel
  std::pair<double, double> omega_range() const {
    double top = shear_vorticity(Y * std::numbers::pi);
    double lo = std::min(0.0, top);
    double hi = Y >= 0.5 ? 1.0 : top;
    return {lo, hi};
  }
  double phi_max() const {
    auto [lo, hi] = omega_range();
    return std::max(phi_of_omega(lo), phi_of_omega(hi));
  }
  double phi_min() const {
    auto [lo, hi] = omega_range();
    return std::min(phi_of_omega(lo), phi_of_omega(hi));
  }
  double kappa() const {
    if (!design) return 0.0;
    double pm = phi_max(), bu = design->b_under, e = b.eps;
    return e * (2 * bu - e) / (pm * (pm + (2 * bu - e) * e));
  }

  std::vector<double> a0_profile(const std::vector<double>& y) const {
    std::vector<double> out(y.size());
    std::transform(y.begin(), y.end(), out.begin(), [&](double v) { return a0(v); });
    return out;
  }
};

/// Feedback charge q = -gamma a0 u1 / (1 - gamma a0^2), pointwise at the u1 points.
inline Field apply_C(const MacField& u, const ShearControl& c, const ChannelGeometry& g) {
  Field q(g.Nx, g.Ny);
  for (int j = 0; j < g.Ny; ++j) {
    double a = c.a0(g.yh(j)), ph = c.phi(g.yh(j));
    if (!(ph > 0)) throw numerical_error("metric not positive definite (gamma a0^2 >= 1)");
    q.col(j) = -c.gamma * a * u.u1.col(j) / ph;
  }
  return q;
}

struct ConditionLine {
  std::string name;
  double lhs;
  bool pass;
};

struct ConditionReport {
  std::vector<ConditionLine> lines;
  double phi_max = 0, phi_min = 0;
  bool all_pass() const {
    return std::all_of(lines.begin(), lines.end(), [](const ConditionLine& l) { return l.pass; });
  }
  const ConditionLine& operator[](const std::string& n) const {
    for (const auto& l : lines)
      if (l.name == n) return l;
    throw config_error("no condition named " + n);
  }
};

inline ConditionReport condition_report(const ShearControl& c, const ChannelGeometry& g) {
  ConditionReport rep;
  double amax = 0;
  for (int j = 0; j <= g.Ny; ++j) amax = std::max(amax, c.gamma * c.a0(g.y(j)) * c.a0(g.y(j)));
  rep.lines.push_back({"positivity", amax, amax < 1.0});

  double worst = std::numeric_limits<double>::infinity();
  const double h = g.dy();
  for (int j = 1; j < g.Ny; ++j) {
    double a = c.a0(g.y(j));
    double a2 = (c.a0(g.y(j + 1)) - 2 * a + c.a0(g.y(j - 1))) / (h * h);
    worst = std::min(worst, a * a2);
  }
  rep.lines.push_back({"no_inflection", worst, c.gamma > 0 && worst >= -1e-10});

  rep.phi_max = c.phi_max();
  rep.phi_min = c.phi_min();
  double nd = rep.phi_min > 0 ? rep.phi_max * c.X * c.X + rep.phi_max / rep.phi_min * c.Y * c.Y
                              : std::numeric_limits<double>::infinity();
  rep.lines.push_back({"nd_condition", nd, nd < 1.0});
  return rep;
}

/// Psi_C(w) = -int_0^w dn / Phi(n) and phi_C(t) = int_0^t Psi_C, tabulated with Hermite interpolation.
class CasimirProfile {
 public:
  explicit CasimirProfile(const ShearControl& c, double lo = -2.0, double hi = 3.0, int per_unit = 8192)
      : c_(c), lo_(lo), h_(1.0 / per_unit) {
    const int n = static_cast<int>(std::lround((hi - lo) * per_unit));
    const int k0 = static_cast<int>(std::lround(-lo * per_unit));
    psi_.assign(n + 1, 0.0);
    phi_.assign(n + 1, 0.0);
    auto f = [&](double w) { return -1.0 / c_.phi_of_omega(w); };
    auto simpson = [&](double a, double b) { return (b - a) / 6.0 * (f(a) + 4 * f(0.5 * (a + b)) + f(b)); };
    for (int k = k0 + 1; k <= n; ++k) psi_[k] = psi_[k - 1] + simpson(node(k - 1), node(k));
    for (int k = k0 - 1; k >= 0; --k) psi_[k] = psi_[k + 1] - simpson(node(k), node(k + 1));
    auto seg = [&](int k) {  // int over [node k, node k+1] of Psi, corrected trapezoid
      return h_ / 2 * (psi_[k] + psi_[k + 1]) + h_ * h_ / 12 * (f(node(k)) - f(node(k + 1)));
    };
    for (int k = k0 + 1; k <= n; ++k) phi_[k] = phi_[k - 1] + seg(k - 1);
    for (int k = k0 - 1; k >= 0; --k) phi_[k] = phi_[k + 1] - seg(k);
  }

  double Psi(double w) const { return hermite(psi_, w, [&](double v) { return -1.0 / c_.phi_of_omega(v); }); }
  double phi(double w) const {
    return hermite(phi_, w, [&](double v) { return table_psi_exact(v); });
  }
  /// -phi'' = 1 / Phi(w)
  double neg_phi_dd(double w) const { return 1.0 / c_.phi_of_omega(w); }

 private:
  double node(int k) const { return lo_ + k * h_; }
  double table_psi_exact(double v) const { return Psi(v); }
  template <class D>
  double hermite(const std::vector<double>& t, double w, D deriv) const {
    double s = (w - lo_) / h_;
    int k = static_cast<int>(std::floor(s));
    if (k < 0 || k + 1 >= static_cast<int>(t.size())) throw numerical_error("vorticity outside Casimir table");
    double x0 = node(k), x1 = node(k + 1);
    double u = (w - x0) / h_;
    double h00 = (1 + 2 * u) * (1 - u) * (1 - u), h10 = u * (1 - u) * (1 - u);
    double h01 = u * u * (3 - 2 * u), h11 = u * u * (u - 1);
    return h00 * t[k] + h10 * h_ * deriv(x0) + h01 * t[k + 1] + h11 * h_ * deriv(x1);
  }

  ShearControl c_;
  double lo_, h_;
  std::vector<double> psi_, phi_;
};

/// A-priori bound on the perturbation enstrophy from the conserved functional H2.
inline double enstrophy_bound(const ShearControl& c, double H2) {
  if (!c.design) throw config_error("enstrophy bound needs a designed control");
  double pm = c.phi_max(), k = c.kappa();
  if (!(k * pm < c.design->r)) throw config_error("extension margin too large");
  return 2.0 * pm * std::abs(H2) / (c.design->r - k * pm);
}

}  // namespace geoflow
