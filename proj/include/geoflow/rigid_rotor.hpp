#pragma once

#include <cmath>
#include <optional>
#include <string>
#include <vector>

#include "kaluza_klein.hpp"

namespace geoflow {

struct RotorParams {
  double I1 = 3, I2 = 2, I3 = 1;
  double i1 = 0.1, i2 = 0.1, i3 = 0.05;

  double lambda1() const { return I1 + i1; }
  double lambda2() const { return I2 + i2; }
  double lambda3() const { return I3 + i3; }

  void validate() const {
    if (!(I1 > I2 && I2 > I3 && I3 > 0)) throw config_error("need I1 > I2 > I3 > 0");
    if (!(i1 == i2 && i2 > i3 && i3 > 0)) throw config_error("need i1 = i2 > i3 > 0");
  }
};

struct RigidState {
  Vec3 pi = Vec3::Zero();
  double q = 0;
};

struct ControlGainK {
  double k = 0;
  double p_k = 0;

  void validate() const {
    if (k == 1.0) throw config_error("k must differ from 1");
  }
};

/// Base metric diag(lambda1, lambda2, I3), inertia i3, connection e3^T.
inline KKData rotor_kk_data(const RotorParams& p) {
  KKData d;
  d.base_metric = Vec3(p.lambda1(), p.lambda2(), p.I3).asDiagonal();
  d.inertia = Mat::Constant(1, 1, p.i3);
  d.connection = Mat::Zero(1, 3);
  d.connection(0, 2) = 1.0;
  return d;
}

/// gamma for which the general feedback C (with R) equals -k Pi3; reduces to -k I3 / i3 to first order in k
inline double gamma_from_gain(double k, const RotorParams& p) { return -k * p.I3 / ((1.0 - k) * p.i3); }

inline double p_tilde(const ControlGainK& g, const RotorParams& p) {
  return p.i3 * g.p_k / (p.i3 - g.k * p.lambda3());
}

struct RigidRate {
  Vec3 dpi;
  double dq;
};

inline RigidRate free_rhs(const RigidState& s, const RotorParams& p) {
  Vec3 omega(s.pi(0) / p.lambda1(), s.pi(1) / p.lambda2(), (s.pi(2) - s.q) / p.I3);
  return {so3_ad_star(omega, s.pi), 0.0};
}

/// Closed loop with rotor momentum q = p_k + k Pi3.
inline Vec3 controlled_rhs(const Vec3& pi, const ControlGainK& g, const RotorParams& p) {
  Vec3 omega(pi(0) / p.lambda1(), pi(1) / p.lambda2(), ((1.0 - g.k) * pi(2) - g.p_k) / p.I3);
  return so3_ad_star(omega, pi);
}

/// Generic Lie-Poisson right-hand side for (Pi, p) under an inverse KK metric (4x4).
inline Vec3 lie_poisson_rhs(const Vec3& pi, double p, const Mat& kk_inv) {
  Eigen::Vector4d z(pi(0), pi(1), pi(2), p);
  Vec3 omega = (kk_inv * z).head<3>();
  return so3_ad_star(omega, pi);
}

inline bool stability_condition(const ControlGainK& g, const RotorParams& p) {
  return g.k < 1.0 && g.k > 1.0 - p.I3 / p.lambda2();
}

inline double free_energy(const RigidState& s, const RotorParams& p) {
  Eigen::Vector4d z(s.pi(0), s.pi(1), s.pi(2), s.q);
  return 0.5 * z.dot(kk_metric_inverse(rotor_kk_data(p)) * z);
}

// closed-loop Hamiltonian of the modified metric, evaluated at p~_k
class ControlledEnergy {
 public:
  ControlledEnergy(const ControlGainK& g, const RotorParams& p)
      : kk_inv_(kk_metric_inverse(modified_kk_data(rotor_kk_data(p), gamma_from_gain(g.k, p)).data)),
        pt_(p_tilde(g, p)) {}

  double operator()(const Vec3& pi) const {
    Eigen::Vector4d z(pi(0), pi(1), pi(2), pt_);
    return 0.5 * z.dot(kk_inv_ * z);
  }
  const Mat& kk_inverse() const { return kk_inv_; }
  double momentum() const { return pt_; }

 private:
  Mat kk_inv_;
  double pt_;
};

/// Numerical Jacobian of the closed loop (central differences; exact for the quadratic field).
inline Eigen::Matrix3d controlled_jacobian(const Vec3& pi, const ControlGainK& g, const RotorParams& p,
                                           double h = 1e-4) {
  Eigen::Matrix3d J;
  for (int c = 0; c < 3; ++c) {
    Vec3 e = Vec3::Zero();
    e(c) = h;
    J.col(c) = (controlled_rhs(pi + e, g, p) - controlled_rhs(pi - e, g, p)) / (2 * h);
  }
  return J;
}

inline double max_real_eigenvalue(const Eigen::Matrix3d& J) {
  Eigen::EigenSolver<Eigen::Matrix3d> es(J, false);
  return es.eigenvalues().real().maxCoeff();
}

enum class Scheme { rk4, midpoint };

struct RigidSample {
  double t;
  Vec3 pi;
  double q, energy, casimir, p_k;
};

struct RigidTrajectory {
  std::vector<RigidSample> samples;
  double max_deviation = 0;  // from the initial axis, over every step
};

/// Fixed-step integration; records every `stride`-th step. Deviation is measured from `axis`.
inline RigidTrajectory integrate(RigidState s, const std::optional<ControlGainK>& gain, const RotorParams& p,
                                 double dt, double t_end, Scheme scheme = Scheme::rk4, long stride = 1,
                                 Vec3 axis = Vec3(0, 1, 0)) {
  if (!(dt > 0)) throw config_error("dt must be positive");
  p.validate();
  std::optional<ControlledEnergy> hc;
  if (gain) {
    gain->validate();
    hc.emplace(*gain, p);
    s.q = gain->p_k + gain->k * s.pi(2);
  }
  auto rate = [&](const Vec3& pi) {
    return gain ? controlled_rhs(pi, *gain, p) : free_rhs({pi, s.q}, p).dpi;
  };
  RigidTrajectory out;
  auto record = [&](double t) {
    double q = gain ? gain->p_k + gain->k * s.pi(2) : s.q;
    double e = gain ? (*hc)(s.pi) : free_energy({s.pi, q}, p);
    double pk = gain ? q - gain->k * s.pi(2) : q;
    out.samples.push_back({t, s.pi, q, e, s.pi.squaredNorm(), pk});
  };
  const long steps = std::lround(t_end / dt);
  record(0.0);
  for (long n = 1; n <= steps; ++n) {
    const Vec3& x = s.pi;
    if (scheme == Scheme::rk4) {
      Vec3 k1 = rate(x), k2 = rate(x + 0.5 * dt * k1), k3 = rate(x + 0.5 * dt * k2), k4 = rate(x + dt * k3);
      s.pi = x + dt / 6.0 * (k1 + 2 * k2 + 2 * k3 + k4);
    } else {
      Vec3 y = x;
      for (int it = 0; it < 50; ++it) {
        Vec3 ny = x + dt * rate(0.5 * (x + y));
        bool done = (ny - y).lpNorm<Eigen::Infinity>() < 1e-15 * (1 + x.norm());
        y = ny;
        if (done) break;
      }
      s.pi = y;
    }
    if (!s.pi.allFinite()) throw numerical_error("NaN in rigid-body state at step " + std::to_string(n));
    out.max_deviation = std::max(out.max_deviation, (s.pi - axis).norm());
    if (n % stride == 0 || n == steps) record(n * dt);
  }
  return out;
}

/// <d nu, M^-1 d nu + [v, M^-1 nu_e]> with d nu = ad(v)^* nu_e.
inline double second_variation_so3(const Vec3& nu_e, const Vec3& v, const Eigen::Matrix3d& metric) {
  Vec3 dnu = so3_ad_star(v, nu_e);
  Eigen::Matrix3d Minv = metric.inverse();
  return dnu.dot(Minv * dnu + v.cross(Minv * nu_e));
}

/// The form restricted to the orbit tangent, in an orthonormal basis of nu_e's complement.
inline Eigen::Matrix2d second_variation_so3_reduced(const Vec3& nu_e, const Eigen::Matrix3d& metric) {
  Vec3 n = nu_e.normalized();
  Vec3 a = (std::abs(n(0)) < 0.9 ? Vec3::UnitX() : Vec3::UnitY());
  Vec3 e1 = (a - a.dot(n) * n).normalized();
  Vec3 e2 = n.cross(e1);
  Vec3 b[2] = {e1, e2};
  Eigen::Matrix2d Q;
  for (int r = 0; r < 2; ++r)
    for (int c = 0; c < 2; ++c)
      Q(r, c) = 0.25 * (second_variation_so3(nu_e, b[r] + b[c], metric) -
                        second_variation_so3(nu_e, b[r] - b[c], metric));
  return Q;
}

}  // namespace geoflow
