#pragma once

#include <cmath>
#include <cstdint>
#include <functional>
#include <limits>
#include <numbers>
#include <optional>
#include <string>
#include <tuple>
#include <vector>

#include "channel.hpp"
#include "control.hpp"
#include "rng.hpp"

namespace geoflow {

/// amplitude * sum_{m,n=1..3} r sin(n pi y / H) cos(2 m x / X + theta), rescaled so max |d omega| = amplitude.
/// Vanishes on the walls and has zero circulation.
inline Field vorticity_perturbation(const ChannelGeometry& g, double amplitude, std::uint64_t seed) {
  Xorshift64Star rng(seed);
  Field d = Field::Zero(g.Nx, g.Ny + 1);
  if (amplitude == 0.0) return d;
  for (int m = 1; m <= 3; ++m)
    for (int n = 1; n <= 3; ++n) {
      double r = 2 * rng.uniform() - 1;
      double th = 2 * std::numbers::pi * rng.uniform();
      for (int j = 1; j < g.Ny; ++j) {
        double sy = std::sin(n * std::numbers::pi * g.y(j) / g.H());
        for (int i = 0; i < g.Nx; ++i) d(i, j) += r * sy * std::cos(2.0 * m * g.x(i) / g.X + th);
      }
    }
  double mx = d.abs().maxCoeff();
  return mx > 0 ? Field(d * (amplitude / mx)) : d;
}

template <class S, class F>
void rk4_step(S& s, double dt, F&& f) {
  S k1 = f(s);
  S k2 = f(S(s + (0.5 * dt) * k1));
  S k3 = f(S(s + (0.5 * dt) * k2));
  S k4 = f(S(s + dt * k3));
  s = S(s + (dt / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4));
}

struct Diagnostics {
  double t = 0, energy = 0, enstrophy = 0, pert_enstrophy = 0, circulation = 0, H2 = 0, p_norm = 0;
};

/// Energy-Casimir bookkeeping around the discrete equilibrium.
class ShearDiagnostics {
 public:
  ShearDiagnostics(const ChannelGeometry& g, const ShearControl& c, double circulation)
      : g_(g), casimir_(c), poisson_(g, phi_half_rows(c, g)), mass_(node_mass(g)), omega_e_(equilibrium_omega(g)),
        ctl_(c) {
    poisson_.solve(omega_e_, circulation, psi_e_);
    // Casimir derivative at the equilibrium minus the discrete stream function
    lin_.resize(g.Nx, g.Ny + 1);
    for (int j = 0; j <= g.Ny; ++j) lin_.col(j) = casimir_.Psi(omega_e_(0, j)) - psi_e_.col(j);
  }

  const Field& omega_e() const { return omega_e_; }
  const Field& psi_e() const { return psi_e_; }
  const CasimirProfile& casimir() const { return casimir_; }

  /// sum M [phi(w) - phi(w_e) - psi_e dw] + h_C(dw), evaluated without cancellation
  double H2(const Field& omega) {
    Field d = omega - omega_e_;
    poisson_.solve(d, 0.0, dpsi_);
    double h = poisson_.energy(dpsi_);
    // phi(w_e + d) - phi(w_e) - phi'(w_e) d = -d^2 int_0^1 (1 - t) / Phi(w_e + t d) dt
    static const double gt[3] = {0.5 - std::sqrt(0.15), 0.5, 0.5 + std::sqrt(0.15)};
    static const double gw[3] = {5.0 / 18, 8.0 / 18, 5.0 / 18};
    double s = 0;
    for (int j = 0; j <= g_.Ny; ++j)
      for (int i = 0; i < g_.Nx; ++i) {
        double dd = d(i, j), we = omega_e_(i, j);
        double q = 0;
        for (int k = 0; k < 3; ++k) q += gw[k] * (1 - gt[k]) / ctl_.phi_of_omega(we + gt[k] * dd);
        s += mass_(i, j) * (-dd * dd * q + lin_(i, j) * dd);
      }
    return h + s;
  }

  Diagnostics evaluate(double t, const Field& omega, double energy, double p_norm = 0.0) {
    Diagnostics r;
    r.t = t;
    r.energy = energy;
    r.enstrophy = (mass_ * omega.square()).sum();
    r.pert_enstrophy = (mass_ * (omega - omega_e_).square()).sum();
    r.circulation = (mass_ * (omega - omega_e_)).sum();
    r.H2 = H2(omega);
    r.p_norm = p_norm;
    return r;
  }

 private:
  ChannelGeometry g_;
  CasimirProfile casimir_;
  ModifiedPoisson poisson_;
  Field mass_, omega_e_, psi_e_, lin_, dpsi_;
  ShearControl ctl_;
};

enum class Formulation { vorticity, velocity, forced };

/// One shear-flow experiment in any of the three formulations; total fields are evolved.
class ShearFlowSim {
 public:
  ShearFlowSim(const ChannelGeometry& g, const ShearControl& c, Formulation f, const Field& omega0)
      : g_(g), ctl_(c), form_(f), circ_(equilibrium_circulation(g)), diag_(g, c, circ_) {
    g.validate();
    if (f == Formulation::vorticity) {
      vort_.emplace(g, c, circ_);
      omega_ = omega0;
    } else {
      mac_.emplace(g, c);
      ModifiedPoisson plain(g, std::vector<double>(g.Ny, 1.0));
      Field psi;
      plain.solve(omega0, circ_, psi);
      w_ = velocity_from_stream(psi, g);
      if (f == Formulation::forced) q_ = -mac_->apply_C(w_);
    }
  }

  Formulation formulation() const { return form_; }
  double time() const { return t_; }
  const ChannelGeometry& geometry() const { return g_; }

  double max_speed() {
    if (vort_) return vort_->max_speed(omega_);
    MacField u = velocity();
    return std::max(u.u1.abs().maxCoeff(), u.u2.abs().maxCoeff());
  }
  double cfl_dt(double cfl) {
    double s = max_speed();
    return cfl * std::min(g_.dx(), g_.dy()) / std::max(s, 1e-12);
  }

  void step(double dt) {
    switch (form_) {
      case Formulation::vorticity: {
        // same stages as rk4_step, without temporaries
        auto& [k, acc, tmp] = rk_;
        vort_->rhs(omega_, k);
        acc = k;
        tmp = omega_ + (0.5 * dt) * k;
        vort_->rhs(tmp, k);
        acc += 2.0 * k;
        tmp = omega_ + (0.5 * dt) * k;
        vort_->rhs(tmp, k);
        acc += 2.0 * k;
        tmp = omega_ + dt * k;
        vort_->rhs(tmp, k);
        acc += k;
        omega_ += (dt / 6.0) * acc;
        break;
      }
      case Formulation::velocity:
        rk4_step(w_, dt, [&](const MacField& w) { return mac_->rhs_closed(w); });
        break;
      case Formulation::forced: {
        ForcedState s{w_, q_};
        rk4_step(s, dt, [&](const ForcedState& x) { return mac_->rhs_forced(x); });
        w_ = std::move(s.w);
        q_ = std::move(s.q);
        break;
      }
    }
    t_ += dt;
    ++steps_;
    if (steps_ % 64 == 0 && !finite()) throw numerical_error("NaN in fluid state at step " + std::to_string(steps_));
  }

  bool finite() const {
    if (vort_) return omega_.allFinite();
    return w_.u1.allFinite() && w_.u2.allFinite() && (form_ != Formulation::forced || q_.allFinite());
  }

  /// nodal vorticity; velocity formulations fill the wall rows with the equilibrium values
  Field omega() const {
    if (vort_) return omega_;
    Field w = curl_nodes(w_, g_);
    w.col(0) = diag_.omega_e().col(0);
    w.col(g_.Ny) = diag_.omega_e().col(g_.Ny);
    return w;
  }

  /// closed-loop velocity
  MacField velocity() {
    if (form_ == Formulation::vorticity) return velocity_from_stream(vort_->stream(omega_), g_);
    if (form_ == Formulation::forced) return mac_->velocity(w_, q_);
    MacField u = MacField::zeros(g_);
    Field c;
    mac_->feedback(w_, u, c);
    return u;
  }

  double energy() {
    if (vort_) return vort_->energy(omega_);
    return 0.5 * mac_->inner(w_, velocity());
  }

  double p_norm() {
    if (form_ != Formulation::forced) return 0.0;
    return mac_->l2(mac_->momentum_p({w_, q_}));
  }

  Diagnostics diagnostics() {
    if (!finite()) throw numerical_error("NaN in fluid state at step " + std::to_string(steps_));
    return diag_.evaluate(t_, omega(), energy(), p_norm());
  }

  ShearDiagnostics& bookkeeping() { return diag_; }
  const MacField& momentum() const { return w_; }
  const Field& charge() const { return q_; }
  MacModel* mac() { return mac_ ? &*mac_ : nullptr; }
  VorticityModel* vorticity_model() { return vort_ ? &*vort_ : nullptr; }
  long steps() const { return steps_; }

 private:
  ChannelGeometry g_;
  ShearControl ctl_;
  Formulation form_;
  double circ_;
  ShearDiagnostics diag_;
  std::optional<VorticityModel> vort_;
  std::optional<MacModel> mac_;
  Field omega_, q_;
  std::tuple<Field, Field, Field> rk_;
  MacField w_;
  double t_ = 0;
  long steps_ = 0;
};

struct RunSettings {
  double t_end = 10;
  double cfl = 0.25;
  double dt = 0;             // 0: from the CFL number and the initial speed
  double sample_every = 1;   // time between diagnostic records
  double snapshot_every = 0; // 0: none
};

struct RunResult {
  std::vector<Diagnostics> series;
  double dt = 0;
  long steps = 0;
  double max_cfl = 0;
};

/// Fixed-step run with periodic diagnostics; `snapshot` receives (t, omega) at the snapshot stride.
inline RunResult run(ShearFlowSim& sim, const RunSettings& s,
                     const std::function<void(double, const Field&)>& snapshot = {},
                     const std::function<void(const std::string&)>& warn = {}) {
  if (!(s.t_end >= 0)) throw config_error("t_end must be non-negative");
  RunResult r;
  r.dt = s.dt > 0 ? s.dt : sim.cfl_dt(s.cfl);
  const long steps = std::lround(s.t_end / r.dt);
  const long sample = std::max(1L, std::lround(s.sample_every / r.dt));
  const long snap = s.snapshot_every > 0 ? std::max(1L, std::lround(s.snapshot_every / r.dt)) : 0;
  const double h = std::min(sim.geometry().dx(), sim.geometry().dy());
  bool warned = false;
  r.series.push_back(sim.diagnostics());
  if (snap && snapshot) snapshot(sim.time(), sim.omega());
  for (long n = 1; n <= steps; ++n) {
    sim.step(r.dt);
    if (n % sample == 0 || n == steps) {
      r.series.push_back(sim.diagnostics());
      double c = sim.max_speed() * r.dt / h;
      r.max_cfl = std::max(r.max_cfl, c);
      if (c > 0.5 && !warned && warn) {
        warn("CFL number " + std::to_string(c) + " exceeds 0.5 at t = " + std::to_string(sim.time()));
        warned = true;
      }
    }
    if (snap && snapshot && n % snap == 0) snapshot(sim.time(), sim.omega());
  }
  r.steps = steps;
  return r;
}

}  // namespace geoflow
