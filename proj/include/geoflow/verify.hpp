#pragma once

#include <chrono>
#include <cmath>
#include <cstdio>
#include <functional>
#include <random>
#include <string>
#include <vector>

#include "rigid_rotor.hpp"
#include "simulation.hpp"
#include "stability.hpp"

namespace geoflow {

struct CheckResult {
  std::string name;
  bool pass = false;
  std::string detail;
  double seconds = 0;
};

inline std::string fmt_g(double v, int digits = 3) {
  char b[64];
  std::snprintf(b, sizeof b, "%.*g", digits, v);
  return b;
}

/// Runs `body(detail)`; exceptions turn into a failed check carrying the message.
inline CheckResult run_check(const std::string& name, const std::function<bool(std::string&)>& body) {
  CheckResult r{name, false, "", 0};
  auto t0 = std::chrono::steady_clock::now();
  try {
    r.pass = body(r.detail);
  } catch (const std::exception& e) {
    r.detail = std::string("error: ") + e.what();
  }
  r.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  return r;
}

/// The fixed (X, Y) list used by the eigenvalue-bound sweeps.
inline std::vector<std::pair<double, double>> bound_combos() {
  std::vector<std::pair<double, double>> v;
  for (double X : {0.5, 1.0, 2.0, 4.0})
    for (double Y : {0.6, 0.75, 0.9}) v.emplace_back(X, Y);
  return v;
}

namespace detail {

inline Mat random_spd(int n, std::mt19937_64& rng) {
  std::normal_distribution<double> N;
  Mat a(n, n);
  for (int i = 0; i < n; ++i)
    for (int j = 0; j < n; ++j) a(i, j) = N(rng);
  return a * a.transpose() + n * Mat::Identity(n, n);
}

inline double inf_norm(const Mat& a) { return a.cwiseAbs().maxCoeff(); }

}  // namespace detail

inline CheckResult check_metric(int samples = 1000) {
  return run_check("metric identities", [&](std::string& d) {
    std::mt19937_64 rng(2024);
    std::normal_distribution<double> N;
    double worst = 0;
    for (int s = 0; s < samples; ++s) {
      int n = 1 + s % 5, m = 1 + (s / 5) % 3;
      KKData k{detail::random_spd(n, rng), detail::random_spd(m, rng), Mat(m, n)};
      for (int i = 0; i < m; ++i)
        for (int j = 0; j < n; ++j) k.connection(i, j) = N(rng);
      worst = std::max(worst, detail::inf_norm(kk_metric(k) * kk_metric_inverse(k) - Mat::Identity(n + m, n + m)));
    }
    KKData rb = rotor_kk_data(RotorParams{});
    double fac = 0;
    for (int s = 0; s <= 100; ++s) {
      auto mk = modified_kk_data(rb, -0.5 + 0.01 * s);
      fac = std::max(fac, detail::inf_norm(kk_metric_inverse(mk.data) - kk_metric_inverse(rb) * feedback_factor(mk)));
    }
    d = "inverse residual " + fmt_g(worst) + ", factorization residual " + fmt_g(fac);
    return worst < 1e-10 && fac < 1e-10;
  });
}

inline CheckResult check_rigid(double t_end = 1000.0, double dt = 1e-2) {
  return run_check("rigid-body stabilization", [&](std::string& d) {
    RotorParams p;
    RigidState s0;
    s0.pi = Vec3(1e-3 / std::sqrt(2.0), 1.0, 1e-3 / std::sqrt(2.0));
    auto free_run = integrate(s0, std::nullopt, p, dt, 100.0, Scheme::midpoint, 1000);
    ControlGainK k{0.8, 0.0};
    auto ctl = integrate(s0, k, p, dt, t_end, Scheme::midpoint, 1000);
    double dc = 0, de = 0, dp = 0;
    const auto& f = ctl.samples.front();
    for (const auto& x : ctl.samples) {
      dc = std::max(dc, std::abs(x.casimir - f.casimir) / f.casimir);
      de = std::max(de, std::abs(x.energy - f.energy) / std::abs(f.energy));
      dp = std::max(dp, std::abs(x.p_k - f.p_k));
    }
    d = "free deviation " + fmt_g(free_run.max_deviation) + ", controlled deviation " +
        fmt_g(ctl.max_deviation) + ", drift |Pi|^2 " + fmt_g(dc) + " h_C " + fmt_g(de) + " p_k " + fmt_g(dp);
    return free_run.max_deviation >= 0.1 && ctl.max_deviation < 1e-2 && dc < 1e-8 && de < 1e-8 && dp < 1e-8;
  });
}

inline CheckResult check_threshold(double step = 1e-4) {
  return run_check("linearized threshold", [&](std::string& d) {
    RotorParams p;
    const double expected = 1.0 - p.I3 / p.lambda2();
    // smallest grid gain above which every grid gain is neutrally stable
    double onset = std::nan("");
    const long n = std::lround(0.99 / step);
    for (long i = n; i >= 0; --i) {
      double k = i * step;
      if (max_real_eigenvalue(controlled_jacobian(Vec3(0, 1, 0), {k, 0.0}, p)) > 1e-9) break;
      onset = k;
    }
    d = "neutral from k = " + fmt_g(onset, 8) + ", predicted " + fmt_g(expected, 8);
    return std::abs(onset - expected) <= step;
  });
}

inline CheckResult check_design_identity() {
  return run_check("design identity", [&](std::string& d) {
    double worst = 0;
    for (int a = 0; a < 10; ++a)
      for (int b = 0; b < 10; ++b) {
        double X = 1.0 + a, Y = 0.5 + 0.05 * b;
        auto c = design_constants(X, Y);
        worst = std::max(worst, std::abs(c.alpha * X * X + c.beta * Y * Y - (1.0 - c.r)));
      }
    d = "max residual " + fmt_g(worst);
    return worst < 1e-14;
  });
}

inline CheckResult check_second_variation(int n = 64) {
  return run_check("second-variation definiteness", [&](std::string& d) {
    ChannelGeometry g{2.0, 0.9, n, n};
    auto off = definiteness(second_variation_matrix(ShearControl::off(2.0, 0.9), g));
    auto on = definiteness(second_variation_matrix(ShearControl::designed(2.0, 0.9), g));
    d = "uncontrolled max " + fmt_g(off.max) + ", designed max " + fmt_g(on.max) + " (" + std::to_string(n) + "x" +
        std::to_string(n) + ")";
    return off.max > 0 && on.max < 0;
  });
}

inline CheckResult check_eigenbound(std::vector<int> resolutions = {64, 128}) {
  return run_check("eigenvalue bound", [&](std::string& d) {
    double worst = std::numeric_limits<double>::infinity();
    std::string at;
    for (int res : resolutions)
      for (auto [X, Y] : bound_combos()) {
        ChannelGeometry g{X, Y, res, res};
        auto s = drifted_setup(ShearControl::designed(X, Y), g);
        double lam = lambda1_drifted(s, g);
        double pi2 = std::numbers::pi * std::numbers::pi;
        double bound = pi2 / (pi2 * X * X + s.Z() * s.Z());
        if (lam / bound < worst) {
          worst = lam / bound;
          at = "(" + fmt_g(X) + ", " + fmt_g(Y) + ") at " + std::to_string(res);
        }
      }
    d = "min lambda1 / bound " + fmt_g(worst, 6) + " " + at;
    return worst >= 1.0;
  });
}

/// Seeded perturbation of the shear equilibrium, run to t_end with records every `every`.
inline RunResult shear_experiment(const ChannelGeometry& g, const ShearControl& c, Formulation f, double t_end,
                                  double every = 0.5, double amplitude = 1e-4, std::uint64_t seed = 1) {
  Field w0 = equilibrium_omega(g) + vorticity_perturbation(g, amplitude, seed);
  ShearFlowSim sim(g, c, f, w0);
  RunSettings s;
  s.t_end = t_end;
  s.sample_every = every;
  return run(sim, s);
}

inline double max_rel_drift(const std::vector<Diagnostics>& v, double t_max, double Diagnostics::*m, bool relative) {
  double ref = v.front().*m, w = 0;
  for (const auto& x : v)
    if (x.t <= t_max + 1e-9) w = std::max(w, std::abs(x.*m - ref));
  return relative ? w / std::abs(ref) : w;
}

inline CheckResult check_conservation(const RunResult& off, const RunResult& on, double t_max) {
  return run_check("conservation", [&](std::string& d) {
    double e = max_rel_drift(off.series, t_max, &Diagnostics::energy, true);
    double z = max_rel_drift(off.series, t_max, &Diagnostics::enstrophy, true);
    double c = max_rel_drift(off.series, t_max, &Diagnostics::circulation, false);
    double h = max_rel_drift(on.series, t_max, &Diagnostics::H2, true);
    d = "energy " + fmt_g(e) + ", enstrophy " + fmt_g(z) + ", circulation " + fmt_g(c) + ", controlled H2 " + fmt_g(h) +
        " over t <= " + fmt_g(t_max);
    return e < 1e-6 && z < 1e-6 && c < 1e-10 && h < 1e-4;
  });
}

/// growth factor of the perturbation enstrophy and the fitted exponential rate of its amplitude
inline std::pair<double, double> perturbation_growth(const std::vector<Diagnostics>& v) {
  double z0 = v.front().pert_enstrophy, zmax = z0;
  for (const auto& x : v) zmax = std::max(zmax, x.pert_enstrophy);
  // least-squares slope of log over the records up to the first peak
  double sx = 0, sy = 0, sxx = 0, sxy = 0;
  int n = 0;
  for (const auto& x : v) {
    double y = 0.5 * std::log(x.pert_enstrophy);
    sx += x.t, sy += y, sxx += x.t * x.t, sxy += x.t * y, ++n;
    if (x.pert_enstrophy >= zmax) break;
  }
  double rate = n > 1 ? (n * sxy - sx * sy) / (n * sxx - sx * sx) : 0.0;
  return {zmax / z0, rate};
}

inline CheckResult check_stabilization(const ChannelGeometry& g, const RunResult& off, const RunResult& on,
                                       const ShearControl& c) {
  return run_check("nonlinear stabilization", [&](std::string& d) {
    auto [grow, rate] = perturbation_growth(off.series);
    double ray = rayleigh_growth_rate(g).rate;
    bool rate_ok = ray > 0 && std::abs(rate - ray) <= 0.2 * ray;
    double z0 = on.series.front().pert_enstrophy, zmax = z0;
    for (const auto& x : on.series) zmax = std::max(zmax, x.pert_enstrophy);
    double bound = enstrophy_bound(c, on.series.front().H2);
    d = "uncontrolled growth " + fmt_g(grow) + "x (fitted rate " + fmt_g(rate) + ", linear rate " + fmt_g(ray) +
        "); controlled growth " + fmt_g(zmax / z0) + "x, max " + fmt_g(zmax) + " vs bound " + fmt_g(bound);
    return grow >= 10 && rate_ok && zmax <= 4 * z0 && zmax <= bound;
  });
}

/// Relative L2 difference of interior vorticity between the velocity and vorticity closed loops at time t.
inline double formulation_gap(int nx, int ny, double t, double X = 2.0, double Y = 0.9) {
  ChannelGeometry g{X, Y, nx, ny};
  auto c = ShearControl::designed(X, Y);
  Field w0 = equilibrium_omega(g) + vorticity_perturbation(g, 1e-4, 1);
  ShearFlowSim a(g, c, Formulation::vorticity, w0), b(g, c, Formulation::velocity, w0);
  double dt = a.cfl_dt(0.25);
  long n = std::lround(t / dt);
  for (long k = 0; k < n; ++k) {
    a.step(dt);
    b.step(dt);
  }
  Field wa = a.omega();
  Field dw = (wa - b.omega()).middleCols(1, ny - 1);
  return std::sqrt(dw.square().sum() / wa.middleCols(1, ny - 1).square().sum());
}

inline CheckResult check_equivalence(int nx, int ny, double t, double tol, bool refine) {
  return run_check("formulation equivalence", [&](std::string& d) {
    double coarse = formulation_gap(nx, ny, t);
    d = "gap " + fmt_g(coarse) + " at " + std::to_string(nx) + "x" + std::to_string(ny + 1);
    bool ok = coarse < tol;
    if (refine) {
      double fine = formulation_gap(2 * nx, 2 * ny, t);
      d += ", " + fmt_g(fine) + " at " + std::to_string(2 * nx) + "x" + std::to_string(2 * ny + 1);
      ok = ok && fine < coarse;
    }
    d += ", t = " + fmt_g(t);
    return ok;
  });
}

inline CheckResult check_force(int nx, int ny, double t_end) {
  return run_check("force vanishing and p-advection", [&](std::string& d) {
    ChannelGeometry g{2.0, 0.9, nx, ny};
    auto c = ShearControl::designed(2.0, 0.9);
    MacModel m(g, c);
    auto random_solenoidal = [&](unsigned seed) {
      Xorshift64Star r(seed);
      MacField v = MacField::zeros(g);
      for (int j = 0; j < g.Ny; ++j)
        for (int i = 0; i < g.Nx; ++i) v.u1(i, j) = 2 * r.uniform() - 1;
      for (int j = 1; j < g.Ny; ++j)
        for (int i = 0; i < g.Nx; ++i) v.u2(i, j) = 2 * r.uniform() - 1;
      return m.projected(v);
    };
    MacField w = random_solenoidal(1000);
    MacField u = MacField::zeros(g);
    Field cw;
    m.feedback(w, u, cw);
    Field q = -cw;
    MacField f = diamond_force(q, m.fiber_velocity(q, u), g);
    double worst = 0;
    for (unsigned s = 0; s < 50; ++s) worst = std::max(worst, std::abs(m.inner(f, random_solenoidal(1 + s))));

    Field w0 = equilibrium_omega(g) + vorticity_perturbation(g, 1e-2, 2);
    ShearFlowSim sim(g, c, Formulation::forced, w0);
    double dt = sim.cfl_dt(0.25), pmax = sim.p_norm();
    long n = std::lround(t_end / dt);
    for (long k = 1; k <= n; ++k) {
      sim.step(dt);
      if (k % 16 == 0 || k == n) pmax = std::max(pmax, sim.p_norm());
    }
    d = "max |<f, v>| " + fmt_g(worst) + " over 50 fields, max |p| " + fmt_g(pmax) + " to t = " + fmt_g(t_end);
    return worst < 1e-8 && pmax < 1e-6;
  });
}

}  // namespace geoflow
