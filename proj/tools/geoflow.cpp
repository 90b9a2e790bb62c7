// geoflow: rigid-rotor and channel shear-flow experiments, design reports, verification suites.

#include <cstdlib>
#include <filesystem>
#include <iostream>
#include <sstream>

#include <CLI11.hpp>

#include <geoflow/config.hpp>
#include <geoflow/io.hpp>
#include <geoflow/verify.hpp>

using namespace geoflow;
namespace fs = std::filesystem;

namespace {

enum Exit { ok = 0, bad_config = 1, numerical = 2, unstable = 3, verify_failed = 4 };

struct precondition_error : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct Options {
  std::string config, out = ".";
  std::optional<std::uint64_t> seed;
  bool require_stable = false, quick = false;
  double X = 2.0, Y = 0.9, gamma = 1.0;
  int n = 32;
  std::string suite;
};

Config load_config(const Options& o) {
  if (o.config.empty()) return Config::parse("", "defaults");
  return Config::parse(read_file(o.config), o.config);
}

void emit(const Options& o, const std::string& name, const std::string& text) {
  fs::create_directories(o.out);
  write_atomic(fs::path(o.out) / name, text);
}

int threads_from_env() {
  const char* v = std::getenv("GEOFLOW_THREADS");
  if (!v) return 1;
  char* end = nullptr;
  long n = std::strtol(v, &end, 10);
  if (end == v || *end != '\0' || n < 1) throw config_error(std::string("GEOFLOW_THREADS must be a positive integer, got '") + v + "'");
  return static_cast<int>(n);
}

// rigidbody

int cmd_rigidbody(const Options& o) {
  Config c = load_config(o);
  c.choice("system.kind", "rigid-body", {"rigid-body"});
  RotorParams p;
  auto I = c.list("rigid.I", 3, {p.I1, p.I2, p.I3});
  auto i = c.list("rigid.i", 3, {p.i1, p.i2, p.i3});
  p = {I[0], I[1], I[2], i[0], i[1], i[2]};
  p.validate();
  auto pi0 = c.list("rigid.Pi0", 3, {0.0, 1.0, 0.0});
  RigidState s;
  s.pi = Vec3(pi0[0], pi0[1], pi0[2]);
  s.q = c.num("rigid.q0", 0.0);
  double amp = c.num("perturbation.amplitude", 0.0);
  std::uint64_t seed = c.u64("seed", 1);
  if (o.seed) seed = *o.seed;
  Xorshift64Star rng(seed);
  for (int k = 0; k < 3 && amp != 0.0; ++k) s.pi(k) += amp * (2 * rng.uniform() - 1);
  std::optional<ControlGainK> gain;
  if (c.choice("control.mode", "off", {"off", "gain"}) == "gain") {
    gain = ControlGainK{c.num("control.k"), c.num("control.p_k", 0.0)};
    gain->validate();
  }
  double dt = c.num("integration.dt", 1e-2), t_end = c.num("integration.t_end", 100.0);
  if (!(t_end >= 0)) throw config_error("integration.t_end must be non-negative");
  auto scheme = c.choice("integration.scheme", "midpoint", {"rk4", "midpoint"}) == "rk4" ? Scheme::rk4 : Scheme::midpoint;
  long stride = c.integer("integration.stride", 10);
  if (stride < 1) throw config_error("integration.stride must be positive");
  c.check_unused();
  if (gain && !stability_condition(*gain, p))
    std::cerr << "warning: k outside the stabilizing range (" << 1.0 - p.I3 / p.lambda2() << ", 1)\n";
  auto tr = integrate(s, gain, p, dt, t_end, scheme, stride);
  emit(o, "trajectory.csv", rigid_csv(tr));
  std::cout << "max_deviation: " << format_double(tr.max_deviation) << "\n";
  return ok;
}

// shearflow

ShearControl control_from(const Config& c, double X, double Y) {
  auto mode = c.choice("control.mode", "designed", {"off", "designed", "explicit"});
  double gamma = c.num("control.gamma", 1.0);
  if (mode == "off") return ShearControl::off(X, Y);
  if (mode == "explicit") return ShearControl::constant(X, Y, gamma, c.num("control.a0"));
  return ShearControl::designed(X, Y, gamma, c.num("control.eps", -1.0));
}

std::string report_text(const ConditionReport& r) {
  std::ostringstream s;
  for (const auto& l : r.lines) s << l.name << "_lhs: " << fmt_g(l.lhs, 6) << "\n" << l.name << ": " << (l.pass ? "pass" : "fail") << "\n";
  s << "phi_max: " << format_double(r.phi_max) << "\nphi_min: " << format_double(r.phi_min) << "\n";
  return s.str();
}

int cmd_shearflow(const Options& o) {
  Config c = load_config(o);
  c.choice("system.kind", "shear-flow", {"shear-flow"});
  ChannelGeometry g{c.num("geometry.X", 2.0), c.num("geometry.Y", 0.9), static_cast<int>(c.integer("geometry.Nx", 128)),
                    static_cast<int>(c.integer("geometry.Ny", 64))};
  g.validate();
  ShearControl ctl = control_from(c, g.X, g.Y);
  auto form_name = c.choice("integration.formulation", "vorticity", {"vorticity", "velocity", "forced"});
  Formulation form = form_name == "vorticity" ? Formulation::vorticity
                     : form_name == "velocity" ? Formulation::velocity
                                               : Formulation::forced;
  RunSettings rs;
  rs.t_end = c.num("integration.t_end", rs.t_end);
  rs.cfl = c.num("integration.cfl", rs.cfl);
  rs.dt = c.num("integration.dt", 0.0);
  rs.sample_every = c.num("integration.sample_every", rs.sample_every);
  rs.snapshot_every = c.num("output.snapshot_every", 0.0);
  double amp = c.num("perturbation.amplitude", 1e-4);
  std::uint64_t seed = c.u64("seed", 1);
  if (o.seed) seed = *o.seed;
  c.check_unused();
  if (!(rs.cfl > 0) || rs.dt < 0 || !(rs.sample_every > 0)) throw config_error("integration settings must be positive");

  auto rep = condition_report(ctl, g);
  if (!rep["positivity"].pass)
    throw precondition_error("metric not positive definite: max gamma a0^2 = " + format_double(rep["positivity"].lhs));
  if (ctl.kind == ControlKind::designed) {
    emit(o, "conditions.txt", report_text(rep));
    if (o.require_stable && !rep.all_pass()) throw precondition_error("stability conditions not met (see conditions.txt)");
  }

  Field w0 = equilibrium_omega(g) + vorticity_perturbation(g, amp, seed);
  ShearFlowSim sim(g, ctl, form, w0);
  int snap = 0;
  auto on_snapshot = [&](double t, const Field& w) {
    char name[32];
    std::snprintf(name, sizeof name, "omega_%04d.field", snap++);
    fs::create_directories(o.out);
    write_snapshot(fs::path(o.out) / name, Snapshot{"omega", g.Nx, g.Ny, g.X, g.Y, t, w});
  };
  auto res = run(sim, rs, on_snapshot, [](const std::string& m) { std::cerr << "warning: " << m << "\n"; });
  emit(o, "series.csv", series_csv(res.series));
  std::cout << "dt: " << format_double(res.dt) << "\nsteps: " << res.steps << "\nmax_cfl: " << format_double(res.max_cfl)
            << "\nsnapshots: " << snap << "\n";
  return ok;
}

// design, eigen, stability

void load_channel(Options& o) {
  if (o.config.empty()) return;
  Config c = load_config(o);
  o.X = c.num("geometry.X", o.X);
  o.Y = c.num("geometry.Y", o.Y);
  o.gamma = c.num("control.gamma", o.gamma);
}

int cmd_design(Options o) {
  load_channel(o);
  auto d = design_constants(o.X, o.Y);
  auto ctl = ShearControl::designed(o.X, o.Y, o.gamma);
  ChannelGeometry g{o.X, o.Y, o.n, o.n};
  g.validate();
  auto rep = condition_report(ctl, g);
  std::ostringstream s;
  s << "X: " << format_double(o.X) << "\nY: " << format_double(o.Y) << "\ngamma: " << format_double(o.gamma) << "\n";
  s << "b_bar: " << format_double(d.b_bar) << "\nb_under: " << format_double(d.b_under) << "\nalpha: "
    << format_double(d.alpha) << "\nbeta: " << format_double(d.beta) << "\nr: " << format_double(d.r) << "\n";
  s << report_text(rep);
  s << "kappa: " << format_double(ctl.kappa()) << "\n";
  if (rep["positivity"].pass) {
    auto ds = drifted_setup(ctl, g);
    double pi2 = std::numbers::pi * std::numbers::pi;
    s << "Z_gamma: " << format_double(ds.Z()) << "\nlambda1_bound: " << format_double(pi2 / (pi2 * o.X * o.X + ds.Z() * ds.Z()))
      << "\n";
  }
  double sv = rep["positivity"].pass ? definiteness(second_variation_matrix(ctl, g)).max : std::nan("");
  s << "second_variation_max: " << format_double(sv) << "\n";
  if (o.gamma == 0.0 && sv < 0) s << "note: uncontrolled equilibrium is formally stable (second variation negative definite)\n";
  std::cout << s.str();
  if (!o.config.empty() || o.out != ".") {
    emit(o, "design.txt", s.str());
    std::ostringstream p;
    p << "y,a0,phi\n";
    for (int j = 0; j <= g.Ny; ++j)
      p << format_double(g.y(j)) << "," << format_double(ctl.a0(g.y(j))) << "," << format_double(ctl.phi(g.y(j))) << "\n";
    emit(o, "profile.csv", p.str());
  }
  return ok;
}

std::string eigen_csv(const std::vector<double>& ev) {
  std::ostringstream s;
  s << "index,eigenvalue\n";
  for (size_t k = 0; k < ev.size(); ++k) s << k << "," << format_double(ev[k]) << "\n";
  return s.str();
}

int cmd_eigen(Options o) {
  load_channel(o);
  auto ctl = ShearControl::designed(o.X, o.Y, o.gamma);
  ChannelGeometry g{o.X, o.Y, o.n, o.n};
  g.validate();
  auto ds = drifted_setup(ctl, g);
  auto ev = drifted_spectrum(ds, g, 10);
  double pi2 = std::numbers::pi * std::numbers::pi, bound = pi2 / (pi2 * o.X * o.X + ds.Z() * ds.Z());
  std::ostringstream s;
  s << "Z_gamma: " << format_double(ds.Z()) << "\nlambda1: " << format_double(ev.front())
    << "\nlambda1_bound: " << format_double(bound) << "\nbound_holds: " << (ev.front() >= bound ? "yes" : "no") << "\n";
  std::cout << s.str();
  emit(o, "eigen.txt", s.str());
  emit(o, "eigenvalues.csv", eigen_csv(ev));
  return ok;
}

int cmd_stability(Options o) {
  load_channel(o);
  auto ctl = o.gamma == 0.0 ? ShearControl::off(o.X, o.Y) : ShearControl::designed(o.X, o.Y, o.gamma);
  ChannelGeometry g{o.X, o.Y, o.n, o.n};
  g.validate();
  auto rep = condition_report(ctl, g);
  if (!rep["positivity"].pass) throw precondition_error("metric not positive definite");
  Mat A = second_variation_matrix(ctl, g);
  Eigen::SelfAdjointEigenSolver<Mat> es(A, Eigen::EigenvaluesOnly);
  const auto& v = es.eigenvalues();
  std::vector<double> top;
  // largest first: these decide definiteness
  for (long k = v.size() - 1; k >= 0 && top.size() < 10; --k) top.push_back(v(k));
  std::ostringstream s;
  s << report_text(rep) << "second_variation_max: " << format_double(v(v.size() - 1))
    << "\nsecond_variation_min: " << format_double(v(0))
    << "\nnegative_definite: " << (v(v.size() - 1) < 0 ? "yes" : "no") << "\n";
  std::cout << s.str();
  emit(o, "stability.txt", s.str());
  emit(o, "eigenvalues.csv", eigen_csv(top));
  if (o.require_stable && !(v(v.size() - 1) < 0)) throw precondition_error("second variation is not negative definite");
  return ok;
}

// verify

int cmd_verify(const Options& o) {
  static const std::vector<std::string> suites = {"metric", "conservation", "equivalence", "eigenbound", "secondvariation"};
  if (std::find(suites.begin(), suites.end(), o.suite) == suites.end())
    throw config_error("unknown suite '" + o.suite + "' (metric, conservation, equivalence, eigenbound, secondvariation)");
  const bool q = o.quick;
  std::vector<CheckResult> out;
  auto add = [&](CheckResult r) {
    std::cout << (r.pass ? "PASS " : "FAIL ") << r.name << " [" << fmt_g(r.seconds, 3) << " s] " << r.detail << std::endl;
    out.push_back(std::move(r));
  };
  if (o.suite == "metric") {
    add(check_metric(q ? 200 : 1000));
    add(check_rigid(q ? 200.0 : 1000.0));
    add(check_threshold());
    add(check_design_identity());
  } else if (o.suite == "conservation") {
    ChannelGeometry g{2.0, 0.9, q ? 64 : 128, q ? 32 : 64};
    double t = q ? 10.0 : 50.0;
    auto t0 = std::chrono::steady_clock::now();
    auto off = shear_experiment(g, ShearControl::off(2.0, 0.9), Formulation::vorticity, t);
    auto on = shear_experiment(g, ShearControl::designed(2.0, 0.9), Formulation::vorticity, t);
    auto r = check_conservation(off, on, t);
    r.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    add(r);
  } else if (o.suite == "equivalence") {
    if (q)
      add(check_equivalence(64, 32, 10.0, 5e-3, false));
    else
      add(check_equivalence(128, 64, 10.0, 1e-3, true));
    add(check_force(q ? 64 : 128, q ? 32 : 64, q ? 1.0 : 2.0));
  } else if (o.suite == "eigenbound") {
    add(check_eigenbound(q ? std::vector<int>{32, 64} : std::vector<int>{64, 128}));
  } else {
    add(check_second_variation(q ? 32 : 64));
  }
  long failed = std::count_if(out.begin(), out.end(), [](const CheckResult& r) { return !r.pass; });
  std::cout << o.suite << ": " << out.size() - failed << "/" << out.size() << " passed\n";
  return failed ? verify_failed : ok;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"geoflow: controlled Lie-Poisson systems"};
  app.require_subcommand(1);
  Options o;
  auto common = [&](CLI::App* s) {
    s->add_option("--config", o.config, "config file (section.key = value)");
    s->add_option("--out", o.out, "output directory");
    s->add_option("--seed", o.seed, "perturbation seed");
    s->add_flag("--require-stable", o.require_stable, "exit 3 unless the stability conditions hold");
    s->add_flag("--quick", o.quick, "reduced verification profile");
  };
  auto channel = [&](CLI::App* s) {
    s->add_option("--X", o.X, "channel length factor");
    s->add_option("--Y", o.Y, "channel width factor");
    s->add_option("--gamma", o.gamma, "control parameter");
    s->add_option("--n", o.n, "grid resolution (power of two)");
  };
  auto* rb = app.add_subcommand("rigidbody", "rigid body with rotor");
  auto* sf = app.add_subcommand("shearflow", "perturbed shear flow in a channel");
  auto* de = app.add_subcommand("design", "design constants and condition report");
  auto* ei = app.add_subcommand("eigen", "drifted Laplacian spectrum");
  auto* st = app.add_subcommand("stability", "second-variation definiteness");
  auto* ve = app.add_subcommand("verify", "run a verification suite");
  for (auto* s : {rb, sf, de, ei, st, ve}) common(s);
  for (auto* s : {de, ei, st}) channel(s);
  ve->add_option("suite", o.suite, "metric | conservation | equivalence | eigenbound | secondvariation")->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return bad_config;
  }
  try {
    threads_from_env();
    if (rb->parsed()) return cmd_rigidbody(o);
    if (sf->parsed()) return cmd_shearflow(o);
    if (de->parsed()) return cmd_design(o);
    if (ei->parsed()) return cmd_eigen(o);
    if (st->parsed()) return cmd_stability(o);
    return cmd_verify(o);
  } catch (const config_error& e) {
    std::cerr << "error: " << e.what() << "\n";
    return bad_config;
  } catch (const precondition_error& e) {
    std::cerr << "error: " << e.what() << "\n";
    return unstable;
  } catch (const numerical_error& e) {
    std::cerr << "error: " << e.what() << "\n";
    return numerical;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return bad_config;
  }
}
