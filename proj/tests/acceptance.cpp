// One line per acceptance criterion; nonzero exit if any fails.

#include <chrono>
#include <iostream>

#include <geoflow/verify.hpp>

using namespace geoflow;

namespace {

int failures = 0;

void report(int id, CheckResult r, double limit = 0) {
  if (limit > 0 && r.seconds >= limit) {
    r.pass = false;
    r.detail += "; runtime over " + fmt_g(limit) + " s";
  }
  if (!r.pass) ++failures;
  std::cout << (r.pass ? "PASS" : "FAIL") << " [" << id << "] " << r.name << " (" << fmt_g(r.seconds, 3)
            << " s): " << r.detail << std::endl;
}

double since(std::chrono::steady_clock::time_point t0) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

}  // namespace

int main() {
  report(1, check_metric(1000), 5.0);
  report(2, check_rigid(1000.0), 30.0);
  report(3, check_threshold(1e-4));
  report(4, check_design_identity());
  report(5, check_second_variation(64), 60.0);
  report(6, check_eigenbound({64, 128}));

  // one uncontrolled and one controlled run at 128x65 serve both the conservation and the stabilization criteria
  ChannelGeometry g{2.0, 0.9, 128, 64};
  auto ctl = ShearControl::designed(2.0, 0.9);
  auto t0 = std::chrono::steady_clock::now();
  RunResult off, on;
  std::string err;
  try {
    off = shear_experiment(g, ShearControl::off(2.0, 0.9), Formulation::vorticity, 200.0);
    on = shear_experiment(g, ctl, Formulation::vorticity, 200.0);
  } catch (const std::exception& e) {
    err = e.what();
  }
  double runs = since(t0);
  if (err.empty()) {
    auto cons = check_conservation(off, on, 50.0);
    cons.seconds += runs;
    report(7, cons);
    auto stab = check_stabilization(g, off, on, ctl);
    stab.seconds += runs;
    report(8, stab, 600.0);
  } else {
    report(7, {"conservation", false, "error: " + err, runs});
    report(8, {"nonlinear stabilization", false, "error: " + err, runs});
  }

  report(9, check_equivalence(128, 64, 10.0, 1e-3, true));
  report(10, check_force(128, 64, 2.0));

  std::cout << (10 - failures) << "/10 criteria passed" << std::endl;
  return failures ? 1 : 0;
}
