#include <cmath>
#include <string>
#include <vector>

#include <doctest.h>
#include <json.hpp>

#include "sdlyap/backstep.hpp"
#include "sdlyap/builtins.hpp"
#include "sdlyap/rng.hpp"
#include "sdlyap/simulate.hpp"

using namespace sdlyap;

namespace {

Region interval_region(double lo, double hi, double exclude = 0.0) {
  Region r;
  r.box = {{lo, hi}};
  r.exclude_origin_radius = exclude;
  return r;
}

SampleBudget small_budget(std::uint64_t seed, std::size_t grid = 21, std::size_t mc = 500) {
  SampleBudget b;
  b.grid_per_axis = grid;
  b.mc_samples = mc;
  b.seed = seed;
  return b;
}

/// Planar stable/unstable first rows for the cascade hypothesis checks.
const char* kStableF1 = "-2*x[1] - d[1]*x[1]^3 + x[2]";
const char* kPlanarF2 = "d[2]*x[2]^2 - x[2]^3";

}  // namespace

TEST_CASE("backstep: scalar integrator dissipation passes with the designed rate") {
  TriangularSystem tri = make_scalar_integrator();
  BackstepCertificate cert = make_scalar_integrator_certificate();
  VerificationReport rep =
      check_dissipation(tri, cert, interval_region(-10.0, 10.0), small_budget(5, 41));
  CHECK(rep.condition == "dissipation[measurement-error]");
  CHECK(rep.passed);
  CHECK(rep.worst_margin >= -1e-9);
  CHECK(!rep.witness.has_value());
  CHECK(rep.samples > 1000);
  CHECK(rep.note.find("grid points") != std::string::npos);

  // The bound is tight: the worst admissible error drives the margin to zero.
  CHECK(rep.worst_margin == doctest::Approx(0.0).scale(100.0));
}

TEST_CASE("backstep: overdeclared decrease rate fails with a witness") {
  TriangularSystem tri = make_scalar_integrator();
  BackstepCertificate cert = make_scalar_integrator_certificate();
  cert.W = Expression::parse("2*x[1]^2");
  VerificationReport rep =
      check_dissipation(tri, cert, interval_region(-10.0, 10.0), small_budget(5, 41));
  CHECK(!rep.passed);
  REQUIRE(rep.witness.has_value());
  // Worst case sits at |x| = 10 with the extreme held error |e| = |x|/sqrt(2).
  CHECK(rep.worst_margin == doctest::Approx(-100.0 * std::sqrt(2.0)));
  CHECK(std::fabs(rep.witness->x[0]) == doctest::Approx(10.0));
  CHECK(std::fabs(rep.witness->x0[0] - rep.witness->x[0]) ==
        doctest::Approx(10.0 / std::sqrt(2.0)).epsilon(1e-6));

  nlohmann::json j = nlohmann::json::parse(rep.to_json());
  CHECK(j["condition"] == "dissipation[measurement-error]");
  CHECK(j["worst_margin"].get<double>() < 0.0);
}

TEST_CASE("backstep: dissipation margin vanishes at the origin") {
  TriangularSystem tri = make_scalar_integrator();
  BackstepCertificate cert = make_scalar_integrator_certificate();
  VerificationReport rep =
      check_dissipation(tri, cert, interval_region(-1e-9, 1e-9), small_budget(9, 3, 50));
  CHECK(rep.passed);
  CHECK(rep.worst_margin == doctest::Approx(0.0).scale(1.0));
}

TEST_CASE("backstep: actuator-error variant distinguishes the same rates") {
  TriangularSystem tri = make_scalar_integrator();
  BackstepCertificate cert = make_scalar_integrator_certificate();
  cert.variant = BackstepCertificate::Variant::ActuatorError;

  VerificationReport good =
      check_dissipation(tri, cert, interval_region(-10.0, 10.0, 0.4), small_budget(7, 41));
  CHECK(good.condition == "dissipation[actuator-error]");
  CHECK(good.passed);
  // Margin sqrt(2)*x^2 - x*v with |v| <= |x|/sqrt(2) bottoms out at x^2/sqrt(2),
  // smallest at the grid point closest to the excluded origin (|x| = 0.5).
  CHECK(good.worst_margin == doctest::Approx(0.25 / std::sqrt(2.0)).epsilon(1e-6));

  cert.W = Expression::parse("2*x[1]^2");
  VerificationReport bad =
      check_dissipation(tri, cert, interval_region(-10.0, 10.0), small_budget(7, 41));
  CHECK(!bad.passed);
  CHECK(bad.worst_margin == doctest::Approx(-100.0 / std::sqrt(2.0)).epsilon(1e-6));
  REQUIRE(bad.witness.has_value());
  CHECK(bad.witness->v.size() == 1);
}

TEST_CASE("backstep: certificate validation rejects malformed inputs") {
  TriangularSystem tri = make_scalar_integrator();
  BackstepCertificate cert = make_scalar_integrator_certificate();

  BackstepCertificate shifted = cert;
  shifted.k = Expression::parse("-2*x[1] + 1");
  CHECK_THROWS_WITH_AS(shifted.validate(1), doctest::Contains("k(0) must be zero"),
                       std::invalid_argument);

  BackstepCertificate indefinite = cert;
  indefinite.V = Expression::parse("x[1]^3");
  CHECK_THROWS_WITH_AS(indefinite.validate(1), doctest::Contains("V: must be positive"),
                       std::invalid_argument);

  BackstepCertificate weak = cert;
  weak.W = Expression::parse("x[1]");
  CHECK_THROWS_WITH_AS(weak.validate(1), doctest::Contains("W: must be positive"),
                       std::invalid_argument);

  BackstepCertificate identity_gauge = cert;
  identity_gauge.a = ComparisonFunction::parse("s", FnClass::N);
  CHECK_THROWS_WITH_AS(identity_gauge.validate(1), doctest::Contains("a(s) < s"),
                       std::invalid_argument);

  BackstepCertificate wrong_class = cert;
  wrong_class.zeta = ComparisonFunction::parse("s^2", FnClass::KInfinity);
  CHECK_THROWS_WITH_AS(wrong_class.validate(1), doctest::Contains("zeta: must be declared"),
                       std::invalid_argument);

  BackstepCertificate kinked = cert;
  kinked.k = Expression::parse("min(x[1], -x[1])");
  kinked.variant = BackstepCertificate::Variant::ActuatorError;
  CHECK_THROWS_WITH_AS(kinked.validate(1), doctest::Contains("continuously differentiable"),
                       std::invalid_argument);
  // The measurement-error variant never differentiates k, so the kink is fine.
  kinked.variant = BackstepCertificate::Variant::MeasurementError;
  CHECK_NOTHROW(kinked.validate(1));
}

TEST_CASE("backstep: triangular shape and gain positivity are enforced") {
  TriangularSystem tri;
  tri.n = 2;
  tri.phi = {{Expression::parse("-1")}, {Expression::parse("0"), Expression::parse("-2")}};
  tri.g = {Expression::constant(1.0), Expression::parse("2 + sin(x[1])")};
  CHECK_NOTHROW(tri.validate());

  TriangularSystem short_row = tri;
  short_row.phi[1].pop_back();
  CHECK_THROWS_WITH_AS(short_row.validate(), doctest::Contains("expected 2 entries"),
                       std::invalid_argument);

  TriangularSystem out_of_scope = tri;
  out_of_scope.phi[0][0] = Expression::parse("x[2]");
  CHECK_THROWS_WITH_AS(out_of_scope.validate(), doctest::Contains("out of scope"),
                       std::invalid_argument);

  TriangularSystem bad_gain = tri;
  bad_gain.g[1] = Expression::parse("sin(x[1])");
  CHECK_THROWS_WITH_AS(bad_gain.validate(), doctest::Contains("must be positive"),
                       std::invalid_argument);

  TriangularSystem too_long;
  too_long.n = 4;
  CHECK_THROWS_WITH_AS(too_long.validate(), doctest::Contains("longer than 3"),
                       std::invalid_argument);
}

TEST_CASE("backstep: drift rows assemble the triangular structure") {
  TriangularSystem tri;
  tri.n = 2;
  tri.phi = {{Expression::parse("-1")}, {Expression::parse("0"), Expression::parse("-2")}};
  tri.g = {Expression::constant(1.0), Expression::parse("2 + sin(x[1])")};
  tri.name = "chain2";
  std::vector<Expression> rows = tri.drift();
  REQUIRE(rows.size() == 2);

  Bindings at;
  at[{"x", 1}] = 1.5;
  at[{"x", 2}] = 2.5;
  CHECK(rows[0].eval(at) == doctest::Approx(-1.5 + 2.5));   // x1*(-1) + g1*x2
  CHECK(rows[1].eval(at) == doctest::Approx(-2.0 * 2.5));   // x2*(-2), no control term
  CHECK(tri.control_gain().str().find("sin") != std::string::npos);

  SystemModel loop = tri.emulated_loop(Expression::parse("-3*x[2]"), 0.1);
  CHECK(loop.n == 2);
  CHECK(loop.name == "chain2-loop");
  CHECK_NOTHROW(loop.validate());
  IntegratorConfig cfg;
  cfg.t_final = 1.0;
  Trajectory tr = simulate(loop, {1.0, 1.0}, {}, cfg);
  CHECK(tr.termination == Trajectory::Termination::Completed);
}

TEST_CASE("backstep: growth bound at the unit point matches the hand maximum") {
  TriangularSystem tri = make_scalar_integrator();
  BackstepCertificate cert = make_scalar_integrator_certificate();
  const double rho1 = rho_x(tri, cert, {1.0}, small_budget(2));
  CHECK(rho1 == doctest::Approx(2.0 * std::sqrt(2.0)).epsilon(0.05));
  CHECK(rho1 == doctest::Approx(2.0 * std::sqrt(2.0)).epsilon(1e-6));

  // Deterministic under the budget seed.
  CHECK(rho1 == rho_x(tri, cert, {1.0}, small_budget(2)));
  CHECK(rho_x(tri, cert, {0.0}, small_budget(2)) == 0.0);
}

TEST_CASE("backstep: brute-force growth maximization agrees with the estimate") {
  TriangularSystem tri = make_scalar_integrator();
  BackstepCertificate cert = make_scalar_integrator_certificate();
  const double estimate = rho_x(tri, cert, {1.0}, small_budget(13));

  // Independent oracle: plain rejection sampling of |F + G*k(x0)| under
  // V(x0) <= a^{-1}(V(1)) = 1, i.e. |x0| <= sqrt(2).
  Rng rng(99);
  double brute = 0.0;
  for (std::size_t s = 0; s < 1000000; ++s) {
    const double x0 = rng.uniform(-2.0, 2.0);
    if (0.5 * x0 * x0 > 1.0) continue;
    brute = std::fmax(brute, std::fabs(-2.0 * x0));
  }
  CHECK(estimate == doctest::Approx(brute).epsilon(0.05));
}

TEST_CASE("backstep: growth bound is nondecreasing in the level") {
  TriangularSystem tri = make_scalar_integrator();
  BackstepCertificate cert = make_scalar_integrator_certificate();
  SampleBudget budget = small_budget(4);
  double prev = 0.0;
  for (double xv : {0.25, 0.5, 1.0, 2.0, 4.0}) {
    const double rho = rho_x(tri, cert, {xv}, budget);
    CHECK(rho >= prev - 1e-12);
    prev = rho;
  }
}

TEST_CASE("backstep: rho_x rejects mismatched states and unbounded caps") {
  TriangularSystem tri = make_scalar_integrator();
  BackstepCertificate cert = make_scalar_integrator_certificate();
  CHECK_THROWS_WITH_AS(rho_x(tri, cert, {1.0, 2.0}, small_budget(1)),
                       doctest::Contains("dimension mismatch"), std::invalid_argument);

  BackstepCertificate bounded = cert;
  bounded.a = ComparisonFunction::parse("s/(1 + s)", FnClass::N);
  CHECK_THROWS_WITH_AS(rho_x(tri, bounded, {2.0}, small_budget(1)),
                       doctest::Contains("unbounded"), std::runtime_error);
}

TEST_CASE("backstep: admissible period for the scalar instance") {
  TriangularSystem tri = make_scalar_integrator();
  BackstepCertificate cert = make_scalar_integrator_certificate();
  PeriodSearchReport rep = find_h(tri, cert, interval_region(-10.0, 10.0), small_budget(3, 21, 200));
  CHECK(rep.feasible);
  CHECK(rep.h_star == doctest::Approx(0.25).epsilon(0.02));
  CHECK(rep.worst_margin >= -1e-9);
  CHECK(rep.note.find("region") != std::string::npos);
  CHECK(rep.note.find("0.9*h_star") != std::string::npos);

  // Bracketing: the gauge bound holds everywhere at h_star and breaks
  // somewhere at 1.1*h_star.
  REQUIRE(rep.points.size() == rep.levels.size());
  REQUIRE(rep.points.size() == rep.growth.size());
  bool violated = false;
  for (std::size_t i = 0; i < rep.points.size(); ++i) {
    CHECK(rep.levels[i] - cert.zeta.value(rep.h_star * rep.growth[i]) >=
          -1e-9 * std::max(1.0, rep.levels[i]));
    if (cert.zeta.value(1.1 * rep.h_star * rep.growth[i]) >
        rep.levels[i] + 1e-9 * rep.levels[i] + 1e-15)
      violated = true;
  }
  CHECK(violated);

  // Deterministic and serializable.
  PeriodSearchReport again =
      find_h(tri, cert, interval_region(-10.0, 10.0), small_budget(3, 21, 200));
  CHECK(again.h_star == rep.h_star);
  nlohmann::json j = nlohmann::json::parse(rep.to_json(2));
  CHECK(j["feasible"] == true);
  CHECK(j["h_star"].get<double>() == rep.h_star);
  CHECK(j["obstruction"].is_null());
}

TEST_CASE("backstep: admissible period is region-independent for matched homogeneity") {
  TriangularSystem tri = make_scalar_integrator();
  BackstepCertificate cert = make_scalar_integrator_certificate();
  PeriodSearchReport inner = find_h(tri, cert, interval_region(-2.0, 2.0), small_budget(6));
  PeriodSearchReport outer = find_h(tri, cert, interval_region(-10.0, 10.0), small_budget(6));
  CHECK(inner.h_star == doctest::Approx(outer.h_star).epsilon(1e-6));
}

TEST_CASE("backstep: linear gauge with level-bounded growth has no admissible period") {
  TriangularSystem tri = make_scalar_integrator();
  BackstepCertificate cert = make_scalar_integrator_certificate();
  cert.zeta = ComparisonFunction::parse("s", FnClass::N);
  cert.a = ComparisonFunction::parse("max(0, s - 1)", FnClass::N);

  PeriodSearchReport rep = find_h(tri, cert, interval_region(-10.0, 10.0), small_budget(8));
  CHECK(!rep.feasible);
  CHECK(rep.h_star == 0.0);
  REQUIRE(!rep.obstruction.empty());
  CHECK(norm2(rep.obstruction) <= 1e-4);
  CHECK(rep.note.find("no positive sampling period") != std::string::npos);
  CHECK(rep.note.find("obstruction") != std::string::npos);

  nlohmann::json j = nlohmann::json::parse(rep.to_json());
  CHECK(j["feasible"] == false);
  CHECK(j["obstruction"].is_array());
}

TEST_CASE("backstep: emulated scalar loop decays under the admissible period") {
  TriangularSystem tri = make_scalar_integrator();
  BackstepCertificate cert = make_scalar_integrator_certificate();
  PeriodSearchReport rep = find_h(tri, cert, interval_region(-10.0, 10.0), small_budget(3, 11, 100));
  REQUIRE(rep.feasible);

  SystemModel loop = tri.emulated_loop(cert.k, 0.9 * rep.h_star);
  IntegratorConfig cfg;
  cfg.t_final = 30.0;
  for (double x0 : {1.0, -1.0, 5.0, -5.0}) {
    Trajectory tr = simulate(loop, {x0}, {}, cfg);
    REQUIRE(tr.termination == Trajectory::Termination::Completed);
    CHECK(std::fabs(tr.states.back()[0]) < 1e-3);
  }
}

TEST_CASE("backstep: planar gate passes for the stable first row") {
  Expression f1 = Expression::parse(kStableF1);
  Expression f2 = Expression::parse(kPlanarF2);
  Box D = {{0.0, 1.0}, {0.0, 1.0}};
  Region region = interval_region(-5.0, 5.0);
  SampleBudget budget = small_budget(11, 41, 300);

  // Constants for the growth part found by sweep; the gate needs none.
  double found_gamma = -1.0;
  VerificationReport rep;
  for (double gamma : {1.0, 10.0, 100.0, 1000.0}) {
    rep = check_hypothesis_P(f1, f2, 1.5, 0.0, 1.0, gamma, D, region, budget);
    if (rep.passed) {
      found_gamma = gamma;
      break;
    }
  }
  REQUIRE(found_gamma > 0.0);
  CHECK(rep.condition == "hypothesis-p");
  CHECK(rep.passed);
  // The growth part holds with equality at z = 0, so the combined worst
  // margin is zero there; the strict gate is enforced internally.
  CHECK(rep.worst_margin >= 0.0);
  CHECK(rep.note.find("hold") != std::string::npos);
  CHECK(!rep.witness.has_value());
}

TEST_CASE("backstep: planted unstable first row fails the gate") {
  Expression f1 = Expression::parse("x[1]");
  Expression f2 = Expression::parse(kPlanarF2);
  Box D = {{0.0, 1.0}, {0.0, 1.0}};
  VerificationReport rep = check_hypothesis_P(f1, f2, 1.5, 0.0, 0.0, 1e6, D,
                                              interval_region(-5.0, 5.0), small_budget(11, 41, 300));
  CHECK(!rep.passed);
  CHECK(rep.worst_margin < 0.0);
  CHECK(rep.note.find("gate violated") != std::string::npos);
  REQUIRE(rep.witness.has_value());
  CHECK(rep.witness->x.size() == 1);
  CHECK(rep.witness->x[0] != 0.0);
}

TEST_CASE("backstep: growth bound fails when gamma is too small") {
  Expression f1 = Expression::parse(kStableF1);
  Expression f2 = Expression::parse(kPlanarF2);
  Box D = {{0.0, 1.0}, {0.0, 1.0}};
  VerificationReport rep = check_hypothesis_P(f1, f2, 1.5, 0.0, 0.0, 0.0, D,
                                              interval_region(-3.0, 3.0), small_budget(11, 21, 200));
  CHECK(!rep.passed);
  CHECK(rep.note.find("growth bound violated") != std::string::npos);
}

TEST_CASE("backstep: cascade hypothesis rejects bad arguments") {
  Expression f1 = Expression::parse(kStableF1);
  Expression f2 = Expression::parse(kPlanarF2);
  Box D = {{0.0, 1.0}, {0.0, 1.0}};
  Region region = interval_region(-5.0, 5.0);
  SampleBudget budget = small_budget(1);

  CHECK_THROWS_WITH_AS(check_hypothesis_P(f1, f2, 1.0, 0.0, 0.0, 1.0, D, region, budget),
                       doctest::Contains("c must exceed 1"), std::invalid_argument);
  CHECK_THROWS_WITH_AS(check_hypothesis_P(f1, f2, 1.5, 0.0, -1.0, 1.0, D, region, budget),
                       doctest::Contains("L must be"), std::invalid_argument);
  CHECK_THROWS_WITH_AS(check_hypothesis_P(f1, f2, 1.5, 0.0, 0.0, -1.0, D, region, budget),
                       doctest::Contains("gamma must be"), std::invalid_argument);

  Region planar;
  planar.box = {{-1.0, 1.0}, {-1.0, 1.0}};
  CHECK_THROWS_WITH_AS(check_hypothesis_P(f1, f2, 1.5, 0.0, 0.0, 1.0, D, planar, budget),
                       doctest::Contains("one-dimensional"), std::invalid_argument);

  Expression stray = Expression::parse("x[3]");
  CHECK_THROWS_WITH_AS(check_hypothesis_P(stray, f2, 1.5, 0.0, 0.0, 1.0, D, region, budget),
                       doctest::Contains("unexpected variable"), std::invalid_argument);
}
