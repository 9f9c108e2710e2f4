#include <doctest.h>

#include <cmath>
#include <cstdlib>
#include <limits>
#include <stdexcept>

#include <json.hpp>

#include "sdlyap/builtins.hpp"
#include "sdlyap/verify.hpp"

using namespace sdlyap;

namespace {

Region square(double half_width) {
  Region rg;
  rg.box = {{-half_width, half_width}, {-half_width, half_width}};
  return rg;
}

SampleBudget small_budget(std::uint64_t seed = 7) {
  SampleBudget b;
  b.grid_per_axis = 11;
  b.mc_samples = 200;
  b.seed = seed;
  return b;
}

/// Scalar held-state system with a live additive input channel, paired with
/// the hold certificate. Exercises the input-ball part of the g-rate bound.
SystemModel scalar_with_input() {
  SystemModel sys = make_scalar_hold_system();
  sys.f = {Expression::parse("-2*xs[1] + v[1]")};
  sys.U = {{-std::numeric_limits<double>::infinity(), std::numeric_limits<double>::infinity()}};
  sys.name = "scalar-with-input";
  return sys;
}

const VerificationReport& member_report(const std::vector<VerificationReport>& reports,
                                        std::size_t member) {
  REQUIRE(member < reports.size());
  return reports[member];
}

}  // namespace

// ============================================================================
// g-rate bound oracles
// ============================================================================

TEST_CASE("g-rate bound recovers the planar corner maximum") {
  // Second member at x = (0, 1): level 1/2, state box half-width 1.1, input
  // radius 1/2.  max |d2*s^2 - s^3 - 2*x02 + v| over that set is attained at
  // the corner s = 1.1, x02 = -1.1, v = 1/2: 1.21 + 1.331 + 2.2 + 0.5.
  SystemModel sys = builtin_system("ex41-vector");
  LyapunovCertificate cert = builtin_certificate("ex41-vector");
  BBoundResult res = b_bound(cert, 1, {0.0, 1.0}, sys, small_budget());
  CHECK(res.accepted > 0);
  CHECK(std::fabs(res.value - 5.241) <= 1e-6 * 5.241);

  // The closed form stored on the certificate evaluates to the same number.
  double analytic = cert.analytic_b[1].eval({{{"x", 2}, 1.0}, {{"x", 1}, 0.0}});
  CHECK(analytic == doctest::Approx(5.241).epsilon(1e-12));
  CHECK(res.value <= analytic * (1.0 + 1e-9));
}

TEST_CASE("g-rate bound matches the scalar closed form") {
  SystemModel sys = scalar_with_input();
  LyapunovCertificate cert = make_scalar_hold_certificate();
  BBoundResult res = b_bound(cert, 0, {1.0}, sys, small_budget());
  // Level 1/2: held states range over [-sqrt(2), sqrt(2)], inputs over
  // [-sqrt(1/2), sqrt(1/2)], so max |-2*x0 + v| = 2*sqrt(2) + sqrt(1/2).
  const double oracle = 2.0 * std::sqrt(2.0) + std::sqrt(0.5);
  CHECK(std::fabs(res.value - oracle) <= 1e-9 * oracle);

  // Independent dense scan of the same constraint set.
  double brute = 0.0;
  const double x0_cap = std::sqrt(2.0), v_cap = std::sqrt(0.5);
  for (int i = 0; i <= 400; ++i) {
    double x0 = -x0_cap + 2.0 * x0_cap * i / 400.0;
    for (int j = 0; j <= 40; ++j) {
      double v = -v_cap + 2.0 * v_cap * j / 40.0;
      brute = std::max(brute, std::fabs(-2.0 * x0 + v));
    }
  }
  CHECK(res.value == doctest::Approx(brute).epsilon(0.05));
  CHECK(res.value >= brute * (1.0 - 1e-9));
}

TEST_CASE("g-rate bound vanishes at the origin and grows with the level") {
  SystemModel sys = builtin_system("ex41-vector");
  LyapunovCertificate cert = builtin_certificate("ex41-vector");

  // At the origin the level is zero and the only feasible point is the
  // origin itself, where the field vanishes.
  BBoundResult at_origin = b_bound(cert, 1, {0.0, 0.0}, sys, small_budget());
  CHECK(at_origin.value == 0.0);
  CHECK(at_origin.accepted > 0);

  BBoundResult low = b_bound(cert, 1, {0.0, 1.0}, sys, small_budget());
  BBoundResult high = b_bound(cert, 1, {0.0, 2.0}, sys, small_budget());
  CHECK(high.value > low.value);

  for (std::size_t member = 0; member < 2; ++member) {
    for (double s : {0.3, 0.9, 2.7}) {
      BBoundResult inner = b_bound(cert, member, {s, -s}, sys, small_budget());
      BBoundResult outer = b_bound(cert, member, {2.0 * s, -2.0 * s}, sys, small_budget());
      CHECK(inner.value >= 0.0);
      CHECK(outer.value >= inner.value);
    }
  }
}

// ============================================================================
// Decrease condition
// ============================================================================

TEST_CASE("planar vector decrease holds at the design radius and fails at the bound") {
  SystemModel sys = builtin_system("ex41-vector");
  LyapunovCertificate cert = builtin_certificate("ex41-vector");
  Region rg = square(5.0);

  auto good = decrease_check(cert, sys, rg, 0.11, small_budget());
  REQUIRE(good.size() == 2);
  for (const auto& rep : good) {
    CHECK(rep.passed);
    CHECK(rep.worst_margin >= 0.0);
    CHECK_FALSE(rep.witness.has_value());
    CHECK(rep.note.find("active at") != std::string::npos);
  }
  CHECK(good[0].condition == "decrease[1]");
  CHECK(good[1].condition == "decrease[2]");

  auto bad = decrease_check(cert, sys, rg, 1.0, small_budget());
  CHECK(member_report(bad, 0).passed);
  const VerificationReport& second = member_report(bad, 1);
  CHECK_FALSE(second.passed);
  CHECK(second.worst_margin < -1.0);
  REQUIRE(second.witness.has_value());
  // The witness must actually violate the condition it reports: recompute
  // the two sides from the stored point.
  const Witness& w = *second.witness;
  REQUIRE(w.x.size() == 2);
  REQUIRE(w.x0.size() == 2);
  REQUIRE(w.d.size() == 2);
  REQUIRE(w.v.size() == 1);
  double lhs = w.x[1] * (w.d[1] * w.x[1] * w.x[1] - w.x[1] * w.x[1] * w.x[1] -
                         2.0 * w.x0[1] + w.v[0]);
  double level = 0.5 * w.x[1] * w.x[1];
  double rhs = -cert.rho[1](level);
  CHECK(lhs > rhs);
  CHECK(second.worst_margin == doctest::Approx(rhs - lhs).epsilon(1e-12));
}

TEST_CASE("instant-update decrease reduces to the continuous-time condition") {
  SystemModel sys = builtin_system("ex41");
  Region rg = square(5.0);
  for (double c : {1.05, 1.5, 1.9}) {
    CAPTURE(c);
    LyapunovCertificate cert = make_planar_vector_certificate(c, 0.0);
    auto reports = decrease_check(cert, sys, rg, 0.0, small_budget());
    for (const auto& rep : reports) {
      CAPTURE(rep.condition);
      CHECK(rep.passed);
    }
  }
}

TEST_CASE("scalar hold decrease flips exactly at the threshold radius") {
  SystemModel sys = make_scalar_hold_system();
  LyapunovCertificate cert = make_scalar_hold_certificate();
  Region rg;
  rg.box = {{-2.0, 2.0}};
  const double r_star = 0.995 / (2.0 * std::sqrt(2.0));

  auto below = decrease_check(cert, sys, rg, r_star * 0.98, small_budget());
  CHECK(member_report(below, 0).passed);

  auto above = decrease_check(cert, sys, rg, r_star * 1.02, small_budget());
  const VerificationReport& rep = member_report(above, 0);
  CHECK_FALSE(rep.passed);
  REQUIRE(rep.witness.has_value());
  CHECK(rep.worst_margin < 0.0);
}

TEST_CASE("decrease reports are deterministic and thread-count independent") {
  SystemModel sys = builtin_system("ex41-vector");
  LyapunovCertificate cert = builtin_certificate("ex41-vector");
  Region rg = square(5.0);

  auto first = decrease_check(cert, sys, rg, 1.0, small_budget());
  auto second = decrease_check(cert, sys, rg, 1.0, small_budget());
  setenv("SDLYAP_THREADS", "1", 1);
  auto serial = decrease_check(cert, sys, rg, 1.0, small_budget());
  unsetenv("SDLYAP_THREADS");

  REQUIRE(first.size() == second.size());
  REQUIRE(first.size() == serial.size());
  for (std::size_t i = 0; i < first.size(); ++i) {
    CHECK(first[i].worst_margin == second[i].worst_margin);
    CHECK(first[i].worst_margin == serial[i].worst_margin);
    CHECK(first[i].passed == serial[i].passed);
    CHECK(first[i].samples == serial[i].samples);
    REQUIRE(first[i].witness.has_value() == serial[i].witness.has_value());
    if (first[i].witness) {
      CHECK(first[i].witness->x == serial[i].witness->x);
      CHECK(first[i].witness->x0 == serial[i].witness->x0);
      CHECK(first[i].witness->d == serial[i].witness->d);
      CHECK(first[i].witness->v == serial[i].witness->v);
    }
  }
}

TEST_CASE("an understated closed-form g-rate bound is rejected") {
  SystemModel sys = builtin_system("ex41-vector");
  LyapunovCertificate cert = builtin_certificate("ex41-vector");
  cert.analytic_b[1] = Expression::parse("0.001*abs(x[2])");
  CHECK_THROWS_WITH_AS(decrease_check(cert, sys, square(5.0), 0.11, small_budget()),
                       doctest::Contains("below the numeric"), std::runtime_error);
}

// ============================================================================
// Sandwich condition
// ============================================================================

TEST_CASE("sandwich bounds hold for the planar certificate") {
  SystemModel sys = builtin_system("ex41-vector");
  LyapunovCertificate cert = builtin_certificate("ex41-vector");
  VerificationReport rep = sandwich_check(cert, sys, square(5.0), small_budget());
  CHECK(rep.passed);
  CHECK(rep.worst_margin >= -1e-9);  // exact zero on the axes up to rounding
  CHECK(rep.condition == "sandwich");
  CHECK_FALSE(rep.witness.has_value());
}

TEST_CASE("an oversized lower sandwich bound is falsified with a witness") {
  SystemModel sys = builtin_system("ex41-vector");
  LyapunovCertificate cert = builtin_certificate("ex41-vector");
  cert.a1 = ComparisonFunction::parse("s^2", FnClass::KInfinity);
  VerificationReport rep = sandwich_check(cert, sys, square(5.0), small_budget());
  CHECK_FALSE(rep.passed);
  CHECK(rep.worst_margin < 0.0);
  REQUIRE(rep.witness.has_value());
  // a1(|H(x)|) really exceeds max_i V_i at the witness.
  const auto& x = rep.witness->x;
  REQUIRE(x.size() == 2);
  double vmax = 0.5 * std::max(x[0] * x[0], x[1] * x[1]);
  double norm = std::hypot(x[0], x[1]);
  CHECK(norm * norm > vmax);
}

// ============================================================================
// Model regularity checks
// ============================================================================

TEST_CASE("regularity checks on the planar model") {
  SystemModel sys = builtin_system("ex41");
  Region rg = square(1.0);

  SUBCASE("default options") {
    auto reps = check_hypotheses(sys, rg, small_budget());
    REQUIRE(reps.size() == 4);
    CHECK(reps[0].condition == "one-sided-lipschitz");
    CHECK(reps[0].passed);
    CHECK(std::isfinite(reps[0].worst_margin));
    CHECK(reps[0].worst_margin <= 100.0);

    CHECK(reps[1].condition == "growth");
    CHECK(reps[1].passed);
    CHECK(reps[1].note.find("envelope-only") != std::string::npos);

    CHECK(reps[2].condition == "output-coercivity");
    CHECK(reps[2].passed);  // identity output map: margin is exactly zero

    CHECK(reps[3].condition == "period-range");
    CHECK(reps[3].passed);
    CHECK(reps[3].note.find("0.11") != std::string::npos);
  }

  SUBCASE("explicit growth bound") {
    HypothesisOptions opts;
    opts.growth_bound = ComparisonFunction::parse("10*s + 10*s^2 + 10*s^3", FnClass::KInfinity);
    auto reps = check_hypotheses(sys, rg, small_budget(), opts);
    CHECK(reps[1].condition == "growth");
    CHECK(reps[1].passed);
    CHECK(reps[1].worst_margin >= 0.0);
  }

  SUBCASE("nominal period beyond its stated range fails") {
    // A bump that clears the coarse model-validation probes but peaks above
    // the bound on a region grid point.
    SystemModel bumped = sys;
    bumped.h = Expression::parse("0.05 + 0.1*exp(-100*(x[1]-0.2)^2)");
    bumped.r = 0.1;
    auto reps = check_hypotheses(bumped, rg, small_budget());
    CHECK_FALSE(reps[3].passed);
    CHECK(reps[3].worst_margin < -0.01);
    CHECK(reps[3].witness.has_value());
  }
}

// ============================================================================
// Validation and error paths
// ============================================================================

TEST_CASE("certificate validation rejects malformed data") {
  SystemModel sys = builtin_system("ex41-vector");
  LyapunovCertificate good = builtin_certificate("ex41-vector");
  CHECK_NOTHROW(good.validate(sys));

  SUBCASE("history contraction must stay below the identity") {
    LyapunovCertificate cert = good;
    cert.a = ComparisonFunction::parse("2*s", FnClass::N);
    CHECK_THROWS_AS(cert.validate(sys), std::invalid_argument);
  }
  SUBCASE("member functions may only reference the state") {
    LyapunovCertificate cert = good;
    cert.V[0] = Expression::parse("x[1]^2/2 + y[1]");
    CHECK_THROWS_AS(cert.validate(sys), std::invalid_argument);
  }
  SUBCASE("state indices outside the model dimension are rejected") {
    LyapunovCertificate cert = good;
    cert.V[0] = Expression::parse("x[3]^2");
    CHECK_THROWS_AS(cert.validate(sys), std::invalid_argument);
  }
  SUBCASE("the explicit decrease target requires a single member") {
    LyapunovCertificate cert = good;
    cert.W = Expression::parse("x[1]^2");
    CHECK_THROWS_AS(cert.validate(sys), std::invalid_argument);
  }
  SUBCASE("member count must match the data") {
    LyapunovCertificate cert = good;
    cert.g.pop_back();
    CHECK_THROWS_AS(cert.validate(sys), std::invalid_argument);
  }
  SUBCASE("budgets must be positive") {
    SampleBudget b;
    b.mc_samples = 0;
    CHECK_THROWS_AS(b.validate(), std::invalid_argument);
  }
}

TEST_CASE("g-rate bound distinguishes empty-at-zero from unreachable levels") {
  SystemModel sys = make_scalar_hold_system();
  LyapunovCertificate cert = make_scalar_hold_certificate();
  cert.V = {Expression::parse("(x[1]-3)^2")};

  // Level zero at x = 3: the sampling box collapses onto the origin, which
  // sits outside the sublevel set, so the constraint set is legitimately
  // empty and the bound is zero.
  BBoundResult empty = b_bound(cert, 0, {3.0}, sys, small_budget());
  CHECK(empty.value == 0.0);
  CHECK(empty.accepted == 0);

  // A positive level whose sublevel set misses the sampling box entirely is
  // an error, not a silent zero.
  CHECK_THROWS_AS(b_bound(cert, 0, {3.5}, sys, small_budget()), std::runtime_error);
}

TEST_CASE("reports serialize to parseable json") {
  SystemModel sys = builtin_system("ex41-vector");
  LyapunovCertificate cert = builtin_certificate("ex41-vector");
  auto reports = decrease_check(cert, sys, square(5.0), 1.0, small_budget());

  for (const auto& rep : reports) {
    auto parsed = nlohmann::json::parse(rep.to_json(2));
    CHECK(parsed["condition"] == rep.condition);
    CHECK(parsed["status"] == (rep.passed ? "pass" : "fail"));
    CHECK(parsed["worst_margin"].get<double>() == doctest::Approx(rep.worst_margin));
    CHECK(parsed["samples"].get<std::size_t>() == rep.samples);
    CHECK(parsed["budget"]["seed"].get<std::uint64_t>() == rep.budget.seed);
    if (rep.witness) {
      REQUIRE(parsed["witness"].is_object());
      auto x = parsed["witness"]["x"].get<std::vector<double>>();
      CHECK(x == rep.witness->x);
    } else {
      CHECK(parsed["witness"].is_null());
    }
  }
}

// ============================================================================
// Builtin registry
// ============================================================================

TEST_CASE("builtin registry is consistent") {
  auto names = builtin_names();
  CHECK(names.size() == 6);
  for (const auto& name : names) {
    CAPTURE(name);
    CHECK(is_builtin(name));
    SystemModel sys = builtin_system(name);
    CHECK_NOTHROW(sys.validate());
    CHECK(sys.name == name);
    if (builtin_has_certificate(name)) {
      LyapunovCertificate cert = builtin_certificate(name);
      CHECK_NOTHROW(cert.validate(sys));
    } else {
      CHECK_THROWS_AS(builtin_certificate(name), std::invalid_argument);
    }
  }
  CHECK_FALSE(is_builtin("no-such-system"));
  CHECK_THROWS_AS(builtin_system("no-such-system"), std::invalid_argument);
}

TEST_CASE("single-member planar certificate carries an explicit decrease target") {
  SystemModel sys = builtin_system("ex41-single");
  LyapunovCertificate cert = builtin_certificate("ex41-single");
  CHECK(cert.k == 1);
  CHECK(cert.has_W());
  CHECK(cert.has_analytic_b(0));
  CHECK_NOTHROW(cert.validate(sys));

  // The single-member decrease holds at its design radius on a modest region.
  Region rg = square(2.0);
  auto reports = decrease_check(cert, sys, rg, 1.0 / 14.641, small_budget());
  REQUIRE(reports.size() == 1);
  CHECK(reports[0].passed);
}
