#include <cmath>
#include <cstddef>
#include <stdexcept>
#include <string>
#include <vector>

#include "doctest.h"
#include "sdlyap/comparison.hpp"
#include "sdlyap/lemma.hpp"

using namespace sdlyap;

namespace {

ComparisonFunction pd(const std::string& text) {
  return ComparisonFunction::parse(text, FnClass::PositiveDefinite);
}

SampledSignal uniform_grid(double t0, double t1, std::size_t n) {
  SampledSignal s;
  s.times.resize(n);
  s.values.assign(n, 0.0);
  for (std::size_t i = 0; i < n; ++i)
    s.times[i] = t0 + (t1 - t0) * static_cast<double>(i) / static_cast<double>(n - 1);
  return s;
}

SampledSignal constant_signal(double t0, double t1, std::size_t n, double level) {
  SampledSignal s = uniform_grid(t0, t1, n);
  s.values.assign(n, level);
  return s;
}

}  // namespace

// ============================================================================
// sigma_from_rho
// ============================================================================

TEST_CASE("lemma: linear rate integrates to the exponential") {
  const KLFunction sigma = sigma_from_rho(pd("s"));
  CHECK(sigma.valid());
  CHECK(sigma.repr() == KLFunction::Repr::FlowOfRho);
  CHECK(std::abs(sigma.value(2.0, 1.0) - 2.0 * std::exp(-1.0)) <= 1e-8);
  CHECK(std::abs(sigma.value(1.0, 2.5) - std::exp(-2.5)) <= 1e-8);
  CHECK(std::abs(sigma.value(10.0, 0.1) - 10.0 * std::exp(-0.1)) <= 1e-8);
}

TEST_CASE("lemma: quadratic rate integrates to the hyperbolic decay") {
  const KLFunction sigma = sigma_from_rho(pd("s^2"));
  CHECK(std::abs(sigma.value(1.0, 3.0) - 0.25) <= 1e-8);
  // s / (1 + s t) closed form at a few more points
  CHECK(std::abs(sigma.value(2.0, 1.0) - 2.0 / 3.0) <= 1e-8);
  CHECK(std::abs(sigma.value(0.5, 4.0) - 0.5 / 3.0) <= 1e-8);
}

TEST_CASE("lemma: zero stays at zero and time zero is exact") {
  const KLFunction sigma = sigma_from_rho(pd("s^2"));
  for (double t : {0.0, 0.3, 1.0, 7.0, 50.0}) CHECK(sigma.value(0.0, t) == 0.0);
  for (double s : {0.3, 1.0, 1.7, 9.25}) CHECK(sigma.value(s, 0.0) == s);
  CHECK(sigma.value(-1.0, 2.0) == 0.0);
  // negative times extend as s * exp(-t)
  CHECK(sigma.value(2.0, -1.0) == doctest::Approx(2.0 * std::exp(1.0)).epsilon(1e-12));
}

TEST_CASE("lemma: flow values are memoized deterministically") {
  const KLFunction sigma = sigma_from_rho(pd("s^2"));
  const double first = sigma.value(3.0, 1.25);
  const double again = sigma.value(3.0, 1.25);
  CHECK(first == again);
  const KLFunction fresh = sigma_from_rho(pd("s^2"));
  CHECK(fresh.value(3.0, 1.25) == first);
  CHECK(sigma.describe().find("flow") != std::string::npos);
}

TEST_CASE("lemma: flow satisfies the semigroup property") {
  for (const char* text : {"s", "s^2", "s/(1+s)"}) {
    const KLFunction sigma = sigma_from_rho(pd(text));
    for (double s : {0.1, 1.0, 10.0}) {
      for (double t1 : {0.1, 1.0, 5.0}) {
        for (double t2 : {0.1, 1.0, 5.0}) {
          const double composed = sigma.value(sigma.value(s, t1), t2);
          const double direct = sigma.value(s, t1 + t2);
          CHECK(std::abs(composed - direct) <= 1e-7);
        }
      }
    }
  }
}

TEST_CASE("lemma: flow preserves order in the start value") {
  const KLFunction sigma = sigma_from_rho(pd("s^2"));
  for (double t : {0.5, 2.0, 8.0}) {
    double prev = -1.0;
    for (int i = 0; i <= 20; ++i) {
      const double s = 0.25 * i;
      const double v = sigma.value(s, t);
      CHECK(v >= prev - 1e-9);
      prev = v;
    }
  }
}

TEST_CASE("lemma: constructed flow passes the two-argument class validation") {
  const KLFunction sigma = sigma_from_rho(pd("s"));
  const auto rep = validate_kl(sigma, {0.1, 0.5, 1.0, 2.0, 5.0}, {0.0, 0.5, 1.0, 2.0, 5.0});
  CHECK(rep.passed);
  CHECK(rep.monotone_in_s);
  CHECK(rep.monotone_in_t);
  CHECK(rep.decays);
}

TEST_CASE("lemma: rates that leave the admissible class are rejected") {
  CHECK_THROWS_WITH_AS(sigma_from_rho(pd("s*(1 - s)")), doctest::Contains("negative at"),
                       std::invalid_argument);
  CHECK_THROWS_WITH_AS(sigma_from_rho(pd("s + 1")), doctest::Contains("rho(0)"),
                       std::invalid_argument);
  CHECK_THROWS_AS(sigma_from_rho(ComparisonFunction()), std::invalid_argument);
}

// ============================================================================
// comparison_check
// ============================================================================

TEST_CASE("lemma: pure decay meets its own envelope sharply") {
  SampledSignal y = uniform_grid(0.0, 10.0, 1001);
  for (std::size_t i = 0; i < y.times.size(); ++i) y.values[i] = std::exp(-y.times[i]);
  const SampledSignal u = constant_signal(0.0, 10.0, 1001, 0.0);

  const EnvelopeReport rep = comparison_check(y, u, pd("s"), 1e-6);
  CHECK(rep.hypothesis_ok);
  CHECK(rep.passed);
  CHECK(std::abs(rep.worst_margin) <= 1e-6);
}

TEST_CASE("lemma: flat trajectory at the input level violates the premise") {
  const SampledSignal y = constant_signal(0.0, 5.0, 101, 1.0);
  const SampledSignal u = constant_signal(0.0, 5.0, 101, 1.0);

  const EnvelopeReport rep = comparison_check(y, u, pd("s"), 0.01);
  CHECK_FALSE(rep.hypothesis_ok);
  CHECK_FALSE(rep.passed);
  CHECK(rep.worst_margin == doctest::Approx(-1.0).epsilon(1e-9));
  CHECK(rep.note.find("hypothesis violated") != std::string::npos);
}

TEST_CASE("lemma: trajectory strictly under the input passes vacuously") {
  const SampledSignal y = constant_signal(0.0, 5.0, 101, 1.0);
  const SampledSignal u = constant_signal(0.0, 5.0, 101, 1.1);

  const EnvelopeReport rep = comparison_check(y, u, pd("s"), 1e-6);
  CHECK(rep.hypothesis_ok);
  CHECK(rep.passed);
  CHECK(rep.worst_margin == doctest::Approx(0.1).epsilon(1e-9));
}

TEST_CASE("lemma: envelope violations are reported with their time") {
  // Premise-satisfying until a jump above the flowed start that decays too
  // slowly to have come from the flow: inject a plateau above the envelope.
  SampledSignal y = uniform_grid(0.0, 10.0, 1001);
  const SampledSignal u = constant_signal(0.0, 10.0, 1001, 0.0);
  for (std::size_t i = 0; i < y.times.size(); ++i) {
    const double t = y.times[i];
    y.values[i] = std::exp(-t) + (t >= 5.0 ? 0.5 * std::exp(-0.01 * (t - 5.0)) : 0.0);
  }
  // The slow tail keeps the sampled slope above -rho(y): the premise itself
  // fails, which is the honest diagnosis for this trajectory.
  const EnvelopeReport rep = comparison_check(y, u, pd("s"), 1e-3);
  CHECK_FALSE(rep.hypothesis_ok);
  CHECK(rep.witness_time >= 5.0);
}

TEST_CASE("lemma: sampled signals are validated") {
  SampledSignal bad;
  bad.times = {0.0, 1.0};
  bad.values = {1.0, 1.0};
  CHECK_THROWS_WITH_AS(bad.validate(), doctest::Contains("at least 3"), std::invalid_argument);

  bad.times = {0.0, 1.0, 0.5};
  bad.values = {1.0, 1.0, 1.0};
  CHECK_THROWS_WITH_AS(bad.validate(), doctest::Contains("strictly increasing"),
                       std::invalid_argument);

  bad.times = {0.0, 1.0, 2.0};
  bad.values = {1.0, std::nan(""), 1.0};
  CHECK_THROWS_WITH_AS(bad.validate(), doctest::Contains("non-finite"), std::invalid_argument);

  bad.values = {1.0, 1.0};
  CHECK_THROWS_WITH_AS(bad.validate(), doctest::Contains("differ in length"),
                       std::invalid_argument);

  const SampledSignal y = constant_signal(0.0, 5.0, 11, 1.0);
  const SampledSignal shifted = constant_signal(0.1, 5.1, 11, 1.0);
  CHECK_THROWS_WITH_AS(comparison_check(y, shifted, pd("s"), 0.1),
                       doctest::Contains("share one time grid"), std::invalid_argument);
  CHECK_THROWS_WITH_AS(comparison_check(y, constant_signal(0.0, 5.0, 12, 1.0), pd("s"), 0.1),
                       doctest::Contains("share one time grid"), std::invalid_argument);
  CHECK_THROWS_WITH_AS(comparison_check(y, y, pd("s"), -0.1), doctest::Contains("tol"),
                       std::invalid_argument);
}

TEST_CASE("lemma: generated scenarios satisfy premise and conclusion") {
  int checked = 0;
  for (std::uint64_t seed = 1; seed <= 100; ++seed) {
    const ComparisonFunction rho = (seed % 2 == 0) ? pd("0.25*s^2") : pd("s");
    const EnvelopeScenario sc = make_comparison_scenario(rho, seed);
    const EnvelopeReport rep = comparison_check(sc.y, sc.u, rho, 0.05);
    CAPTURE(seed);
    CHECK(rep.hypothesis_ok);
    CHECK(rep.passed);
    ++checked;
  }
  CHECK(checked == 100);
}

TEST_CASE("lemma: scenario generation is deterministic in the seed") {
  const ComparisonFunction rho = pd("s");
  const EnvelopeScenario one = make_comparison_scenario(rho, 42);
  const EnvelopeScenario two = make_comparison_scenario(rho, 42);
  CHECK(one.y.values == two.y.values);
  CHECK(one.u.values == two.u.values);
  const EnvelopeScenario other = make_comparison_scenario(rho, 43);
  CHECK(one.u.values != other.u.values);
}

// ============================================================================
// smallgain_envelope_check
// ============================================================================

TEST_CASE("lemma: decaying trajectory with no input passes every anchor") {
  SampledSignal y = uniform_grid(0.0, 10.0, 201);
  for (std::size_t i = 0; i < y.times.size(); ++i) y.values[i] = std::exp(-y.times[i]);
  const SampledSignal u = constant_signal(0.0, 10.0, 201, 0.0);
  const KLFunction sigma =
      KLFunction::closed_form([](double s, double t) { return s * std::exp(-t); }, "s e^-t");
  const ComparisonFunction a = ComparisonFunction::parse("s/2", FnClass::K);

  const EnvelopeReport rep = smallgain_envelope_check(y, u, sigma, a, 1.0, 1e-9);
  CHECK(rep.hypothesis_ok);
  CHECK(rep.passed);
  CHECK(rep.worst_margin >= -1e-9);
  CHECK(rep.note.find("necessary consequences") != std::string::npos);
}

TEST_CASE("lemma: flat trajectory at the input level has zero slack") {
  const SampledSignal y = constant_signal(0.0, 10.0, 101, 1.0);
  const SampledSignal u = constant_signal(0.0, 10.0, 101, 1.0);
  const KLFunction sigma =
      KLFunction::closed_form([](double s, double t) { return s * std::exp(-t); }, "s e^-t");
  const ComparisonFunction a = ComparisonFunction::parse("s/2", FnClass::K);

  const EnvelopeReport rep = smallgain_envelope_check(y, u, sigma, a, 0.5, 1e-9);
  CHECK(rep.hypothesis_ok);
  CHECK(rep.passed);
  CHECK(rep.worst_margin == doctest::Approx(0.0));
}

TEST_CASE("lemma: spikes above every envelope term are caught with a witness") {
  SampledSignal y = uniform_grid(0.0, 10.0, 201);
  const SampledSignal u = constant_signal(0.0, 10.0, 201, 0.0);
  for (std::size_t i = 0; i < y.times.size(); ++i) {
    y.values[i] = std::exp(-y.times[i]);
    if (std::abs(y.times[i] - 5.0) < 1e-9) y.values[i] = 2.0;
  }
  const KLFunction sigma =
      KLFunction::closed_form([](double s, double t) { return s * std::exp(-t); }, "s e^-t");
  const ComparisonFunction a = ComparisonFunction::parse("s/2", FnClass::K);

  const EnvelopeReport rep = smallgain_envelope_check(y, u, sigma, a, 1.0, 1e-3);
  CHECK_FALSE(rep.hypothesis_ok);
  CHECK_FALSE(rep.passed);
  CHECK(rep.witness_time == doctest::Approx(5.0));
  CHECK(rep.witness_anchor <= 5.0);
  CHECK(rep.note.find("hypothesis violated") != std::string::npos);
}

TEST_CASE("lemma: gains at or above the identity are rejected") {
  const SampledSignal y = constant_signal(0.0, 10.0, 101, 0.5);
  const SampledSignal u = constant_signal(0.0, 10.0, 101, 1.0);
  const KLFunction sigma =
      KLFunction::closed_form([](double s, double t) { return s * std::exp(-t); }, "s e^-t");

  CHECK_THROWS_WITH_AS(
      smallgain_envelope_check(y, u, sigma, ComparisonFunction::parse("2*s", FnClass::K), 1.0, 0.1),
      doctest::Contains("below the identity"), std::invalid_argument);
  CHECK_THROWS_WITH_AS(
      smallgain_envelope_check(y, u, sigma, ComparisonFunction::parse("s", FnClass::K), 1.0, 0.1),
      doctest::Contains("below the identity"), std::invalid_argument);
  CHECK_THROWS_WITH_AS(
      smallgain_envelope_check(y, u, sigma, ComparisonFunction::parse("s/2 + 1", FnClass::K), 1.0,
                               0.1),
      doctest::Contains("a(0)"), std::invalid_argument);
  CHECK_THROWS_WITH_AS(
      smallgain_envelope_check(y, u, sigma, ComparisonFunction::parse("s/2", FnClass::K), -1.0,
                               0.1),
      doctest::Contains("M must be"), std::invalid_argument);
}

TEST_CASE("lemma: generated contraction scenarios satisfy all consequences") {
  const ComparisonFunction a = ComparisonFunction::parse("s/2", FnClass::K);
  const KLFunction fitted = KLFunction::fitted_exponential(1.0, 0.5);
  const KLFunction flowed = sigma_from_rho(pd("0.5*s"));
  int checked = 0;
  for (std::uint64_t seed = 1; seed <= 100; ++seed) {
    const KLFunction& sigma = (seed % 2 == 0) ? fitted : flowed;
    const EnvelopeScenario sc = make_smallgain_scenario(sigma, 1.0, seed);
    const EnvelopeReport rep = smallgain_envelope_check(sc.y, sc.u, sigma, a, 1.0, 1e-3);
    CAPTURE(seed);
    CHECK(rep.hypothesis_ok);
    CHECK(rep.passed);
    ++checked;
  }
  CHECK(checked == 100);
}
