#include <doctest.h>

#include <cmath>

#include "sdlyap/signal.hpp"

using namespace sdlyap;

TEST_CASE("constant signals") {
  Signal s = Signal::constant({1.5, -2.0});
  CHECK(s.dim() == 2);
  CHECK(s.eval(0.0) == std::vector<double>{1.5, -2.0});
  CHECK(s.eval(100.0) == std::vector<double>{1.5, -2.0});
  CHECK(s.breakpoints().empty());
  CHECK(s.codomain()[0].lo == 1.5);
  CHECK(s.codomain()[0].hi == 1.5);
}

TEST_CASE("piecewise-constant signals are right-continuous and hold at the ends") {
  Signal s = Signal::piecewise({0.0, 1.0, 2.0}, {{1.0}, {2.0}, {3.0}});
  CHECK(s.eval(0.0)[0] == 1.0);
  CHECK(s.eval(0.5)[0] == 1.0);
  CHECK(s.eval(1.0)[0] == 2.0);  // jump value at the breakpoint
  CHECK(s.eval(1.999)[0] == 2.0);
  CHECK(s.eval(2.0)[0] == 3.0);
  CHECK(s.eval(50.0)[0] == 3.0);   // hold past the last breakpoint
  CHECK(s.eval(-1.0)[0] == 1.0);   // clamp before the first
  CHECK(s.codomain()[0].lo == 1.0);
  CHECK(s.codomain()[0].hi == 3.0);
}

TEST_CASE("expression signals evaluate components of t") {
  Signal s = Signal::expression({Expression::parse("sin(t)"), Expression::parse("2*t")});
  CHECK(s.dim() == 2);
  CHECK(s.eval(0.5)[0] == doctest::Approx(std::sin(0.5)));
  CHECK(s.eval(0.5)[1] == doctest::Approx(1.0));
  CHECK_THROWS(Signal::expression({Expression::parse("x[1]")}));
}

TEST_CASE("time shifts satisfy shifted(theta)(t) == original(t + theta)") {
  Rng rng(11);
  Signal pwc = make_random_pwc(rng, 2, 1.5, 0.3, 5.0);
  Signal expr = Signal::expression({Expression::parse("sin(t) + t/3")});
  Signal cst = Signal::constant({0.7});
  const double theta = 0.77;
  for (Signal* sig : {&pwc, &expr, &cst}) {
    Signal sh = sig->shifted(theta);
    for (double t = 0.0; t < 4.0; t += 0.0831) {
      auto a = sh.eval(t);
      auto b = sig->eval(t + theta);
      REQUIRE(a.size() == b.size());
      for (std::size_t i = 0; i < a.size(); ++i) CHECK(a[i] == doctest::Approx(b[i]).epsilon(1e-12));
    }
  }
}

TEST_CASE("random piecewise signals respect amplitude and dwell") {
  Rng rng(42);
  Signal s = make_random_pwc(rng, 3, 2.0, 0.25, 4.0);
  CHECK(s.dim() == 3);
  REQUIRE(!s.breakpoints().empty());
  CHECK(s.breakpoints().front() == 0.0);
  for (std::size_t i = 1; i < s.breakpoints().size(); ++i)
    CHECK(s.breakpoints()[i] - s.breakpoints()[i - 1] == doctest::Approx(0.25));
  for (double t = 0; t <= 4.0; t += 0.05)
    for (double vi : s.eval(t)) CHECK(std::fabs(vi) <= 2.0 + 1e-12);

  Signal nn = make_random_pwc(rng, 1, 1.0, 0.5, 3.0, 0.3, /*nonneg=*/true);
  for (double t = 0; t <= 3.0; t += 0.05) CHECK(nn.eval(t)[0] >= 0.0);
}

TEST_CASE("random box signals stay inside the box") {
  Rng rng(7);
  Box box{{0.0, 1.0}, {-1.0, 1.0}};
  Signal s = make_random_pwc_box(rng, box, 0.2, 3.0);
  for (double t = 0; t <= 3.0; t += 0.05) {
    auto v = s.eval(t);
    CHECK(v[0] >= 0.0);
    CHECK(v[0] <= 1.0);
    CHECK(std::fabs(v[1]) <= 1.0);
  }
  CHECK(box_subset(s.codomain(), box, 1e-12));
}

TEST_CASE("signal spec mini-syntax") {
  Rng rng(1);
  Signal c = parse_signal_spec("const:0.5,-1", 2, 10.0, rng);
  CHECK(c.eval(3.0) == std::vector<double>{0.5, -1.0});

  Signal p = parse_signal_spec("pwc:0,1;2,4", 1, 10.0, rng);
  CHECK(p.eval(1.0)[0] == 1.0);
  CHECK(p.eval(3.0)[0] == 4.0);

  Signal e = parse_signal_spec("expr:cos(t)", 1, 10.0, rng);
  CHECK(e.eval(0.0)[0] == 1.0);

  Signal r = parse_signal_spec("rand:pwc,amplitude=2,dwell=0.5", 2, 10.0, rng);
  CHECK(r.dim() == 2);
  for (double t = 0; t <= 10.0; t += 0.1)
    for (double vi : r.eval(t)) CHECK(std::fabs(vi) <= 2.0 + 1e-12);

  CHECK_THROWS(parse_signal_spec("const:1", 2, 10.0, rng));       // dimension mismatch
  CHECK_THROWS(parse_signal_spec("nope:1", 1, 10.0, rng));        // unknown prefix
  CHECK_THROWS(parse_signal_spec("pwc:0,1;bad,2", 1, 10.0, rng)); // malformed number
  CHECK_THROWS(parse_signal_spec("rand:pwc,dwell=0", 1, 10.0, rng));   // dwell must be positive
  CHECK_THROWS(parse_signal_spec("rand:pwc,speed=1", 1, 10.0, rng));   // unknown option
  Signal dflt = parse_signal_spec("rand:pwc,amplitude=2", 1, 10.0, rng);  // dwell defaults
  CHECK(dflt.dim() == 1);
}
