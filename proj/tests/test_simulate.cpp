#include <doctest.h>

#include <cmath>
#include <sstream>

#include "sdlyap/simulate.hpp"

using namespace sdlyap;

namespace {

SystemModel decay_model(const std::string& f1, double h_const, double r) {
  SystemModel m;
  m.n = 1;
  m.f = {Expression::parse(f1)};
  m.H = {Expression::parse("x[1]")};
  m.p = 1;
  m.h = Expression::constant(h_const);
  m.r = r;
  m.name = "test";
  return m;
}

}  // namespace

TEST_CASE("smooth dynamics integrate to RK4 accuracy") {
  SystemModel m = decay_model("-x[1]", 5.0, 5.0);
  IntegratorConfig cfg;
  cfg.t_final = 2.0;
  Trajectory tr = simulate(m, {1.0}, {}, cfg);
  CHECK(tr.termination == Trajectory::Termination::Completed);
  CHECK(tr.times.back() == doctest::Approx(2.0));
  CHECK(tr.states.back()[0] == doctest::Approx(std::exp(-2.0)).epsilon(1e-9));
  CHECK(tr.sampling_instants.size() == 1);  // single interval covers the run
}

TEST_CASE("integrator converges at fourth order") {
  SystemModel m = decay_model("-x[1]", 5.0, 5.0);
  auto error_at = [&](double step) {
    IntegratorConfig cfg;
    cfg.max_step = step;
    cfg.t_final = 1.0;
    Trajectory tr = simulate(m, {1.0}, {}, cfg);
    return std::fabs(tr.states.back()[0] - std::exp(-1.0));
  };
  double e1 = error_at(0.1), e2 = error_at(0.05);
  CHECK(e2 < e1);
  CHECK(e1 / e2 >= 12.0);  // ideal ratio 16
}

TEST_CASE("constant nominal period produces a uniform schedule") {
  SystemModel m = decay_model("-x[1]", 0.25, 0.3);
  IntegratorConfig cfg;
  cfg.t_final = 1.0;
  Trajectory tr = simulate(m, {1.0}, {}, cfg);
  REQUIRE(tr.sampling_instants.size() == 4);
  for (std::size_t i = 0; i < 4; ++i)
    CHECK(tr.sampling_instants[i] == doctest::Approx(0.25 * i).epsilon(1e-14));
}

TEST_CASE("schedule jitter scales the period by exp(-dtilde)") {
  SystemModel m = decay_model("-x[1]", 0.25, 0.3);
  InputSignals in;
  in.dtilde = Signal::constant({std::log(2.0)});
  IntegratorConfig cfg;
  cfg.t_final = 1.0;
  Trajectory tr = simulate(m, {1.0}, in, cfg);
  REQUIRE(tr.sampling_instants.size() >= 4);
  for (std::size_t i = 1; i < tr.sampling_instants.size(); ++i)
    CHECK(tr.sampling_instants[i] - tr.sampling_instants[i - 1] ==
          doctest::Approx(0.125).epsilon(1e-12));
  CHECK_THROWS(simulate(m, {1.0}, {{}, {}, Signal::constant({-0.1})}, cfg));
}

TEST_CASE("state-dependent periods follow h at the held state") {
  SystemModel m = decay_model("-x[1]", 0.0, 0.3);
  m.h = Expression::parse("0.1 + 0.05*tanh(x[1]^2)");
  IntegratorConfig cfg;
  cfg.t_final = 1.0;
  Trajectory tr = simulate(m, {1.0}, {}, cfg);
  REQUIRE(tr.sampling_instants.size() >= 3);
  for (std::size_t i = 0; i + 1 < tr.sampling_instants.size(); ++i) {
    double xs = tr.held_states[i][0];
    double expect = 0.1 + 0.05 * std::tanh(xs * xs);
    CHECK(tr.sampling_instants[i + 1] - tr.sampling_instants[i] ==
          doctest::Approx(expect).epsilon(1e-12));
  }
}

TEST_CASE("held-state dynamics halve the state each 0.25s interval") {
  SystemModel m = decay_model("-2*xs[1]", 0.25, 0.3);
  IntegratorConfig cfg;
  cfg.t_final = 2.0;
  Trajectory tr = simulate(m, {1.0}, {}, cfg);
  REQUIRE(tr.sampling_instants.size() == 8);
  for (std::size_t i = 0; i < tr.held_states.size(); ++i)
    CHECK(tr.held_states[i][0] == doctest::Approx(std::pow(0.5, double(i))).epsilon(1e-12));
}

TEST_CASE("each sampling instant opens a new interval at its exact time") {
  SystemModel m = decay_model("-2*xs[1]", 0.25, 0.3);
  IntegratorConfig cfg;
  cfg.t_final = 1.0;
  Trajectory tr = simulate(m, {1.0}, {}, cfg);
  REQUIRE(tr.sampling_instants.size() == 4);
  for (std::size_t i = 0; i < tr.sampling_instants.size(); ++i) {
    std::size_t row = 0;
    while (row < tr.rows() && tr.interval_index[row] != i) ++row;
    REQUIRE(row < tr.rows());
    CHECK(tr.times[row] == tr.sampling_instants[i]);
  }
  for (std::size_t row = 1; row < tr.rows(); ++row) {
    CHECK(tr.interval_index[row] >= tr.interval_index[row - 1]);
    CHECK(tr.interval_index[row] - tr.interval_index[row - 1] <= 1);
  }
}

TEST_CASE("disturbance breakpoints are integration restart points") {
  SystemModel m = decay_model("d[1]", 10.0, 10.0);
  m.l = 1;
  m.D = {{0.0, 3.0}};
  InputSignals in;
  in.d = Signal::piecewise({0.0, 0.33}, {{1.0}, {2.0}});
  IntegratorConfig cfg;
  cfg.t_final = 1.0;
  Trajectory tr = simulate(m, {0.0}, in, cfg);
  CHECK(tr.states.back()[0] == doctest::Approx(0.33 * 1.0 + 0.67 * 2.0).epsilon(1e-12));
  // The breakpoint shows up as an exact row.
  bool found = false;
  for (double t : tr.times) found = found || t == 0.33;
  CHECK(found);
}

TEST_CASE("held inputs freeze v at the sampling instant") {
  // xdot = vs - v with v = t: on [tau, tau+0.25) the rate is tau - t.
  SystemModel m = decay_model("vs[1] - v[1]", 0.25, 0.3);
  m.m = 1;
  m.U = {{-5.0, 5.0}};
  InputSignals in;
  in.v = Signal::expression({Expression::parse("t")});
  in.v.set_codomain({{-5.0, 5.0}});
  IntegratorConfig cfg;
  cfg.t_final = 1.0;
  Trajectory tr = simulate(m, {0.0}, in, cfg);
  // Four intervals, each contributing -T^2/2 with T = 0.25.
  CHECK(tr.states.back()[0] == doctest::Approx(-4 * 0.25 * 0.25 / 2).epsilon(1e-12));
  REQUIRE(tr.held_inputs.size() == 4);
  for (std::size_t i = 0; i < 4; ++i)
    CHECK(tr.held_inputs[i][0] == doctest::Approx(tr.sampling_instants[i]));
}

TEST_CASE("inputs outside their declared boxes are rejected") {
  SystemModel m = decay_model("d[1]", 1.0, 1.0);
  m.l = 1;
  m.D = {{0.0, 1.0}};
  InputSignals in;
  in.d = Signal::constant({2.0});
  CHECK_THROWS(simulate(m, {0.0}, in, {}));
  in.d = Signal::constant({0.5});
  CHECK_NOTHROW(simulate(m, {0.0}, in, {}));
}

TEST_CASE("finite escape terminates with a blow-up record") {
  SystemModel m = decay_model("x[1]^2", 1.0, 1.0);
  IntegratorConfig cfg;
  cfg.t_final = 2.0;
  Trajectory tr = simulate(m, {2.0}, {}, cfg);
  CHECK(tr.termination == Trajectory::Termination::BlowUp);
  CHECK(tr.termination_time <= 0.55);  // true escape time is 0.5
  CHECK(tr.times.back() == tr.termination_time);
  double last = tr.states.back()[0];
  CHECK((!std::isfinite(last) || std::fabs(last) > 1e7));
}

TEST_CASE("feedback emulation composes the held control law") {
  PlantModel plant;
  plant.n = 1;
  plant.m = 1;
  plant.p = 1;
  plant.f_open = {Expression::parse("u[1]")};
  plant.H = {Expression::parse("x[1]")};
  plant.k = {Expression::parse("-x[1]")};
  plant.U_act = {{-5.0, 5.0}};
  plant.name = "integrator";

  SystemModel closed = emulate_feedback(plant, Expression::constant(0.5), 0.5);
  CHECK(closed.n == 1);
  CHECK(closed.m == 2);  // actuator error + one held measurement-error slot
  CHECK(closed.U.size() == 2);
  CHECK(closed.f[0].equals(Expression::parse("-(xs[1] + vs[2]) + v[1]")));

  // Constant measurement error e = 0.1 gives x_{i+1} = x_i - 0.5 (x_i + 0.1).
  InputSignals in;
  in.v = Signal::constant({0.0, 0.1});
  IntegratorConfig cfg;
  cfg.t_final = 2.0;
  Trajectory tr = simulate(closed, {1.0}, in, cfg);
  double expect = 1.0;
  for (std::size_t i = 1; i < tr.held_states.size(); ++i) {
    expect = expect - 0.5 * (expect + 0.1);
    CHECK(tr.held_states[i][0] == doctest::Approx(expect).epsilon(1e-12));
  }

  // Without error channels the loop reduces to u = k(xs).
  plant.measurement_error = false;
  plant.actuator_error = false;
  SystemModel bare = emulate_feedback(plant, Expression::constant(0.5), 0.5);
  CHECK(bare.m == 1);
  CHECK(bare.f[0].equals(Expression::parse("-xs[1]")));
  CHECK(bare.U[0].lo == 0.0);
  CHECK(bare.U[0].hi == 0.0);
}

TEST_CASE("solutions are invariant under time shifts of the inputs") {
  SystemModel m = decay_model("-x[1] + d[1]", 0.25, 0.3);
  m.l = 1;
  m.D = {{-1.0, 1.0}};
  Rng rng(99);
  InputSignals in;
  in.d = make_random_pwc(rng, 1, 1.0, 0.313, 5.0);
  TimeInvarianceReport rep = check_time_invariance(m, {0.8}, in, 2.1, 0.77);
  CHECK(rep.compared_rows > 100);
  CHECK(rep.max_deviation < 1e-9);
}

TEST_CASE("trajectories render as CSV with interval labels") {
  SystemModel m = decay_model("-2*xs[1]", 0.25, 0.3);
  IntegratorConfig cfg;
  cfg.t_final = 0.6;
  Trajectory tr = simulate(m, {1.0}, {}, cfg);
  std::ostringstream os;
  tr.write_csv(os);
  std::istringstream is(os.str());
  std::string line;
  REQUIRE(std::getline(is, line));
  CHECK(line == "t,x1,y1,interval_index");
  std::size_t rows = 0;
  while (std::getline(is, line)) ++rows;
  CHECK(rows == tr.rows());
}
