#include "sdlyap/builtins.hpp"

#include <array>
#include <charconv>
#include <cmath>
#include <limits>
#include <stdexcept>

#include "sdlyap/comparison.hpp"
#include "sdlyap/simulate.hpp"

namespace sdlyap {

namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();

std::string fmt(double v) {
  std::array<char, 32> buf;
  auto res = std::to_chars(buf.data(), buf.data() + buf.size(), v);
  return std::string(buf.data(), res.ptr);
}

ComparisonFunction cf(const std::string& text, FnClass cls) {
  return ComparisonFunction::parse(text, cls);
}

SystemModel make_backstep_scalar_loop() {
  PlantModel plant;
  plant.n = 1;
  plant.m = 1;
  plant.l = 0;
  plant.p = 1;
  plant.f_open = {Expression::parse("u[1]")};
  plant.H = {Expression::parse("x[1]")};
  plant.k = {Expression::parse("-2*x[1]")};
  plant.measurement_error = true;
  plant.actuator_error = false;
  plant.U_act = {{0.0, 0.0}};
  plant.name = "backstep-scalar";
  SystemModel closed = emulate_feedback(plant, Expression::constant(0.225), 0.25);
  closed.name = "backstep-scalar";
  return closed;
}

}  // namespace

// ============================================================================
// Factories
// ============================================================================

SystemModel make_planar_system(double delta_lo, double delta_hi, double h, double r,
                               bool with_input) {
  if (!(delta_hi >= delta_lo) || delta_lo < 0.0)
    throw std::invalid_argument("planar system: need 0 <= delta_lo <= delta_hi");
  SystemModel sys;
  sys.n = 2;
  sys.l = 2;
  sys.m = 1;
  sys.p = 2;
  sys.f = {Expression::parse("-2*x[1] - d[1]*x[1]^3 + x[2]"),
           Expression::parse("d[2]*x[2]^2 - x[2]^3 - 2*xs[2] + v[1]")};
  sys.H = {Expression::parse("x[1]"), Expression::parse("x[2]")};
  sys.h = Expression::constant(h);
  sys.r = r;
  sys.D = {{delta_lo, delta_hi}, {-1.0, 1.0}};
  sys.U = with_input ? Box{{-kInf, kInf}} : Box{{0.0, 0.0}};
  return sys;
}

LyapunovCertificate make_planar_vector_certificate(double c, double design_r) {
  if (!(c > 1.0 && c < 2.0))
    throw std::invalid_argument("vector certificate: c must lie in (1, 2)");
  const double rate1 = (2.0 - c) / 2.0;
  const double rate2 = (1.0 - 2.0 * design_r - 5.0 * c * c * design_r) / 2.0;
  if (!(rate2 > 0.0))
    throw std::invalid_argument("vector certificate: design_r too large for a positive rate");
  LyapunovCertificate cert;
  cert.k = 2;
  cert.V = {Expression::parse("x[1]^2/2"), Expression::parse("x[2]^2/2")};
  cert.rho = {cf(fmt(rate1) + "*s", FnClass::PositiveDefinite),
              cf(fmt(rate2) + "*s", FnClass::PositiveDefinite)};
  cert.a = cf("s/" + fmt(c * c), FnClass::N);
  cert.zeta = cf("2*s^2", FnClass::N);
  cert.a1 = cf("s^2/4", FnClass::KInfinity);
  cert.a2 = cf("s^2/2", FnClass::KInfinity);
  cert.g = {Expression::parse("x[2]"), Expression::parse("x[2]")};
  cert.analytic_b = {Expression(), Expression::parse(fmt(c * c) + "*x[2]^2 + " + fmt(c * c * c) +
                                                     "*abs(x[2])^3 + " + fmt(2.0 * c + 0.5) +
                                                     "*abs(x[2])")};
  return cert;
}

LyapunovCertificate make_planar_single_certificate(double c, double design_r) {
  if (!(c > 1.0)) throw std::invalid_argument("single certificate: c must exceed 1");
  const double mu = (7.0 - 40.0 * c * c * design_r - 8.0 * design_r) / 8.0;
  if (!(mu > 0.0))
    throw std::invalid_argument("single certificate: design_r too large for a positive rate");
  const double mu_eff = 0.9 * mu;
  const std::string sq = "(x[1]^2 + x[2]^2)";
  LyapunovCertificate cert;
  cert.k = 1;
  cert.V = {Expression::parse(sq + "/2")};
  cert.rho = {cf(fmt(2.0 * mu_eff) + "*s", FnClass::PositiveDefinite)};
  cert.a = cf("s/" + fmt(c * c), FnClass::N);
  cert.zeta = cf("2*s^2", FnClass::N);
  cert.a1 = cf("s^2/2", FnClass::KInfinity);
  cert.a2 = cf("s^2/2", FnClass::KInfinity);
  cert.g = {Expression::parse("x[2]")};
  cert.analytic_b = {Expression::parse(fmt(c * c) + "*" + sq + " + " + fmt(c * c * c) + "*" + sq +
                                       "^1.5 + " + fmt(2.0 * c + 0.5) + "*" + sq + "^0.5")};
  cert.W = Expression::parse(fmt(mu_eff) + "*" + sq);
  return cert;
}

SystemModel make_scalar_hold_system() {
  SystemModel sys;
  sys.n = 1;
  sys.l = 0;
  sys.m = 1;
  sys.p = 1;
  sys.f = {Expression::parse("-2*xs[1]")};
  sys.H = {Expression::parse("x[1]")};
  sys.h = Expression::constant(0.25);
  sys.r = 1.2;
  sys.U = {{0.0, 0.0}};
  sys.name = "scalar-hold";
  return sys;
}

LyapunovCertificate make_scalar_hold_certificate() {
  LyapunovCertificate cert;
  cert.k = 1;
  cert.V = {Expression::parse("x[1]^2/2")};
  cert.rho = {cf("0.02*s", FnClass::PositiveDefinite)};
  cert.a = cf("s/2", FnClass::N);
  cert.zeta = cf("s^2", FnClass::N);
  cert.a1 = cf("s^2/2", FnClass::KInfinity);
  cert.a2 = cf("s^2/2", FnClass::KInfinity);
  cert.g = {Expression::parse("x[1]")};
  cert.W = Expression::parse("0.01*x[1]^2");
  return cert;
}

// ============================================================================
// Registry
// ============================================================================

namespace {

// Design constants behind the fixed entries: contraction factor 1.1, vector
// rates pinned at sampling radius 0.11, single rates at its closed-form bound.
constexpr double kC = 1.1;
constexpr double kVectorDesignR = 0.11;
const double kSingleDesignR = 1.0 / 14.641;

}  // namespace

std::vector<std::string> builtin_names() {
  return {"ex41", "ex41-single", "ex41-vector", "ex412", "scalar-hold", "backstep-scalar"};
}

bool is_builtin(const std::string& name) {
  for (const auto& n : builtin_names())
    if (n == name) return true;
  return false;
}

SystemModel builtin_system(const std::string& name) {
  if (name == "ex41") {
    SystemModel sys = make_planar_system(0.0, 1.0, 0.11, 1.0, true);
    sys.name = name;
    return sys;
  }
  if (name == "ex41-vector") {
    SystemModel sys = make_planar_system(0.0, 1.0, 0.11, 1.0, true);
    sys.name = name;
    return sys;
  }
  if (name == "ex41-single") {
    SystemModel sys = make_planar_system(1.0, 1.0, 0.06, 1.0, true);
    sys.name = name;
    return sys;
  }
  if (name == "ex412") {
    SystemModel sys = make_planar_system(0.0, 1.0, 0.11, 1.0, false);
    sys.name = name;
    return sys;
  }
  if (name == "scalar-hold") return make_scalar_hold_system();
  if (name == "backstep-scalar") return make_backstep_scalar_loop();
  throw std::invalid_argument("unknown builtin '" + name + "'");
}

bool builtin_has_certificate(const std::string& name) {
  return name == "ex41-single" || name == "ex41-vector" || name == "ex412" ||
         name == "scalar-hold";
}

LyapunovCertificate builtin_certificate(const std::string& name) {
  if (name == "ex41-vector" || name == "ex412")
    return make_planar_vector_certificate(kC, kVectorDesignR);
  if (name == "ex41-single") return make_planar_single_certificate(kC, kSingleDesignR);
  if (name == "scalar-hold") return make_scalar_hold_certificate();
  if (is_builtin(name))
    throw std::invalid_argument("builtin '" + name + "' has no paired certificate");
  throw std::invalid_argument("unknown builtin '" + name + "'");
}

}  // namespace sdlyap
