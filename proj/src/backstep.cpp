#include "sdlyap/backstep.hpp"

#include <algorithm>
#include <array>
#include <charconv>
#include <cmath>
#include <limits>
#include <optional>
#include <stdexcept>

#include <json.hpp>

#include "sdlyap/parallel.hpp"
#include "sdlyap/rng.hpp"
#include "sdlyap/simulate.hpp"

namespace sdlyap {
namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();
constexpr double kLevelSlack = 1e-9;   // relative slack on sublevel/ball membership
constexpr double kMarginSlack = 1e-9;  // relative slack before a margin counts as a violation
constexpr double kHMin = 1e-9;         // below this the admissible period counts as zero
constexpr double kHCap = 1e6;          // expansion cap of the period bracket
constexpr std::size_t kDisturbanceDraws = 32;

std::string fmt(double v) {
  std::array<char, 32> buf{};
  auto res = std::to_chars(buf.data(), buf.data() + buf.size(), v);
  return std::string(buf.data(), res.ptr);
}

std::string point_str(const std::vector<double>& x) {
  std::string s = "(";
  for (std::size_t i = 0; i < x.size(); ++i) {
    if (i) s += ", ";
    s += fmt(x[i]);
  }
  return s + ")";
}

bool within_level(double value, double level) {
  return value <= level + kLevelSlack * std::fabs(level) + 1e-15;
}

double violation_floor(double scale) { return kMarginSlack * std::fmax(1.0, std::fabs(scale)); }

std::vector<std::vector<double>> disturbance_probes(const Box& D) {
  std::vector<std::vector<double>> pts;
  if (D.empty()) {
    pts.emplace_back();
    return pts;
  }
  std::vector<double> mid(D.size());
  for (std::size_t j = 0; j < D.size(); ++j) mid[j] = 0.5 * (D[j].lo + D[j].hi);
  pts.push_back(mid);
  for_each_corner(D, [&](const std::vector<double>& p) { pts.push_back(p); });
  return pts;
}

std::vector<double> draw_disturbance(Rng& rng, const Box& D) {
  std::vector<double> d(D.size());
  for (std::size_t j = 0; j < D.size(); ++j) d[j] = rng.uniform(D[j].lo, D[j].hi);
  return d;
}

// ============================================================================
// Compiled drift/certificate bundle
// ============================================================================

/// Drift rows, control gain, and certificate members compiled against the
/// shared slot layout x[1..n], d[1..l].
struct Compiled {
  std::size_t n = 0, l = 0;
  VarLayout layout;
  std::vector<Program> F;
  Program gn;
  Program k;
  Program V;
  Program W;
  std::vector<Program> gradV;
  std::vector<Program> gradk;

  std::size_t slot_count() const { return n + l; }
};

Compiled compile_pair(const TriangularSystem& tri, const BackstepCertificate& cert, bool need_w,
                      bool need_grad_v, bool need_grad_k) {
  Compiled c;
  c.n = tri.n;
  c.l = tri.D.size();
  std::vector<VarKey> keys;
  keys.reserve(c.n + c.l);
  for (std::size_t i = 1; i <= c.n; ++i) keys.push_back({"x", static_cast<int>(i)});
  for (std::size_t i = 1; i <= c.l; ++i) keys.push_back({"d", static_cast<int>(i)});
  c.layout = VarLayout(std::move(keys));

  for (const auto& row : tri.drift()) c.F.push_back(compile(row, c.layout));
  c.gn = compile(tri.g.back(), c.layout);
  c.k = compile(cert.k, c.layout);
  c.V = compile(cert.V, c.layout);
  if (need_w) c.W = compile(cert.W, c.layout);
  if (need_grad_v)
    for (std::size_t i = 1; i <= c.n; ++i)
      c.gradV.push_back(compile(cert.V.differentiate({"x", static_cast<int>(i)}), c.layout));
  if (need_grad_k)
    for (std::size_t i = 1; i <= c.n; ++i)
      c.gradk.push_back(compile(cert.k.differentiate({"x", static_cast<int>(i)}), c.layout));
  return c;
}

/// Evaluates a state-only program with the state written into the leading
/// slots; disturbance slots are left as-is (the program never reads them).
double state_eval(const Program& p, const std::vector<double>& x, std::vector<double>& slots) {
  std::copy(x.begin(), x.end(), slots.begin());
  return p.run(slots.data());
}

Bindings zero_bindings(const Expression& e) {
  Bindings b;
  for (const auto& key : e.free_vars()) b[key] = 0.0;
  return b;
}

}  // namespace

// ============================================================================
// TriangularSystem
// ============================================================================

void TriangularSystem::validate() const {
  auto fail = [](const std::string& msg) {
    throw std::invalid_argument("triangular system: " + msg);
  };
  if (n == 0) fail("n must be at least 1");
  if (n > 3) fail("state chains longer than 3 are not supported");
  if (phi.size() != n) fail("phi: expected " + std::to_string(n) + " rows");
  if (g.size() != n) fail("g: expected " + std::to_string(n) + " entries");
  for (std::size_t j = 0; j < D.size(); ++j)
    if (!interval_finite(D[j]) || D[j].lo > D[j].hi)
      fail("D[" + std::to_string(j + 1) + "]: invalid interval");

  const int l = static_cast<int>(D.size());
  auto require_scope = [&](const Expression& e, const std::string& field, int row) {
    if (e.empty()) fail(field + ": empty expression");
    for (const auto& key : e.free_vars()) {
      const bool state_ok = key.name == "x" && key.index >= 1 && key.index <= row;
      const bool dist_ok = key.name == "d" && key.index >= 1 && key.index <= l;
      if (!state_ok && !dist_ok)
        fail(field + ": variable " + key.str() + " out of scope for row " + std::to_string(row));
    }
  };
  for (std::size_t i = 0; i < n; ++i) {
    const int row = static_cast<int>(i) + 1;
    if (phi[i].size() != i + 1)
      fail("phi row " + std::to_string(row) + ": expected " + std::to_string(i + 1) +
           " entries, got " + std::to_string(phi[i].size()));
    for (std::size_t j = 0; j <= i; ++j)
      require_scope(phi[i][j],
                    "phi[" + std::to_string(row) + "][" + std::to_string(j + 1) + "]", row);
    require_scope(g[i], "g[" + std::to_string(row) + "]", row);
  }

  // Sampled positivity of the channel gains on a fixed probe grid.
  std::vector<VarKey> keys;
  for (std::size_t i = 1; i <= n; ++i) keys.push_back({"x", static_cast<int>(i)});
  for (std::size_t i = 1; i <= D.size(); ++i) keys.push_back({"d", static_cast<int>(i)});
  VarLayout layout(std::move(keys));
  std::vector<double> slots(n + D.size(), 0.0);
  const std::array<double, 5> grid1d = {-10.0, -3.0, 0.0, 3.0, 10.0};
  std::vector<std::vector<double>> dps = disturbance_probes(D);
  std::vector<double> x(n, 0.0);
  for (std::size_t i = 0; i < n; ++i) {
    Program gp = compile(g[i], layout);
    std::vector<std::size_t> idx(n, 0);
    while (true) {
      for (std::size_t j = 0; j < n; ++j) x[j] = grid1d[idx[j]];
      for (const auto& d : dps) {
        std::copy(x.begin(), x.end(), slots.begin());
        std::copy(d.begin(), d.end(), slots.begin() + n);
        const double val = gp.run(slots.data());
        if (!(val > 0.0))
          fail("g[" + std::to_string(i + 1) + "]: must be positive, got " + fmt(val) + " at x = " +
               point_str(x) + ", d = " + point_str(d));
      }
      std::size_t j = 0;
      for (; j < n; ++j) {
        if (++idx[j] < grid1d.size()) break;
        idx[j] = 0;
      }
      if (j == n) break;
    }
  }
}

std::vector<Expression> TriangularSystem::drift() const {
  std::vector<Expression> rows;
  rows.reserve(n);
  for (std::size_t i = 0; i < n; ++i) {
    std::string s;
    for (std::size_t j = 0; j <= i; ++j) {
      if (j) s += " + ";
      s += "x[" + std::to_string(j + 1) + "]*(" + phi[i][j].str() + ")";
    }
    if (i + 1 < n) s += " + (" + g[i].str() + ")*x[" + std::to_string(i + 2) + "]";
    rows.push_back(Expression::parse(s));
  }
  return rows;
}

const Expression& TriangularSystem::control_gain() const {
  if (g.empty()) throw std::invalid_argument("triangular system: no channel gains");
  return g.back();
}

SystemModel TriangularSystem::emulated_loop(const Expression& k, double h) const {
  validate();
  if (!std::isfinite(h) || h <= 0.0)
    throw std::invalid_argument("emulated_loop: h must be positive and finite");
  PlantModel plant;
  plant.n = n;
  plant.m = 1;
  plant.l = D.size();
  plant.p = n;
  plant.f_open = drift();
  plant.f_open.back() =
      Expression::parse("(" + plant.f_open.back().str() + ") + (" + g.back().str() + ")*u[1]");
  for (std::size_t i = 1; i <= n; ++i)
    plant.H.push_back(Expression::parse("x[" + std::to_string(i) + "]"));
  plant.k = {k};
  plant.measurement_error = false;
  plant.actuator_error = false;
  plant.U_act = {{0.0, 0.0}};
  plant.D = D;
  plant.name = name.empty() ? "triangular" : name;
  SystemModel closed = emulate_feedback(plant, Expression::constant(h), h);
  // The substitution consumes the whole control channel, so the closed loop
  // has no exogenous input left.
  closed.m = 0;
  closed.U.clear();
  closed.name = plant.name + "-loop";
  closed.validate();
  return closed;
}

// ============================================================================
// BackstepCertificate
// ============================================================================

std::string to_string(BackstepCertificate::Variant v) {
  return v == BackstepCertificate::Variant::MeasurementError ? "measurement-error"
                                                             : "actuator-error";
}

void BackstepCertificate::validate(std::size_t n) const {
  auto fail = [](const std::string& msg) {
    throw std::invalid_argument("backstep certificate: " + msg);
  };
  if (n == 0) fail("state dimension must be positive");

  auto require_scope = [&](const Expression& e, const std::string& field) {
    if (e.empty()) fail(field + ": empty expression");
    for (const auto& key : e.free_vars())
      if (key.name != "x" || key.index < 1 || key.index > static_cast<int>(n))
        fail(field + ": unexpected variable " + key.str());
  };
  require_scope(V, "V");
  require_scope(k, "k");
  require_scope(W, "W");

  const double k0 = k.eval(zero_bindings(k));
  if (!(std::fabs(k0) <= 1e-9)) fail("k(0) must be zero, got " + fmt(k0));
  const double v0 = V.eval(zero_bindings(V));
  if (!(std::fabs(v0) <= 1e-12)) fail("V(0) must be zero, got " + fmt(v0));
  const double w0 = W.eval(zero_bindings(W));
  if (!(std::fabs(w0) <= 1e-12)) fail("W(0) must be zero, got " + fmt(w0));

  // Sampled positive definiteness and radial growth along probe rays.
  std::vector<std::vector<double>> dirs;
  for (std::size_t j = 0; j < n; ++j) {
    for (double s : {-1.0, 1.0}) {
      std::vector<double> dir(n, 0.0);
      dir[j] = s;
      dirs.push_back(dir);
    }
  }
  if (n > 1) {
    Box unit(n, Interval{-1.0, 1.0});
    const double inv = 1.0 / std::sqrt(static_cast<double>(n));
    for_each_corner(unit, [&](const std::vector<double>& c) {
      std::vector<double> dir(c);
      for (auto& v : dir) v *= inv;
      dirs.push_back(dir);
    });
  }
  auto eval_at = [&](const Expression& e, const std::vector<double>& dir, double radius) {
    Bindings b;
    for (const auto& key : e.free_vars()) b[key] = 0.0;
    for (std::size_t j = 0; j < n; ++j) {
      VarKey key{"x", static_cast<int>(j + 1)};
      if (b.count(key)) b[key] = radius * dir[j];
    }
    return e.eval(b);
  };
  for (const auto& dir : dirs) {
    for (double radius : {0.1, 1.0, 3.0}) {
      const double vv = eval_at(V, dir, radius);
      if (!(vv > 0.0))
        fail("V: must be positive away from the origin, got " + fmt(vv) + " at radius " +
             fmt(radius));
      const double ww = eval_at(W, dir, radius);
      if (!(ww > 0.0))
        fail("W: must be positive away from the origin, got " + fmt(ww) + " at radius " +
             fmt(radius));
    }
    if (!(eval_at(V, dir, 32.0) > eval_at(V, dir, 3.0)))
      fail("V: must grow along rays (sampled radial unboundedness)");
  }

  auto require_class = [&](const ComparisonFunction& fn, const std::string& field,
                           bool need_contraction) {
    if (!fn.valid()) fail(field + ": missing comparison function");
    if (fn.declared_class() != FnClass::N)
      fail(field + ": must be declared " + to_string(FnClass::N) + ", got " +
           to_string(fn.declared_class()));
    ClassValidationReport rep = validate_comparison_fn(fn, 200, 10.0);
    if (!rep.passed)
      fail(field + ": fails its " + to_string(FnClass::N) + " class checks");
    if (need_contraction && !rep.contraction_ok) fail(field + ": must satisfy a(s) < s for s > 0");
  };
  require_class(zeta, "zeta", false);
  require_class(a, "a", true);

  // The dissipation check differentiates V symbolically; the actuator-error
  // variant also differentiates k.
  for (std::size_t j = 1; j <= n; ++j) {
    VarKey key{"x", static_cast<int>(j)};
    try {
      V.differentiate(key);
    } catch (const DifferentiationError& e) {
      fail(std::string("V: must be continuously differentiable (") + e.what() + ")");
    }
    if (variant == Variant::ActuatorError) {
      try {
        k.differentiate(key);
      } catch (const DifferentiationError& e) {
        fail(std::string("k: the actuator-error variant needs a continuously differentiable "
                         "feedback (") +
             e.what() + ")");
      }
    }
  }
}

// ============================================================================
// Dissipation check
// ============================================================================

VerificationReport check_dissipation(const TriangularSystem& tri, const BackstepCertificate& cert,
                                     const Region& region, const SampleBudget& budget) {
  tri.validate();
  cert.validate(tri.n);
  region.validate();
  budget.validate();
  if (region.box.size() != tri.n)
    throw std::invalid_argument("check_dissipation: region dimension must match the state");

  const bool actuator = cert.variant == BackstepCertificate::Variant::ActuatorError;
  const Compiled c = compile_pair(tri, cert, true, true, false);
  const std::size_t n = c.n;

  const std::vector<std::vector<double>> grid = region.grid(budget.grid_per_axis);
  const std::vector<std::vector<double>> dps = disturbance_probes(tri.D);

  struct PointResult {
    double margin = kInf;
    double scale = 0.0;
    Witness wit;
    std::size_t samples = 0;
  };
  std::vector<PointResult> results(grid.size());

  parallel_for(grid.size(), [&](std::size_t gi) {
    Rng rng = Rng::split(budget.seed, gi);
    PointResult& res = results[gi];
    const std::vector<double>& x = grid[gi];
    std::vector<double> slots(c.slot_count(), 0.0);

    const double level = state_eval(c.V, x, slots);
    const double wx = state_eval(c.W, x, slots);
    std::vector<double> gv(n);
    for (std::size_t j = 0; j < n; ++j) gv[j] = state_eval(c.gradV[j], x, slots);
    const double radius = cert.zeta.inverse_at(level);
    if (!std::isfinite(radius))
      throw std::runtime_error("check_dissipation: admissible error ball is unbounded at x = " +
                               point_str(x));

    // The feedback argument is x+e (measurement variant) or x with an
    // additive channel error v (actuator variant).
    auto consider = [&](const std::vector<double>& e_or_x, double v,
                        const std::vector<double>& d) {
      double kval;
      if (actuator) {
        kval = state_eval(c.k, x, slots) + v;
      } else {
        kval = state_eval(c.k, e_or_x, slots);
      }
      std::copy(x.begin(), x.end(), slots.begin());
      std::copy(d.begin(), d.end(), slots.begin() + n);
      double lhs = 0.0;
      for (std::size_t j = 0; j < n; ++j) {
        double fj = c.F[j].run(slots.data());
        if (j + 1 == n) fj += c.gn.run(slots.data()) * kval;
        lhs += gv[j] * fj;
      }
      const double rhs = -wx;
      const double margin = rhs - lhs;
      ++res.samples;
      if (std::isnan(margin)) return;
      if (margin < res.margin) {
        res.margin = margin;
        res.scale = std::fmax(std::fabs(lhs), std::fabs(rhs));
        res.wit = Witness{x, e_or_x, d, actuator ? std::vector<double>{v} : std::vector<double>{},
                          {}};
      }
    };

    if (actuator) {
      for (double v : {0.0, -radius, radius})
        for (const auto& d : dps) consider(x, v, d);
      for (std::size_t s = 0; s < budget.mc_samples; ++s) {
        const double v = rng.uniform(-radius, radius);
        const std::vector<double> d = draw_disturbance(rng, tri.D);
        if (!within_level(cert.zeta.value(std::fabs(v)), level)) continue;
        consider(x, v, d);
      }
    } else {
      std::vector<std::vector<double>> errs;
      errs.emplace_back(n, 0.0);
      for (std::size_t j = 0; j < n; ++j) {
        for (double s : {-radius, radius}) {
          std::vector<double> e(n, 0.0);
          e[j] = s;
          errs.push_back(e);
        }
      }
      if (n > 1) {
        Box unit(n, Interval{-1.0, 1.0});
        const double inv = radius / std::sqrt(static_cast<double>(n));
        for_each_corner(unit, [&](const std::vector<double>& corner) {
          std::vector<double> e(corner);
          for (auto& ej : e) ej *= inv;
          errs.push_back(e);
        });
      }
      for (const auto& e : errs) {
        if (!within_level(cert.zeta.value(norm2(e)), level)) continue;
        std::vector<double> arg(x);
        for (std::size_t j = 0; j < n; ++j) arg[j] += e[j];
        for (const auto& d : dps) consider(arg, 0.0, d);
      }
      for (std::size_t s = 0; s < budget.mc_samples; ++s) {
        std::vector<double> dir = rng.unit_vector(n);
        const double mag = radius * std::pow(rng.u01(), 1.0 / static_cast<double>(n));
        const std::vector<double> d = draw_disturbance(rng, tri.D);
        std::vector<double> e(n);
        for (std::size_t j = 0; j < n; ++j) e[j] = mag * dir[j];
        if (!within_level(cert.zeta.value(norm2(e)), level)) continue;
        std::vector<double> arg(x);
        for (std::size_t j = 0; j < n; ++j) arg[j] += e[j];
        consider(arg, 0.0, d);
      }
    }
  });

  VerificationReport rep;
  rep.condition = "dissipation[" + to_string(cert.variant) + "]";
  rep.budget = budget;
  double margin = kInf;
  double scale = 0.0;
  for (const auto& res : results) {
    rep.samples += res.samples;
    if (res.margin < margin) {
      margin = res.margin;
      scale = res.scale;
      rep.witness = res.wit;
    }
  }
  rep.worst_margin = grid.empty() ? 0.0 : margin;
  rep.passed = grid.empty() || margin >= -violation_floor(scale);
  if (rep.passed) rep.witness.reset();
  rep.note = "checked " + std::to_string(grid.size()) + " grid points, " +
             to_string(cert.variant) + " channel";
  return rep;
}

// ============================================================================
// Feedback growth bound
// ============================================================================

namespace {

/// Shared core of rho_x: the caller provides the compiled bundle so the grid
/// sweep in find_h compiles once.
double rho_at(const Compiled& c, const TriangularSystem& tri, const BackstepCertificate& cert,
              const std::vector<double>& x, const SampleBudget& budget) {
  const std::size_t n = c.n;
  const bool actuator = cert.variant == BackstepCertificate::Variant::ActuatorError;
  std::vector<double> slots(c.slot_count(), 0.0);

  const double level = state_eval(c.V, x, slots);
  const double cap = cert.a.inverse_at(level);
  if (!std::isfinite(cap))
    throw std::runtime_error("rho_x: sublevel cap is unbounded at level " + fmt(level));

  // Per-axis half-width of the sampling box: invert V along axis and corner
  // rays, take the largest crossing radius.
  double w = 0.0;
  std::vector<std::vector<double>> dirs;
  for (std::size_t j = 0; j < n; ++j) {
    for (double s : {-1.0, 1.0}) {
      std::vector<double> dir(n, 0.0);
      dir[j] = s;
      dirs.push_back(dir);
    }
  }
  if (n > 1) {
    Box unit(n, Interval{-1.0, 1.0});
    const double inv = 1.0 / std::sqrt(static_cast<double>(n));
    for_each_corner(unit, [&](const std::vector<double>& corner) {
      std::vector<double> dir(corner);
      for (auto& v : dir) v *= inv;
      dirs.push_back(dir);
    });
  }
  std::vector<double> probe(n);
  for (const auto& dir : dirs) {
    auto along = [&](double t) {
      for (std::size_t j = 0; j < n; ++j) probe[j] = t * dir[j];
      return state_eval(c.V, probe, slots);
    };
    w = std::fmax(w, upper_inverse(along, cap));
  }
  if (!std::isfinite(w)) throw std::runtime_error("rho_x: state sublevel box is unbounded");

  auto accept = [&](const std::vector<double>& z) {
    return within_level(state_eval(c.V, z, slots), cap);
  };

  std::vector<std::vector<double>> pool;
  pool.emplace_back(n, 0.0);
  {
    std::vector<double> cl(x);
    for (auto& v : cl) v = std::clamp(v, -w, w);
    pool.push_back(cl);
  }
  for (std::size_t j = 0; j < n; ++j) {
    for (double s : {-w, w}) {
      std::vector<double> p(n, 0.0);
      p[j] = s;
      pool.push_back(p);
    }
  }
  if (n > 1) {
    Box bx(n, Interval{-w, w});
    for_each_corner(bx, [&](const std::vector<double>& p) { pool.push_back(p); });
  }
  pool.erase(std::remove_if(pool.begin(), pool.end(),
                            [&](const std::vector<double>& z) { return !accept(z); }),
             pool.end());

  Rng rng(budget.seed);
  for (std::size_t s = 0; s < budget.mc_samples; ++s) {
    std::vector<double> z(n);
    for (int attempt = 0; attempt < 16; ++attempt) {
      for (auto& zj : z) zj = rng.uniform(-w, w);
      if (accept(z)) {
        pool.push_back(z);
        break;
      }
    }
  }
  if (pool.empty()) {
    if (level == 0.0) return 0.0;
    throw std::runtime_error("rho_x: empty sublevel sample set at level " + fmt(level) +
                             " near " + point_str(x));
  }

  // The objective is affine in k(x0), so the maximum over x0 is attained at
  // the sampled extremes of the feedback over the pool.
  double kmin = kInf, kmax = -kInf;
  for (const auto& z : pool) {
    const double kv = state_eval(c.k, z, slots);
    if (std::isnan(kv)) continue;
    kmin = std::fmin(kmin, kv);
    kmax = std::fmax(kmax, kv);
  }
  if (!(kmin <= kmax)) throw std::runtime_error("rho_x: feedback is non-finite on the pool");

  std::vector<std::vector<double>> dps = disturbance_probes(tri.D);
  if (!tri.D.empty()) {
    Rng drng = Rng::split(budget.seed, 1);
    for (std::size_t s = 0; s < kDisturbanceDraws; ++s)
      dps.push_back(draw_disturbance(drng, tri.D));
  }

  double best = 0.0;
  std::vector<double> frow(n);
  for (const auto& xi : pool) {
    std::copy(xi.begin(), xi.end(), slots.begin());
    for (const auto& d : dps) {
      std::copy(d.begin(), d.end(), slots.begin() + n);
      bool bad = false;
      for (std::size_t j = 0; j < n; ++j) {
        frow[j] = c.F[j].run(slots.data());
        if (std::isnan(frow[j])) bad = true;
      }
      const double gnv = c.gn.run(slots.data());
      if (bad || std::isnan(gnv)) continue;
      double val;
      if (actuator) {
        double acc = 0.0;
        for (std::size_t j = 0; j < n; ++j) acc += c.gradk[j].run(slots.data()) * frow[j];
        const double b = c.gradk[n - 1].run(slots.data()) * gnv;
        val = std::fmax(std::fabs(acc + b * kmin), std::fabs(acc + b * kmax));
      } else {
        double head = 0.0;
        for (std::size_t j = 0; j + 1 < n; ++j) head += frow[j] * frow[j];
        auto tail = [&](double kk) {
          const double t = frow[n - 1] + gnv * kk;
          return t * t;
        };
        val = std::sqrt(head + std::fmax(tail(kmin), tail(kmax)));
      }
      if (!std::isnan(val)) best = std::fmax(best, val);
    }
  }
  return best;
}

}  // namespace

double rho_x(const TriangularSystem& tri, const BackstepCertificate& cert,
             const std::vector<double>& x, const SampleBudget& budget) {
  tri.validate();
  cert.validate(tri.n);
  budget.validate();
  if (x.size() != tri.n) throw std::invalid_argument("rho_x: state dimension mismatch");
  const bool actuator = cert.variant == BackstepCertificate::Variant::ActuatorError;
  const Compiled c = compile_pair(tri, cert, false, false, actuator);
  return rho_at(c, tri, cert, x, budget);
}

// ============================================================================
// Admissible period search
// ============================================================================

std::string PeriodSearchReport::to_json(int indent) const {
  nlohmann::ordered_json j;
  j["h_star"] = h_star;
  j["feasible"] = feasible;
  j["worst_margin"] = worst_margin;
  j["points"] = points.size();
  if (obstruction.empty())
    j["obstruction"] = nullptr;
  else
    j["obstruction"] = obstruction;
  j["note"] = note;
  return j.dump(indent);
}

PeriodSearchReport find_h(const TriangularSystem& tri, const BackstepCertificate& cert,
                          const Region& region, const SampleBudget& budget) {
  tri.validate();
  cert.validate(tri.n);
  region.validate();
  budget.validate();
  if (region.box.size() != tri.n)
    throw std::invalid_argument("find_h: region dimension must match the state");

  const bool actuator = cert.variant == BackstepCertificate::Variant::ActuatorError;
  const Compiled c = compile_pair(tri, cert, false, false, actuator);

  PeriodSearchReport rep;
  rep.points = region.grid(budget.grid_per_axis);

  // Origin-limit probes: the bound must hold for all x, so when the region
  // surrounds the origin, shrink along axis rays toward it.
  bool origin_inside = true;
  double scale = 0.0;
  for (const auto& iv : region.box) {
    origin_inside = origin_inside && iv.lo <= 0.0 && iv.hi >= 0.0;
    scale = std::fmax(scale, std::fmax(std::fabs(iv.lo), std::fabs(iv.hi)));
  }
  std::size_t ray_probes = 0;
  if (origin_inside && scale > 0.0) {
    for (std::size_t j = 0; j < tri.n; ++j) {
      for (double s : {-1.0, 1.0}) {
        for (double frac : {1e-2, 1e-4, 1e-6, 1e-8}) {
          std::vector<double> p(tri.n, 0.0);
          p[j] = s * frac * scale;
          rep.points.push_back(p);
          ++ray_probes;
        }
      }
    }
  }

  const std::size_t count = rep.points.size();
  rep.levels.assign(count, 0.0);
  rep.growth.assign(count, 0.0);
  parallel_for(count, [&](std::size_t i) {
    std::vector<double> slots(c.slot_count(), 0.0);
    rep.levels[i] = state_eval(c.V, rep.points[i], slots);
    rep.growth[i] = rho_at(c, tri, cert, rep.points[i], budget);
  });

  // Tighter than within_level: the bisection pushes h against the boundary,
  // so only rounding noise may go below zero here.
  auto margin_ok = [&](double h, std::size_t i) {
    return rep.levels[i] - cert.zeta.value(h * rep.growth[i]) >=
           -1e-12 * std::fmax(1.0, rep.levels[i]);
  };
  auto violating_index = [&](double h) -> std::optional<std::size_t> {
    std::optional<std::size_t> worst;
    double worst_norm = kInf;
    for (std::size_t i = 0; i < count; ++i) {
      if (margin_ok(h, i)) continue;
      const double nrm = norm2(rep.points[i]);
      if (nrm < worst_norm) {
        worst_norm = nrm;
        worst = i;
      }
    }
    return worst;
  };
  auto feasible_at = [&](double h) { return !violating_index(h).has_value(); };
  auto worst_margin_at = [&](double h) {
    double m = kInf;
    for (std::size_t i = 0; i < count; ++i)
      m = std::fmin(m, rep.levels[i] - cert.zeta.value(h * rep.growth[i]));
    return count == 0 ? 0.0 : m;
  };

  std::string region_str = "region ";
  for (std::size_t j = 0; j < region.box.size(); ++j) {
    if (j) region_str += " x ";
    region_str += "[" + fmt(region.box[j].lo) + ", " + fmt(region.box[j].hi) + "]";
  }
  if (region.exclude_origin_radius > 0.0)
    region_str += " excluding |x| < " + fmt(region.exclude_origin_radius);
  region_str += ", " + std::to_string(count - ray_probes) + " grid points and " +
                std::to_string(ray_probes) + " origin-limit probes";

  if (!feasible_at(kHMin)) {
    const std::size_t bad = *violating_index(kHMin);
    rep.feasible = false;
    rep.h_star = 0.0;
    rep.worst_margin = worst_margin_at(kHMin);
    rep.obstruction = rep.points[bad];
    rep.note = "no positive sampling period satisfies the gauge bound, obstruction at x = " +
               point_str(rep.obstruction) + "; " + region_str;
    return rep;
  }

  double lo = kHMin, hi = kHMin;
  while (hi < kHCap && feasible_at(hi)) {
    lo = hi;
    hi *= 2.0;
  }
  if (hi >= kHCap && feasible_at(hi)) {
    rep.feasible = true;
    rep.h_star = kHCap;
    rep.worst_margin = worst_margin_at(kHCap);
    rep.note = "gauge bound holds up to the search cap; " + region_str;
    return rep;
  }
  for (int it = 0; it < 200 && hi - lo > 1e-9 * hi; ++it) {
    const double mid = 0.5 * (lo + hi);
    if (feasible_at(mid))
      lo = mid;
    else
      hi = mid;
  }

  rep.feasible = true;
  rep.h_star = lo;
  rep.worst_margin = worst_margin_at(lo);
  rep.note = "largest admissible period on the sample set; the held feedback at h below h_star "
             "is expected to stabilize the emulated loop (simulate at 0.9*h_star to check); " +
             region_str;
  return rep;
}

// ============================================================================
// Planar cascade hypothesis
// ============================================================================

VerificationReport check_hypothesis_P(const Expression& f1, const Expression& f2, double c,
                                      double a, double L, double gamma, const Box& D,
                                      const Region& region, const SampleBudget& budget) {
  auto fail = [](const std::string& msg) {
    throw std::invalid_argument("check_hypothesis_P: " + msg);
  };
  if (!(c > 1.0) || !std::isfinite(c)) fail("c must exceed 1");
  if (!std::isfinite(a)) fail("a must be finite");
  if (!(L >= 0.0) || !std::isfinite(L)) fail("L must be finite and nonnegative");
  if (!(gamma >= 0.0) || !std::isfinite(gamma)) fail("gamma must be finite and nonnegative");
  if (region.box.size() != 1) fail("region must be one-dimensional");
  region.validate();
  budget.validate();
  for (std::size_t j = 0; j < D.size(); ++j)
    if (!interval_finite(D[j]) || D[j].lo > D[j].hi)
      fail("D[" + std::to_string(j + 1) + "]: invalid interval");
  const int l = static_cast<int>(D.size());
  auto require_scope = [&](const Expression& e, const std::string& field) {
    if (e.empty()) fail(field + ": empty expression");
    for (const auto& key : e.free_vars()) {
      const bool state_ok = key.name == "x" && (key.index == 1 || key.index == 2);
      const bool dist_ok = key.name == "d" && key.index >= 1 && key.index <= l;
      if (!state_ok && !dist_ok) fail(field + ": unexpected variable " + key.str());
    }
  };
  require_scope(f1, "f1");
  require_scope(f2, "f2");

  std::vector<VarKey> keys = {{"x", 1}, {"x", 2}};
  for (int i = 1; i <= l; ++i) keys.push_back({"d", i});
  VarLayout layout(std::move(keys));
  const Program p1 = compile(f1, layout);
  const Program p2 = compile(f2, layout);
  const std::vector<std::vector<double>> dps = disturbance_probes(D);
  const std::vector<std::vector<double>> grid = region.grid(budget.grid_per_axis);

  struct PointResult {
    bool gate_active = false;
    double gate_margin = kInf;   // -max of x1*f1 over the probe set
    Witness gate_wit;
    double growth_margin = kInf;  // gamma*z^2 - total
    double growth_scale = 0.0;
    Witness growth_wit;
    std::size_t samples = 0;
  };
  std::vector<PointResult> results(grid.size());

  parallel_for(grid.size(), [&](std::size_t gi) {
    Rng rng = Rng::split(budget.seed, gi);
    PointResult& res = results[gi];
    const double z = grid[gi][0];
    const double cb = c * std::fabs(z);
    std::vector<double> slots(2 + static_cast<std::size_t>(l), 0.0);

    auto eval1 = [&](double x1, double x2, const std::vector<double>& d) {
      slots[0] = x1;
      slots[1] = x2;
      std::copy(d.begin(), d.end(), slots.begin() + 2);
      return p1.run(slots.data());
    };
    auto eval2 = [&](double x1, double x2, const std::vector<double>& d) {
      slots[0] = x1;
      slots[1] = x2;
      std::copy(d.begin(), d.end(), slots.begin() + 2);
      return p2.run(slots.data());
    };

    // Gate: max of x1*f1(x1, -a*x1 + xi, d) over |xi| <= c*|x1| must stay
    // strictly negative at x1 != 0.
    if (z != 0.0) {
      res.gate_active = true;
      double worst = -kInf;
      auto gate_consider = [&](double xi, const std::vector<double>& d) {
        const double arg = -a * z + xi;
        const double val = z * eval1(z, arg, d);
        ++res.samples;
        if (std::isnan(val)) return;
        if (val > worst) {
          worst = val;
          res.gate_wit = Witness{{z}, {z, arg}, d, {}, {}};
        }
      };
      for (double xi : {-cb, 0.0, cb})
        for (const auto& d : dps) gate_consider(xi, d);
      for (std::size_t s = 0; s < budget.mc_samples; ++s)
        gate_consider(rng.uniform(-cb, cb), draw_disturbance(rng, D));
      res.gate_margin = -worst;
    }

    // Growth: |z|*max|f2 + a*f1| over the square max(|x1|,|xi|) <= c*|z|,
    // plus L times the signed max at xi = z, bounded by gamma*z^2.
    double term1 = -kInf, term2 = -kInf;
    Witness t1_wit;
    auto growth_pair = [&](double x1, double xi, const std::vector<double>& d) {
      const double arg = -a * x1 + xi;
      const double val = std::fabs(eval2(x1, arg, d) + a * eval1(x1, arg, d));
      ++res.samples;
      if (std::isnan(val)) return;
      if (val > term1) {
        term1 = val;
        t1_wit = Witness{{z}, {x1, arg}, d, {}, {}};
      }
    };
    auto growth_pinned = [&](double x1, const std::vector<double>& d) {
      const double arg = -a * x1 + z;
      const double val = z * eval2(x1, arg, d) + a * z * eval1(x1, arg, d);
      ++res.samples;
      if (!std::isnan(val)) term2 = std::fmax(term2, val);
    };
    for (double x1 : {-cb, 0.0, cb})
      for (double xi : {-cb, 0.0, cb})
        for (const auto& d : dps) growth_pair(x1, xi, d);
    for (double x1 : {-cb, 0.0, cb})
      for (const auto& d : dps) growth_pinned(x1, d);
    for (std::size_t s = 0; s < budget.mc_samples; ++s) {
      const std::vector<double> d = draw_disturbance(rng, D);
      growth_pair(rng.uniform(-cb, cb), rng.uniform(-cb, cb), d);
      growth_pinned(rng.uniform(-cb, cb), d);
    }
    if (term1 > -kInf && term2 > -kInf) {
      const double total = std::fabs(z) * term1 + L * term2;
      const double bound = gamma * z * z;
      res.growth_margin = bound - total;
      res.growth_scale = std::fmax(std::fabs(total), std::fabs(bound));
      res.growth_wit = t1_wit;
    }
  });

  VerificationReport rep;
  rep.condition = "hypothesis-p";
  rep.budget = budget;
  double gate_margin = kInf, growth_margin = kInf, growth_scale = 0.0;
  Witness gate_wit, growth_wit;
  bool gate_any = false;
  for (const auto& res : results) {
    rep.samples += res.samples;
    if (res.gate_active && res.gate_margin < gate_margin) {
      gate_any = true;
      gate_margin = res.gate_margin;
      gate_wit = res.gate_wit;
    }
    if (res.growth_margin < growth_margin) {
      growth_margin = res.growth_margin;
      growth_scale = res.growth_scale;
      growth_wit = res.growth_wit;
    }
  }
  const bool gate_ok = !gate_any || gate_margin > 0.0;
  const bool growth_ok = growth_margin == kInf || growth_margin >= -violation_floor(growth_scale);
  rep.passed = gate_ok && growth_ok;
  rep.worst_margin = std::fmin(gate_any ? gate_margin : kInf,
                               growth_margin == kInf ? 0.0 : growth_margin);
  if (!gate_ok) {
    rep.witness = gate_wit;
    rep.note = "gate violated: x1*f1 reaches " + fmt(-gate_margin) + " at x1 = " +
               fmt(gate_wit.x.empty() ? 0.0 : gate_wit.x[0]);
  } else if (!growth_ok) {
    rep.witness = growth_wit;
    rep.note = "growth bound violated at z = " +
               fmt(growth_wit.x.empty() ? 0.0 : growth_wit.x[0]);
  } else {
    rep.note = "strict gate and growth bound hold at " + std::to_string(grid.size()) +
               " sampled points";
  }
  return rep;
}

// ============================================================================
// Built-in scalar instance
// ============================================================================

TriangularSystem make_scalar_integrator() {
  TriangularSystem tri;
  tri.n = 1;
  tri.phi = {{Expression::constant(0.0)}};
  tri.g = {Expression::constant(1.0)};
  tri.name = "scalar-integrator";
  return tri;
}

BackstepCertificate make_scalar_integrator_certificate() {
  BackstepCertificate cert;
  cert.V = Expression::parse("x[1]^2/2");
  cert.k = Expression::parse("-2*x[1]");
  cert.W = Expression::parse("(2 - sqrt(2))*x[1]^2");
  cert.zeta = ComparisonFunction::parse("s^2", FnClass::N);
  cert.a = ComparisonFunction::parse("s/2", FnClass::N);
  cert.variant = BackstepCertificate::Variant::MeasurementError;
  return cert;
}

}  // namespace sdlyap
