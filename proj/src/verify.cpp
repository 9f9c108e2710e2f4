#include "sdlyap/verify.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <optional>
#include <stdexcept>

#include <json.hpp>

#include "sdlyap/box.hpp"
#include "sdlyap/parallel.hpp"
#include "sdlyap/rng.hpp"

namespace sdlyap {
namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();
constexpr double kLevelSlack = 1e-9;   // relative slack on sublevel/ball membership
constexpr double kMarginSlack = 1e-9;  // relative slack before a margin counts as a violation

bool within_level(double value, double level) {
  return value <= level + kLevelSlack * std::fabs(level) + 1e-15;
}

double violation_floor(double scale) { return kMarginSlack * std::fmax(1.0, std::fabs(scale)); }

std::string point_str(const std::vector<double>& x) {
  std::string s = "(";
  for (std::size_t i = 0; i < x.size(); ++i) {
    if (i) s += ", ";
    s += std::to_string(x[i]);
  }
  return s + ")";
}

// ============================================================================
// Compiled certificate bundle
// ============================================================================

struct Compiled {
  CompiledModel cm;
  std::size_t k = 0;
  std::vector<Program> V, g;
  std::vector<std::vector<Program>> gradV, gradg;
  std::vector<Program> analytic;
  std::vector<char> has_analytic;
  std::vector<int> g_axis;  // 0-based coordinate when g_i is a bare x[j], else -1
  Program W;
  bool has_W = false;
  ComparisonFunction a, zeta, a1, a2;
  std::vector<ComparisonFunction> rho;

  double state_eval(const Program& p, const std::vector<double>& x,
                    std::vector<double>& scratch) const {
    std::copy(x.begin(), x.end(), scratch.begin() + cm.off_x);
    return p.run(scratch.data());
  }
  double v_max(const std::vector<double>& x, std::vector<double>& scratch) const {
    double best = -kInf;
    std::copy(x.begin(), x.end(), scratch.begin() + cm.off_x);
    for (const auto& vi : V) best = std::fmax(best, vi.run(scratch.data()));
    return best;
  }
};

Compiled prepare(const LyapunovCertificate& cert, const SystemModel& model) {
  cert.validate(model);
  Compiled c;
  c.cm = model.compile_model();
  c.k = cert.k;
  c.a = cert.a;
  c.zeta = cert.zeta;
  c.a1 = cert.a1;
  c.a2 = cert.a2;
  c.rho = cert.rho;
  c.has_W = cert.has_W();
  if (c.has_W) c.W = compile(cert.W, c.cm.layout);
  for (std::size_t i = 0; i < cert.k; ++i) {
    c.V.push_back(compile(cert.V[i], c.cm.layout));
    c.g.push_back(compile(cert.g[i], c.cm.layout));
    std::vector<Program> gv, gg;
    for (std::size_t j = 0; j < model.n; ++j) {
      VarKey xj{"x", static_cast<int>(j + 1)};
      Expression dv = (i < cert.gradV.size() && !cert.gradV[i].empty())
                          ? cert.gradV[i][j]
                          : cert.V[i].differentiate(xj);
      gv.push_back(compile(dv, c.cm.layout));
      gg.push_back(compile(cert.g[i].differentiate(xj), c.cm.layout));
    }
    c.gradV.push_back(std::move(gv));
    c.gradg.push_back(std::move(gg));
    if (cert.has_analytic_b(i)) {
      c.analytic.push_back(compile(cert.analytic_b[i], c.cm.layout));
      c.has_analytic.push_back(1);
    } else {
      c.analytic.emplace_back();
      c.has_analytic.push_back(0);
    }
    const ExprPtr& root = cert.g[i].root();
    c.g_axis.push_back(root && root->kind == NodeKind::Variable && root->var.name == "x"
                           ? root->var.index - 1
                           : -1);
  }
  return c;
}

// ============================================================================
// Sampling primitives
// ============================================================================

/// Deterministic state probes inside the per-axis box of half-width w:
/// origin, the anchor clamped into the box, axis extremes, and full corners.
std::vector<std::vector<double>> box_probes(const std::vector<double>& anchor, double w,
                                            std::size_t n) {
  std::vector<std::vector<double>> pts;
  pts.emplace_back(n, 0.0);
  std::vector<double> cl(anchor);
  for (auto& v : cl) v = std::clamp(v, -w, w);
  pts.push_back(cl);
  for (std::size_t j = 0; j < n; ++j) {
    for (double s : {-w, w}) {
      std::vector<double> p(n, 0.0);
      p[j] = s;
      pts.push_back(p);
    }
  }
  if (n <= 12) {
    for (std::size_t mask = 0; mask < (std::size_t{1} << n); ++mask) {
      std::vector<double> p(n);
      for (std::size_t j = 0; j < n; ++j) p[j] = (mask >> j) & 1 ? w : -w;
      pts.push_back(p);
    }
  }
  return pts;
}

/// Input probes on the ball |v| <= radius, clamped into U: the clamped origin
/// plus both extremes along every axis.
std::vector<std::vector<double>> input_probes(double radius, const Box& U, std::size_t m) {
  std::vector<std::vector<double>> pts;
  std::vector<double> zero(m, 0.0);
  for (std::size_t j = 0; j < m; ++j) zero[j] = clamp_to(U[j], 0.0);
  pts.push_back(zero);
  for (std::size_t j = 0; j < m; ++j) {
    for (double s : {-radius, radius}) {
      std::vector<double> p = zero;
      p[j] = clamp_to(U[j], s);
      pts.push_back(p);
    }
  }
  return pts;
}

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

/// Draws on the ball |v| <= radius (uniform direction, inverse-transform
/// magnitude) and clamps into U.
std::vector<double> draw_input(Rng& rng, double radius, const Box& U, std::size_t m) {
  if (m == 0) return {};
  std::vector<double> dir = rng.unit_vector(m);
  double mag = radius * std::pow(rng.u01(), 1.0 / static_cast<double>(m));
  std::vector<double> v(m);
  for (std::size_t j = 0; j < m; ++j) v[j] = clamp_to(U[j], mag * dir[j]);
  return v;
}

void require_finite(const std::vector<std::vector<double>>& pts, const char* what) {
  for (const auto& p : pts)
    for (double c : p)
      if (!std::isfinite(c)) throw std::runtime_error(std::string(what) + " is unbounded");
}

// ============================================================================
// g-rate bound
// ============================================================================

BBoundResult numeric_b(const Compiled& c, const SystemModel& model, std::size_t member,
                       const std::vector<double>& x, const SampleBudget& budget, Rng rng) {
  const std::size_t n = c.cm.n, m = c.cm.m;
  std::vector<double> slots(c.cm.slot_count(), 0.0), scratch(c.cm.slot_count(), 0.0);

  const double level = c.state_eval(c.V[member], x, scratch);
  const double state_cap = c.a.inverse_at(level);
  const double w = c.a2.inverse_at(state_cap);
  const double radius = m > 0 ? c.zeta.inverse_at(level) : 0.0;
  if (!std::isfinite(w)) throw std::runtime_error("b_bound: state sublevel box is unbounded");

  auto accept_state = [&](const std::vector<double>& z) {
    return within_level(c.a.value(c.v_max(z, scratch)), level);
  };

  std::vector<std::vector<double>> states = box_probes(x, w, n);
  states.erase(std::remove_if(states.begin(), states.end(),
                              [&](const std::vector<double>& z) { return !accept_state(z); }),
               states.end());

  std::vector<std::vector<double>> vps = input_probes(radius, model.U, m);
  vps.erase(std::remove_if(vps.begin(), vps.end(),
                           [&](const std::vector<double>& v) {
                             return !within_level(c.zeta.value(norm2(v)), level);
                           }),
            vps.end());
  if (vps.empty()) vps.emplace_back(m, 0.0);
  require_finite(vps, "b_bound: input ball");
  std::vector<std::vector<double>> dps = disturbance_probes(model.D);

  double best = 0.0;
  std::size_t accepted = 0, nonfinite = 0;
  std::vector<double> grad(n);

  auto scan = [&](const std::vector<double>& xi, const std::vector<double>& x0) {
    std::copy(xi.begin(), xi.end(), slots.begin() + c.cm.off_x);
    for (std::size_t j = 0; j < n; ++j) grad[j] = c.gradg[member][j].run(slots.data());
    std::copy(x0.begin(), x0.end(), slots.begin() + c.cm.off_xs);
    ++accepted;
    for (const auto& d : dps) {
      std::copy(d.begin(), d.end(), slots.begin() + c.cm.off_d);
      for (const auto& v : vps) {
        std::copy(v.begin(), v.end(), slots.begin() + c.cm.off_v);
        for (const auto& v0 : vps) {
          std::copy(v0.begin(), v0.end(), slots.begin() + c.cm.off_vs);
          double dot = 0.0;
          for (std::size_t j = 0; j < n; ++j) dot += grad[j] * c.cm.f[j].run(slots.data());
          if (std::isnan(dot)) {
            ++nonfinite;
            continue;
          }
          best = std::fmax(best, std::fabs(dot));
        }
      }
    }
  };

  for (const auto& xi : states)
    for (const auto& x0 : states) scan(xi, x0);

  auto draw_state = [&](Rng& r) -> std::optional<std::vector<double>> {
    std::vector<double> z(n);
    for (int attempt = 0; attempt < 16; ++attempt) {
      for (auto& zj : z) zj = r.uniform(-w, w);
      if (accept_state(z)) return z;
    }
    return std::nullopt;
  };

  for (std::size_t s = 0; s < budget.mc_samples; ++s) {
    auto xi = draw_state(rng);
    auto x0 = draw_state(rng);
    std::vector<double> d = draw_disturbance(rng, model.D);
    std::vector<double> v = draw_input(rng, radius, model.U, m);
    std::vector<double> v0 = draw_input(rng, radius, model.U, m);
    if (!xi || !x0) continue;
    if (!within_level(c.zeta.value(norm2(v)), level) ||
        !within_level(c.zeta.value(norm2(v0)), level))
      continue;
    std::copy(xi->begin(), xi->end(), slots.begin() + c.cm.off_x);
    for (std::size_t j = 0; j < n; ++j) grad[j] = c.gradg[member][j].run(slots.data());
    std::copy(x0->begin(), x0->end(), slots.begin() + c.cm.off_xs);
    std::copy(d.begin(), d.end(), slots.begin() + c.cm.off_d);
    std::copy(v.begin(), v.end(), slots.begin() + c.cm.off_v);
    std::copy(v0.begin(), v0.end(), slots.begin() + c.cm.off_vs);
    ++accepted;
    double dot = 0.0;
    for (std::size_t j = 0; j < n; ++j) dot += grad[j] * c.cm.f[j].run(slots.data());
    if (std::isnan(dot)) {
      ++nonfinite;
      continue;
    }
    best = std::fmax(best, std::fabs(dot));
  }

  BBoundResult res;
  if (accepted == 0) {
    if (level == 0.0) {
      res.note = "constraint set is empty at zero level";
      return res;
    }
    throw std::runtime_error("b_bound: empty sublevel sample set at nonzero level " +
                             std::to_string(level) + " near " + point_str(x));
  }
  res.value = best;
  res.accepted = accepted;
  if (nonfinite > 0) res.note = std::to_string(nonfinite) + " non-finite samples skipped";
  return res;
}

// ============================================================================
// Held-state sampling for the decrease condition
// ============================================================================

/// Candidate x0 values in the slab |g(x0) - g(x)| <= slab intersected with the
/// per-axis sublevel sampling box of half-width w.
struct HeldSampler {
  const Compiled* c;
  std::size_t member = 0, n = 0;
  int axis = -1;       // coordinate fast path when g is a bare x[j]
  double w = 0.0;      // box half-width
  double g_x = 0.0;    // g at the grid point
  double slab = 0.0;   // r * b
  double lo = 0.0, hi = 0.0;

  std::vector<std::vector<double>> probes(const std::vector<double>& x,
                                          std::vector<double>& scratch) const {
    std::vector<std::vector<double>> pts;
    pts.push_back(x);
    if (axis >= 0) {
      std::vector<double> cl(x);
      for (auto& v : cl) v = std::clamp(v, -w, w);
      cl[axis] = std::clamp(cl[axis], lo, hi);
      std::vector<std::vector<double>> patterns;
      patterns.push_back(cl);
      patterns.emplace_back(n, 0.0);
      patterns.emplace_back(n, w);
      patterns.emplace_back(n, -w);
      if (n >= 2 && n <= 9) {
        for (std::size_t mask = 0; mask < (std::size_t{1} << (n - 1)); ++mask) {
          std::vector<double> p(n, 0.0);
          std::size_t bit = 0;
          for (std::size_t j = 0; j < n; ++j) {
            if (static_cast<int>(j) == axis) continue;
            p[j] = (mask >> bit) & 1 ? w : -w;
            ++bit;
          }
          patterns.push_back(p);
        }
      }
      for (double gv : {lo, hi, std::clamp(g_x, lo, hi)}) {
        for (const auto& base : patterns) {
          std::vector<double> p = base;
          p[axis] = gv;
          pts.push_back(p);
        }
      }
    } else {
      for (auto& p : box_probes(x, w, n)) {
        double gz = c->state_eval(c->g[member], p, scratch);
        if (within_level(std::fabs(gz - g_x), slab)) pts.push_back(std::move(p));
      }
    }
    return pts;
  }

  std::optional<std::vector<double>> draw(Rng& rng, std::vector<double>& scratch) const {
    std::vector<double> z(n);
    if (axis >= 0) {
      for (auto& zj : z) zj = rng.uniform(-w, w);
      z[axis] = rng.uniform(lo, hi);
      return z;
    }
    for (int attempt = 0; attempt < 16; ++attempt) {
      for (auto& zj : z) zj = rng.uniform(-w, w);
      double gz = c->state_eval(c->g[member], z, scratch);
      if (within_level(std::fabs(gz - g_x), slab)) return z;
    }
    return std::nullopt;
  }
};

struct MemberResult {
  bool active = false;
  double margin = kInf;
  double scale = 0.0;  // |lhs|,|rhs| magnitude at the worst sample
  Witness wit;
  std::size_t samples = 0;
};

}  // namespace

// ============================================================================
// Certificate and budget validation
// ============================================================================

void SampleBudget::validate() const {
  if (grid_per_axis == 0 || mc_samples == 0 || seed == 0)
    throw std::invalid_argument("sample budget: grid_per_axis, mc_samples and seed must be positive");
}

void LyapunovCertificate::validate(const SystemModel& model) const {
  auto fail = [](const std::string& msg) { throw std::invalid_argument("certificate: " + msg); };
  if (k == 0) fail("k must be at least 1");
  if (V.size() != k) fail("V: expected " + std::to_string(k) + " members");
  if (g.size() != k) fail("g: expected one auxiliary function per member");
  const bool w_form = has_W();
  if (w_form && k != 1) fail("W applies only to a single-member certificate");
  if (!w_form && rho.size() != k) fail("rho: expected one decrease rate per member");
  if (w_form && !rho.empty() && rho.size() != k) fail("rho: wrong member count");
  if (!analytic_b.empty() && analytic_b.size() != k) fail("analytic_b: wrong member count");
  if (!gradV.empty() && gradV.size() != k) fail("gradV: wrong member count");

  auto require_scope = [&](const Expression& e, const std::string& field) {
    if (e.empty()) fail(field + ": empty expression");
    for (const auto& key : e.free_vars())
      if (key.name != "x" || key.index < 1 || key.index > static_cast<int>(model.n))
        fail(field + ": unexpected variable " + key.str());
  };

  for (std::size_t i = 0; i < k; ++i) {
    const std::string tag = "[" + std::to_string(i + 1) + "]";
    require_scope(V[i], "V" + tag);
    require_scope(g[i], "g" + tag);
    if (has_analytic_b(i)) require_scope(analytic_b[i], "analytic_b" + tag);
    if (!gradV.empty() && !gradV[i].empty()) {
      if (gradV[i].size() != model.n) fail("gradV" + tag + ": expected n components");
      for (const auto& e : gradV[i]) require_scope(e, "gradV" + tag);
    } else {
      for (std::size_t j = 0; j < model.n; ++j) {
        VarKey xj{"x", static_cast<int>(j + 1)};
        try {
          V[i].differentiate(xj);
          g[i].differentiate(xj);
        } catch (const DifferentiationError& e) {
          fail("member " + std::to_string(i + 1) +
               " is not symbolically differentiable (supply gradV): " + e.what());
        }
      }
    }
  }

  auto require_class = [&](const ComparisonFunction& fn, const std::string& field, FnClass want,
                           bool need_contraction) {
    if (!fn.valid()) fail(field + ": missing comparison function");
    if (fn.declared_class() != want)
      fail(field + ": must be declared " + to_string(want) + ", got " +
           to_string(fn.declared_class()));
    ClassValidationReport rep = validate_comparison_fn(fn, 200, 10.0);
    if (!rep.passed)
      fail(field + ": fails its " + to_string(want) + " class checks near s = " +
           std::to_string(rep.checks.empty() ? 0.0 : rep.checks.front().worst_s));
    if (need_contraction && !rep.contraction_ok) fail(field + ": must satisfy a(s) < s for s > 0");
  };
  require_class(a, "a", FnClass::N, true);
  require_class(zeta, "zeta", FnClass::N, false);
  require_class(a1, "a1", FnClass::KInfinity, false);
  require_class(a2, "a2", FnClass::KInfinity, false);
  for (std::size_t i = 0; i < rho.size(); ++i)
    require_class(rho[i], "rho[" + std::to_string(i + 1) + "]", FnClass::PositiveDefinite, false);

  if (w_form) {
    require_scope(W, "W");
    Bindings env;
    for (std::size_t j = 0; j < model.n; ++j) env[VarKey{"x", static_cast<int>(j + 1)}] = 0.0;
    if (std::fabs(W.eval(env)) > 1e-12) fail("W: must vanish at the origin");
    for (std::size_t j = 0; j < model.n; ++j) {
      for (double t : {0.1, 1.0, 10.0}) {
        for (double s : {-1.0, 1.0}) {
          Bindings probe = env;
          probe[VarKey{"x", static_cast<int>(j + 1)}] = s * t;
          if (!(W.eval(probe) > 0.0)) fail("W: not positive at a probe point");
        }
      }
    }
  }
}

// ============================================================================
// Report serialization
// ============================================================================

std::string VerificationReport::to_json(int indent) const {
  nlohmann::ordered_json j;
  j["condition"] = condition;
  j["status"] = passed ? "pass" : "fail";
  j["worst_margin"] = worst_margin;
  if (witness) {
    j["witness"] = {{"x", witness->x},
                    {"x0", witness->x0},
                    {"d", witness->d},
                    {"v", witness->v},
                    {"v0", witness->v0}};
  } else {
    j["witness"] = nullptr;
  }
  j["samples"] = samples;
  j["budget"] = {{"grid_per_axis", budget.grid_per_axis},
                 {"mc_samples", budget.mc_samples},
                 {"seed", budget.seed}};
  if (!note.empty()) j["note"] = note;
  return indent >= 0 ? j.dump(indent) : j.dump();
}

// ============================================================================
// Operations
// ============================================================================

BBoundResult b_bound(const LyapunovCertificate& cert, std::size_t member,
                     const std::vector<double>& x, const SystemModel& model,
                     const SampleBudget& budget) {
  budget.validate();
  if (member >= cert.k) throw std::invalid_argument("b_bound: member index out of range");
  if (x.size() != model.n) throw std::invalid_argument("b_bound: state dimension mismatch");
  Compiled c = prepare(cert, model);
  return numeric_b(c, model, member, x, budget, Rng::split(budget.seed, member));
}

std::vector<VerificationReport> decrease_check(const LyapunovCertificate& cert,
                                               const SystemModel& model, const Region& region,
                                               double r, const SampleBudget& budget) {
  budget.validate();
  region.validate();
  if (!(r >= 0.0)) throw std::invalid_argument("decrease_check: r must be nonnegative");
  if (r > model.r * (1.0 + 1e-12))
    throw std::invalid_argument("decrease_check: r exceeds the model bound");
  Compiled c = prepare(cert, model);
  const std::size_t n = c.cm.n, m = c.cm.m, k = c.k;

  std::vector<std::vector<double>> grid = region.grid(budget.grid_per_axis);
  std::vector<std::vector<MemberResult>> results(grid.size(),
                                                 std::vector<MemberResult>(k));

  parallel_for(grid.size(), [&](std::size_t pi) {
    const std::vector<double>& x = grid[pi];
    std::vector<double> slots(c.cm.slot_count(), 0.0), scratch(c.cm.slot_count(), 0.0);
    std::copy(x.begin(), x.end(), slots.begin() + c.cm.off_x);

    double vmax = -kInf;
    std::vector<double> vvals(k);
    for (std::size_t i = 0; i < k; ++i) {
      vvals[i] = c.V[i].run(slots.data());
      vmax = std::fmax(vmax, vvals[i]);
    }

    for (std::size_t i = 0; i < k; ++i) {
      MemberResult& res = results[pi][i];
      const double level = vvals[i];
      if (!within_level(c.a.value(vmax), level)) continue;  // condition vacuous here
      res.active = true;

      Rng master = Rng::split(budget.seed, pi * k + i);
      Rng rng_b(master.next_u64());
      Rng rng_mc(master.next_u64());

      const double rhs = c.has_W ? -c.W.run(slots.data()) : -c.rho[i].value(level);

      BBoundResult nb = numeric_b(c, model, i, x, budget, rng_b);
      double b = nb.value;
      if (c.has_analytic[i]) {
        double ab = c.analytic[i].run(slots.data());
        if (!(ab >= 0.0) || nb.value > ab * (1.0 + 1e-9) + 1e-12)
          throw std::runtime_error("analytic_b[" + std::to_string(i + 1) +
                                   "] = " + std::to_string(ab) +
                                   " is below the numeric g-rate estimate " +
                                   std::to_string(nb.value) + " at " + point_str(x));
        b = ab;
      }
      if (!std::isfinite(b) || b < 0.0)
        throw std::runtime_error("decrease_check: g-rate bound is not finite at " + point_str(x));

      HeldSampler hs;
      hs.c = &c;
      hs.member = i;
      hs.n = n;
      hs.axis = c.g_axis[i];
      hs.w = c.a2.inverse_at(c.a.inverse_at(level));
      hs.g_x = c.state_eval(c.g[i], x, scratch);
      hs.slab = r * b;
      if (hs.axis >= 0) {
        hs.lo = std::fmax(-hs.w, hs.g_x - hs.slab);
        hs.hi = std::fmin(hs.w, hs.g_x + hs.slab);
        if (hs.lo > hs.hi) hs.lo = hs.hi = std::clamp(hs.g_x, -hs.w, hs.w);
      }
      std::copy(x.begin(), x.end(), slots.begin() + c.cm.off_x);

      const double radius = m > 0 ? c.zeta.inverse_at(level) : 0.0;
      std::vector<std::vector<double>> vps = input_probes(radius, model.U, m);
      vps.erase(std::remove_if(vps.begin(), vps.end(),
                               [&](const std::vector<double>& v) {
                                 return !within_level(c.zeta.value(norm2(v)), level);
                               }),
                vps.end());
      if (vps.empty()) vps.emplace_back(m, 0.0);
      require_finite(vps, "decrease_check: input ball");
      std::vector<std::vector<double>> dps = disturbance_probes(model.D);

      std::vector<double> gv(n);
      for (std::size_t j = 0; j < n; ++j) gv[j] = c.gradV[i][j].run(slots.data());

      auto consider = [&](const std::vector<double>& x0, const std::vector<double>& d,
                          const std::vector<double>& v, const std::vector<double>& v0) {
        std::copy(x0.begin(), x0.end(), slots.begin() + c.cm.off_xs);
        std::copy(d.begin(), d.end(), slots.begin() + c.cm.off_d);
        std::copy(v.begin(), v.end(), slots.begin() + c.cm.off_v);
        std::copy(v0.begin(), v0.end(), slots.begin() + c.cm.off_vs);
        double lhs = 0.0;
        for (std::size_t j = 0; j < n; ++j) lhs += gv[j] * c.cm.f[j].run(slots.data());
        double margin = rhs - lhs;
        ++res.samples;
        if (std::isnan(margin)) return;
        if (margin < res.margin) {
          res.margin = margin;
          res.scale = std::fmax(std::fabs(lhs), std::fabs(rhs));
          res.wit = Witness{x, x0, d, v, v0};
        }
      };

      for (const auto& x0 : hs.probes(x, scratch))
        for (const auto& d : dps)
          for (const auto& v : vps)
            for (const auto& v0 : vps) consider(x0, d, v, v0);

      for (std::size_t s = 0; s < budget.mc_samples; ++s) {
        auto x0 = hs.draw(rng_mc, scratch);
        std::vector<double> d = draw_disturbance(rng_mc, model.D);
        std::vector<double> v = draw_input(rng_mc, radius, model.U, m);
        std::vector<double> v0 = draw_input(rng_mc, radius, model.U, m);
        if (!x0) continue;
        if (!within_level(c.zeta.value(norm2(v)), level) ||
            !within_level(c.zeta.value(norm2(v0)), level))
          continue;
        consider(*x0, d, v, v0);
      }
    }
  });

  std::vector<VerificationReport> out(k);
  for (std::size_t i = 0; i < k; ++i) {
    VerificationReport& rep = out[i];
    rep.condition = "decrease[" + std::to_string(i + 1) + "]";
    rep.budget = budget;
    std::size_t active_points = 0;
    double scale = 0.0;
    double margin = kInf;
    for (std::size_t pi = 0; pi < grid.size(); ++pi) {
      const MemberResult& res = results[pi][i];
      if (!res.active) continue;
      ++active_points;
      rep.samples += res.samples;
      if (res.margin < margin) {
        margin = res.margin;
        scale = res.scale;
        rep.witness = res.wit;
      }
    }
    if (active_points == 0) {
      rep.passed = true;
      rep.worst_margin = 0.0;
      rep.note = "condition vacuous at every grid point";
      continue;
    }
    rep.worst_margin = margin;
    rep.passed = margin >= -violation_floor(scale);
    if (rep.passed) rep.witness.reset();
    rep.note = "active at " + std::to_string(active_points) + " of " +
               std::to_string(grid.size()) + " grid points; g-rate bound " +
               (c.has_analytic[i] ? "from the analytic expression" : "estimated numerically");
  }
  return out;
}

VerificationReport sandwich_check(const LyapunovCertificate& cert, const SystemModel& model,
                                  const Region& region, const SampleBudget& budget) {
  budget.validate();
  region.validate();
  Compiled c = prepare(cert, model);

  std::vector<std::vector<double>> pts = region.grid(budget.grid_per_axis);
  Rng rng = Rng::split(budget.seed, 0);
  for (std::size_t s = 0; s < budget.mc_samples; ++s) {
    std::vector<double> z(model.n);
    for (std::size_t j = 0; j < model.n; ++j)
      z[j] = rng.uniform(region.box[j].lo, region.box[j].hi);
    if (norm2(z) < region.exclude_origin_radius) continue;
    pts.push_back(std::move(z));
  }

  VerificationReport rep;
  rep.condition = "sandwich";
  rep.budget = budget;
  rep.samples = pts.size();
  rep.worst_margin = kInf;
  double scale = 0.0;

  std::vector<double> slots(c.cm.slot_count(), 0.0);
  std::vector<double> out(c.cm.p);
  for (const auto& x : pts) {
    std::copy(x.begin(), x.end(), slots.begin() + c.cm.off_x);
    double vmax = -kInf;
    for (std::size_t i = 0; i < c.k; ++i) vmax = std::fmax(vmax, c.V[i].run(slots.data()));
    c.cm.eval_H(slots.data(), out.data());
    const double lower = c.a1.value(norm2(out));
    const double upper = c.a2.value(norm2(x));
    const double margin = std::fmin(vmax - lower, upper - vmax);
    if (std::isnan(margin)) continue;
    if (margin < rep.worst_margin) {
      rep.worst_margin = margin;
      scale = std::fmax(std::fabs(vmax), std::fmax(lower, upper));
      rep.witness = Witness{x, {}, {}, {}, {}};
    }
  }
  if (!std::isfinite(rep.worst_margin)) rep.worst_margin = 0.0;
  rep.passed = rep.worst_margin >= -violation_floor(scale);
  if (rep.passed) rep.witness.reset();
  return rep;
}

std::vector<VerificationReport> check_hypotheses(const SystemModel& model, const Region& region,
                                                 const SampleBudget& budget,
                                                 const HypothesisOptions& opts) {
  budget.validate();
  region.validate();
  model.validate();
  CompiledModel cm = model.compile_model();
  const std::size_t n = cm.n, m = cm.m;

  auto draw_region = [&](Rng& rng) {
    std::vector<double> z(n);
    for (std::size_t j = 0; j < n; ++j) z[j] = rng.uniform(region.box[j].lo, region.box[j].hi);
    return z;
  };
  const double amp = opts.input_probe_amplitude;
  auto draw_bounded_input = [&](Rng& rng) {
    std::vector<double> v(m);
    for (std::size_t j = 0; j < m; ++j) {
      double lo = std::isfinite(model.U[j].lo) ? model.U[j].lo : -amp;
      double hi = std::isfinite(model.U[j].hi) ? model.U[j].hi : amp;
      if (lo > hi) std::swap(lo, hi);
      v[j] = rng.uniform(lo, hi);
    }
    return v;
  };

  std::vector<double> slots(cm.slot_count(), 0.0);
  std::vector<double> fx(n), fy(n), hout(cm.p);
  std::vector<VerificationReport> out;

  // One-sided Lipschitz estimate of f in its first argument.
  {
    VerificationReport rep;
    rep.condition = "one-sided-lipschitz";
    rep.budget = budget;
    Rng rng = Rng::split(budget.seed, 1);
    double estimate = -kInf;
    for (std::size_t s = 0; s < budget.mc_samples; ++s) {
      std::vector<double> x = draw_region(rng), y = draw_region(rng);
      std::vector<double> x0 = draw_region(rng);
      std::vector<double> d = draw_disturbance(rng, model.D);
      std::vector<double> v = draw_bounded_input(rng), v0 = draw_bounded_input(rng);
      std::copy(x0.begin(), x0.end(), slots.begin() + cm.off_xs);
      std::copy(d.begin(), d.end(), slots.begin() + cm.off_d);
      std::copy(v.begin(), v.end(), slots.begin() + cm.off_v);
      std::copy(v0.begin(), v0.end(), slots.begin() + cm.off_vs);
      std::copy(x.begin(), x.end(), slots.begin() + cm.off_x);
      cm.eval_f(slots.data(), fx.data());
      std::copy(y.begin(), y.end(), slots.begin() + cm.off_x);
      cm.eval_f(slots.data(), fy.data());
      double num = 0.0, den = 0.0;
      for (std::size_t j = 0; j < n; ++j) {
        num += (x[j] - y[j]) * (fx[j] - fy[j]);
        den += (x[j] - y[j]) * (x[j] - y[j]);
      }
      if (den < 1e-20) continue;
      ++rep.samples;
      double q = num / den;
      if (q > estimate) {
        estimate = q;
        rep.witness = Witness{x, y, d, v, v0};
      }
    }
    rep.worst_margin = estimate;
    rep.passed = std::isfinite(estimate);
    rep.note =
        "one-sided Lipschitz estimate stored in worst_margin; witness.x0 holds the paired state";
    out.push_back(std::move(rep));
  }

  // Growth bound |f| <= bound(|x| + |x0| + |v| + |v0|).
  {
    VerificationReport rep;
    rep.condition = "growth";
    rep.budget = budget;
    Rng rng = Rng::split(budget.seed, 2);
    const bool have = opts.growth_bound.has_value();
    double worst = kInf, ratio = 0.0, scale = 0.0;
    for (std::size_t s = 0; s < budget.mc_samples; ++s) {
      std::vector<double> x = draw_region(rng), x0 = draw_region(rng);
      std::vector<double> d = draw_disturbance(rng, model.D);
      std::vector<double> v = draw_bounded_input(rng), v0 = draw_bounded_input(rng);
      std::copy(x.begin(), x.end(), slots.begin() + cm.off_x);
      std::copy(x0.begin(), x0.end(), slots.begin() + cm.off_xs);
      std::copy(d.begin(), d.end(), slots.begin() + cm.off_d);
      std::copy(v.begin(), v.end(), slots.begin() + cm.off_v);
      std::copy(v0.begin(), v0.end(), slots.begin() + cm.off_vs);
      cm.eval_f(slots.data(), fx.data());
      const double fn = norm2(fx);
      const double arg = norm2(x) + norm2(x0) + norm2(v) + norm2(v0);
      ++rep.samples;
      if (have) {
        double bound = opts.growth_bound->value(arg);
        double margin = bound - fn;
        if (margin < worst) {
          worst = margin;
          scale = std::fmax(bound, fn);
          rep.witness = Witness{x, x0, d, v, v0};
        }
      } else if (arg > 1e-15 && fn / arg > ratio) {
        ratio = fn / arg;
        rep.witness = Witness{x, x0, d, v, v0};
      }
    }
    if (have) {
      rep.worst_margin = std::isfinite(worst) ? worst : 0.0;
      rep.passed = rep.worst_margin >= -violation_floor(scale);
      if (rep.passed) rep.witness.reset();
      rep.note = "checked against the supplied growth candidate";
    } else {
      rep.worst_margin = ratio;
      rep.passed = true;
      rep.note = "envelope-only: worst_margin holds max |f| / (|x|+|x0|+|v|+|v0|)";
    }
    out.push_back(std::move(rep));
  }

  // Output coercivity |x| <= R + p(|H(x)|).
  {
    VerificationReport rep;
    rep.condition = "output-coercivity";
    rep.budget = budget;
    Rng rng = Rng::split(budget.seed, 3);
    std::vector<std::vector<double>> pts = region.grid(budget.grid_per_axis);
    for (std::size_t s = 0; s < budget.mc_samples; ++s) pts.push_back(draw_region(rng));
    double worst = kInf, scale = 0.0;
    for (const auto& x : pts) {
      std::copy(x.begin(), x.end(), slots.begin() + cm.off_x);
      cm.eval_H(slots.data(), hout.data());
      const double image = norm2(hout);
      const double bound =
          opts.output_offset + (opts.output_gain ? opts.output_gain->value(image) : image);
      const double margin = bound - norm2(x);
      ++rep.samples;
      if (std::isnan(margin)) continue;
      if (margin < worst) {
        worst = margin;
        scale = std::fmax(bound, norm2(x));
        rep.witness = Witness{x, {}, {}, {}, {}};
      }
    }
    rep.worst_margin = std::isfinite(worst) ? worst : 0.0;
    rep.passed = rep.worst_margin >= -violation_floor(scale);
    if (rep.passed) rep.witness.reset();
    rep.note = opts.output_gain ? "supplied output gain" : "identity output gain";
    out.push_back(std::move(rep));
  }

  // Nominal period range 0 < h(x) <= r.
  {
    VerificationReport rep;
    rep.condition = "period-range";
    rep.budget = budget;
    Rng rng = Rng::split(budget.seed, 4);
    std::vector<std::vector<double>> pts = region.grid(budget.grid_per_axis);
    for (std::size_t s = 0; s < budget.mc_samples; ++s) pts.push_back(draw_region(rng));
    double worst = kInf, h_min = kInf, h_max = -kInf;
    for (const auto& x : pts) {
      std::copy(x.begin(), x.end(), slots.begin() + cm.off_x);
      const double hv = cm.eval_h(slots.data());
      ++rep.samples;
      h_min = std::fmin(h_min, hv);
      h_max = std::fmax(h_max, hv);
      const double margin = (!(hv > 0.0)) ? hv - 1.0 : model.r - hv;
      if (margin < worst) {
        worst = margin;
        rep.witness = Witness{x, {}, {}, {}, {}};
      }
    }
    rep.worst_margin = std::isfinite(worst) ? worst : 0.0;
    rep.passed = rep.worst_margin >= -violation_floor(model.r);
    if (rep.passed) rep.witness.reset();
    rep.note = "h range [" + std::to_string(h_min) + ", " + std::to_string(h_max) +
               "] against bound " + std::to_string(model.r);
    out.push_back(std::move(rep));
  }

  return out;
}

}  // namespace sdlyap
