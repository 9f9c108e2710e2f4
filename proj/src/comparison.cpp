#include "sdlyap/comparison.hpp"

#include <cmath>
#include <limits>
#include <stdexcept>

namespace sdlyap {

std::string to_string(FnClass c) {
  switch (c) {
    case FnClass::K: return "K";
    case FnClass::KInfinity: return "K-infinity";
    case FnClass::N: return "N";
    case FnClass::PositiveDefinite: return "positive-definite";
    case FnClass::KPlus: return "K-plus";
  }
  return "?";
}

FnClass fn_class_from_string(const std::string& s) {
  if (s == "K") return FnClass::K;
  if (s == "K-infinity" || s == "Kinf" || s == "K_inf") return FnClass::KInfinity;
  if (s == "N") return FnClass::N;
  if (s == "positive-definite" || s == "PD") return FnClass::PositiveDefinite;
  if (s == "K-plus" || s == "K+") return FnClass::KPlus;
  throw std::invalid_argument("unknown comparison-function class '" + s + "'");
}

double upper_inverse(const std::function<double(double)>& fn, double y, double hi_cap) {
  if (!(y >= 0)) return 0.0;
  if (fn(0.0) > y) return 0.0;
  double hi = 1.0;
  while (hi < hi_cap && fn(hi) <= y) hi *= 2.0;
  if (fn(hi) <= y) return std::numeric_limits<double>::infinity();
  double lo = hi > 1.0 ? hi / 2.0 : 0.0;
  for (int i = 0; i < 200; ++i) {
    double mid = 0.5 * (lo + hi);
    (fn(mid) <= y ? lo : hi) = mid;
    if (hi - lo <= 1e-12 * (1.0 + hi)) break;
  }
  return lo;
}

// ============================================================================
// ComparisonFunction
// ============================================================================

struct ComparisonFunction::Impl {
  // Expression-backed path.
  std::optional<Expression> body;
  Program program;  // compiled against the single slot {s}
  // Composed-gain path.
  std::optional<ComparisonFunction> a1, zeta;
};

ComparisonFunction::ComparisonFunction(Expression body, FnClass cls) : cls_(cls) {
  auto vars = body.free_vars();
  for (const auto& v : vars)
    if (!(v == VarKey{"s", -1}))
      throw EvalError("comparison function may only reference 's', got '" + v.str() + "'");
  auto impl = std::make_shared<Impl>();
  impl->body = body;
  impl->program = compile(body, VarLayout({VarKey{"s", -1}}));
  impl_ = std::move(impl);
}

ComparisonFunction ComparisonFunction::parse(const std::string& text, FnClass cls) {
  return ComparisonFunction(Expression::parse(text), cls);
}

double ComparisonFunction::value(double s) const {
  if (!impl_) throw EvalError("empty comparison function");
  if (impl_->body) {
    double slot = s;
    return impl_->program.run(&slot);
  }
  // a1^{-1}(zeta(s)): invert by expansion + bisection.
  double target = impl_->zeta->value(s);
  const ComparisonFunction& a1 = *impl_->a1;
  double hi = 1.0;
  int guard = 0;
  while (a1.value(hi) < target && guard++ < 120) hi *= 2.0;
  double lo = 0.0;
  for (int i = 0; i < 200; ++i) {
    double mid = 0.5 * (lo + hi);
    (a1.value(mid) < target ? lo : hi) = mid;
    if (hi - lo <= 1e-12 * (1.0 + hi)) break;
  }
  return 0.5 * (lo + hi);
}

std::optional<Expression> ComparisonFunction::body() const {
  return impl_ && impl_->body ? impl_->body : std::nullopt;
}

std::string ComparisonFunction::describe() const {
  if (!impl_) return "<empty>";
  if (impl_->body) return impl_->body->str();
  return "inverse(" + impl_->a1->describe() + ") o (" + impl_->zeta->describe() + ")";
}

double ComparisonFunction::inverse_at(double y, double hi_cap) const {
  return upper_inverse([this](double s) { return value(s); }, y, hi_cap);
}

ComparisonFunction compose_gain(const ComparisonFunction& a1, const ComparisonFunction& zeta) {
  if (!a1.valid() || !zeta.valid()) throw EvalError("compose_gain: empty operand");
  double prev = a1.value(0.0);
  for (int i = 1; i <= 100; ++i) {
    double s = 10.0 * i / 100.0;
    double v = a1.value(s);
    if (!(v > prev))
      throw EvalError("compose_gain: a1 is not strictly increasing near s=" + std::to_string(s));
    prev = v;
  }
  ComparisonFunction out;
  auto impl = std::make_shared<ComparisonFunction::Impl>();
  impl->a1 = a1;
  impl->zeta = zeta;
  out.impl_ = std::move(impl);
  out.cls_ = FnClass::N;
  return out;
}

// ============================================================================
// Validation
// ============================================================================

ClassValidationReport validate_comparison_fn(const ComparisonFunction& fn,
                                             std::size_t grid_points, double s_max) {
  if (grid_points < 2) throw std::invalid_argument("validate_comparison_fn: need >= 2 grid points");
  ClassValidationReport rep;
  rep.declared = fn.declared_class();
  rep.grid.resize(grid_points);
  for (std::size_t i = 0; i < grid_points; ++i)
    rep.grid[i] = s_max * static_cast<double>(i) / static_cast<double>(grid_points - 1);

  std::vector<double> vals(grid_points);
  for (std::size_t i = 0; i < grid_points; ++i) vals[i] = fn.value(rep.grid[i]);

  FnClass c = rep.declared;
  const bool needs_zero = c == FnClass::K || c == FnClass::KInfinity || c == FnClass::N ||
                          c == FnClass::PositiveDefinite;
  const bool needs_strict_increase = c == FnClass::K || c == FnClass::KInfinity;
  const bool needs_nondecreasing = c == FnClass::N;
  const bool needs_positive = c == FnClass::PositiveDefinite;  // on s > 0
  const bool needs_positive_everywhere = c == FnClass::KPlus;
  const bool needs_unbounded = c == FnClass::KInfinity;

  PropertyCheck zero{"zero_at_zero", std::fabs(vals[0]) <= 1e-12, needs_zero, 0.0, vals[0]};
  rep.checks.push_back(zero);

  PropertyCheck nonneg{"nonnegative", true, true, 0.0, 0.0};
  for (std::size_t i = 0; i < grid_points; ++i)
    if (vals[i] < 0 && (nonneg.ok || vals[i] < nonneg.worst_value)) {
      nonneg.ok = false;
      nonneg.worst_s = rep.grid[i];
      nonneg.worst_value = vals[i];
    }
  rep.checks.push_back(nonneg);

  PropertyCheck inc{needs_strict_increase ? "strictly_increasing" : "nondecreasing", true,
                    needs_strict_increase || needs_nondecreasing, 0.0, 0.0};
  for (std::size_t i = 1; i < grid_points; ++i) {
    double d = vals[i] - vals[i - 1];
    bool bad = needs_strict_increase ? !(d > 0) : d < 0;
    if (bad && (inc.ok || d < inc.worst_value)) {
      inc.ok = false;
      inc.worst_s = rep.grid[i];
      inc.worst_value = d;
    }
  }
  rep.checks.push_back(inc);

  PropertyCheck pos{"positive", true, needs_positive || needs_positive_everywhere, 0.0, 0.0};
  for (std::size_t i = 0; i < grid_points; ++i) {
    if (rep.grid[i] == 0.0 && !needs_positive_everywhere) continue;
    if (!(vals[i] > 0) && (pos.ok || vals[i] < pos.worst_value)) {
      pos.ok = false;
      pos.worst_s = rep.grid[i];
      pos.worst_value = vals[i];
    }
  }
  rep.checks.push_back(pos);

  PropertyCheck unb{"unbounded_probe", true, needs_unbounded, 0.0, 0.0};
  {
    double p0 = fn.value(s_max * 1e2), p1 = fn.value(s_max * 1e4), p2 = fn.value(s_max * 1e6);
    if (!(p1 >= 1.05 * p0 && p2 >= 1.05 * p1)) {
      unb.ok = false;
      unb.worst_s = s_max * 1e6;
      unb.worst_value = p2;
    }
  }
  rep.checks.push_back(unb);

  PropertyCheck contraction{"below_identity", true, false, 0.0, 0.0};
  for (std::size_t i = 0; i < grid_points; ++i) {
    if (rep.grid[i] == 0.0) continue;
    double excess = vals[i] - rep.grid[i];
    if (excess >= 0 && (contraction.ok || excess > contraction.worst_value)) {
      contraction.ok = false;
      contraction.worst_s = rep.grid[i];
      contraction.worst_value = excess;
    }
  }
  rep.checks.push_back(contraction);
  rep.contraction_ok = contraction.ok;

  rep.passed = true;
  for (const auto& ck : rep.checks)
    if (ck.required && !ck.ok) rep.passed = false;
  return rep;
}

// ============================================================================
// KLFunction
// ============================================================================

KLFunction KLFunction::closed_form(std::function<double(double, double)> fn, std::string desc) {
  KLFunction k;
  k.fn_ = std::move(fn);
  k.repr_ = Repr::ClosedForm;
  k.desc_ = std::move(desc);
  return k;
}

KLFunction KLFunction::fitted_exponential(double C, double lambda) {
  KLFunction k;
  k.C_ = C;
  k.lambda_ = lambda;
  k.fn_ = [C, lambda](double s, double t) { return C * s * std::exp(-lambda * t); };
  k.repr_ = Repr::FittedExponential;
  k.desc_ = "C*s*exp(-lambda*t)";
  return k;
}

KLFunction KLFunction::flow(std::function<double(double, double)> fn, std::string desc) {
  KLFunction k;
  k.fn_ = std::move(fn);
  k.repr_ = Repr::FlowOfRho;
  k.desc_ = std::move(desc);
  return k;
}

double KLFunction::value(double s, double t) const {
  if (!fn_) throw EvalError("empty KL function");
  if (t < 0) return s * std::exp(-t);
  return fn_(s, t);
}

KLValidationReport validate_kl(const KLFunction& kl, const std::vector<double>& s_grid,
                               const std::vector<double>& t_grid, double tol) {
  KLValidationReport rep;
  for (double t : t_grid) {
    double prev = -std::numeric_limits<double>::infinity();
    for (double s : s_grid) {
      double v = kl.value(s, t);
      if (v < prev - tol) {
        rep.monotone_in_s = false;
        rep.worst_s = s;
        rep.worst_t = t;
      }
      prev = v;
    }
  }
  for (double s : s_grid) {
    double prev = std::numeric_limits<double>::infinity();
    for (double t : t_grid) {
      double v = kl.value(s, t);
      if (v > prev + tol) {
        rep.monotone_in_t = false;
        rep.worst_s = s;
        rep.worst_t = t;
      }
      prev = v;
    }
  }
  if (!s_grid.empty() && !t_grid.empty()) {
    double t_max = t_grid.back();
    for (double s : s_grid) {
      double head = kl.value(s, t_grid.front());
      double tail = kl.value(s, 10.0 * t_max + 10.0);
      if (!(tail <= 0.9 * head + 1e-12)) {
        rep.decays = false;
        rep.worst_s = s;
        rep.worst_t = 10.0 * t_max + 10.0;
      }
    }
  }
  rep.passed = rep.monotone_in_s && rep.monotone_in_t && rep.decays;
  return rep;
}

}  // namespace sdlyap
