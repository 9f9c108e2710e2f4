#pragma once

#include <functional>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "sdlyap/expr.hpp"

namespace sdlyap {

/// Declared regularity class of a scalar comparison function of s >= 0.
enum class FnClass { K, KInfinity, N, PositiveDefinite, KPlus };

std::string to_string(FnClass c);
FnClass fn_class_from_string(const std::string& s);

/// Largest s >= 0 with fn(s) <= y for a nondecreasing fn, found by doubling
/// then bisection (<= 200 iterations, mixed abs/rel tolerance 1e-12). Returns
/// +inf when fn stays below y up to the expansion cap.
double upper_inverse(const std::function<double(double)>& fn, double y,
                     double hi_cap = 1e12);

/// Scalar comparison function. Either backed by an expression in the single
/// variable `s`, or by the numeric inverse composition a1^{-1}(zeta(s)) that
/// compose_gain produces.
class ComparisonFunction {
 public:
  ComparisonFunction() = default;
  ComparisonFunction(Expression body, FnClass cls);

  /// Parses `text` as an expression in s.
  static ComparisonFunction parse(const std::string& text, FnClass cls);

  double value(double s) const;
  double operator()(double s) const { return value(s); }

  FnClass declared_class() const { return cls_; }
  bool valid() const { return impl_ != nullptr; }

  /// Expression body when expression-backed, nullopt for composed gains.
  std::optional<Expression> body() const;

  std::string describe() const;

  /// Largest s with value(s) <= y (value must be nondecreasing).
  double inverse_at(double y, double hi_cap = 1e12) const;

  friend ComparisonFunction compose_gain(const ComparisonFunction& a1,
                                         const ComparisonFunction& zeta);

 private:
  struct Impl;
  std::shared_ptr<const Impl> impl_;
  FnClass cls_ = FnClass::N;
};

/// gamma = a1^{-1} o zeta, evaluated by bisection inversion of a1 (declared
/// class N). Errors when a1 is not strictly increasing on the probe grid.
ComparisonFunction compose_gain(const ComparisonFunction& a1, const ComparisonFunction& zeta);

// ============================================================================
// Class validation (falsification on a grid)
// ============================================================================

struct PropertyCheck {
  std::string name;
  bool ok = true;
  bool required = false;  // counts toward the class verdict
  double worst_s = 0.0;   // sample of the worst violation (or worst margin)
  double worst_value = 0.0;
};

struct ClassValidationReport {
  FnClass declared;
  std::vector<double> grid;
  std::vector<PropertyCheck> checks;
  bool passed = false;          // all checks required by the declared class
  bool contraction_ok = false;  // f(s) < s for all grid s > 0 (informational)
};

/// Samples [0, s_max] with `grid_points` points (>= 2) and checks the
/// properties required by fn's declared class, plus the below-identity
/// contraction property that Razumikhin-style conditions need.
ClassValidationReport validate_comparison_fn(const ComparisonFunction& fn,
                                             std::size_t grid_points,
                                             double s_max = 10.0);

// ============================================================================
// Class-KL functions
// ============================================================================

/// Two-argument decay function sigma(s, t): nondecreasing in s, decreasing to
/// zero in t. Negative t uses the extension sigma(s, t) = s * exp(-t).
class KLFunction {
 public:
  enum class Repr { ClosedForm, FlowOfRho, FittedExponential };

  KLFunction() = default;
  static KLFunction closed_form(std::function<double(double, double)> fn, std::string desc);
  /// C * s * exp(-lambda * t)
  static KLFunction fitted_exponential(double C, double lambda);
  static KLFunction flow(std::function<double(double, double)> fn, std::string desc);

  double value(double s, double t) const;
  double operator()(double s, double t) const { return value(s, t); }

  Repr repr() const { return repr_; }
  bool valid() const { return fn_ != nullptr; }
  const std::string& describe() const { return desc_; }
  double fitted_C() const { return C_; }
  double fitted_lambda() const { return lambda_; }

 private:
  std::function<double(double, double)> fn_;
  Repr repr_ = Repr::ClosedForm;
  std::string desc_;
  double C_ = 0.0, lambda_ = 0.0;
};

struct KLValidationReport {
  bool monotone_in_s = true;
  bool monotone_in_t = true;
  bool decays = true;
  bool passed = false;
  double worst_s = 0.0, worst_t = 0.0;
};

KLValidationReport validate_kl(const KLFunction& kl, const std::vector<double>& s_grid,
                               const std::vector<double>& t_grid, double tol = 1e-9);

}  // namespace sdlyap
