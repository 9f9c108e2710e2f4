#pragma once

#include <cstddef>
#include <string>
#include <vector>

#include "sdlyap/box.hpp"
#include "sdlyap/comparison.hpp"
#include "sdlyap/expr.hpp"
#include "sdlyap/system.hpp"
#include "sdlyap/verify.hpp"

namespace sdlyap {

// ============================================================================
// Domain types
// ============================================================================

/// Lower-triangular control system
///   dx_i/dt = sum_{j<=i} x_j * phi[i][j](x_1..x_i, d) + g_i(x_1..x_i, d) * x_{i+1}
/// with the scalar control taking the place of x_{n+1} in the last row. Every
/// channel gain g_i must be strictly positive; positivity is probed on a
/// grid, not proved.
struct TriangularSystem {
  std::size_t n = 0;
  std::vector<std::vector<Expression>> phi;  ///< row i holds i+1 coefficients
  std::vector<Expression> g;                 ///< n channel gains, sampled > 0
  Box D;
  std::string name;

  /// Shapes, variable scoping (row i reads x[1..i] and d only), finite D,
  /// and sampled positivity of every g_i. Throws std::invalid_argument.
  void validate() const;

  /// Drift rows F_i = sum_j x_j*phi[i][j] + g_i*x_{i+1}; the last row carries
  /// no control term (the control enters through control_gain()).
  std::vector<Expression> drift() const;

  /// Gain multiplying the scalar control in the last row.
  const Expression& control_gain() const;

  /// Closed loop dx/dt = F(x, d) + G(x, d)*k(x(tau_i)) under sampled feedback
  /// held between sampling instants tau_{i+1} = tau_i + h*exp(-dtilde(tau_i)).
  SystemModel emulated_loop(const Expression& k, double h) const;
};

/// Emulation certificate for a triangular system: Lyapunov function V and
/// feedback k with decrease rate W, error gauge zeta, and memory gauge a.
/// The variant selects which error channel the dissipation check perturbs:
/// a held measurement error inside the feedback argument, or an additive
/// actuator error after the feedback.
struct BackstepCertificate {
  enum class Variant { MeasurementError, ActuatorError };

  Expression V;             ///< positive definite, radially unbounded (sampled)
  Expression k;             ///< feedback with k(0) = 0
  Expression W;             ///< positive-definite decrease rate (sampled)
  ComparisonFunction zeta;  ///< class-N gauge sizing admissible errors against V(x)
  ComparisonFunction a;     ///< class-N memory gauge with a(s) < s for s > 0
  Variant variant = Variant::MeasurementError;

  /// Scoping to x[1..n], k(0) = 0, V(0) = W(0) = 0, sampled positive
  /// definiteness and radial growth, class checks on zeta and a, and symbolic
  /// differentiability of V (the dissipation check takes its gradient). The
  /// actuator-error variant additionally requires a continuously
  /// differentiable k. Throws std::invalid_argument.
  void validate(std::size_t n) const;
};

std::string to_string(BackstepCertificate::Variant v);

// ============================================================================
// Dissipation check
// ============================================================================

/// Samples the dissipation implication of the selected variant on the region
/// grid, maximizing over d in D and admissible errors:
///   measurement-error: zeta(|e|) <= V(x)  =>  grad V . (F + G*k(x+e)) <= -W(x),
///   actuator-error:    zeta(|v|) <= V(x)  =>  grad V . (F + G*k(x) + G*v) <= -W(x).
/// Margins are -W(x) - lhs; a failing report carries the worst witness (x0
/// holds the perturbed feedback argument, v the actuator error).
VerificationReport check_dissipation(const TriangularSystem& tri, const BackstepCertificate& cert,
                                     const Region& region, const SampleBudget& budget);

// ============================================================================
// Feedback growth bound and admissible period
// ============================================================================

/// Numeric maximum of |F(xi, d) + G(xi, d)*k(x0)| (measurement-error variant)
/// or |grad k(xi) . (F(xi, d) + G(xi, d)*k(x0))| (actuator-error variant)
/// over d in D and xi, x0 ranging over the sublevel set
/// a(max{V(xi), V(x0)}) <= V(x). The set is sampled by rejection inside a box
/// sized by inverting V along axis and corner rays, seeded with deterministic
/// extreme probes; the maximum over x0 reduces exactly to the sampled extremes
/// of k. Deterministic under the budget seed. Throws std::runtime_error when
/// the sublevel set yields no samples at a nonzero level.
double rho_x(const TriangularSystem& tri, const BackstepCertificate& cert,
             const std::vector<double>& x, const SampleBudget& budget);

/// Outcome of the admissible-period search over one region.
struct PeriodSearchReport {
  double h_star = 0.0;
  bool feasible = false;
  double worst_margin = 0.0;  ///< min over points of V(x) - zeta(h_star*rho(x))
  std::vector<std::vector<double>> points;  ///< grid plus origin-limit ray probes
  std::vector<double> levels;               ///< V at each point
  std::vector<double> growth;               ///< rho_x at each point
  std::vector<double> obstruction;          ///< violating point when infeasible
  std::string note;

  /// {h_star, feasible, worst_margin, points, obstruction, note}
  std::string to_json(int indent = -1) const;
};

/// Largest constant h (bisection over a feasibility bracket) such that
/// zeta(h*rho(x)) <= V(x) at every region grid point and along origin-limit
/// ray probes. When no positive h survives the probes, the report flags the
/// obstruction point closest to the origin. A passing h_star backs the claim
/// that the held feedback stabilizes the emulated loop; drive
/// emulated_loop(k, 0.9*h_star) by simulation to test it.
PeriodSearchReport find_h(const TriangularSystem& tri, const BackstepCertificate& cert,
                          const Region& region, const SampleBudget& budget);

// ============================================================================
// Planar cascade hypothesis
// ============================================================================

/// Two-part sampled check for the planar system dx1/dt = f1(x1, x2, d),
/// dx2/dt = f2(x1, x2, d) + u closed by u = -R*(x2(tau) + a*x1(tau)):
///   gate:   max{ x1*f1(x1, -a*x1 + xi, d) : |xi| <= c*|x1|, d in D } < 0
///           at sampled x1 != 0;
///   growth: |z|*max{ |f2 + a*f1| at x2 = -a*x1 + xi : max(|x1|,|xi|) <= c*|z| }
///           + L*max{ z*f2 + a*z*f1 at x2 = -a*x1 + z : |x1| <= c*|z| }
///           <= gamma*z^2 at sampled z.
/// f1 and f2 are expressions in x[1], x[2], d[i]; x[2] receives the shifted
/// argument. The region is one-dimensional (x1 and z share it); the gate is
/// strict, so grids should exclude an origin ball. The combined report fails
/// if either part fails, and the note names the failing part.
VerificationReport check_hypothesis_P(const Expression& f1, const Expression& f2, double c,
                                      double a, double L, double gamma, const Box& D,
                                      const Region& region, const SampleBudget& budget);

// ============================================================================
// Built-in scalar instance
// ============================================================================

/// Scalar integrator dx/dt = u with no disturbance.
TriangularSystem make_scalar_integrator();

/// Certificate V = x^2/2, k = -2x, W = (2 - sqrt(2))*x^2, zeta(s) = s^2,
/// a(s) = s/2 for the scalar integrator, measurement-error variant.
BackstepCertificate make_scalar_integrator_certificate();

}  // namespace sdlyap
