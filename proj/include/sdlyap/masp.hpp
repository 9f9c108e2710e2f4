#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "sdlyap/system.hpp"
#include "sdlyap/verify.hpp"

namespace sdlyap {

// ============================================================================
// Maximum allowable sampling period
// ============================================================================

/// Largest sampling-radius bound a method certifies. Closed forms return the
/// supremum of an inequality system; `open_endpoint` records whether the
/// binding constraint is strict (the supremum itself is not admissible, so
/// simulations should stay below it). Bisection results are empirical: they
/// locate the pass/fail boundary of decrease_check under a fixed budget and
/// are never a guarantee.
struct MASPResult {
  double r_star = 0.0;
  std::string method;        // closed-form-single | closed-form-vector | bisection
  bool feasible = true;      // false: no positive radius satisfies the constraints
  bool open_endpoint = false;
  std::vector<double> margins;  // per-member worst margins at the last passing radius
  double bracket_lo = 0.0;      // final verified-pass radius (bisection only)
  double bracket_hi = 0.0;      // final verified-fail radius (bisection only)
  std::size_t verifier_calls = 0;
  bool monotone = true;  // false: a pass was observed above a failing radius
  std::string note;

  /// {r_star, method, open_endpoint, margins, bracket, feasible, note}
  std::string to_json(int indent = -1) const;
};

/// Closed-form bound for the planar benchmark under the single-function
/// method: sup of r subject to r < 7/(40c^2+8) and r <= min(1/11, delta/5)/c^3.
/// With delta = 0 the second constraint forces r = 0 and the result is
/// infeasible. Throws std::invalid_argument for c <= 1 or delta < 0.
MASPResult masp_example41_single(double c, double delta);

/// Closed-form bound for the planar benchmark under the vector method:
/// sup of r subject to r < 1/(5c^2+2) and r <= 1/(6c^3); independent of the
/// disturbance range. Throws std::invalid_argument unless 1 < c < 2.
MASPResult masp_example41_vector(double c);

/// Empirical boundary search: bisects [r_lo, r_hi] on the outcome of
/// decrease_check under the given budget, after verifying the bracket
/// (pass at r_lo, fail at r_hi; otherwise std::invalid_argument). Stops when
/// the bracket width drops below tol * r_hi (the initial upper radius) and
/// returns the largest verified-pass radius with its margins. scan_points
/// extra radii between the final failing radius and r_hi are probed for
/// passes above the boundary; any such pass flips `monotone` to false.
MASPResult masp_bisection(const LyapunovCertificate& cert, const SystemModel& model,
                          const Region& region, const SampleBudget& budget, double r_lo,
                          double r_hi, double tol, std::size_t scan_points = 0);

}  // namespace sdlyap
