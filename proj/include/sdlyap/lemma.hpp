#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "sdlyap/comparison.hpp"

namespace sdlyap {

// ============================================================================
// Sampled scalar signals
// ============================================================================

/// Scalar time series on a strictly increasing grid.
struct SampledSignal {
  std::vector<double> times;
  std::vector<double> values;

  /// Requires >= 3 samples, matching sizes, strictly increasing finite times
  /// and finite values. Throws std::invalid_argument.
  void validate() const;
};

// ============================================================================
// Decay envelopes from decrease rates
// ============================================================================

/// sigma(s, t) = y(t) for the scalar flow dy/dt = -rho(y), y(0) = s.
/// sigma(s, 0) = s exactly; negative times extend as s * exp(-t). Values are
/// integrated on demand (RK4, steps halved until two refinements agree to
/// 1e-10) and memoized on (s, t) rounded to 1e-12; evaluation is guarded by a
/// per-instance lock, so copies may be shared across threads. Throws
/// std::invalid_argument when rho is negative at a probe.
KLFunction sigma_from_rho(const ComparisonFunction& rho);

// ============================================================================
// Envelope checks
// ============================================================================

/// Outcome of one envelope check over a sampled trajectory. Margins are
/// bound - value, so any margin below -tol is a violation; `hypothesis_ok`
/// distinguishes "the premise failed on this sample" (conclusion skipped)
/// from a genuine conclusion failure.
struct EnvelopeReport {
  bool hypothesis_ok = true;
  bool passed = false;
  double worst_margin = 0.0;
  double witness_time = 0.0;    // sample time of the worst margin or violation
  double witness_anchor = 0.0;  // anchor time of a premise violation (when anchored)
  std::string note;
};

/// Decay-envelope check: wherever y(t) >= u(t), the centrally differenced
/// derivative must satisfy dy/dt <= -rho(y) + tol; the conclusion then bounds
///   y(t) <= max{ sigma(y(t0), t - t0), sup_{t0<=s<=t} sigma(u(s), t - s) } + tol
/// with sigma the flow of rho, the sup taken over the sample grid and
/// evaluated by stepping the flow forward one interval at a time. y and u
/// must share their time grid. A premise violation skips the conclusion.
EnvelopeReport comparison_check(const SampledSignal& y, const SampledSignal& u,
                                const ComparisonFunction& rho, double tol);

/// Contraction-envelope check: verifies the premise
///   y(t) <= max{ sigma(M, t - xi), a(sup_{xi<=tau<=t} y), u(t) } + tol
/// for every grid anchor xi and t >= xi, then two necessary consequences of
/// the resulting envelope bound: (i) y(t) <= max{sigma(M, 0), sup u} + tol
/// everywhere, and (ii) over the final tenth of the interval,
/// sup y <= max{a(sup y), sup u} + tol. The full envelope conclusion is not
/// constructed; reports state that only consequences are checked. Requires a
/// below-identity a on probes (std::invalid_argument otherwise).
EnvelopeReport smallgain_envelope_check(const SampledSignal& y, const SampledSignal& u,
                                        const KLFunction& sigma, const ComparisonFunction& a,
                                        double M, double tol);

// ============================================================================
// Scenario generators
// ============================================================================

/// Paired trajectories for property tests.
struct EnvelopeScenario {
  SampledSignal y;
  SampledSignal u;
};

/// Random piecewise-constant input u plus a trajectory y built to satisfy the
/// premise of comparison_check by construction: y decays at rate rho(y)
/// whenever it sits at or above the local window minimum of u, and otherwise
/// rises with a capped slope that stops short of u by a guard band, so the
/// central differences at binding samples always see decay on both sides.
EnvelopeScenario make_comparison_scenario(const ComparisonFunction& rho, std::uint64_t seed);

/// Random piecewise-constant positive input u plus y riding the pointwise
/// envelope max{sigma(M, t - t0), u(t)} scaled by a random factor <= 1, which
/// satisfies the premise of smallgain_envelope_check for every anchor.
EnvelopeScenario make_smallgain_scenario(const KLFunction& sigma, double M, std::uint64_t seed);

}  // namespace sdlyap
