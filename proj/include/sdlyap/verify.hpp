#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "sdlyap/comparison.hpp"
#include "sdlyap/expr.hpp"
#include "sdlyap/system.hpp"

namespace sdlyap {

// ============================================================================
// Certificate data
// ============================================================================

/// Family of Lyapunov functions V_1..V_k together with the comparison
/// functions and auxiliary data the decrease/sandwich checks consume.
///
/// The decrease condition verified for member i at a point x reads
///   grad V_i(x) . f(x, x0, d, v, v0) <= -rho_i(V_i(x))
/// over d in D, inputs with zeta(max{|v|,|v0|}) <= V_i(x), and held states
/// x0 with |g_i(x0) - g_i(x)| <= r * b_i(x); the condition applies only at
/// points where a(max_j V_j(x)) <= V_i(x). With k = 1 and W supplied the
/// right-hand side is -W(x) instead.
struct LyapunovCertificate {
  std::size_t k = 0;
  std::vector<Expression> V;                   // one per member, over x
  std::vector<std::vector<Expression>> gradV;  // k x n; derived when empty
  std::vector<ComparisonFunction> rho;         // decrease rates, positive definite
  ComparisonFunction a;                        // history contraction, a(s) < s
  ComparisonFunction zeta;                     // input level map, class N
  ComparisonFunction a1, a2;                   // sandwich bounds, class K-infinity
  std::vector<Expression> g;                   // scalar auxiliary function per member
  std::vector<Expression> analytic_b;          // optional closed-form g-rate bound
  Expression W;                                // optional decrease target (k = 1 form)

  bool has_analytic_b(std::size_t member) const {
    return member < analytic_b.size() && !analytic_b[member].empty();
  }
  bool has_W() const { return !W.empty(); }

  /// Dimension/scoping checks plus comparison-class validation. Throws
  /// std::invalid_argument with the offending field.
  void validate(const SystemModel& model) const;
};

/// Sampling effort for one verification call. The seed fixes every random
/// draw; identical budgets give identical reports regardless of thread count.
struct SampleBudget {
  std::size_t grid_per_axis = 21;
  std::size_t mc_samples = 500;
  std::uint64_t seed = 1;

  void validate() const;
};

// ============================================================================
// Reports
// ============================================================================

/// Point and input values achieving the worst margin of a check.
struct Witness {
  std::vector<double> x;
  std::vector<double> x0;
  std::vector<double> d;
  std::vector<double> v;
  std::vector<double> v0;
};

/// Outcome of one falsification-based check. A failing report always carries
/// a witness with a negative margin; a passing report documents the budget
/// and the smallest margin seen, never a proof. Estimate-style checks (the
/// Lipschitz and growth envelopes) keep the maximizing point as witness.
struct VerificationReport {
  std::string condition;
  bool passed = true;
  double worst_margin = 0.0;
  std::optional<Witness> witness;
  std::size_t samples = 0;
  SampleBudget budget;
  std::string note;

  /// {condition, status, worst_margin, witness, samples, budget, note}
  std::string to_json(int indent = -1) const;
};

// ============================================================================
// Operations
// ============================================================================

/// Numeric estimate of the g-rate bound
///   b_i(x) = max |grad g_i(xi) . f(xi, x0, d, v, v0)|
/// over d in D, zeta(max{|v|,|v0|}) <= V_i(x), and (xi, x0) in the sublevel
/// set a(max_j V_j(.)) <= V_i(x). The sublevel set is sampled by rejection
/// inside the per-axis box of half-width a2^{-1}(a^{-1}(V_i(x))), seeded with
/// deterministic extreme probes (box corners, axis extremes, origin, x, input
/// ball extremes) so closed-form maxima at corners are recovered exactly.
struct BBoundResult {
  double value = 0.0;
  std::size_t accepted = 0;  // state pairs that entered the maximization
  std::string note;
};

BBoundResult b_bound(const LyapunovCertificate& cert, std::size_t member,
                     const std::vector<double>& x, const SystemModel& model,
                     const SampleBudget& budget);

/// Checks the per-member decrease condition over the region grid. One report
/// per member; margins are rhs - lhs, so any negative margin is a violation.
/// The held state x0 ranges over the slab |g_i(x0) - g_i(x)| <= r * b_i(x)
/// intersected with the sublevel sampling box; b_i comes from analytic_b when
/// supplied (cross-checked against the numeric estimate) and from b_bound
/// otherwise.
std::vector<VerificationReport> decrease_check(const LyapunovCertificate& cert,
                                               const SystemModel& model, const Region& region,
                                               double r, const SampleBudget& budget);

/// Checks a1(|H(x)|) <= max_i V_i(x) <= a2(|x|) on the region grid plus
/// mc_samples random interior points.
VerificationReport sandwich_check(const LyapunovCertificate& cert, const SystemModel& model,
                                  const Region& region, const SampleBudget& budget);

/// Optional candidate functions for the model-regularity checks.
struct HypothesisOptions {
  std::optional<ComparisonFunction> growth_bound;  // |f| <= bound(|x|+|x0|+|v|+|v0|)
  double output_offset = 0.0;                      // coercivity offset R
  std::optional<ComparisonFunction> output_gain;   // coercivity gain p (identity when absent)
  double input_probe_amplitude = 1.0;              // stands in for unbounded U axes
};

/// Model regularity checks:
///   one-sided-lipschitz  estimate of f in its first argument (reported,
///                        never failed: sampling only produces estimates);
///   growth               |f| <= bound(|x|+|x0|+|v|+|v0|), envelope-only
///                        when no candidate is given;
///   output-coercivity    |x| <= R + p(|H(x)|), p defaulting to identity;
///   period-range         0 < h(x) <= r on samples.
std::vector<VerificationReport> check_hypotheses(const SystemModel& model, const Region& region,
                                                 const SampleBudget& budget,
                                                 const HypothesisOptions& opts = {});

}  // namespace sdlyap
