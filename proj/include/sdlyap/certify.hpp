#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "sdlyap/comparison.hpp"
#include "sdlyap/simulate.hpp"
#include "sdlyap/verify.hpp"

namespace sdlyap {

// ============================================================================
// Trajectory-level envelope check
// ============================================================================

/// Margin report for one completed trajectory against the held-level bound
///   max_i V_i(x(t)) <= max{ V(0), sup_{0<=s<=t} zeta(|v(s)|) } + tol.
/// Margins are bound - V before tol, so any margin below -tol is a violation.
struct TrajectoryEnvelopeReport {
  bool passed = false;
  double worst_margin = 0.0;
  double violation_time = 0.0;  // sample time of the worst margin
  double start_level = 0.0;     // V at the first stored sample
  double input_level = 0.0;     // sup zeta(|v|) over the whole run
  std::string note;

  std::string to_json(int indent = -1) const;
};

/// Walks the stored samples of a completed trajectory; v must be the input
/// signal the run was produced with (its breakpoints are folded into the
/// running sup). Throws std::invalid_argument on a blown-up trajectory.
TrajectoryEnvelopeReport envelope_check(const Trajectory& traj, const LyapunovCertificate& cert,
                                        const SystemModel& model, const Signal& v,
                                        double tol = 1e-6);

// ============================================================================
// Sampled input-to-output gain certification
// ============================================================================

/// Inputs of the first failing run (blow-up or tail bound exceeded).
struct GainRunFailure {
  double amplitude = 0.0;
  std::size_t run_index = 0;
  std::vector<double> x0;
  double time = 0.0;
  double value = 0.0;  // offending output norm (0 for a blow-up)
  std::string kind;    // "blow-up" | "tail bound exceeded"
};

/// Per-amplitude ultimate output bounds versus the declared gain, plus a
/// fitted linear gain for comparison against the theory.
struct GainEstimate {
  std::vector<double> amplitudes;
  std::vector<double> tail_sups;     // max over runs of the tail output sup
  std::vector<double> gamma_bounds;  // gamma(amplitude)
  ComparisonFunction gamma;          // declared gain a1^{-1}(zeta(s))
  double fitted_K = 0.0;             // least-squares slope through the origin
  bool monotone = true;              // tail sups nondecreasing in amplitude
  bool passed = false;
  std::optional<GainRunFailure> failure;
  std::string note;

  /// Rows of amplitude,tail_sup,gamma_bound with a header line.
  std::string to_csv() const;
  std::string to_json(int indent = -1) const;
};

/// For each amplitude, runs budget.mc_samples simulations with a seeded
/// random piecewise-constant input of that sup-norm, disturbances drawn from
/// the model's box, schedule perturbations cycling through amplitudes
/// {0, 1, 3}, and starts in [-x0_amplitude, x0_amplitude]^n. Each run's
/// output norm over the tail window [t_tail, 1.5 * t_tail] must stay within
/// gamma(amplitude) + tol. Run inputs are identical across amplitudes except
/// for the input scale, so the per-amplitude bounds are comparable.
GainEstimate uiss_gain_check(const SystemModel& model, const LyapunovCertificate& cert,
                             const std::vector<double>& amplitudes, const SampleBudget& budget,
                             double t_tail = 20.0, double tol = 1e-3,
                             double x0_amplitude = 2.0);

// ============================================================================
// Exponential decay fit
// ============================================================================

/// Least-squares fit of C * s * e^(-lambda t) to the decaying output
/// envelopes of input-free runs. Diagnostic only: the true decay need not be
/// exponential.
struct KLFitResult {
  KLFunction sigma;        // inflated bound C * inflation * s * e^(-lambda t)
  double C = 0.0;          // raw least-squares coefficient
  double lambda = 0.0;
  double inflation = 1.0;  // worst raw-sample ratio against the raw fit
  double coverage = 0.0;   // fraction of samples under the raw fit
  std::size_t used = 0;      // trajectories entering the fit
  std::size_t excluded = 0;  // zero-start or blown-up trajectories dropped
  std::size_t samples = 0;
  std::string note;

  std::string to_json(int indent = -1) const;
};

/// Fits on the reverse running max of the output norm of each trajectory,
/// excluding zero starts; requires at least 3 usable trajectories
/// (std::invalid_argument otherwise).
KLFitResult kl_fit(const std::vector<Trajectory>& trajectories);

/// Fraction of stored samples with |H(x(t))| <= sigma(|x(0)|, t - t0) + 1e-12.
double kl_coverage(const KLFunction& sigma, const std::vector<Trajectory>& trajectories);

}  // namespace sdlyap
