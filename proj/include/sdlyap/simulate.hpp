#pragma once

#include "sdlyap/signal.hpp"
#include "sdlyap/system.hpp"

namespace sdlyap {

struct IntegratorConfig {
  double max_step = 0.0;  // <= 0 selects min(r/50, 1e-2)
  double x_max = 1e8;     // blow-up threshold on |x|_2
  double t_final = 10.0;  // absolute end time
  double t0 = 0.0;        // start time
};

/// External inputs for a run. For l = 0 (or m = 0) the corresponding signal
/// may be left empty. dtilde is scalar, nonnegative, and sampled only at the
/// sampling instants.
struct InputSignals {
  Signal d;
  Signal v;
  Signal dtilde;
};

/// Integrates the hybrid execution:
///   tau_{i+1} = tau_i + exp(-dtilde(tau_i)) * h(x(tau_i))
///   dx/dt = f(x, x(tau_i), d(t), v(t), v(tau_i)) on [tau_i, tau_{i+1})
/// with classic RK4 at fixed step <= max_step, restarted at every sampling
/// instant and at every breakpoint of d and v. The state is continuous across
/// sampling instants; exceeding x_max (or a non-finite state) terminates the
/// run with a blow-up record.
Trajectory simulate(const SystemModel& model, const std::vector<double>& x0,
                    const InputSignals& inputs, const IntegratorConfig& cfg);

/// Closes the loop u = k(x(tau_i) + e(tau_i)) + v(t) around the plant,
/// symbolically, producing a sampled-data model of the standard form. The
/// held measurement error e occupies the trailing n held-input slots; the
/// actuator error v keeps the leading m slots.
SystemModel emulate_feedback(const PlantModel& plant, const Expression& h, double r);

struct TimeInvarianceReport {
  double max_deviation = 0.0;
  std::size_t compared_rows = 0;
};

/// Simulates once from t0 = theta and once from t0 = 0 with all inputs
/// time-shifted by theta, then compares states at matching rows.
TimeInvarianceReport check_time_invariance(const SystemModel& model,
                                           const std::vector<double>& x0,
                                           const InputSignals& inputs, double horizon,
                                           double theta, const IntegratorConfig& base_cfg = {});

}  // namespace sdlyap
