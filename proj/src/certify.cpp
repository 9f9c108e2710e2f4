#include "sdlyap/certify.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <limits>
#include <stdexcept>

#include <json.hpp>

#include "sdlyap/parallel.hpp"
#include "sdlyap/rng.hpp"

namespace sdlyap {

namespace {

std::string fmt(double x) {
  char buf[64];
  auto res = std::to_chars(buf, buf + sizeof(buf), x);
  return std::string(buf, res.ptr);
}

constexpr const char* kSampledOnly =
    "sampled check: runs can falsify the bound but never prove it for all inputs";

/// Certificate members compiled against the state layout for row-wise
/// evaluation along a trajectory.
struct CompiledLevels {
  VarLayout layout;
  std::vector<Program> members;

  explicit CompiledLevels(const LyapunovCertificate& cert, std::size_t n) {
    std::vector<VarKey> keys;
    keys.reserve(n);
    for (std::size_t i = 1; i <= n; ++i) keys.push_back({"x", static_cast<int>(i)});
    layout = VarLayout(std::move(keys));
    members.reserve(cert.V.size());
    for (const auto& vi : cert.V) members.push_back(compile(vi, layout));
  }

  double level(const std::vector<double>& x) const {
    double worst = -std::numeric_limits<double>::infinity();
    for (const auto& prog : members) worst = std::max(worst, prog.run(x.data()));
    return worst;
  }
};

}  // namespace

// ============================================================================
// envelope_check
// ============================================================================

std::string TrajectoryEnvelopeReport::to_json(int indent) const {
  nlohmann::ordered_json j;
  j["passed"] = passed;
  j["worst_margin"] = worst_margin;
  j["violation_time"] = violation_time;
  j["start_level"] = start_level;
  j["input_level"] = input_level;
  j["note"] = note;
  return j.dump(indent);
}

TrajectoryEnvelopeReport envelope_check(const Trajectory& traj, const LyapunovCertificate& cert,
                                        const SystemModel& model, const Signal& v, double tol) {
  model.validate();
  cert.validate(model);
  if (traj.termination != Trajectory::Termination::Completed)
    throw std::invalid_argument("envelope_check: trajectory did not complete (blow-up at t = " +
                                fmt(traj.termination_time) + ")");
  if (traj.rows() == 0) throw std::invalid_argument("envelope_check: empty trajectory");
  if (!std::isfinite(tol) || tol < 0.0)
    throw std::invalid_argument("envelope_check: tol must be finite and nonnegative");
  if (model.m > 0 && !v.valid())
    throw std::invalid_argument("envelope_check: v signal is required for this model");

  const CompiledLevels levels(cert, model.n);

  TrajectoryEnvelopeReport rep;
  rep.start_level = levels.level(traj.states.front());

  static const std::vector<double> kNoBreakpoints;
  const std::vector<double>& bps = v.valid() ? v.breakpoints() : kNoBreakpoints;
  std::size_t bp_next = 0;
  double input_sup = -std::numeric_limits<double>::infinity();
  auto fold_input = [&](double t) {
    if (!v.valid()) return;
    input_sup = std::max(input_sup, cert.zeta(norm2(v.eval(t))));
  };

  double worst = std::numeric_limits<double>::infinity();
  double worst_time = traj.times.front();
  for (std::size_t row = 0; row < traj.rows(); ++row) {
    const double t = traj.times[row];
    while (bp_next < bps.size() && bps[bp_next] <= t) fold_input(bps[bp_next++]);
    fold_input(t);
    const double bound = std::max(rep.start_level, input_sup);
    const double margin = bound - levels.level(traj.states[row]);
    if (margin < worst) {
      worst = margin;
      worst_time = t;
    }
  }

  rep.input_level = std::max(input_sup, 0.0);
  rep.worst_margin = worst;
  rep.violation_time = worst_time;
  rep.passed = worst >= -tol;
  rep.note = (rep.passed ? std::string("held-level envelope holds at every stored sample")
                         : "held-level envelope violated at t = " + fmt(worst_time)) +
             "; " + kSampledOnly;
  return rep;
}

// ============================================================================
// uiss_gain_check
// ============================================================================

std::string GainEstimate::to_csv() const {
  std::string out = "amplitude,tail_sup,gamma_bound\n";
  for (std::size_t i = 0; i < amplitudes.size(); ++i)
    out += fmt(amplitudes[i]) + "," + fmt(tail_sups[i]) + "," + fmt(gamma_bounds[i]) + "\n";
  return out;
}

std::string GainEstimate::to_json(int indent) const {
  nlohmann::ordered_json j;
  j["amplitudes"] = amplitudes;
  j["tail_sups"] = tail_sups;
  j["gamma_bounds"] = gamma_bounds;
  j["gamma"] = gamma.valid() ? gamma.describe() : "";
  j["fitted_K"] = fitted_K;
  j["monotone"] = monotone;
  j["passed"] = passed;
  if (failure) {
    nlohmann::ordered_json f;
    f["kind"] = failure->kind;
    f["amplitude"] = failure->amplitude;
    f["run_index"] = failure->run_index;
    f["x0"] = failure->x0;
    f["time"] = failure->time;
    f["value"] = failure->value;
    j["failure"] = f;
  } else {
    j["failure"] = nullptr;
  }
  j["note"] = note;
  return j.dump(indent);
}

GainEstimate uiss_gain_check(const SystemModel& model, const LyapunovCertificate& cert,
                             const std::vector<double>& amplitudes, const SampleBudget& budget,
                             double t_tail, double tol, double x0_amplitude) {
  model.validate();
  cert.validate(model);
  budget.validate();
  if (amplitudes.empty()) throw std::invalid_argument("uiss_gain_check: no amplitudes given");
  for (double a : amplitudes)
    if (!std::isfinite(a) || a < 0.0)
      throw std::invalid_argument("uiss_gain_check: amplitudes must be finite and nonnegative");
  if (!(t_tail > 0.0) || !std::isfinite(t_tail))
    throw std::invalid_argument("uiss_gain_check: t_tail must be positive");
  if (!std::isfinite(tol) || tol < 0.0)
    throw std::invalid_argument("uiss_gain_check: tol must be finite and nonnegative");
  if (!(x0_amplitude >= 0.0))
    throw std::invalid_argument("uiss_gain_check: x0_amplitude must be nonnegative");

  GainEstimate est;
  est.gamma = compose_gain(cert.a1, cert.zeta);
  est.amplitudes = amplitudes;
  est.tail_sups.assign(amplitudes.size(), 0.0);
  est.gamma_bounds.resize(amplitudes.size());
  for (std::size_t i = 0; i < amplitudes.size(); ++i)
    est.gamma_bounds[i] = est.gamma(amplitudes[i]);

  IntegratorConfig cfg;
  cfg.t_final = 1.5 * t_tail;
  const std::size_t runs = budget.mc_samples;
  const double schedule_amp[3] = {0.0, 1.0, 3.0};

  struct RunOutcome {
    double tail_sup = 0.0;
    std::optional<GainRunFailure> failure;
  };

  est.passed = true;
  for (std::size_t ai = 0; ai < amplitudes.size(); ++ai) {
    const double amp = amplitudes[ai];
    std::vector<RunOutcome> outcomes(runs);
    parallel_for(runs, [&](std::size_t run) {
      Rng rng = Rng::split(budget.seed, run);
      std::vector<double> x0(model.n);
      for (auto& c : x0) c = rng.uniform(-x0_amplitude, x0_amplitude);

      InputSignals inputs;
      if (model.l > 0) inputs.d = make_random_pwc_box(rng, model.D, 0.5, cfg.t_final);
      inputs.dtilde =
          make_random_pwc(rng, 1, schedule_amp[run % 3], 0.7, cfg.t_final, 0.3, true);
      if (model.m > 0) inputs.v = make_random_pwc(rng, model.m, amp, 0.6, cfg.t_final, 0.5);

      const Trajectory traj = simulate(model, x0, inputs, cfg);
      RunOutcome& out = outcomes[run];
      if (traj.termination != Trajectory::Termination::Completed) {
        out.failure = GainRunFailure{amp,  run, x0, traj.termination_time,
                                     0.0, "blow-up"};
        return;
      }
      double sup = 0.0, sup_time = t_tail;
      for (std::size_t row = 0; row < traj.rows(); ++row) {
        if (traj.times[row] < t_tail) continue;
        const double w = norm2(traj.outputs[row]);
        if (w > sup) {
          sup = w;
          sup_time = traj.times[row];
        }
      }
      out.tail_sup = sup;
      if (sup > est.gamma_bounds[ai] + tol)
        out.failure = GainRunFailure{amp, run, x0, sup_time, sup, "tail bound exceeded"};
    });
    for (std::size_t run = 0; run < runs; ++run) {
      est.tail_sups[ai] = std::max(est.tail_sups[ai], outcomes[run].tail_sup);
      if (outcomes[run].failure && !est.failure) {
        est.failure = outcomes[run].failure;
        est.passed = false;
      }
    }
  }

  // Monotonicity of the ultimate bounds over the probe set, in amplitude
  // order regardless of how the caller listed them.
  std::vector<std::size_t> order(amplitudes.size());
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
  std::sort(order.begin(), order.end(),
            [&](std::size_t a, std::size_t b) { return amplitudes[a] < amplitudes[b]; });
  for (std::size_t i = 1; i < order.size(); ++i)
    if (est.tail_sups[order[i]] < est.tail_sups[order[i - 1]] - 1e-12) est.monotone = false;

  double num = 0.0, den = 0.0;
  for (std::size_t i = 0; i < amplitudes.size(); ++i) {
    if (amplitudes[i] <= 0.0) continue;
    num += amplitudes[i] * est.tail_sups[i];
    den += amplitudes[i] * amplitudes[i];
  }
  est.fitted_K = den > 0.0 ? num / den : 0.0;

  est.note = (est.passed ? std::string("tail bounds hold for every run")
                         : "certification failure: " + est.failure->kind + " in run " +
                               std::to_string(est.failure->run_index) + " at amplitude " +
                               fmt(est.failure->amplitude)) +
             " (" + std::to_string(runs) + " runs per amplitude); " + kSampledOnly;
  return est;
}

// ============================================================================
// kl_fit
// ============================================================================

std::string KLFitResult::to_json(int indent) const {
  nlohmann::ordered_json j;
  j["C"] = C;
  j["lambda"] = lambda;
  j["inflation"] = inflation;
  j["coverage"] = coverage;
  j["used"] = used;
  j["excluded"] = excluded;
  j["samples"] = samples;
  j["sigma"] = sigma.valid() ? sigma.describe() : "";
  j["note"] = note;
  return j.dump(indent);
}

KLFitResult kl_fit(const std::vector<Trajectory>& trajectories) {
  KLFitResult res;

  // Pooled regression samples: z = log(envelope / |x0|) against time.
  std::vector<double> ts, zs;
  std::vector<const Trajectory*> usable;
  for (const auto& traj : trajectories) {
    if (traj.termination != Trajectory::Termination::Completed || traj.rows() == 0) {
      ++res.excluded;
      continue;
    }
    const double s0 = norm2(traj.states.front());
    if (s0 <= 1e-12) {
      ++res.excluded;
      continue;
    }
    usable.push_back(&traj);
    std::vector<double> env(traj.rows());
    double running = 0.0;
    for (std::size_t row = traj.rows(); row-- > 0;) {
      running = std::max(running, norm2(traj.outputs[row]));
      env[row] = running;
    }
    for (std::size_t row = 0; row < traj.rows(); ++row) {
      if (env[row] <= 0.0) break;
      ts.push_back(traj.times[row] - traj.times.front());
      zs.push_back(std::log(env[row] / s0));
    }
  }
  res.used = usable.size();
  res.samples = ts.size();
  if (res.used < 3)
    throw std::invalid_argument(
        "kl_fit: insufficient data, need at least 3 completed trajectories with nonzero start "
        "(got " +
        std::to_string(res.used) + ")");

  double st = 0.0, sz = 0.0, stt = 0.0, stz = 0.0;
  const double count = static_cast<double>(ts.size());
  for (std::size_t i = 0; i < ts.size(); ++i) {
    st += ts[i];
    sz += zs[i];
    stt += ts[i] * ts[i];
    stz += ts[i] * zs[i];
  }
  const double denom = count * stt - st * st;
  if (std::abs(denom) <= 1e-30)
    throw std::invalid_argument("kl_fit: degenerate time grid, cannot fit a decay rate");
  const double slope = (count * stz - st * sz) / denom;
  const double intercept = (sz - slope * st) / count;
  res.lambda = -slope;
  res.C = std::exp(intercept);

  // Inflation covers every raw sample, not just the fitted envelopes.
  std::size_t covered = 0, total = 0;
  double worst_ratio = 0.0;
  for (const Trajectory* traj : usable) {
    const double s0 = norm2(traj->states.front());
    for (std::size_t row = 0; row < traj->rows(); ++row) {
      const double t = traj->times[row] - traj->times.front();
      const double w = norm2(traj->outputs[row]);
      const double bound = res.C * s0 * std::exp(-res.lambda * t);
      ++total;
      if (w <= bound + 1e-12) ++covered;
      if (bound > 0.0) worst_ratio = std::max(worst_ratio, w / bound);
    }
  }
  res.coverage = total > 0 ? static_cast<double>(covered) / static_cast<double>(total) : 0.0;
  res.inflation = std::max(worst_ratio, 1.0);
  res.sigma = KLFunction::fitted_exponential(res.C * res.inflation, res.lambda);
  res.note = "exponential fit is diagnostic only, the true decay need not be exponential; " +
             std::string(kSampledOnly);
  return res;
}

double kl_coverage(const KLFunction& sigma, const std::vector<Trajectory>& trajectories) {
  if (!sigma.valid()) throw std::invalid_argument("kl_coverage: empty decay function");
  std::size_t covered = 0, total = 0;
  for (const auto& traj : trajectories) {
    if (traj.rows() == 0) continue;
    const double s0 = norm2(traj.states.front());
    for (std::size_t row = 0; row < traj.rows(); ++row) {
      const double t = traj.times[row] - traj.times.front();
      ++total;
      if (norm2(traj.outputs[row]) <= sigma.value(s0, t) + 1e-12) ++covered;
    }
  }
  return total > 0 ? static_cast<double>(covered) / static_cast<double>(total) : 1.0;
}

}  // namespace sdlyap
