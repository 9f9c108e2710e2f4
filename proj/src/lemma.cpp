#include "sdlyap/lemma.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <limits>
#include <map>
#include <memory>
#include <mutex>
#include <stdexcept>
#include <utility>

#include "sdlyap/rng.hpp"

namespace sdlyap {

namespace {

std::string fmt(double x) {
  char buf[64];
  auto res = std::to_chars(buf, buf + sizeof(buf), x);
  return std::string(buf, res.ptr);
}

constexpr double kInf = std::numeric_limits<double>::infinity();

// ============================================================================
// Flow integration
// ============================================================================

/// One fixed-step RK4 pass over [0, t] for dy/dt = -rho(y), floored at zero so
/// rates defined only for nonnegative arguments stay in range.
double flow_fixed(const ComparisonFunction& rho, double s, double t, long steps) {
  const double h = t / static_cast<double>(steps);
  double y = s;
  auto rate = [&rho](double v) { return -rho(std::max(v, 0.0)); };
  for (long i = 0; i < steps; ++i) {
    const double k1 = rate(y);
    const double k2 = rate(y + 0.5 * h * k1);
    const double k3 = rate(y + 0.5 * h * k2);
    const double k4 = rate(y + h * k3);
    y += (h / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4);
    if (y < 0.0) y = 0.0;
  }
  return y;
}

struct FlowMemo {
  std::mutex lock;
  std::map<std::pair<double, double>, double> table;
};

double round_to_1e12(double x) { return std::nearbyint(x * 1e12) * 1e-12; }

}  // namespace

// ============================================================================
// SampledSignal
// ============================================================================

void SampledSignal::validate() const {
  if (times.size() != values.size())
    throw std::invalid_argument("sampled signal: times and values differ in length");
  if (times.size() < 3)
    throw std::invalid_argument("sampled signal: need at least 3 samples");
  for (std::size_t i = 0; i < times.size(); ++i) {
    if (!std::isfinite(times[i]) || !std::isfinite(values[i]))
      throw std::invalid_argument("sampled signal: non-finite entry at index " +
                                  std::to_string(i));
    if (i > 0 && !(times[i] > times[i - 1]))
      throw std::invalid_argument("sampled signal: times must be strictly increasing");
  }
}

namespace {

void require_shared_grid(const SampledSignal& y, const SampledSignal& u) {
  y.validate();
  u.validate();
  if (y.times.size() != u.times.size())
    throw std::invalid_argument("signals must share one time grid");
  for (std::size_t i = 0; i < y.times.size(); ++i)
    if (std::abs(y.times[i] - u.times[i]) > 1e-12)
      throw std::invalid_argument("signals must share one time grid");
}

void require_tolerance(double tol) {
  if (!std::isfinite(tol) || tol < 0.0)
    throw std::invalid_argument("tol must be finite and nonnegative");
}

}  // namespace

// ============================================================================
// sigma_from_rho
// ============================================================================

KLFunction sigma_from_rho(const ComparisonFunction& rho) {
  if (!rho.valid()) throw std::invalid_argument("sigma_from_rho: empty rate function");
  if (!(std::abs(rho(0.0)) <= 1e-9))
    throw std::invalid_argument("sigma_from_rho: rho(0) must be zero");
  for (int i = 0; i <= 64; ++i) {
    const double s = std::pow(10.0, -9.0 + 12.0 * i / 64.0);
    const double v = rho(s);
    if (!(v >= 0.0))
      throw std::invalid_argument("sigma_from_rho: rho is negative at s = " + fmt(s));
  }

  auto memo = std::make_shared<FlowMemo>();
  ComparisonFunction rate = rho;
  auto eval = [memo, rate](double s, double t) -> double {
    if (!(s > 0.0)) return 0.0;
    if (t == 0.0) return s;
    const std::pair<double, double> key(round_to_1e12(s), round_to_1e12(t));
    {
      std::lock_guard<std::mutex> guard(memo->lock);
      auto it = memo->table.find(key);
      if (it != memo->table.end()) return it->second;
    }
    long steps = std::lround(std::clamp(std::ceil(t * 8.0), 4.0, 4096.0));
    double prev = flow_fixed(rate, s, t, steps);
    double out = prev;
    for (int pass = 0; pass < 14; ++pass) {
      steps *= 2;
      out = flow_fixed(rate, s, t, steps);
      if (std::abs(out - prev) <= 1e-10) break;
      prev = out;
    }
    std::lock_guard<std::mutex> guard(memo->lock);
    memo->table.emplace(key, out);
    return out;
  };
  return KLFunction::flow(std::move(eval), "flow of ds/dt = -(" + rho.describe() + ")");
}

// ============================================================================
// comparison_check
// ============================================================================

EnvelopeReport comparison_check(const SampledSignal& y, const SampledSignal& u,
                                const ComparisonFunction& rho, double tol) {
  require_shared_grid(y, u);
  require_tolerance(tol);
  if (!rho.valid()) throw std::invalid_argument("comparison_check: empty rate function");

  const auto& t = y.times;
  const std::size_t n = t.size();
  EnvelopeReport rep;

  // Premise: wherever y >= u, the centrally differenced slope may not exceed
  // -rho(y) + tol. Endpoints have no two-sided difference and are skipped.
  double worst_premise = kInf;
  double premise_time = t.front();
  for (std::size_t i = 1; i + 1 < n; ++i) {
    if (y.values[i] < u.values[i]) continue;
    const double slope = (y.values[i + 1] - y.values[i - 1]) / (t[i + 1] - t[i - 1]);
    const double margin = -rho(std::max(y.values[i], 0.0)) - slope;
    if (margin < worst_premise) {
      worst_premise = margin;
      premise_time = t[i];
    }
  }
  if (worst_premise < -tol) {
    rep.hypothesis_ok = false;
    rep.passed = false;
    rep.worst_margin = worst_premise;
    rep.witness_time = premise_time;
    rep.note = "hypothesis violated: sampled slope exceeds the decrease rate at t = " +
               fmt(premise_time) + "; conclusion not evaluated";
    return rep;
  }

  // Conclusion: y stays below the flowed initial condition or the flowed
  // running input envelope. Both are stepped forward one interval at a time;
  // order preservation of scalar flows makes the running max exact for the
  // ideal flow and within integration tolerance here.
  const KLFunction sigma = sigma_from_rho(rho);
  double flowed_start = y.values.front();
  double flowed_input = u.values.front();
  double worst = std::max(flowed_start, flowed_input) - y.values.front();
  double worst_time = t.front();
  for (std::size_t i = 1; i < n; ++i) {
    const double dt = t[i] - t[i - 1];
    flowed_start = sigma.value(flowed_start, dt);
    flowed_input = std::max(sigma.value(flowed_input, dt), u.values[i]);
    const double margin = std::max(flowed_start, flowed_input) - y.values[i];
    if (margin < worst) {
      worst = margin;
      worst_time = t[i];
    }
  }
  rep.hypothesis_ok = true;
  rep.worst_margin = worst;
  rep.witness_time = worst_time;
  rep.passed = worst >= -tol;
  rep.note = rep.passed ? "premise and envelope conclusion hold on the sample grid"
                        : "envelope conclusion violated at t = " + fmt(worst_time);
  return rep;
}

// ============================================================================
// smallgain_envelope_check
// ============================================================================

EnvelopeReport smallgain_envelope_check(const SampledSignal& y, const SampledSignal& u,
                                        const KLFunction& sigma, const ComparisonFunction& a,
                                        double M, double tol) {
  require_shared_grid(y, u);
  require_tolerance(tol);
  if (!sigma.valid())
    throw std::invalid_argument("smallgain_envelope_check: empty decay function");
  if (!a.valid()) throw std::invalid_argument("smallgain_envelope_check: empty gain");
  if (!std::isfinite(M) || M < 0.0)
    throw std::invalid_argument("smallgain_envelope_check: M must be finite and nonnegative");
  if (!(std::abs(a(0.0)) <= 1e-9))
    throw std::invalid_argument("smallgain_envelope_check: a(0) must be zero");
  for (int i = 0; i <= 48; ++i) {
    const double s = std::pow(10.0, -6.0 + 9.0 * i / 48.0);
    if (!(a(s) < s))
      throw std::invalid_argument(
          "smallgain_envelope_check: a must stay below the identity (fails at s = " +
          fmt(s) + ")");
  }

  const auto& t = y.times;
  const std::size_t n = t.size();
  EnvelopeReport rep;

  // Premise: from every grid anchor, y stays under the decayed level M, the
  // gain of its own running sup, or the current input.
  double worst_premise = kInf;
  std::size_t premise_i = 0, premise_j = 0;
  for (std::size_t j = 0; j < n; ++j) {
    double running_sup = 0.0;
    for (std::size_t i = j; i < n; ++i) {
      running_sup = std::max(running_sup, y.values[i]);
      const double bound =
          std::max({sigma.value(M, t[i] - t[j]), a(running_sup), u.values[i]});
      const double margin = bound - y.values[i];
      if (margin < worst_premise) {
        worst_premise = margin;
        premise_i = i;
        premise_j = j;
      }
    }
  }
  if (worst_premise < -tol) {
    rep.hypothesis_ok = false;
    rep.passed = false;
    rep.worst_margin = worst_premise;
    rep.witness_time = t[premise_i];
    rep.witness_anchor = t[premise_j];
    rep.note = "hypothesis violated for anchor xi = " + fmt(t[premise_j]) +
               " at t = " + fmt(t[premise_i]);
    return rep;
  }

  // Consequence (i): y never exceeds the undecayed level or the running
  // input sup.
  const double level0 = sigma.value(M, 0.0);
  double running_u = -kInf;
  double worst = kInf;
  double worst_time = t.front();
  for (std::size_t i = 0; i < n; ++i) {
    running_u = std::max(running_u, u.values[i]);
    const double margin = std::max(level0, running_u) - y.values[i];
    if (margin < worst) {
      worst = margin;
      worst_time = t[i];
    }
  }

  // Consequence (ii): over the final tenth of the interval the trajectory is
  // dominated by the gain of its own overall sup or by the input sup.
  const double tail_start = t.front() + 0.9 * (t.back() - t.front());
  double sup_y = -kInf, sup_u = -kInf, tail_sup = -kInf, tail_time = t.back();
  for (std::size_t i = 0; i < n; ++i) {
    sup_y = std::max(sup_y, y.values[i]);
    sup_u = std::max(sup_u, u.values[i]);
    if (t[i] >= tail_start && y.values[i] > tail_sup) {
      tail_sup = y.values[i];
      tail_time = t[i];
    }
  }
  const double tail_margin = std::max(a(std::max(sup_y, 0.0)), sup_u) - tail_sup;
  if (tail_margin < worst) {
    worst = tail_margin;
    worst_time = tail_time;
  }

  rep.hypothesis_ok = true;
  rep.worst_margin = worst;
  rep.witness_time = worst_time;
  rep.passed = worst >= -tol;
  rep.note = (rep.passed ? std::string("hypothesis and both consequences hold")
                         : "consequence violated at t = " + fmt(worst_time)) +
             "; only necessary consequences of the envelope conclusion are checked, no "
             "constructive decay envelope is built";
  return rep;
}

// ============================================================================
// Scenario generators
// ============================================================================

EnvelopeScenario make_comparison_scenario(const ComparisonFunction& rho, std::uint64_t seed) {
  if (!rho.valid())
    throw std::invalid_argument("make_comparison_scenario: empty rate function");
  Rng rng = Rng::split(seed, 0);

  constexpr std::size_t kSamples = 1001;
  constexpr double kHorizon = 10.0;
  constexpr double kRiseCap = 0.3;
  const double dt = kHorizon / static_cast<double>(kSamples - 1);
  // Wider than one sample's worth of decay for the rates and levels in play,
  // so a falling trajectory cannot cross the whole band within one interval.
  const double band = 0.08;

  EnvelopeScenario sc;
  sc.u.times.resize(kSamples);
  sc.u.values.resize(kSamples);
  for (std::size_t i = 0; i < kSamples; ++i) sc.u.times[i] = dt * static_cast<double>(i);
  sc.y.times = sc.u.times;

  // Piecewise-constant input with random dwell times and levels.
  double level = rng.uniform(0.0, 2.0);
  double next_jump = rng.uniform(0.5, 2.5);
  for (std::size_t i = 0; i < kSamples; ++i) {
    if (sc.u.times[i] >= next_jump) {
      level = rng.uniform(0.0, 2.0);
      next_jump += rng.uniform(0.5, 2.5);
    }
    sc.u.values[i] = level;
  }

  // y decays at the full rate whenever it sits at or above the minimum of the
  // input over the neighbouring samples and, once falling, keeps decaying
  // until it has passed a guard band below that minimum; otherwise it climbs
  // toward the band edge with a capped slope. The hysteresis keeps both
  // intervals around any sample with y >= u in pure decay, so the central
  // difference there never mixes in a climbing or frozen slope, and the
  // look-ahead in the window minimum starts the decay one interval before a
  // downward input jump can bind.
  sc.y.values.resize(kSamples);
  double y = rng.uniform(0.0, 2.0);
  sc.y.values[0] = y;
  constexpr int kSubsteps = 10;
  bool falling = true;
  for (std::size_t i = 0; i + 1 < kSamples; ++i) {
    const double lo = i > 0 ? sc.u.values[i - 1] : sc.u.values[i];
    const double window_min = std::min({lo, sc.u.values[i], sc.u.values[i + 1]});
    const double h = dt / kSubsteps;
    for (int k = 0; k < kSubsteps; ++k) {
      if (y >= window_min) {
        falling = true;
      } else if (y < window_min - band) {
        falling = false;
      }
      double slope;
      if (falling) {
        slope = -rho(std::max(y, 0.0));
      } else {
        slope = std::clamp((window_min - band - y) / (2.0 * dt), 0.0, kRiseCap);
      }
      y = std::max(y + h * slope, 0.0);
    }
    sc.y.values[i + 1] = y;
  }
  return sc;
}

EnvelopeScenario make_smallgain_scenario(const KLFunction& sigma, double M,
                                         std::uint64_t seed) {
  if (!sigma.valid())
    throw std::invalid_argument("make_smallgain_scenario: empty decay function");
  if (!std::isfinite(M) || M < 0.0)
    throw std::invalid_argument("make_smallgain_scenario: M must be finite and nonnegative");
  Rng rng = Rng::split(seed, 1);

  constexpr std::size_t kSamples = 201;
  constexpr double kHorizon = 20.0;
  const double dt = kHorizon / static_cast<double>(kSamples - 1);

  EnvelopeScenario sc;
  sc.u.times.resize(kSamples);
  sc.u.values.resize(kSamples);
  for (std::size_t i = 0; i < kSamples; ++i) sc.u.times[i] = dt * static_cast<double>(i);
  sc.y.times = sc.u.times;

  // Positive piecewise-constant input with a floor above the decayed level at
  // the tail, so the final tenth is input-dominated regardless of how slowly
  // sigma decays.
  const double floor_level =
      std::max(1e-3, 1.2 * sigma.value(M, 0.9 * kHorizon));
  const double ceil_level = std::max(2.0 * floor_level, 0.8 * std::max(M, 1.0));
  double level = rng.uniform(floor_level, ceil_level);
  double next_jump = rng.uniform(1.0, 4.0);
  for (std::size_t i = 0; i < kSamples; ++i) {
    if (sc.u.times[i] >= next_jump) {
      level = rng.uniform(floor_level, ceil_level);
      next_jump += rng.uniform(1.0, 4.0);
    }
    sc.u.values[i] = level;
  }

  // Riding the anchored envelope from the start keeps every later anchor
  // satisfied as well: the decay term only grows when the anchor moves
  // forward, and the input term is shared.
  const double damp = rng.uniform(0.7, 1.0);
  sc.y.values.resize(kSamples);
  for (std::size_t i = 0; i < kSamples; ++i) {
    const double envelope = std::max(sigma.value(M, sc.u.times[i]), sc.u.values[i]);
    sc.y.values[i] = damp * envelope;
  }
  return sc;
}

}  // namespace sdlyap
