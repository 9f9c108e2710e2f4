#include "sdlyap/simulate.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <stdexcept>

namespace sdlyap {

namespace {

bool all_finite(const std::vector<double>& x) {
  for (double v : x)
    if (!std::isfinite(v)) return false;
  return true;
}

void require_codomain(const Signal& sig, const Box& box, const char* what) {
  if (!sig.valid()) {
    if (!box.empty()) throw std::invalid_argument(std::string(what) + " signal is required");
    return;
  }
  if (sig.dim() != box.size())
    throw std::invalid_argument(std::string(what) + " signal dimension mismatch");
  if (!box_subset(sig.codomain(), box, 1e-12))
    throw std::invalid_argument(std::string(what) +
                                " signal codomain is not inside the declared box");
}

// One RK4 step of length dt starting at time t. Held slots are already
// populated; only the x block and (for expression signals) the d/v blocks
// change between stages.
void rk4_step(const CompiledModel& cm, const Signal& d, const Signal& v, bool d_varies,
              bool v_varies, double t, double dt, std::vector<double>& slots,
              std::vector<double>& x, std::vector<std::vector<double>>& work) {
  const std::size_t n = cm.n;
  auto& k1 = work[0];
  auto& k2 = work[1];
  auto& k3 = work[2];
  auto& k4 = work[3];
  auto& xt = work[4];

  auto load_stage = [&](double stage_t) {
    if (d_varies) d.eval_into(stage_t, slots.data() + cm.off_d);
    if (v_varies) v.eval_into(stage_t, slots.data() + cm.off_v);
  };

  std::copy(x.begin(), x.end(), slots.begin() + cm.off_x);
  load_stage(t);
  cm.eval_f(slots.data(), k1.data());

  for (std::size_t i = 0; i < n; ++i) xt[i] = x[i] + 0.5 * dt * k1[i];
  std::copy(xt.begin(), xt.end(), slots.begin() + cm.off_x);
  load_stage(t + 0.5 * dt);
  cm.eval_f(slots.data(), k2.data());

  for (std::size_t i = 0; i < n; ++i) xt[i] = x[i] + 0.5 * dt * k2[i];
  std::copy(xt.begin(), xt.end(), slots.begin() + cm.off_x);
  cm.eval_f(slots.data(), k3.data());

  for (std::size_t i = 0; i < n; ++i) xt[i] = x[i] + dt * k3[i];
  std::copy(xt.begin(), xt.end(), slots.begin() + cm.off_x);
  load_stage(t + dt);
  cm.eval_f(slots.data(), k4.data());

  for (std::size_t i = 0; i < n; ++i)
    x[i] += dt / 6.0 * (k1[i] + 2.0 * k2[i] + 2.0 * k3[i] + k4[i]);
}

}  // namespace

Trajectory simulate(const SystemModel& model, const std::vector<double>& x0,
                    const InputSignals& inputs, const IntegratorConfig& cfg) {
  model.validate();
  if (x0.size() != model.n) throw std::invalid_argument("x0 dimension mismatch");
  require_codomain(inputs.d, model.D, "d");
  require_codomain(inputs.v, model.U, "v");
  if (inputs.dtilde.valid()) {
    if (inputs.dtilde.dim() != 1) throw std::invalid_argument("dtilde must be scalar");
    if (inputs.dtilde.codomain()[0].lo < 0)
      throw std::invalid_argument("dtilde must be nonnegative");
  }
  if (!(cfg.t_final > cfg.t0)) throw std::invalid_argument("t_final must exceed t0");

  const CompiledModel cm = model.compile_model();
  const double max_step = cfg.max_step > 0 ? cfg.max_step : std::min(model.r / 50.0, 1e-2);

  const bool d_expr = inputs.d.valid() && inputs.d.kind() == Signal::Kind::ExpressionOfT;
  const bool v_expr = inputs.v.valid() && inputs.v.kind() == Signal::Kind::ExpressionOfT;

  // Merged, sorted breakpoints of d and v (restart points inside intervals).
  std::vector<double> restarts;
  if (inputs.d.valid())
    restarts.insert(restarts.end(), inputs.d.breakpoints().begin(), inputs.d.breakpoints().end());
  if (inputs.v.valid())
    restarts.insert(restarts.end(), inputs.v.breakpoints().begin(), inputs.v.breakpoints().end());
  std::sort(restarts.begin(), restarts.end());
  restarts.erase(std::unique(restarts.begin(), restarts.end()), restarts.end());

  std::vector<double> slots(cm.slot_count(), 0.0);
  std::vector<std::vector<double>> work(5, std::vector<double>(model.n));
  std::vector<double> x = x0;
  std::vector<double> y(model.p);

  Trajectory traj;
  auto push_row = [&](double t, std::size_t interval) {
    std::copy(x.begin(), x.end(), slots.begin() + cm.off_x);
    cm.eval_H(slots.data(), y.data());
    traj.times.push_back(t);
    traj.states.push_back(x);
    traj.outputs.push_back(y);
    traj.interval_index.push_back(interval);
  };

  double t = cfg.t0;
  std::size_t interval = 0;
  push_row(t, interval);

  while (t < cfg.t_final) {
    // Step 1: schedule the next sampling instant from the current sample.
    const double tau_i = t;
    traj.sampling_instants.push_back(tau_i);
    traj.held_states.push_back(x);
    std::vector<double> v_held(model.m, 0.0);
    if (inputs.v.valid()) inputs.v.eval_into(tau_i, v_held.data());
    traj.held_inputs.push_back(v_held);

    std::copy(x.begin(), x.end(), slots.begin() + cm.off_xs);
    std::copy(v_held.begin(), v_held.end(), slots.begin() + cm.off_vs);
    std::copy(x.begin(), x.end(), slots.begin() + cm.off_x);
    const double h_val = cm.eval_h(slots.data());
    if (!(h_val > 0) || h_val > model.r * (1.0 + 1e-12))
      throw std::runtime_error("h(x) left (0, r] during simulation");
    double dtilde_val = 0.0;
    if (inputs.dtilde.valid()) dtilde_val = inputs.dtilde.eval(tau_i)[0];
    if (dtilde_val < 0) throw std::runtime_error("dtilde went negative during simulation");
    const double period = std::exp(-dtilde_val) * h_val;
    const double tau_next = tau_i + period;
    const double t_end = std::min(tau_next, cfg.t_final);
    if (!(t_end > tau_i)) throw std::runtime_error("sampling period underflowed to zero");

    // Step 2: integrate the held dynamics, restarting at input breakpoints.
    std::vector<double> cuts{tau_i};
    for (double b : restarts)
      if (b > tau_i && b < t_end) cuts.push_back(b);
    cuts.push_back(t_end);

    for (std::size_t c = 0; c + 1 < cuts.size() && traj.termination == Trajectory::Termination::Completed; ++c) {
      const double a = cuts[c], b = cuts[c + 1];
      const double len = b - a;
      if (!(len > 0)) continue;
      const std::size_t steps = std::max<std::size_t>(1, static_cast<std::size_t>(std::ceil(len / max_step - 1e-12)));
      const double dt = len / static_cast<double>(steps);
      // Piecewise-constant inputs are frozen per smooth piece (their value at
      // the piece midpoint); expression inputs are evaluated per RK stage.
      if (inputs.d.valid() && !d_expr) inputs.d.eval_into(0.5 * (a + b), slots.data() + cm.off_d);
      if (inputs.v.valid() && !v_expr) inputs.v.eval_into(0.5 * (a + b), slots.data() + cm.off_v);
      for (std::size_t k = 0; k < steps; ++k) {
        const double t_step = a + dt * static_cast<double>(k);
        rk4_step(cm, inputs.d, inputs.v, d_expr, v_expr, t_step, dt, slots, x, work);
        const double t_next = k + 1 == steps ? b : a + dt * static_cast<double>(k + 1);
        if (!all_finite(x) || norm2(x) > cfg.x_max) {
          traj.termination = Trajectory::Termination::BlowUp;
          traj.termination_time = t_next;
          push_row(t_next, interval);
          break;
        }
        // Step 3: the state at a sampling instant is the left limit; the row
        // there opens the next interval.
        const bool opens_next = t_next == tau_next && tau_next < cfg.t_final;
        push_row(t_next, opens_next ? interval + 1 : interval);
        t = t_next;
      }
    }
    if (traj.termination == Trajectory::Termination::BlowUp) return traj;
    if (t >= cfg.t_final) break;
    ++interval;
  }
  traj.termination = Trajectory::Termination::Completed;
  traj.termination_time = t;
  return traj;
}

SystemModel emulate_feedback(const PlantModel& plant, const Expression& h, double r) {
  plant.validate();
  const std::size_t n = plant.n, m = plant.m;

  // k evaluated at the held (and possibly corrupted) sample: x -> xs + e_held.
  std::map<VarKey, Expression> sample_map;
  for (std::size_t i = 1; i <= n; ++i) {
    VarKey xi{"x", static_cast<int>(i)};
    VarKey xsi{"xs", static_cast<int>(i)};
    if (plant.measurement_error) {
      VarKey ei{"vs", static_cast<int>(m + i)};
      sample_map.emplace(xi, Expression::parse(xsi.str() + " + " + ei.str()));
    } else {
      sample_map.emplace(xi, Expression::parse(xsi.str()));
    }
  }

  std::map<VarKey, Expression> input_map;
  for (std::size_t j = 1; j <= m; ++j) {
    Expression kj = plant.k[j - 1].substitute(sample_map);
    if (plant.actuator_error) {
      auto sum = std::make_shared<ExprNode>();
      sum->kind = NodeKind::Add;
      sum->kids = {kj.root(), Expression::parse("v[" + std::to_string(j) + "]").root()};
      kj = Expression(sum);
    }
    input_map.emplace(VarKey{"u", static_cast<int>(j)}, kj);
  }

  SystemModel closed;
  closed.n = n;
  closed.l = plant.l;
  closed.p = plant.p;
  closed.m = m + (plant.measurement_error ? n : 0);
  for (const auto& fi : plant.f_open) closed.f.push_back(fi.substitute(input_map));
  closed.H = plant.H;
  closed.h = h;
  closed.r = r;
  closed.D = plant.D;
  closed.U = plant.U_act;
  if (!plant.actuator_error)
    for (auto& iv : closed.U) iv = {0.0, 0.0};
  if (plant.measurement_error) {
    const double inf = std::numeric_limits<double>::infinity();
    for (std::size_t i = 0; i < n; ++i) closed.U.push_back({-inf, inf});
  }
  closed.name = plant.name.empty() ? "closed-loop" : plant.name + "+feedback";
  closed.validate();
  return closed;
}

TimeInvarianceReport check_time_invariance(const SystemModel& model,
                                           const std::vector<double>& x0,
                                           const InputSignals& inputs, double horizon,
                                           double theta, const IntegratorConfig& base_cfg) {
  if (theta < 0) throw std::invalid_argument("theta must be nonnegative");
  IntegratorConfig cfg1 = base_cfg;
  cfg1.t0 = theta;
  cfg1.t_final = theta + horizon;
  Trajectory run1 = simulate(model, x0, inputs, cfg1);

  InputSignals shifted;
  if (inputs.d.valid()) shifted.d = inputs.d.shifted(theta);
  if (inputs.v.valid()) shifted.v = inputs.v.shifted(theta);
  if (inputs.dtilde.valid()) shifted.dtilde = inputs.dtilde.shifted(theta);
  IntegratorConfig cfg2 = base_cfg;
  cfg2.t0 = 0.0;
  cfg2.t_final = horizon;
  Trajectory run2 = simulate(model, x0, shifted, cfg2);

  TimeInvarianceReport rep;
  rep.compared_rows = std::min(run1.rows(), run2.rows());
  if (run1.rows() != run2.rows())
    rep.max_deviation = std::numeric_limits<double>::infinity();
  for (std::size_t row = 0; row < rep.compared_rows; ++row)
    for (std::size_t i = 0; i < model.n; ++i)
      rep.max_deviation =
          std::max(rep.max_deviation, std::fabs(run1.states[row][i] - run2.states[row][i]));
  return rep;
}

}  // namespace sdlyap
