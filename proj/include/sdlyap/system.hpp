#pragma once

#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

#include "sdlyap/box.hpp"
#include "sdlyap/expr.hpp"

namespace sdlyap {

/// Compiled right-hand side of a sampled-data model. Slot layout:
/// [x(1..n), xs(1..n), d(1..l), v(1..m), vs(1..m)].
struct CompiledModel {
  VarLayout layout;
  std::vector<Program> f;
  std::vector<Program> H;
  Program h;
  bool h_constant = false;
  double h_value = 0.0;
  std::size_t n = 0, l = 0, m = 0, p = 0;
  std::size_t off_x = 0, off_xs = 0, off_d = 0, off_v = 0, off_vs = 0;

  std::size_t slot_count() const { return 2 * n + l + 2 * m; }
  void eval_f(const double* slots, double* out) const {
    for (std::size_t i = 0; i < f.size(); ++i) out[i] = f[i].run(slots);
  }
  void eval_H(const double* slots, double* out) const {
    for (std::size_t i = 0; i < H.size(); ++i) out[i] = H[i].run(slots);
  }
  double eval_h(const double* slots) const { return h_constant ? h_value : h.run(slots); }
};

/// Sampled-data system: dx/dt = f(x, x(tau_i), d(t), v(t), v(tau_i)) between
/// sampling instants, output y = H(x), state-dependent nominal period h(x)
/// bounded by r, disturbances in the box D, inputs in the box U.
struct SystemModel {
  std::size_t n = 0;  // state dimension
  std::size_t l = 0;  // disturbance dimension
  std::size_t m = 0;  // input dimension
  std::size_t p = 0;  // output dimension

  std::vector<Expression> f;  // over x[i], xs[i], d[i], v[i], vs[i]
  std::vector<Expression> H;  // over x[i]
  Expression h;               // over x[i]; constants allowed
  double r = 0.0;             // upper bound on h

  Box D;
  Box U;
  std::string name;

  /// Checks dimensions, variable scoping, r > 0, and samples 0 < h(x) <= r
  /// on a probe grid. Throws std::invalid_argument on violations.
  void validate() const;

  CompiledModel compile_model() const;
};

/// Open-loop plant dx/dt = f_open(x, u, d) with output H and a feedback law
/// k(x); the error channels control whether held measurement error and
/// continuous actuator error enter the emulated closed loop.
struct PlantModel {
  std::size_t n = 0, m = 0, l = 0, p = 0;
  std::vector<Expression> f_open;  // over x[i], u[i], d[i]
  std::vector<Expression> H;       // over x[i]
  std::vector<Expression> k;       // m components over x[i]
  bool measurement_error = true;
  bool actuator_error = true;
  Box D;
  Box U_act;  // actuator-error box (becomes the v-part of the closed-loop U)
  std::string name;

  void validate() const;
};

/// Compact verification region: a box with an optional excluded origin ball.
struct Region {
  Box box;
  double exclude_origin_radius = 0.0;

  void validate() const;
  /// Uniform grid, per_axis points per axis inclusive of endpoints, skipping
  /// points with |x|_2 < exclude_origin_radius.
  std::vector<std::vector<double>> grid(std::size_t per_axis) const;
};

/// Simulation record. Rows are stored at every accepted integrator step;
/// the first row of each sampling interval lies exactly at tau_i.
struct Trajectory {
  enum class Termination { Completed, BlowUp };

  std::vector<double> times;
  std::vector<std::vector<double>> states;
  std::vector<std::vector<double>> outputs;
  std::vector<std::size_t> interval_index;

  std::vector<double> sampling_instants;          // tau_0, tau_1, ...
  std::vector<std::vector<double>> held_states;   // x(tau_i)
  std::vector<std::vector<double>> held_inputs;   // v(tau_i)

  Termination termination = Termination::Completed;
  double termination_time = 0.0;

  std::size_t rows() const { return times.size(); }
  /// Header: t,x1..xn,y1..yp,interval_index
  void write_csv(std::ostream& os) const;
};

}  // namespace sdlyap
