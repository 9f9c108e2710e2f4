#pragma once

#include <string>
#include <vector>

#include "sdlyap/box.hpp"
#include "sdlyap/expr.hpp"
#include "sdlyap/rng.hpp"

namespace sdlyap {

/// Vector-valued input signal on t >= 0. Piecewise-constant signals are
/// right-continuous and hold their last value past the final breakpoint
/// (and their first value before the first breakpoint).
class Signal {
 public:
  enum class Kind { Constant, PiecewiseConstant, ExpressionOfT };

  Signal() = default;

  static Signal constant(std::vector<double> value);
  static Signal piecewise(std::vector<double> breakpoints,
                          std::vector<std::vector<double>> values);
  /// Component expressions over the single variable `t`.
  static Signal expression(std::vector<Expression> components);

  Kind kind() const { return kind_; }
  std::size_t dim() const { return dim_; }
  bool valid() const { return dim_ > 0; }

  std::vector<double> eval(double t) const;
  void eval_into(double t, double* out) const;

  /// Breakpoints where the value may jump (empty for constant/expression).
  const std::vector<double>& breakpoints() const { return breakpoints_; }

  /// Declared codomain box; derived from values when never set explicitly
  /// (expression signals derive the unbounded box).
  const Box& codomain() const { return codomain_; }
  void set_codomain(Box box);

  /// Time shift: result(t) = this(t + theta), theta >= 0.
  Signal shifted(double theta) const;

  std::string describe() const;

 private:
  Kind kind_ = Kind::Constant;
  std::size_t dim_ = 0;
  std::vector<double> constant_;
  std::vector<double> breakpoints_;
  std::vector<std::vector<double>> values_;
  std::vector<Expression> exprs_;
  std::vector<Program> programs_;
  Box codomain_;
};

/// Random piecewise-constant signal with the given dwell time. Values are
/// uniform in [-amplitude, amplitude]^dim (or [0, amplitude] when nonneg),
/// with probability `pin_prob` a component is pinned to the extreme so the
/// sup-norm is exercised.
Signal make_random_pwc(Rng& rng, std::size_t dim, double amplitude, double dwell,
                       double t_final, double pin_prob = 0.3, bool nonneg = false);

/// Random piecewise-constant signal with values in `box`; with probability
/// `corner_prob` a segment value is a box corner.
Signal make_random_pwc_box(Rng& rng, const Box& box, double dwell, double t_final,
                           double corner_prob = 0.5);

/// CLI mini-syntax:
///   const:0.5[,v2,...]
///   pwc:t0,v...;t1,v...;...
///   expr:sin(t)[;cos(t);...]
///   rand:pwc,amplitude=A,dwell=D      (defaults: amplitude=1, dwell=0.3)
/// `dim` fixes the expected dimension; `rand` draws from `rng` over
/// [0, t_final].
Signal parse_signal_spec(const std::string& spec, std::size_t dim, double t_final, Rng& rng);

}  // namespace sdlyap
