#include "sdlyap/signal.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <sstream>
#include <stdexcept>

namespace sdlyap {

namespace {
const VarKey kTimeVar{"t", -1};

Box hull_of(const std::vector<std::vector<double>>& values) {
  Box box(values.front().size());
  for (std::size_t i = 0; i < box.size(); ++i) {
    box[i].lo = box[i].hi = values.front()[i];
    for (const auto& v : values) {
      box[i].lo = std::min(box[i].lo, v[i]);
      box[i].hi = std::max(box[i].hi, v[i]);
    }
  }
  return box;
}
}  // namespace

Signal Signal::constant(std::vector<double> value) {
  Signal s;
  s.kind_ = Kind::Constant;
  s.dim_ = value.size();
  s.codomain_.resize(s.dim_);
  for (std::size_t i = 0; i < s.dim_; ++i) s.codomain_[i] = {value[i], value[i]};
  s.constant_ = std::move(value);
  return s;
}

Signal Signal::piecewise(std::vector<double> breakpoints,
                         std::vector<std::vector<double>> values) {
  if (breakpoints.empty() || breakpoints.size() != values.size())
    throw std::invalid_argument("piecewise signal needs matching breakpoints and values");
  for (std::size_t i = 1; i < breakpoints.size(); ++i)
    if (!(breakpoints[i] > breakpoints[i - 1]))
      throw std::invalid_argument("piecewise signal breakpoints must be strictly increasing");
  const std::size_t dim = values.front().size();
  for (const auto& v : values)
    if (v.size() != dim) throw std::invalid_argument("piecewise signal values must share a dimension");
  Signal s;
  s.kind_ = Kind::PiecewiseConstant;
  s.dim_ = dim;
  s.codomain_ = hull_of(values);
  s.breakpoints_ = std::move(breakpoints);
  s.values_ = std::move(values);
  return s;
}

Signal Signal::expression(std::vector<Expression> components) {
  if (components.empty()) throw std::invalid_argument("expression signal needs components");
  Signal s;
  s.kind_ = Kind::ExpressionOfT;
  s.dim_ = components.size();
  VarLayout layout({kTimeVar});
  for (const auto& e : components) {
    for (const auto& v : e.free_vars())
      if (!(v == kTimeVar))
        throw EvalError("signal expression may only reference 't', got '" + v.str() + "'");
    s.programs_.push_back(compile(e, layout));
  }
  s.exprs_ = std::move(components);
  const double inf = std::numeric_limits<double>::infinity();
  s.codomain_.assign(s.dim_, Interval{-inf, inf});
  return s;
}

void Signal::eval_into(double t, double* out) const {
  switch (kind_) {
    case Kind::Constant:
      std::copy(constant_.begin(), constant_.end(), out);
      return;
    case Kind::PiecewiseConstant: {
      auto it = std::upper_bound(breakpoints_.begin(), breakpoints_.end(), t);
      std::size_t idx = it == breakpoints_.begin() ? 0 : static_cast<std::size_t>(it - breakpoints_.begin()) - 1;
      const auto& v = values_[idx];
      std::copy(v.begin(), v.end(), out);
      return;
    }
    case Kind::ExpressionOfT: {
      double slot = t;
      for (std::size_t i = 0; i < programs_.size(); ++i) out[i] = programs_[i].run(&slot);
      return;
    }
  }
}

std::vector<double> Signal::eval(double t) const {
  std::vector<double> out(dim_);
  eval_into(t, out.data());
  return out;
}

void Signal::set_codomain(Box box) {
  if (box.size() != dim_) throw std::invalid_argument("codomain dimension mismatch");
  codomain_ = std::move(box);
}

Signal Signal::shifted(double theta) const {
  if (theta < 0) throw std::invalid_argument("shift must be nonnegative");
  switch (kind_) {
    case Kind::Constant: return *this;
    case Kind::PiecewiseConstant: {
      std::vector<double> bp{0.0};
      std::vector<std::vector<double>> vals{eval(theta)};
      for (std::size_t i = 0; i < breakpoints_.size(); ++i)
        if (breakpoints_[i] > theta) {
          bp.push_back(breakpoints_[i] - theta);
          vals.push_back(values_[i]);
        }
      Signal s = piecewise(std::move(bp), std::move(vals));
      s.codomain_ = codomain_;
      return s;
    }
    case Kind::ExpressionOfT: {
      std::map<VarKey, Expression> sub{
          {kTimeVar, Expression::parse("t + " + std::to_string(theta))}};
      std::vector<Expression> shifted;
      shifted.reserve(exprs_.size());
      for (const auto& e : exprs_) shifted.push_back(e.substitute(sub));
      Signal s = expression(std::move(shifted));
      s.codomain_ = codomain_;
      return s;
    }
  }
  return *this;
}

std::string Signal::describe() const {
  std::ostringstream os;
  switch (kind_) {
    case Kind::Constant:
      os << "const:";
      for (std::size_t i = 0; i < constant_.size(); ++i) os << (i ? "," : "") << constant_[i];
      break;
    case Kind::PiecewiseConstant:
      os << "pwc[" << breakpoints_.size() << " segments]";
      break;
    case Kind::ExpressionOfT:
      os << "expr:";
      for (std::size_t i = 0; i < exprs_.size(); ++i) os << (i ? ";" : "") << exprs_[i].str();
      break;
  }
  return os.str();
}

Signal make_random_pwc(Rng& rng, std::size_t dim, double amplitude, double dwell,
                       double t_final, double pin_prob, bool nonneg) {
  std::vector<double> bp;
  std::vector<std::vector<double>> vals;
  for (double t = 0.0; t < t_final; t += dwell) {
    bp.push_back(t);
    std::vector<double> v(dim);
    for (auto& c : v) {
      if (rng.u01() < pin_prob) {
        c = nonneg ? amplitude : (rng.u01() < 0.5 ? -amplitude : amplitude);
      } else {
        c = nonneg ? rng.uniform(0.0, amplitude) : rng.uniform(-amplitude, amplitude);
      }
    }
    vals.push_back(std::move(v));
  }
  if (bp.empty()) return Signal::constant(std::vector<double>(dim, 0.0));
  Signal s = Signal::piecewise(std::move(bp), std::move(vals));
  Box box(dim, Interval{nonneg ? 0.0 : -amplitude, amplitude});
  s.set_codomain(std::move(box));
  return s;
}

Signal make_random_pwc_box(Rng& rng, const Box& box, double dwell, double t_final,
                           double corner_prob) {
  std::vector<double> bp;
  std::vector<std::vector<double>> vals;
  for (double t = 0.0; t < t_final; t += dwell) {
    bp.push_back(t);
    std::vector<double> v(box.size());
    bool corner = rng.u01() < corner_prob;
    for (std::size_t i = 0; i < box.size(); ++i)
      v[i] = corner ? (rng.u01() < 0.5 ? box[i].lo : box[i].hi)
                    : rng.uniform(box[i].lo, box[i].hi);
    vals.push_back(std::move(v));
  }
  if (bp.empty()) {
    std::vector<double> mid(box.size());
    for (std::size_t i = 0; i < box.size(); ++i) mid[i] = 0.5 * (box[i].lo + box[i].hi);
    return Signal::constant(std::move(mid));
  }
  Signal s = Signal::piecewise(std::move(bp), std::move(vals));
  s.set_codomain(box);
  return s;
}

namespace {

std::vector<std::string> split(const std::string& text, char sep) {
  std::vector<std::string> out;
  std::size_t start = 0;
  while (true) {
    std::size_t pos = text.find(sep, start);
    if (pos == std::string::npos) {
      out.push_back(text.substr(start));
      return out;
    }
    out.push_back(text.substr(start, pos - start));
    start = pos + 1;
  }
}

double parse_num(const std::string& s) {
  std::size_t used = 0;
  double v = std::stod(s, &used);
  if (used != s.size()) throw std::invalid_argument("malformed number '" + s + "'");
  return v;
}

}  // namespace

Signal parse_signal_spec(const std::string& spec, std::size_t dim, double t_final, Rng& rng) {
  auto colon = spec.find(':');
  if (colon == std::string::npos)
    throw std::invalid_argument("signal spec '" + spec + "' needs a kind prefix (const:/pwc:/expr:/rand:)");
  std::string kind = spec.substr(0, colon);
  std::string rest = spec.substr(colon + 1);
  if (kind == "const") {
    std::vector<double> v;
    for (const auto& part : split(rest, ',')) v.push_back(parse_num(part));
    if (v.size() != dim)
      throw std::invalid_argument("signal spec '" + spec + "' has dimension " +
                                  std::to_string(v.size()) + ", expected " + std::to_string(dim));
    return Signal::constant(std::move(v));
  }
  if (kind == "pwc") {
    std::vector<double> bp;
    std::vector<std::vector<double>> vals;
    for (const auto& seg : split(rest, ';')) {
      auto parts = split(seg, ',');
      if (parts.size() != dim + 1)
        throw std::invalid_argument("pwc segment '" + seg + "' needs time plus " +
                                    std::to_string(dim) + " value(s)");
      bp.push_back(parse_num(parts[0]));
      std::vector<double> v;
      for (std::size_t i = 1; i < parts.size(); ++i) v.push_back(parse_num(parts[i]));
      vals.push_back(std::move(v));
    }
    return Signal::piecewise(std::move(bp), std::move(vals));
  }
  if (kind == "expr") {
    std::vector<Expression> comps;
    for (const auto& part : split(rest, ';')) comps.push_back(Expression::parse(part));
    if (comps.size() != dim)
      throw std::invalid_argument("signal spec '" + spec + "' has dimension " +
                                  std::to_string(comps.size()) + ", expected " + std::to_string(dim));
    return Signal::expression(std::move(comps));
  }
  if (kind == "rand") {
    auto parts = split(rest, ',');
    if (parts.empty() || parts[0] != "pwc")
      throw std::invalid_argument("rand signal spec supports the 'pwc' shape only");
    double amplitude = 1.0, dwell = 0.3;
    for (std::size_t i = 1; i < parts.size(); ++i) {
      auto eq = parts[i].find('=');
      if (eq == std::string::npos)
        throw std::invalid_argument("rand option '" + parts[i] + "' must be key=value");
      std::string key = parts[i].substr(0, eq);
      double v = parse_num(parts[i].substr(eq + 1));
      if (key == "amplitude") amplitude = v;
      else if (key == "dwell") dwell = v;
      else throw std::invalid_argument("unknown rand option '" + key + "'");
    }
    if (!(dwell > 0)) throw std::invalid_argument("rand dwell must be positive");
    return make_random_pwc(rng, dim, amplitude, dwell, t_final);
  }
  throw std::invalid_argument("unknown signal kind '" + kind + "'");
}

}  // namespace sdlyap
