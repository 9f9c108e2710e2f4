#include "sdlyap/masp.hpp"

#include <algorithm>
#include <array>
#include <charconv>
#include <cmath>
#include <stdexcept>

#include <json.hpp>

namespace sdlyap {

namespace {

std::string fmt(double v) {
  std::array<char, 32> buf;
  auto res = std::to_chars(buf.data(), buf.data() + buf.size(), v);
  return std::string(buf.data(), res.ptr);
}

/// Assembles a result from a strict bound (supremum not admissible) and a
/// closed bound (attained); the smaller one wins and sets the endpoint flag.
MASPResult from_bounds(double strict_bound, double closed_bound, std::string method) {
  MASPResult res;
  res.method = std::move(method);
  res.open_endpoint = strict_bound <= closed_bound;
  res.r_star = std::min(strict_bound, closed_bound);
  res.note = res.open_endpoint ? "binding constraint is strict; admissible radii stay below r_star"
                               : "r_star itself is admissible";
  return res;
}

}  // namespace

std::string MASPResult::to_json(int indent) const {
  nlohmann::ordered_json j;
  j["r_star"] = r_star;
  j["method"] = method;
  j["open_endpoint"] = open_endpoint;
  j["margins"] = margins;
  if (method == "bisection")
    j["bracket"] = {bracket_lo, bracket_hi};
  else
    j["bracket"] = nullptr;
  j["feasible"] = feasible;
  if (verifier_calls > 0) j["verifier_calls"] = verifier_calls;
  if (!monotone) j["monotone"] = false;
  if (!note.empty()) j["note"] = note;
  return j.dump(indent);
}

MASPResult masp_example41_single(double c, double delta) {
  if (!(c > 1.0)) throw std::invalid_argument("masp_example41_single: c must exceed 1");
  if (!(delta >= 0.0)) throw std::invalid_argument("masp_example41_single: delta must be >= 0");
  if (delta == 0.0) {
    MASPResult res;
    res.method = "closed-form-single";
    res.feasible = false;
    res.r_star = 0.0;
    res.note = "infeasible: the held-state constraint scales with delta and forces r = 0";
    return res;
  }
  const double strict_bound = 7.0 / (40.0 * c * c + 8.0);
  const double closed_bound = std::min(1.0 / 11.0, delta / 5.0) / (c * c * c);
  return from_bounds(strict_bound, closed_bound, "closed-form-single");
}

MASPResult masp_example41_vector(double c) {
  if (!(c > 1.0 && c < 2.0))
    throw std::invalid_argument("masp_example41_vector: c must lie in (1, 2)");
  const double strict_bound = 1.0 / (5.0 * c * c + 2.0);
  const double closed_bound = 1.0 / (6.0 * c * c * c);
  return from_bounds(strict_bound, closed_bound, "closed-form-vector");
}

MASPResult masp_bisection(const LyapunovCertificate& cert, const SystemModel& model,
                          const Region& region, const SampleBudget& budget, double r_lo,
                          double r_hi, double tol, std::size_t scan_points) {
  if (!(r_lo >= 0.0) || !(r_hi > r_lo))
    throw std::invalid_argument("masp_bisection: need 0 <= r_lo < r_hi");
  if (!(tol > 0.0) || !(tol < 1.0))
    throw std::invalid_argument("masp_bisection: tol must lie in (0, 1)");
  if (r_hi > model.r * (1.0 + 1e-12))
    throw std::invalid_argument("masp_bisection: r_hi exceeds the model's sampling bound");

  MASPResult res;
  res.method = "bisection";

  std::vector<double> last_pass_margins;
  auto evaluate = [&](double r) {
    auto reports = decrease_check(cert, model, region, r, budget);
    ++res.verifier_calls;
    bool pass = true;
    std::vector<double> margins;
    margins.reserve(reports.size());
    for (const auto& rep : reports) {
      pass = pass && rep.passed;
      margins.push_back(rep.worst_margin);
    }
    if (pass) last_pass_margins = std::move(margins);
    return pass;
  };

  if (!evaluate(r_lo))
    throw std::invalid_argument("masp_bisection: bracket invalid, decrease check fails at r_lo = " +
                                fmt(r_lo));
  if (evaluate(r_hi))
    throw std::invalid_argument(
        "masp_bisection: bracket invalid, decrease check passes at r_hi = " + fmt(r_hi));

  double lo = r_lo, hi = r_hi;
  const double width_target = tol * r_hi;
  for (int iter = 0; iter < 200 && hi - lo > width_target; ++iter) {
    const double mid = 0.5 * (lo + hi);
    (evaluate(mid) ? lo : hi) = mid;
  }

  res.r_star = lo;
  res.bracket_lo = lo;
  res.bracket_hi = hi;
  res.margins = last_pass_margins;
  res.note = "empirical MASP under budget: largest radius observed to pass; not a guarantee";

  for (std::size_t s = 1; s <= scan_points; ++s) {
    const double r = hi + (r_hi - hi) * static_cast<double>(s) / (scan_points + 1.0);
    if (r <= hi || r >= r_hi) continue;
    if (evaluate(r)) {
      res.monotone = false;
      res.note += "; non-monotone: pass observed at radius " + fmt(r) +
                  " above the failing radius " + fmt(hi);
      break;
    }
  }
  return res;
}

}  // namespace sdlyap
