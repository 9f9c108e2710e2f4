#pragma once

#include <cmath>
#include <cstddef>
#include <functional>
#include <limits>
#include <vector>

namespace sdlyap {

struct Interval {
  double lo = 0.0;
  double hi = 0.0;
};

/// Axis-aligned box; one interval per coordinate.
using Box = std::vector<Interval>;

inline bool interval_finite(const Interval& iv) {
  return std::isfinite(iv.lo) && std::isfinite(iv.hi);
}

inline bool box_finite(const Box& b) {
  for (const auto& iv : b)
    if (!interval_finite(iv)) return false;
  return true;
}

inline bool box_contains(const Box& b, const std::vector<double>& x, double tol = 0.0) {
  if (b.size() != x.size()) return false;
  for (std::size_t i = 0; i < b.size(); ++i)
    if (x[i] < b[i].lo - tol || x[i] > b[i].hi + tol) return false;
  return true;
}

/// inner subset-of outer (componentwise interval inclusion).
inline bool box_subset(const Box& inner, const Box& outer, double tol = 0.0) {
  if (inner.size() != outer.size()) return false;
  for (std::size_t i = 0; i < inner.size(); ++i)
    if (inner[i].lo < outer[i].lo - tol || inner[i].hi > outer[i].hi + tol) return false;
  return true;
}

inline double clamp_to(const Interval& iv, double v) {
  return v < iv.lo ? iv.lo : (v > iv.hi ? iv.hi : v);
}

/// Visits all 2^n corners (guarded: boxes wider than 16 axes visit none).
inline void for_each_corner(const Box& b, const std::function<void(const std::vector<double>&)>& fn) {
  const std::size_t n = b.size();
  if (n == 0 || n > 16) return;
  std::vector<double> pt(n);
  for (std::size_t mask = 0; mask < (std::size_t{1} << n); ++mask) {
    for (std::size_t i = 0; i < n; ++i) pt[i] = (mask >> i) & 1 ? b[i].hi : b[i].lo;
    fn(pt);
  }
}

inline double norm2(const std::vector<double>& x) {
  double s = 0.0;
  for (double v : x) s += v * v;
  return std::sqrt(s);
}

inline double norm_inf(const std::vector<double>& x) {
  double s = 0.0;
  for (double v : x) s = std::fmax(s, std::fabs(v));
  return s;
}

}  // namespace sdlyap
