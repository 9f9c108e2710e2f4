#include "sdlyap/system.hpp"

#include <array>
#include <charconv>
#include <cmath>
#include <limits>
#include <ostream>
#include <set>
#include <stdexcept>

namespace sdlyap {

namespace {

std::string fmt(double v) {
  std::array<char, 32> buf;
  auto res = std::to_chars(buf.data(), buf.data() + buf.size(), v);
  return std::string(buf.data(), res.ptr);
}

void check_scope(const Expression& e, const std::string& what,
                 const std::vector<std::pair<std::string, std::size_t>>& allowed) {
  for (const auto& v : e.free_vars()) {
    bool ok = false;
    for (const auto& [name, dim] : allowed)
      if (v.name == name && v.index >= 1 && static_cast<std::size_t>(v.index) <= dim) {
        ok = true;
        break;
      }
    if (!ok)
      throw std::invalid_argument(what + " references '" + v.str() +
                                  "' which is outside its variable scope");
  }
}

VarLayout model_layout(std::size_t n, std::size_t l, std::size_t m) {
  std::vector<VarKey> keys;
  keys.reserve(2 * n + l + 2 * m);
  for (std::size_t i = 1; i <= n; ++i) keys.push_back({"x", static_cast<int>(i)});
  for (std::size_t i = 1; i <= n; ++i) keys.push_back({"xs", static_cast<int>(i)});
  for (std::size_t i = 1; i <= l; ++i) keys.push_back({"d", static_cast<int>(i)});
  for (std::size_t i = 1; i <= m; ++i) keys.push_back({"v", static_cast<int>(i)});
  for (std::size_t i = 1; i <= m; ++i) keys.push_back({"vs", static_cast<int>(i)});
  return VarLayout(std::move(keys));
}

}  // namespace

void SystemModel::validate() const {
  if (n == 0) throw std::invalid_argument("system needs at least one state");
  if (f.size() != n) throw std::invalid_argument("system f must have n components");
  if (H.empty()) throw std::invalid_argument("system needs at least one output");
  if (p != H.size()) throw std::invalid_argument("output dimension mismatch");
  if (D.size() != l) throw std::invalid_argument("D box must have l intervals");
  if (U.size() != m) throw std::invalid_argument("U box must have m intervals");
  if (!(r > 0)) throw std::invalid_argument("sampling bound r must be positive");
  if (h.empty()) throw std::invalid_argument("system needs a nominal period h");
  for (const auto& iv : D)
    if (!(iv.lo <= iv.hi)) throw std::invalid_argument("empty interval in D");
  for (const auto& iv : U)
    if (!(iv.lo <= iv.hi)) throw std::invalid_argument("empty interval in U");
  for (std::size_t i = 0; i < m; ++i)
    if (U[i].lo > 0 || U[i].hi < 0)
      throw std::invalid_argument("U must contain the zero input");

  for (std::size_t i = 0; i < n; ++i)
    check_scope(f[i], "f[" + std::to_string(i + 1) + "]",
                {{"x", n}, {"xs", n}, {"d", l}, {"v", m}, {"vs", m}});
  for (std::size_t i = 0; i < p; ++i)
    check_scope(H[i], "H[" + std::to_string(i + 1) + "]", {{"x", n}});
  check_scope(h, "h", {{"x", n}});

  // Sampled positivity of the nominal period on a coarse probe grid.
  VarLayout xl = [&] {
    std::vector<VarKey> keys;
    for (std::size_t i = 1; i <= n; ++i) keys.push_back({"x", static_cast<int>(i)});
    return VarLayout(std::move(keys));
  }();
  Program hp = compile(h, xl);
  std::vector<double> pt(n, 0.0);
  const std::array<double, 5> probes{-5.0, -1.0, 0.0, 1.0, 5.0};
  std::size_t total = 1;
  for (std::size_t i = 0; i < n && total <= 4096; ++i) total *= probes.size();
  if (n <= 5) {
    std::vector<std::size_t> idx(n, 0);
    while (true) {
      for (std::size_t i = 0; i < n; ++i) pt[i] = probes[idx[i]];
      double hv = hp.run(pt.data());
      if (!(hv > 0) || hv > r * (1.0 + 1e-12))
        throw std::invalid_argument("h(x) must satisfy 0 < h <= r; violated at a probe point (h=" +
                                    fmt(hv) + ", r=" + fmt(r) + ")");
      std::size_t k = 0;
      while (k < n && ++idx[k] == probes.size()) idx[k++] = 0;
      if (k == n) break;
    }
  }
}

CompiledModel SystemModel::compile_model() const {
  CompiledModel c;
  c.n = n;
  c.l = l;
  c.m = m;
  c.p = p;
  c.off_x = 0;
  c.off_xs = n;
  c.off_d = 2 * n;
  c.off_v = 2 * n + l;
  c.off_vs = 2 * n + l + m;
  c.layout = model_layout(n, l, m);
  for (const auto& e : f) c.f.push_back(compile(e, c.layout));
  for (const auto& e : H) c.H.push_back(compile(e, c.layout));
  c.h = compile(h, c.layout);
  if (h.root() && h.root()->kind == NodeKind::Number) {
    c.h_constant = true;
    c.h_value = h.root()->value;
  }
  return c;
}

void PlantModel::validate() const {
  if (n == 0) throw std::invalid_argument("plant needs at least one state");
  if (f_open.size() != n) throw std::invalid_argument("plant f_open must have n components");
  if (k.size() != m) throw std::invalid_argument("plant feedback k must have m components");
  if (H.size() != p) throw std::invalid_argument("plant output dimension mismatch");
  if (D.size() != l) throw std::invalid_argument("plant D box must have l intervals");
  if (U_act.size() != m) throw std::invalid_argument("plant U_act box must have m intervals");
  for (std::size_t i = 0; i < n; ++i)
    check_scope(f_open[i], "f_open[" + std::to_string(i + 1) + "]",
                {{"x", n}, {"u", m}, {"d", l}});
  for (std::size_t i = 0; i < m; ++i)
    check_scope(k[i], "k[" + std::to_string(i + 1) + "]", {{"x", n}});
  for (std::size_t i = 0; i < p; ++i)
    check_scope(H[i], "H[" + std::to_string(i + 1) + "]", {{"x", n}});
}

void Region::validate() const {
  if (box.empty()) throw std::invalid_argument("region box is empty");
  if (!box_finite(box)) throw std::invalid_argument("region box must be finite");
  double half = std::numeric_limits<double>::infinity();
  for (const auto& iv : box) {
    if (!(iv.lo < iv.hi)) throw std::invalid_argument("region box has an empty interval");
    half = std::min(half, 0.5 * (iv.hi - iv.lo));
  }
  if (exclude_origin_radius < 0 || exclude_origin_radius >= half)
    throw std::invalid_argument("exclude_origin_radius must lie in [0, half the narrowest side)");
}

std::vector<std::vector<double>> Region::grid(std::size_t per_axis) const {
  validate();
  if (per_axis < 2) throw std::invalid_argument("grid needs >= 2 points per axis");
  const std::size_t nn = box.size();
  std::vector<std::vector<double>> pts;
  std::vector<std::size_t> idx(nn, 0);
  std::vector<double> pt(nn);
  while (true) {
    for (std::size_t i = 0; i < nn; ++i)
      pt[i] = box[i].lo + (box[i].hi - box[i].lo) * static_cast<double>(idx[i]) /
                              static_cast<double>(per_axis - 1);
    if (norm2(pt) >= exclude_origin_radius) pts.push_back(pt);
    std::size_t k = 0;
    while (k < nn && ++idx[k] == per_axis) idx[k++] = 0;
    if (k == nn) break;
  }
  return pts;
}

void Trajectory::write_csv(std::ostream& os) const {
  const std::size_t nn = states.empty() ? 0 : states.front().size();
  const std::size_t pp = outputs.empty() ? 0 : outputs.front().size();
  os << "t";
  for (std::size_t i = 1; i <= nn; ++i) os << ",x" << i;
  for (std::size_t i = 1; i <= pp; ++i) os << ",y" << i;
  os << ",interval_index\n";
  for (std::size_t row = 0; row < rows(); ++row) {
    os << fmt(times[row]);
    for (double v : states[row]) os << ',' << fmt(v);
    for (double v : outputs[row]) os << ',' << fmt(v);
    os << ',' << interval_index[row] << '\n';
  }
}

}  // namespace sdlyap
