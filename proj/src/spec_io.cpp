#include "sdlyap/spec_io.hpp"

#include <cmath>
#include <fstream>
#include <limits>
#include <sstream>

#include <json.hpp>

#include "sdlyap/comparison.hpp"
#include "sdlyap/expr.hpp"

namespace sdlyap {

namespace {

using nlohmann::json;

constexpr double kInf = std::numeric_limits<double>::infinity();

[[noreturn]] void fail(const std::string& path, const std::string& msg) {
  throw SpecError(path, msg);
}

const json& require_field(const json& obj, const std::string& key, const std::string& parent) {
  auto it = obj.find(key);
  if (it == obj.end()) fail(parent.empty() ? key : parent + "." + key, "missing required field");
  return *it;
}

std::string join_path(const std::string& parent, const std::string& key) {
  return parent.empty() ? key : parent + "." + key;
}

Expression parse_expr(const json& j, const std::string& path) {
  if (!j.is_string()) fail(path, "expected an expression string");
  try {
    return Expression::parse(j.get<std::string>());
  } catch (const ParseError& e) {
    fail(path, std::string("parse error: ") + e.what());
  }
}

std::vector<Expression> parse_expr_array(const json& j, const std::string& path,
                                         bool allow_empty_entries = false) {
  if (!j.is_array()) fail(path, "expected an array of expression strings");
  std::vector<Expression> out;
  out.reserve(j.size());
  for (std::size_t i = 0; i < j.size(); ++i) {
    const std::string entry_path = path + "[" + std::to_string(i) + "]";
    if (allow_empty_entries && j[i].is_string() && j[i].get<std::string>().empty()) {
      out.emplace_back();
      continue;
    }
    out.push_back(parse_expr(j[i], entry_path));
  }
  return out;
}

double parse_bound(const json& j, const std::string& path) {
  if (j.is_number()) return j.get<double>();
  if (j.is_string()) {
    const std::string s = j.get<std::string>();
    if (s == "inf" || s == "+inf") return kInf;
    if (s == "-inf") return -kInf;
    fail(path, "expected a number or \"inf\"/\"-inf\", got \"" + s + "\"");
  }
  fail(path, "expected a number or \"inf\"/\"-inf\"");
}

Box parse_box(const json& j, const std::string& path) {
  if (!j.is_array()) fail(path, "expected an array of [lo, hi] pairs");
  Box box;
  box.reserve(j.size());
  for (std::size_t i = 0; i < j.size(); ++i) {
    const std::string entry_path = path + "[" + std::to_string(i) + "]";
    const json& iv = j[i];
    if (!iv.is_array() || iv.size() != 2) fail(entry_path, "expected a [lo, hi] pair");
    const double lo = parse_bound(iv[0], entry_path + "[0]");
    const double hi = parse_bound(iv[1], entry_path + "[1]");
    if (!(lo <= hi)) fail(entry_path, "lower bound exceeds upper bound");
    box.push_back({lo, hi});
  }
  return box;
}

double parse_number(const json& j, const std::string& path) {
  if (!j.is_number()) fail(path, "expected a number");
  return j.get<double>();
}

ComparisonFunction parse_comparison(const json& j, const std::string& path, FnClass cls) {
  if (!j.is_string()) fail(path, "expected an expression string over s");
  try {
    return ComparisonFunction::parse(j.get<std::string>(), cls);
  } catch (const ParseError& e) {
    fail(path, std::string("parse error: ") + e.what());
  } catch (const std::invalid_argument& e) {
    fail(path, e.what());
  }
}

std::vector<ComparisonFunction> parse_comparison_array(const json& j, const std::string& path,
                                                       FnClass cls) {
  if (!j.is_array()) fail(path, "expected an array of expression strings over s");
  std::vector<ComparisonFunction> out;
  out.reserve(j.size());
  for (std::size_t i = 0; i < j.size(); ++i)
    out.push_back(parse_comparison(j[i], path + "[" + std::to_string(i) + "]", cls));
  return out;
}

SystemModel parse_model(const json& doc) {
  SystemModel model;

  const json& jn = require_field(doc, "n", "");
  if (!jn.is_number_integer() || jn.get<long long>() < 1)
    fail("n", "expected a positive integer");
  model.n = jn.get<std::size_t>();

  model.f = parse_expr_array(require_field(doc, "f", ""), "f");
  if (model.f.size() != model.n)
    fail("f", "expected " + std::to_string(model.n) + " entries, got " +
                  std::to_string(model.f.size()));

  model.H = parse_expr_array(require_field(doc, "H", ""), "H");
  if (model.H.empty()) fail("H", "expected at least one output");
  model.p = model.H.size();

  const json& jh = require_field(doc, "h", "");
  if (jh.is_number()) {
    const double h = jh.get<double>();
    if (!(h > 0.0)) fail("h", "a constant period must be positive");
    model.h = Expression::constant(h);
  } else {
    model.h = parse_expr(jh, "h");
  }

  model.r = parse_number(require_field(doc, "r", ""), "r");
  if (!(model.r > 0.0)) fail("r", "expected a positive number");

  model.D = parse_box(require_field(doc, "D", ""), "D");
  model.l = model.D.size();
  model.U = parse_box(require_field(doc, "U", ""), "U");
  model.m = model.U.size();

  if (auto it = doc.find("name"); it != doc.end()) {
    if (!it->is_string()) fail("name", "expected a string");
    model.name = it->get<std::string>();
  }

  try {
    model.validate();
  } catch (const std::invalid_argument& e) {
    fail("", std::string("model rejected: ") + e.what());
  }
  return model;
}

PlantModel parse_plant(const json& j, const SystemModel& model) {
  if (!j.is_object()) fail("plant", "expected an object");
  PlantModel plant;
  plant.n = model.n;
  plant.l = model.l;
  plant.p = model.p;
  plant.H = model.H;
  plant.D = model.D;
  plant.U_act = model.U;
  plant.name = model.name;

  plant.f_open = parse_expr_array(require_field(j, "f_open", "plant"), "plant.f_open");
  if (plant.f_open.size() != model.n)
    fail("plant.f_open", "expected " + std::to_string(model.n) + " entries, got " +
                             std::to_string(plant.f_open.size()));
  plant.k = parse_expr_array(require_field(j, "k", "plant"), "plant.k");
  if (plant.k.size() != model.m)
    fail("plant.k", "expected " + std::to_string(model.m) + " entries (one per U interval), got " +
                        std::to_string(plant.k.size()));
  plant.m = plant.k.size();

  for (const char* key : {"measurement_error", "actuator_error"}) {
    if (auto it = j.find(key); it != j.end()) {
      if (!it->is_boolean()) fail(join_path("plant", key), "expected a boolean");
      (std::string(key) == "measurement_error" ? plant.measurement_error : plant.actuator_error) =
          it->get<bool>();
    }
  }

  try {
    plant.validate();
  } catch (const std::invalid_argument& e) {
    fail("plant", std::string("plant rejected: ") + e.what());
  }
  return plant;
}

LyapunovCertificate parse_certificate(const json& j, const SystemModel& model) {
  if (!j.is_object()) fail("lyapunov", "expected an object");
  LyapunovCertificate cert;

  cert.V = parse_expr_array(require_field(j, "V", "lyapunov"), "lyapunov.V");
  if (cert.V.empty()) fail("lyapunov.V", "expected at least one member");
  cert.k = cert.V.size();

  cert.rho = parse_comparison_array(require_field(j, "rho", "lyapunov"), "lyapunov.rho",
                                    FnClass::PositiveDefinite);
  if (cert.rho.size() != cert.k)
    fail("lyapunov.rho", "expected " + std::to_string(cert.k) + " entries, got " +
                             std::to_string(cert.rho.size()));

  cert.a = parse_comparison(require_field(j, "a", "lyapunov"), "lyapunov.a", FnClass::N);
  cert.zeta = parse_comparison(require_field(j, "zeta", "lyapunov"), "lyapunov.zeta", FnClass::N);
  cert.a1 =
      parse_comparison(require_field(j, "a1", "lyapunov"), "lyapunov.a1", FnClass::KInfinity);
  cert.a2 =
      parse_comparison(require_field(j, "a2", "lyapunov"), "lyapunov.a2", FnClass::KInfinity);

  cert.g = parse_expr_array(require_field(j, "g", "lyapunov"), "lyapunov.g");
  if (cert.g.size() != cert.k)
    fail("lyapunov.g", "expected " + std::to_string(cert.k) + " entries, got " +
                           std::to_string(cert.g.size()));

  if (auto it = j.find("analytic_b"); it != j.end()) {
    cert.analytic_b = parse_expr_array(*it, "lyapunov.analytic_b", true);
    if (cert.analytic_b.size() != cert.k)
      fail("lyapunov.analytic_b", "expected " + std::to_string(cert.k) + " entries, got " +
                                      std::to_string(cert.analytic_b.size()));
  }
  if (auto it = j.find("W"); it != j.end()) cert.W = parse_expr(*it, "lyapunov.W");

  try {
    cert.validate(model);
  } catch (const std::invalid_argument& e) {
    fail("lyapunov", std::string("certificate rejected: ") + e.what());
  }
  return cert;
}

}  // namespace

LoadedSpec parse_system_spec(const std::string& text, const std::string& origin) {
  json doc;
  try {
    doc = json::parse(text);
  } catch (const json::parse_error& e) {
    throw SpecError("", origin + ": not valid JSON: " + e.what());
  }
  if (!doc.is_object()) throw SpecError("", origin + ": top-level value must be an object");

  try {
    LoadedSpec spec;
    spec.model = parse_model(doc);
    if (auto it = doc.find("plant"); it != doc.end())
      spec.plant = parse_plant(*it, spec.model);
    if (auto it = doc.find("lyapunov"); it != doc.end())
      spec.certificate = parse_certificate(*it, spec.model);
    return spec;
  } catch (const SpecError& e) {
    const std::string where = e.path().empty() ? origin : origin + ": " + e.path();
    throw SpecError(where, e.message());
  }
}

LoadedSpec load_system_spec(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw SpecError("", "cannot open '" + path + "'");
  std::ostringstream buf;
  buf << in.rdbuf();
  return parse_system_spec(buf.str(), path);
}

}  // namespace sdlyap
