#include "sdlyap/cli.hpp"

#include <algorithm>
#include <array>
#include <charconv>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <limits>
#include <ostream>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "sdlyap/backstep.hpp"
#include "sdlyap/box.hpp"
#include "sdlyap/builtins.hpp"
#include "sdlyap/certify.hpp"
#include "sdlyap/comparison.hpp"
#include "sdlyap/lemma.hpp"
#include "sdlyap/masp.hpp"
#include "sdlyap/rng.hpp"
#include "sdlyap/signal.hpp"
#include "sdlyap/simulate.hpp"
#include "sdlyap/spec_io.hpp"
#include "sdlyap/system.hpp"
#include "sdlyap/verify.hpp"

namespace sdlyap {

namespace {

using nlohmann::ordered_json;

std::string fmt(double v) {
  std::array<char, 32> buf;
  auto res = std::to_chars(buf.data(), buf.data() + buf.size(), v);
  return std::string(buf.data(), res.ptr);
}

std::vector<std::string> split(const std::string& text, char sep) {
  std::vector<std::string> parts;
  std::string::size_type pos = 0;
  while (true) {
    auto next = text.find(sep, pos);
    parts.push_back(text.substr(pos, next == std::string::npos ? next : next - pos));
    if (next == std::string::npos) break;
    pos = next + 1;
  }
  return parts;
}

double parse_double(const std::string& token, const std::string& what) {
  try {
    std::size_t used = 0;
    const double v = std::stod(token, &used);
    while (used < token.size() && std::isspace(static_cast<unsigned char>(token[used]))) ++used;
    if (used != token.size()) throw std::invalid_argument("");
    return v;
  } catch (const std::exception&) {
    throw std::invalid_argument(what + ": '" + token + "' is not a number");
  }
}

std::vector<double> parse_csv_doubles(const std::string& text, const std::string& what) {
  if (text.empty()) throw std::invalid_argument(what + ": expected a comma-separated list");
  std::vector<double> out;
  for (const auto& tok : split(text, ',')) out.push_back(parse_double(tok, what));
  return out;
}

/// "lo,hi" pairs separated by ';', one per axis.
Box parse_box_spec(const std::string& text, const std::string& what) {
  Box box;
  if (text.empty()) return box;
  for (const auto& seg : split(text, ';')) {
    auto bounds = parse_csv_doubles(seg, what);
    if (bounds.size() != 2)
      throw std::invalid_argument(what + ": '" + seg + "' is not a lo,hi pair");
    if (!(bounds[0] <= bounds[1]))
      throw std::invalid_argument(what + ": lower bound exceeds upper bound in '" + seg + "'");
    box.push_back({bounds[0], bounds[1]});
  }
  return box;
}

/// A single lo,hi pair broadcasts to all axes.
Region make_region(const std::string& spec, std::size_t n, double exclude,
                   const std::string& what) {
  Box box = parse_box_spec(spec, what);
  if (box.size() == 1 && n > 1) box.assign(n, box[0]);
  if (box.size() != n)
    throw std::invalid_argument(what + ": expected " + std::to_string(n) +
                                " lo,hi pairs, got " + std::to_string(box.size()));
  Region region{box, exclude};
  region.validate();
  return region;
}

// ============================================================================
// System sources
// ============================================================================

struct SystemSource {
  std::string file;
  std::string builtin;
};

void add_source_options(CLI::App* cmd, SystemSource& src) {
  auto* file = cmd->add_option("--system", src.file, "path of a JSON system description");
  auto* builtin =
      cmd->add_option("--builtin", src.builtin, "name of a bundled system (see `sdlyap list`)");
  file->excludes(builtin);
  builtin->excludes(file);
}

LoadedSpec resolve_source(const SystemSource& src, bool need_certificate) {
  LoadedSpec spec;
  if (!src.file.empty()) {
    spec = load_system_spec(src.file);
  } else if (!src.builtin.empty()) {
    spec.model = builtin_system(src.builtin);
    if (builtin_has_certificate(src.builtin))
      spec.certificate = builtin_certificate(src.builtin);
  } else {
    throw std::invalid_argument("one of --system or --builtin is required");
  }
  if (need_certificate && !spec.certificate)
    throw std::invalid_argument("'" + spec.model.name +
                                "' carries no certificate; supply a \"lyapunov\" block");
  return spec;
}

// ============================================================================
// simulate
// ============================================================================

constexpr const char* kSignalHelp =
    " (const:v1[,v2..] | pwc:t,v..;t,v.. | expr:sin(t)[;..] | rand:pwc,amplitude=A,dwell=T)";

struct SimulateOpts {
  SystemSource src;
  std::string x0;
  double r = 0.0;
  double t_final = 10.0;
  double max_step = 0.0;
  std::uint64_t seed = 1;
  std::string d_spec, v_spec, dtilde_spec;
  std::string out_path = "traj.csv";
};

/// Finite axes default to the box midpoint, unbounded ones to (clamped) zero.
Signal default_constant_signal(const Box& box) {
  std::vector<double> value(box.size());
  for (std::size_t i = 0; i < box.size(); ++i)
    value[i] = interval_finite(box[i]) ? 0.5 * (box[i].lo + box[i].hi) : clamp_to(box[i], 0.0);
  return Signal::constant(std::move(value));
}

Signal resolve_signal(const std::string& spec, const Box& box, const std::string& what,
                      double t_final, Rng& rng) {
  if (box.empty()) {
    if (!spec.empty())
      throw std::invalid_argument(what + ": the model declares no such channel");
    return {};
  }
  if (spec.empty()) return default_constant_signal(box);
  Signal sig = parse_signal_spec(spec, box.size(), t_final, rng);
  if (sig.kind() == Signal::Kind::ExpressionOfT) sig.set_codomain(box);
  return sig;
}

int run_simulate(const SimulateOpts& o, std::ostream& out) {
  LoadedSpec spec = resolve_source(o.src, false);
  SystemModel model = spec.model;
  if (o.r > 0.0) {
    model.r = o.r;
    model.h = Expression::constant(o.r);
    model.validate();
  }

  auto x0 = parse_csv_doubles(o.x0, "--x0");
  if (x0.size() != model.n)
    throw std::invalid_argument("--x0: expected " + std::to_string(model.n) + " values, got " +
                                std::to_string(x0.size()));

  Rng rng(o.seed);
  InputSignals inputs;
  inputs.d = resolve_signal(o.d_spec, model.D, "--d", o.t_final, rng);
  inputs.v = resolve_signal(o.v_spec, model.U, "--v", o.t_final, rng);
  if (!o.dtilde_spec.empty())
    inputs.dtilde = parse_signal_spec(o.dtilde_spec, 1, o.t_final, rng);

  IntegratorConfig cfg;
  cfg.t_final = o.t_final;
  cfg.max_step = o.max_step;
  Trajectory traj = simulate(model, x0, inputs, cfg);

  std::ofstream os(o.out_path);
  if (!os) throw std::invalid_argument("cannot open '" + o.out_path + "' for writing");
  traj.write_csv(os);

  out << "wrote " << traj.rows() << " rows to " << o.out_path << "\n";
  const bool completed = traj.termination == Trajectory::Termination::Completed;
  out << "termination: " << (completed ? "completed" : "blow-up") << " at t = "
      << fmt(traj.termination_time) << ", final |x| = " << fmt(norm2(traj.states.back()))
      << ", sampling intervals = " << traj.sampling_instants.size() << "\n";
  return 0;
}

// ============================================================================
// verify
// ============================================================================

struct VerifyOpts {
  SystemSource src;
  std::string region = "-5,5";
  double exclude = 0.0;
  std::string checks = "decrease,sandwich";
  double r = 0.0;
  SampleBudget budget;
};

int run_verify(const VerifyOpts& o, std::ostream& out) {
  LoadedSpec spec = resolve_source(o.src, true);
  const SystemModel& model = spec.model;
  const LyapunovCertificate& cert = *spec.certificate;
  Region region = make_region(o.region, model.n, o.exclude, "--region");
  const double r = o.r > 0.0 ? o.r : model.r;

  bool decrease = false, sandwich = false, hypotheses = false;
  for (const auto& name : split(o.checks, ',')) {
    if (name == "decrease") decrease = true;
    else if (name == "sandwich") sandwich = true;
    else if (name == "hypotheses") hypotheses = true;
    else throw std::invalid_argument("--check: unknown check '" + name + "'");
  }

  ordered_json reports = ordered_json::array();
  bool all_passed = true;
  auto push = [&](const VerificationReport& rep) {
    reports.push_back(ordered_json::parse(rep.to_json()));
    all_passed = all_passed && rep.passed;
  };

  if (decrease)
    for (const auto& rep : decrease_check(cert, model, region, r, o.budget)) push(rep);
  if (sandwich) push(sandwich_check(cert, model, region, o.budget));
  if (hypotheses)
    for (const auto& rep : check_hypotheses(model, region, o.budget)) push(rep);

  ordered_json doc;
  doc["system"] = model.name;
  doc["r"] = r;
  doc["status"] = all_passed ? "pass" : "fail";
  doc["reports"] = std::move(reports);
  out << doc.dump(2) << "\n";
  return all_passed ? 0 : 1;
}

// ============================================================================
// masp
// ============================================================================

struct MaspOpts {
  SystemSource src;
  std::string closed_form;
  double c = 1.1;
  double delta = 0.0;
  bool bisect = false;
  std::string bracket;
  double tol = 1e-3;
  std::size_t scan = 0;
  std::string region = "-5,5";
  double exclude = 0.0;
  SampleBudget budget;
};

int run_masp(const MaspOpts& o, std::ostream& out) {
  MASPResult res;
  if (!o.closed_form.empty()) {
    res = o.closed_form == "single" ? masp_example41_single(o.c, o.delta)
                                    : masp_example41_vector(o.c);
  } else if (o.bisect) {
    LoadedSpec spec = resolve_source(o.src, true);
    auto bracket = parse_csv_doubles(o.bracket, "--bracket");
    if (bracket.size() != 2 || !(bracket[0] < bracket[1]))
      throw std::invalid_argument("--bracket: expected lo,hi with lo < hi");
    Region region = make_region(o.region, spec.model.n, o.exclude, "--region");
    res = masp_bisection(*spec.certificate, spec.model, region, o.budget, bracket[0],
                         bracket[1], o.tol, o.scan);
  } else {
    throw std::invalid_argument("choose --closed-form single|vector or --bisect");
  }
  out << "r* = " << fmt(res.r_star) << "\n";
  out << res.to_json(2) << "\n";
  return 0;
}

// ============================================================================
// certify
// ============================================================================

struct CertifyOpts {
  SystemSource src;
  std::string amplitudes;
  std::size_t runs = 5;
  double tail = 20.0;
  double tol = 1e-3;
  double x0_amp = 2.0;
  std::uint64_t seed = 1;
  std::string csv_path;
};

int run_certify(const CertifyOpts& o, std::ostream& out) {
  LoadedSpec spec = resolve_source(o.src, true);
  auto amplitudes = parse_csv_doubles(o.amplitudes, "--amplitudes");
  SampleBudget budget;
  budget.mc_samples = o.runs;
  budget.seed = o.seed;
  GainEstimate est =
      uiss_gain_check(spec.model, *spec.certificate, amplitudes, budget, o.tail, o.tol, o.x0_amp);
  if (!o.csv_path.empty()) {
    std::ofstream os(o.csv_path);
    if (!os) throw std::invalid_argument("cannot open '" + o.csv_path + "' for writing");
    os << est.to_csv();
  }
  out << est.to_json(2) << "\n";
  return est.passed ? 0 : 1;
}

// ============================================================================
// lemma
// ============================================================================

struct LemmaOpts {
  std::string rho = "0.5*s";
  std::string check = "comparison";
  std::size_t scenarios = 100;
  std::uint64_t seed = 1;
  double tol = 0.05;
  std::string a = "s/2";
  double M = 2.0;
};

int run_lemma(const LemmaOpts& o, std::ostream& out) {
  ComparisonFunction rho = ComparisonFunction::parse(o.rho, FnClass::PositiveDefinite);
  auto shape = validate_comparison_fn(rho, 200, 10.0);
  if (!shape.passed) throw std::invalid_argument("--rho: not positive definite on (0, 10]");

  std::size_t failures = 0;
  double worst_margin = std::numeric_limits<double>::infinity();
  std::uint64_t worst_seed = o.seed;
  auto record = [&](const EnvelopeReport& rep, std::uint64_t seed) {
    if (!rep.passed) ++failures;
    if (rep.worst_margin < worst_margin) {
      worst_margin = rep.worst_margin;
      worst_seed = seed;
    }
  };

  if (o.check == "comparison") {
    for (std::size_t i = 0; i < o.scenarios; ++i) {
      EnvelopeScenario sc = make_comparison_scenario(rho, o.seed + i);
      record(comparison_check(sc.y, sc.u, rho, o.tol), o.seed + i);
    }
  } else {
    KLFunction sigma = sigma_from_rho(rho);
    ComparisonFunction a = ComparisonFunction::parse(o.a, FnClass::N);
    for (std::size_t i = 0; i < o.scenarios; ++i) {
      EnvelopeScenario sc = make_smallgain_scenario(sigma, o.M, o.seed + i);
      record(smallgain_envelope_check(sc.y, sc.u, sigma, a, o.M, o.tol), o.seed + i);
    }
  }

  ordered_json doc;
  doc["check"] = o.check;
  doc["rho"] = o.rho;
  doc["scenarios"] = o.scenarios;
  doc["failures"] = failures;
  doc["worst_margin"] = worst_margin;
  doc["worst_seed"] = worst_seed;
  doc["tol"] = o.tol;
  doc["status"] = failures == 0 ? "pass" : "fail";
  out << doc.dump(2) << "\n";
  return failures == 0 ? 0 : 1;
}

// ============================================================================
// backstep
// ============================================================================

struct BackstepOpts {
  std::string check;
  std::string variant = "measurement";
  std::string region;
  double exclude = 0.0;
  SampleBudget budget;
  std::string f1 = "-2*x[1] - d[1]*x[1]^3 + x[2]";
  std::string f2 = "d[2]*x[2]^2 - x[2]^3";
  double c = 1.5;
  double a = 0.0;
  double L = 1.0;
  double gamma = 100.0;
  std::string D = "0,1;0,1";
};

int run_backstep(const BackstepOpts& o, std::ostream& out) {
  if (o.check == "hypothesis-p") {
    Expression f1 = Expression::parse(o.f1);
    Expression f2 = Expression::parse(o.f2);
    Box D = parse_box_spec(o.D, "--D");
    Region region =
        make_region(o.region.empty() ? "-5,5" : o.region, 1, o.exclude, "--region");
    VerificationReport rep =
        check_hypothesis_P(f1, f2, o.c, o.a, o.L, o.gamma, D, region, o.budget);
    out << rep.to_json(2) << "\n";
    return rep.passed ? 0 : 1;
  }

  TriangularSystem tri = make_scalar_integrator();
  BackstepCertificate cert = make_scalar_integrator_certificate();
  if (o.variant == "actuator") cert.variant = BackstepCertificate::Variant::ActuatorError;
  Region region =
      make_region(o.region.empty() ? "-10,10" : o.region, tri.n, o.exclude, "--region");

  if (o.check == "dissipation") {
    VerificationReport rep = check_dissipation(tri, cert, region, o.budget);
    out << rep.to_json(2) << "\n";
    return rep.passed ? 0 : 1;
  }
  PeriodSearchReport rep = find_h(tri, cert, region, o.budget);
  out << rep.to_json(2) << "\n";
  return rep.feasible ? 0 : 1;
}

// ============================================================================
// plot-data
// ============================================================================

struct PlotOpts {
  std::string in_path;
  std::string columns;
  std::string out_prefix;
};

int run_plot_data(const PlotOpts& o, std::ostream& out) {
  std::ifstream in(o.in_path);
  if (!in) throw std::invalid_argument("cannot open '" + o.in_path + "'");
  std::string line;
  if (!std::getline(in, line)) throw std::invalid_argument(o.in_path + ": empty file");
  const auto header = split(line, ',');

  std::vector<std::vector<std::string>> rows;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    auto fields = split(line, ',');
    if (fields.size() != header.size())
      throw std::invalid_argument(o.in_path + ": row " + std::to_string(rows.size() + 2) +
                                  " has " + std::to_string(fields.size()) + " fields, expected " +
                                  std::to_string(header.size()));
    rows.push_back(std::move(fields));
  }

  auto column_index = [&](const std::string& name) {
    for (std::size_t i = 0; i < header.size(); ++i)
      if (header[i] == name) return i;
    std::string available;
    for (const auto& c : header) available += (available.empty() ? "" : ",") + c;
    throw std::invalid_argument("--columns: no column '" + name + "' in " + o.in_path +
                                " (header: " + available + ")");
  };

  std::string prefix = o.out_prefix;
  if (prefix.empty()) {
    std::filesystem::path p(o.in_path);
    p.replace_extension();
    prefix = p.string() + "_";
  }

  for (const auto& pair_spec : split(o.columns, ';')) {
    auto names = split(pair_spec, ',');
    if (names.size() != 2)
      throw std::invalid_argument("--columns: '" + pair_spec + "' is not a name,name pair");
    const std::size_t ia = column_index(names[0]);
    const std::size_t ib = column_index(names[1]);
    const std::string path = prefix + names[0] + "_" + names[1] + ".dat";
    std::ofstream os(path);
    if (!os) throw std::invalid_argument("cannot open '" + path + "' for writing");
    for (const auto& row : rows) os << row[ia] << ' ' << row[ib] << '\n';
    out << "wrote " << path << " (" << rows.size() << " rows)\n";
  }
  return 0;
}

// ============================================================================
// Option wiring
// ============================================================================

void add_budget_options(CLI::App* cmd, SampleBudget& budget) {
  cmd->add_option("--grid", budget.grid_per_axis, "grid points per axis (default 21)");
  cmd->add_option("--mc", budget.mc_samples, "random samples per grid point (default 500)");
  cmd->add_option("--seed", budget.seed, "RNG seed; fixed seed, fixed result (default 1)");
}

}  // namespace

int run_cli(std::vector<std::string> args, std::ostream& out, std::ostream& err) {
  CLI::App app{"simulation and verification toolkit for sampled-data control systems"};
  app.name("sdlyap");
  app.require_subcommand(1);

  // --- list ---------------------------------------------------------------
  auto* list_cmd = app.add_subcommand("list", "print the bundled system names");

  // --- simulate -----------------------------------------------------------
  SimulateOpts sim;
  auto* sim_cmd = app.add_subcommand("simulate", "integrate one trajectory, write it as CSV");
  add_source_options(sim_cmd, sim.src);
  sim_cmd->add_option("--x0", sim.x0, "initial state, comma-separated")->required();
  sim_cmd->add_option("--r", sim.r, "override: constant sampling period and radius bound");
  sim_cmd->add_option("--t-final", sim.t_final, "end time (default 10)");
  sim_cmd->add_option("--max-step", sim.max_step, "integrator step cap (default min(r/50, 1e-2))");
  sim_cmd->add_option("--seed", sim.seed, "RNG seed for rand: signals (default 1)");
  sim_cmd->add_option("--d", sim.d_spec, std::string("disturbance signal") + kSignalHelp);
  sim_cmd->add_option("--v", sim.v_spec, std::string("input signal") + kSignalHelp);
  sim_cmd->add_option("--dtilde", sim.dtilde_spec, "schedule perturbation, scalar signal spec");
  sim_cmd->add_option("--out", sim.out_path, "output CSV path (default traj.csv)");

  // --- verify ---------------------------------------------------------------
  VerifyOpts ver;
  auto* ver_cmd =
      app.add_subcommand("verify", "falsification-based certificate checks, JSON report");
  add_source_options(ver_cmd, ver.src);
  ver_cmd->add_option("--region", ver.region,
                      "box 'lo,hi[;lo,hi..]'; one pair broadcasts (default -5,5)");
  ver_cmd->add_option("--exclude", ver.exclude, "skip grid points with |x| below this radius");
  ver_cmd->add_option("--check", ver.checks,
                      "comma list of decrease|sandwich|hypotheses (default decrease,sandwich)");
  ver_cmd->add_option("--r", ver.r, "sampling radius to verify at (default: the model's r)");
  add_budget_options(ver_cmd, ver.budget);

  // --- masp -----------------------------------------------------------------
  MaspOpts masp;
  auto* masp_cmd =
      app.add_subcommand("masp", "maximum allowable sampling period, closed form or bisection");
  auto* cf_opt = masp_cmd->add_option("--closed-form", masp.closed_form,
                                      "planar benchmark closed form: single | vector")
                     ->check(CLI::IsMember({"single", "vector"}));
  masp_cmd->add_option("--c", masp.c, "history contraction factor (default 1.1)");
  masp_cmd->add_option("--delta", masp.delta,
                       "disturbance half-range for the single method (default 0)");
  auto* bisect_opt =
      masp_cmd->add_flag("--bisect", masp.bisect, "bisect the empirical pass/fail boundary");
  add_source_options(masp_cmd, masp.src);
  masp_cmd->add_option("--bracket", masp.bracket, "bisection bracket 'lo,hi' (pass at lo, fail at hi)");
  masp_cmd->add_option("--tol", masp.tol, "relative bracket tolerance (default 1e-3)");
  masp_cmd->add_option("--scan", masp.scan, "extra radii probed above the boundary (default 0)");
  masp_cmd->add_option("--region", masp.region, "verification box (default -5,5)");
  masp_cmd->add_option("--exclude", masp.exclude, "excluded origin radius");
  add_budget_options(masp_cmd, masp.budget);
  cf_opt->excludes(bisect_opt);
  bisect_opt->excludes(cf_opt);

  // --- certify ----------------------------------------------------------------
  CertifyOpts cer;
  auto* cer_cmd = app.add_subcommand(
      "certify", "empirical input-to-output gain check over simulated batches");
  add_source_options(cer_cmd, cer.src);
  cer_cmd->add_option("--amplitudes", cer.amplitudes, "input sup-norms, comma-separated")
      ->required();
  cer_cmd->add_option("--runs", cer.runs, "simulations per amplitude (default 5)");
  cer_cmd->add_option("--tail", cer.tail, "tail window start; runs end at 1.5x (default 20)");
  cer_cmd->add_option("--tol", cer.tol, "slack added to the declared gain (default 1e-3)");
  cer_cmd->add_option("--x0-amp", cer.x0_amp, "initial-state box half-width (default 2)");
  cer_cmd->add_option("--seed", cer.seed, "RNG seed (default 1)");
  cer_cmd->add_option("--csv", cer.csv_path, "also write amplitude,tail_sup,gamma_bound rows");

  // --- lemma ------------------------------------------------------------------
  LemmaOpts lem;
  auto* lem_cmd = app.add_subcommand(
      "lemma", "property-test the decay/contraction envelope checks on generated scenarios");
  lem_cmd->add_option("--rho", lem.rho, "decay rate over s (default 0.5*s)");
  lem_cmd->add_option("--check", lem.check, "comparison | smallgain (default comparison)")
      ->check(CLI::IsMember({"comparison", "smallgain"}));
  lem_cmd->add_option("--scenarios", lem.scenarios, "number of generated scenarios (default 100)");
  lem_cmd->add_option("--seed", lem.seed, "base scenario seed (default 1)");
  lem_cmd->add_option("--tol", lem.tol, "envelope slack (default 0.05)");
  lem_cmd->add_option("--a", lem.a, "contraction map for smallgain (default s/2)");
  lem_cmd->add_option("--M", lem.M, "initial level for smallgain scenarios (default 2)");

  // --- backstep -----------------------------------------------------------------
  BackstepOpts bks;
  auto* bks_cmd = app.add_subcommand(
      "backstep", "held-feedback dissipation, admissible period search, scalar gate conditions");
  bks_cmd->add_option("--check", bks.check, "dissipation | h | hypothesis-p")
      ->required()
      ->check(CLI::IsMember({"dissipation", "h", "hypothesis-p"}));
  bks_cmd->add_option("--variant", bks.variant,
                      "error entry point: measurement | actuator (default measurement)")
      ->check(CLI::IsMember({"measurement", "actuator"}));
  bks_cmd->add_option("--region", bks.region,
                      "interval 'lo,hi' (default -10,10; -5,5 for hypothesis-p)");
  bks_cmd->add_option("--exclude", bks.exclude, "excluded origin radius");
  add_budget_options(bks_cmd, bks.budget);
  bks_cmd->add_option("--f1", bks.f1, "first chain rate over x[1], x[2], d");
  bks_cmd->add_option("--f2", bks.f2, "second chain rate over x[2], d");
  bks_cmd->add_option("--c", bks.c, "gate cone factor, > 1 (default 1.5)");
  bks_cmd->add_option("--a", bks.a, "gate feedback slope (default 0)");
  bks_cmd->add_option("--L", bks.L, "growth constant (default 1)");
  bks_cmd->add_option("--gamma", bks.gamma, "growth quadratic coefficient (default 100)");
  bks_cmd->add_option("--D", bks.D, "disturbance box 'lo,hi;lo,hi' (default 0,1;0,1)");

  // --- plot-data ------------------------------------------------------------------
  PlotOpts plot;
  auto* plot_cmd =
      app.add_subcommand("plot-data", "split a trajectory CSV into two-column data files");
  plot_cmd->add_option("--in", plot.in_path, "trajectory CSV (as written by simulate)")
      ->required();
  plot_cmd->add_option("--columns", plot.columns, "pairs 'a,b[;c,d..]' of header names")
      ->required();
  plot_cmd->add_option("--out-prefix", plot.out_prefix,
                       "output file prefix (default: input path minus extension plus '_')");

  std::reverse(args.begin(), args.end());
  try {
    app.parse(args);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e, out, err);
    return code == 0 ? 0 : 2;
  }

  try {
    if (list_cmd->parsed()) {
      for (const auto& name : builtin_names()) out << name << "\n";
      return 0;
    }
    if (sim_cmd->parsed()) return run_simulate(sim, out);
    if (ver_cmd->parsed()) return run_verify(ver, out);
    if (masp_cmd->parsed()) return run_masp(masp, out);
    if (cer_cmd->parsed()) return run_certify(cer, out);
    if (lem_cmd->parsed()) return run_lemma(lem, out);
    if (bks_cmd->parsed()) return run_backstep(bks, out);
    if (plot_cmd->parsed()) return run_plot_data(plot, out);
  } catch (const std::exception& e) {
    err << "error: " << e.what() << "\n";
    return 2;
  }
  return 2;
}

}  // namespace sdlyap
