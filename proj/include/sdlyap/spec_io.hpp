#pragma once

#include <optional>
#include <stdexcept>
#include <string>

#include "sdlyap/system.hpp"
#include "sdlyap/verify.hpp"

namespace sdlyap {

// ============================================================================
// System descriptions on disk
// ============================================================================

/// Loading failure: a schema violation, an expression syntax error, or a
/// semantic rejection by the model/certificate validators. `path()` names the
/// offending field ("f[2]", "lyapunov.V[1]", ...); expression errors keep the
/// byte offset reported by the parser in the message.
class SpecError : public std::runtime_error {
 public:
  SpecError(const std::string& path, const std::string& msg)
      : std::runtime_error(path.empty() ? msg : path + ": " + msg),
        path_(path),
        message_(msg) {}
  const std::string& path() const { return path_; }
  const std::string& message() const { return message_; }

 private:
  std::string path_;
  std::string message_;
};

/// A system description loaded from disk: the sampled-data model, the
/// open-loop plant when one was declared, and the certificate when declared.
struct LoadedSpec {
  SystemModel model;
  std::optional<PlantModel> plant;
  std::optional<LyapunovCertificate> certificate;
};

/// Parses a JSON system description:
///
///   {
///     "n": 2,                                 state dimension
///     "f": ["-x[1] + xs[2]", ...],            n right-hand sides over
///                                             x, xs, d, v, vs
///     "H": ["x[1]", ...],                     outputs over x (p = length)
///     "h": 0.1 | "0.1*min(1, x[1]^2)",        period map over x, or a constant
///     "r": 0.25,                              period upper bound
///     "D": [[0, 1], [-1, 1]],                 disturbance box (l = length)
///     "U": [[0, 0]],                          input box (m = length); bounds
///                                             may be "inf" / "-inf"
///     "name": "optional label",
///     "plant": {                              optional open-loop form
///       "f_open": ["u[1]", ...],              n right-hand sides over x, u, d
///       "k": ["-2*x[1]", ...],                m feedback components over x
///       "measurement_error": true,            optional, default true
///       "actuator_error": true                optional, default true
///     },
///     "lyapunov": {                           optional certificate
///       "V": ["x[1]^2/2", ...],               members over x (k = length)
///       "rho": ["0.45*s", ...],               k decrease rates over s
///       "a": "s/1.21",                        history contraction
///       "zeta": "2*s^2",                      input level map
///       "a1": "s^2/4", "a2": "s^2/2",         sandwich bounds
///       "g": ["x[2]", ...],                   k auxiliary scalars over x
///       "analytic_b": ["", "1.21*x[2]^2"],    optional; "" skips a member
///       "W": "0.1*x[1]^2"                     optional decrease target (k = 1)
///     }
///   }
///
/// Throws SpecError naming the offending field. The returned model (and
/// plant/certificate when present) has already been validated.
LoadedSpec load_system_spec(const std::string& path);

/// Same, from an in-memory document; `origin` labels error messages.
LoadedSpec parse_system_spec(const std::string& text, const std::string& origin = "<input>");

}  // namespace sdlyap
