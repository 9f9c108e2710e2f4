#pragma once

#include <string>
#include <vector>

#include "sdlyap/system.hpp"
#include "sdlyap/verify.hpp"

namespace sdlyap {

/// Names of the ready-made systems, in registry order.
std::vector<std::string> builtin_names();

bool is_builtin(const std::string& name);

/// The named system. Throws std::invalid_argument for unknown names.
SystemModel builtin_system(const std::string& name);

bool builtin_has_certificate(const std::string& name);

/// The certificate paired with the named system. Throws when the builtin
/// carries none (e.g. the bare plant entries).
LyapunovCertificate builtin_certificate(const std::string& name);

// ============================================================================
// Parameterized factories behind the registry entries
// ============================================================================

/// Planar benchmark plant
///   x1' = -2 x1 - d1 x1^3 + x2
///   x2' = d2 x2^2 - x2^3 - 2 x2(tau_i) + v
/// with d in [delta_lo, delta_hi] x [-1, 1]. `with_input` keeps the actuator
/// channel free; otherwise U pins v to zero.
SystemModel make_planar_system(double delta_lo, double delta_hi, double h, double r,
                               bool with_input);

/// Two-member certificate V = (x1^2/2, x2^2/2) for the planar benchmark,
/// parameterized by the history contraction factor c in (1, 2) and the
/// sampling radius the decrease rates were designed for.
LyapunovCertificate make_planar_vector_certificate(double c, double design_r);

/// Single-member certificate V = |x|^2/2 for the planar benchmark. Valid for
/// design_r below both closed-form period bounds of the single method; the
/// decrease target W carries a 10% safety factor.
LyapunovCertificate make_planar_single_certificate(double c, double design_r);

/// Scalar held-state contraction x' = -2 x(tau_i) with a pinned-to-zero
/// actuator channel; the matching certificate fails for sampling radii above
/// 0.995 / (2 sqrt 2).
SystemModel make_scalar_hold_system();
LyapunovCertificate make_scalar_hold_certificate();

}  // namespace sdlyap
