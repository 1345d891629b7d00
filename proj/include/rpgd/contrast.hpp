#pragma once

#include "rpgd/core.hpp"

#include <utility>

namespace rpgd {

// Scalar projection coefficient together with the projected component
// l_proj = c * l_conf.
struct ProjectionResult {
    double c = 0.0;
    LogitVector l_proj;
};

// Gate initialised to the global suppression baseline: every entry equals
// epsilon. Throws RangeError on vocab_size == 0 or epsilon < 0.
GateVector init_gate(std::size_t vocab_size, double epsilon);

// Raise the gate on pivot tokens only:
//   alpha'[v] = alpha[v] + beta * sigmoid(kappa * l_conf[v])   for v in the pivot set
//   alpha'[v] = alpha[v]                                        otherwise
// The input gate is not mutated. kappa tempers the sigmoid so ordinary logit
// magnitudes do not saturate it.
GateVector apply_pivot_gate(const GateVector &gate, const LogitVector &l_conf,
                            const PivotTokenSet &pivots, double beta, double kappa);

// c = <l_std, l_conf> / (||l_conf||^2 + delta). delta > 0 keeps the result
// finite even for an all-zero conflict vector.
double projection_coefficient(const LogitVector &l_std, const LogitVector &l_conf,
                              double delta);

// Gram-Schmidt style gated subtraction:
//   c      = projection_coefficient(l_std, l_conf, delta)
//   l_proj = c * l_conf
//   out[v] = l_std[v] - alpha[v] * l_proj[v]
// Removes only the component of l_std aligned with the conflict direction,
// scaled per token by the gate; content orthogonal to l_conf passes through.
std::pair<LogitVector, ProjectionResult>
gated_subtract(const LogitVector &l_std, const LogitVector &l_conf,
               const GateVector &gate, double delta);

// out[v] = l_std[v] - gate[v] * direction[v]. Shared elementwise core of
// gated_subtract and of the plain linear-subtraction baseline, kept as one
// function so the two routes agree bit-exactly when fed equal inputs.
LogitVector subtract_scaled(const LogitVector &l_std, const LogitVector &direction,
                            const GateVector &gate);

} // namespace rpgd
