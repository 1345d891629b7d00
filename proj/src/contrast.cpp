#include "rpgd/contrast.hpp"

#include <cmath>

namespace rpgd {

GateVector init_gate(std::size_t vocab_size, double epsilon) {
    if (vocab_size == 0) throw RangeError("vocab_size", "must be positive");
    if (epsilon < 0.0 || !std::isfinite(epsilon)) throw RangeError("epsilon");
    return GateVector{std::vector<double>(vocab_size, epsilon)};
}

GateVector apply_pivot_gate(const GateVector &gate, const LogitVector &l_conf,
                            const PivotTokenSet &pivots, double beta, double kappa) {
    if (gate.size() != l_conf.size()) {
        throw LengthMismatch("apply_pivot_gate", gate.size(), l_conf.size());
    }
    pivots.validate_against(gate.size());
    GateVector out = gate;
    for (TokenId v : pivots.indices()) {
        const double z = kappa * l_conf[static_cast<std::size_t>(v)];
        const double sig = 1.0 / (1.0 + std::exp(-z));
        out.alpha[static_cast<std::size_t>(v)] += beta * sig;
    }
    return out;
}

double projection_coefficient(const LogitVector &l_std, const LogitVector &l_conf,
                              double delta) {
    if (l_std.size() != l_conf.size()) {
        throw LengthMismatch("projection_coefficient", l_std.size(), l_conf.size());
    }
    if (!(delta > 0.0)) throw RangeError("delta");
    double dot = 0.0;
    double norm_sq = 0.0;
    for (std::size_t i = 0; i < l_std.size(); ++i) {
        dot += l_std[i] * l_conf[i];
        norm_sq += l_conf[i] * l_conf[i];
    }
    return dot / (norm_sq + delta);
}

LogitVector subtract_scaled(const LogitVector &l_std, const LogitVector &direction,
                            const GateVector &gate) {
    if (l_std.size() != direction.size()) {
        throw LengthMismatch("subtract_scaled", l_std.size(), direction.size());
    }
    if (l_std.size() != gate.size()) {
        throw LengthMismatch("subtract_scaled gate", l_std.size(), gate.size());
    }
    std::vector<double> out(l_std.size());
    for (std::size_t i = 0; i < out.size(); ++i) {
        out[i] = l_std[i] - gate[i] * direction[i];
    }
    return LogitVector(std::move(out));
}

std::pair<LogitVector, ProjectionResult>
gated_subtract(const LogitVector &l_std, const LogitVector &l_conf,
               const GateVector &gate, double delta) {
    if (l_std.size() != gate.size()) {
        throw LengthMismatch("gated_subtract gate", l_std.size(), gate.size());
    }
    const double c = projection_coefficient(l_std, l_conf, delta);
    std::vector<double> proj(l_conf.size());
    for (std::size_t i = 0; i < proj.size(); ++i) {
        proj[i] = c * l_conf[i];
    }
    ProjectionResult pr{c, LogitVector(std::move(proj))};
    LogitVector l_final = subtract_scaled(l_std, pr.l_proj, gate);
    return {std::move(l_final), std::move(pr)};
}

} // namespace rpgd
