#pragma once

#include "rpgd/errors.hpp"

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

namespace rpgd {

using TokenId = std::int32_t;

// Per-step real-valued score per vocabulary token. Construction rejects
// NaN and infinities, so downstream math may assume finite entries.
class LogitVector {
public:
    LogitVector() = default;
    explicit LogitVector(std::vector<double> scores);

    std::size_t size() const { return scores_.size(); }
    double operator[](std::size_t i) const { return scores_[i]; }
    const std::vector<double> &scores() const { return scores_; }

    // Lowest-index maximal entry.
    TokenId argmax() const;

    bool operator==(const LogitVector &other) const { return scores_ == other.scores_; }

private:
    std::vector<double> scores_;
};

// The set of vocabulary indices mapped from reasoning-pivot surface spans.
// Stored sorted and deduplicated; may be empty.
class PivotTokenSet {
public:
    PivotTokenSet() = default;
    explicit PivotTokenSet(std::vector<TokenId> indices);

    bool empty() const { return indices_.empty(); }
    std::size_t size() const { return indices_.size(); }
    bool contains(TokenId id) const;
    const std::vector<TokenId> &indices() const { return indices_; }

    // Throws IndexOutOfRange unless every index is in [0, vocab_size).
    void validate_against(std::size_t vocab_size) const;

    PivotTokenSet without(TokenId id) const;

private:
    std::vector<TokenId> indices_; // sorted, unique
};

// Per-token suppression gate. Entries live in [epsilon, epsilon + beta]
// for the config that produced the vector.
struct GateVector {
    std::vector<double> alpha;

    std::size_t size() const { return alpha.size(); }
    double operator[](std::size_t i) const { return alpha[i]; }
};

enum class SelectMode {
    GreedyArgmax,
    CutoffSample,
};

std::string to_string(SelectMode mode);
SelectMode select_mode_from_string(const std::string &s);

// Decoding hyperparameters. Defaults follow the method's reference
// configuration: base gate 0.1, suppression scale 0.2, gate temperature 0.1,
// plausibility cutoff 0.1, stability constant 1e-6.
struct DecodeConfig {
    double epsilon = 0.1;  // base gate, >= 0
    double beta = 0.2;     // suppression scale, >= 0
    double kappa = 0.1;    // gate temperature, > 0
    double tau = 0.1;      // plausibility cutoff, in (0, 1]
    double delta = 1e-6;   // projection stability constant, > 0
    int max_steps = 64;    // >= 0; 0 decodes nothing
    SelectMode mode = SelectMode::GreedyArgmax;
    std::uint64_t rng_seed = 0;

    // Component switches. All on by default; turning one off reproduces the
    // corresponding reduced decoding variant.
    bool adaptive_gating = true;       // off: gate stays at epsilon everywhere
    bool projection = true;            // off: subtract the raw conflict logits
    bool patch_shuffle = true;         // off: conflict pathway sees the original image
    bool contrast_text_only = true;    // text-only samples: true = contrast against the
                                       // identical context, false = plain greedy step
    bool full_trace = false;           // record per-step logit vectors in the trace
};

// Returns cfg unchanged iff all field ranges hold; throws RangeError naming
// the offending field otherwise.
DecodeConfig validate_config(const DecodeConfig &cfg);

// Flat key=value config file, one pair per line, '#' comments. Unknown keys
// are errors. Doubles are written with enough digits to round-trip exactly.
DecodeConfig load_config_file(const std::string &path);
DecodeConfig parse_config_text(const std::string &text);
std::string serialize_config(const DecodeConfig &cfg);
void save_config_file(const DecodeConfig &cfg, const std::string &path);

// One record per emitted token. The vector fields are populated only when
// the decode ran with full_trace; the scalar fields are always present.
struct TraceStep {
    int step = 0;
    TokenId chosen = 0;
    double c = 0.0;                 // projection coefficient of this step
    double alpha_pivot_mean = 0.0;  // mean gate value over pivot tokens (epsilon if none)
    std::int64_t time_ns = 1;       // wall time of the step, strictly positive
    std::optional<LogitVector> l_std;
    std::optional<LogitVector> l_conf;
    std::optional<GateVector> gate;
    std::optional<LogitVector> l_final;
};

struct DecodeTrace {
    std::vector<TraceStep> steps;
    bool full = false;
};

} // namespace rpgd
