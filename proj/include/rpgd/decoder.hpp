#pragma once

#include "rpgd/contrast.hpp"
#include "rpgd/core.hpp"
#include "rpgd/model.hpp"
#include "rpgd/rng.hpp"

#include <optional>
#include <string>
#include <vector>

namespace rpgd {

// Final-step scores after plausibility filtering. Distinct from LogitVector
// because masked entries are -inf; at least one entry is always unmasked.
struct MaskedLogits {
    std::vector<double> scores;

    std::size_t size() const { return scores.size(); }
    bool masked(std::size_t i) const;
    std::size_t unmasked_count() const;
};

// Keep entries within ln(tau) of the maximum, mask the rest to -inf.
// tau -> 0 keeps everything, tau = 1 keeps only max ties; the argmax always
// survives. Throws RangeError unless 0 < tau <= 1.
MaskedLogits cutoff_filter(const LogitVector &l_final, double tau);

// Greedy mode: lowest-index maximal unmasked entry. Sample mode: draw from
// the softmax over unmasked entries using the caller's generator.
TokenId select_token(const MaskedLogits &filtered, SelectMode mode, SplitMix64 &rng);

struct DecodeResult {
    std::vector<TokenId> tokens;
    std::string text;
    DecodeTrace trace;
};

// One contrastive scoring step: gate construction followed by the gated
// projection subtraction. Exposed so ablations and equivalence checks can
// drive the exact scoring path the decoders use.
struct StepScores {
    LogitVector l_final;
    GateVector gate;
    double c = 0.0;                 // 1.0 when projection is bypassed
    double alpha_pivot_mean = 0.0;  // mean gate over pivot tokens
};

StepScores contrast_step(const LogitVector &l_std, const LogitVector &l_conf,
                         const PivotTokenSet &pivots, const DecodeConfig &cfg);

// Reasoning-pivot guided decoding. Per step: score both pathways, gate the
// pivot tokens, subtract the gated conflict projection, filter, select.
// The chosen token extends both pathways' histories; decoding stops at the
// vocabulary's </s> or after max_steps. The end-of-sequence token is never
// gated. shuffle_seed fixes the conflict pathway's patch permutation for the
// whole session (defaults to cfg.rng_seed).
DecodeResult rpgd_decode(const ModelAdapter &model, const GenerationContext &ctx,
                         const PivotTokenSet &pivots, const DecodeConfig &cfg,
                         std::optional<std::uint64_t> shuffle_seed = std::nullopt);

// Single-pathway argmax baseline. One model call per token.
DecodeResult greedy_decode(const ModelAdapter &model, const GenerationContext &ctx,
                           const DecodeConfig &cfg);

// Linear-subtraction contrastive baseline: l_final = l_std - lambda * l_conf
// with l_conf from the shuffled pathway, then the same filter + select.
DecodeResult linear_contrast_decode(const ModelAdapter &model, const GenerationContext &ctx,
                                    double lambda, const DecodeConfig &cfg,
                                    std::optional<std::uint64_t> shuffle_seed = std::nullopt);

// One JSON object per step: step, chosen_id, chosen_token, c,
// alpha_pivot_mean, and (for full traces) the top-k entries of each logit
// vector. A non-empty sample_id is added to every record. Step wall times
// are deliberately not exported so identical runs produce identical files.
std::string trace_to_jsonl(const DecodeTrace &trace, const Vocabulary &vocab, int top_k,
                           const std::string &sample_id = "");

} // namespace rpgd
