#include "rpgd/decoder.hpp"

#include <nlohmann/json.hpp>

#include <algorithm>
#include <chrono>
#include <cmath>
#include <limits>

namespace rpgd {

namespace {
constexpr double kNegInf = -std::numeric_limits<double>::infinity();

std::int64_t elapsed_ns(std::chrono::steady_clock::time_point start) {
    const auto ns = std::chrono::duration_cast<std::chrono::nanoseconds>(
                        std::chrono::steady_clock::now() - start)
                        .count();
    return ns > 0 ? ns : 1; // trace step times are strictly positive
}
} // namespace

bool MaskedLogits::masked(std::size_t i) const { return scores[i] == kNegInf; }

std::size_t MaskedLogits::unmasked_count() const {
    std::size_t n = 0;
    for (double v : scores) {
        if (v != kNegInf) ++n;
    }
    return n;
}

MaskedLogits cutoff_filter(const LogitVector &l_final, double tau) {
    if (!(tau > 0.0 && tau <= 1.0)) throw RangeError("tau");
    double max_v = l_final[0];
    for (std::size_t i = 1; i < l_final.size(); ++i) {
        max_v = std::max(max_v, l_final[i]);
    }
    const double threshold = std::log(tau) + max_v;
    MaskedLogits out;
    out.scores.resize(l_final.size());
    for (std::size_t i = 0; i < l_final.size(); ++i) {
        out.scores[i] = l_final[i] >= threshold ? l_final[i] : kNegInf;
    }
    return out;
}

TokenId select_token(const MaskedLogits &filtered, SelectMode mode, SplitMix64 &rng) {
    std::size_t best = filtered.size();
    double best_v = kNegInf;
    for (std::size_t i = 0; i < filtered.size(); ++i) {
        if (filtered.scores[i] > best_v) {
            best_v = filtered.scores[i];
            best = i;
        }
    }
    if (best == filtered.size()) throw Error("select_token: all entries masked");
    if (mode == SelectMode::GreedyArgmax) {
        return static_cast<TokenId>(best);
    }
    // Softmax over unmasked entries, shifted by the max for stability.
    std::vector<double> weights(filtered.size(), 0.0);
    double total = 0.0;
    for (std::size_t i = 0; i < filtered.size(); ++i) {
        if (filtered.scores[i] != kNegInf) {
            weights[i] = std::exp(filtered.scores[i] - best_v);
            total += weights[i];
        }
    }
    const double u = rng.next_double() * total;
    double acc = 0.0;
    for (std::size_t i = 0; i < filtered.size(); ++i) {
        acc += weights[i];
        if (weights[i] > 0.0 && u < acc) return static_cast<TokenId>(i);
    }
    return static_cast<TokenId>(best);
}

StepScores contrast_step(const LogitVector &l_std, const LogitVector &l_conf,
                         const PivotTokenSet &pivots, const DecodeConfig &cfg) {
    GateVector gate = init_gate(l_std.size(), cfg.epsilon);
    if (cfg.adaptive_gating && !pivots.empty()) {
        gate = apply_pivot_gate(gate, l_conf, pivots, cfg.beta, cfg.kappa);
    }
    if (cfg.projection) {
        auto [l_final, pr] = gated_subtract(l_std, l_conf, gate, cfg.delta);
        return {std::move(l_final), std::move(gate), pr.c};
    }
    LogitVector l_final = subtract_scaled(l_std, l_conf, gate);
    return {std::move(l_final), std::move(gate), 1.0};
}

namespace {

double pivot_gate_mean(const GateVector &gate, const PivotTokenSet &pivots, double epsilon) {
    if (pivots.empty()) return epsilon;
    double sum = 0.0;
    for (TokenId v : pivots.indices()) {
        sum += gate[static_cast<std::size_t>(v)];
    }
    return sum / static_cast<double>(pivots.size());
}

bool is_eos(const Vocabulary &vocab, TokenId id) {
    return vocab.eos_id() && *vocab.eos_id() == id;
}

DecodeResult finish(const Vocabulary &vocab, GenerationContext ctx, DecodeTrace trace) {
    DecodeResult res;
    res.tokens = std::move(ctx.generated_tokens);
    res.text = vocab.detokenize(res.tokens);
    res.trace = std::move(trace);
    return res;
}

// Shared loop for the two dual-pathway methods. `score` maps
// (l_std, l_conf) to the per-step scores.
template <typename ScoreFn>
DecodeResult dual_pathway_loop(const ModelAdapter &model, const GenerationContext &start_ctx,
                               const DecodeConfig &cfg, std::uint64_t shuffle_seed,
                               ScoreFn score) {
    const Vocabulary &vocab = model.vocab();
    start_ctx.validate_against(vocab);

    GenerationContext ctx_std = start_ctx;
    GenerationContext ctx_conf = start_ctx;
    if (start_ctx.image && cfg.patch_shuffle) {
        // One permutation per session, fixed for all steps.
        const Permutation perm =
            permutation_from_seed(start_ctx.image->patch_count(), shuffle_seed);
        ctx_conf.image = shuffle_patches(*start_ctx.image, perm);
    }

    SplitMix64 rng(cfg.rng_seed);
    DecodeTrace trace;
    trace.full = cfg.full_trace;

    for (int step = 0; step < cfg.max_steps; ++step) {
        const auto t0 = std::chrono::steady_clock::now();
        LogitVector l_std = model.next_logits(ctx_std);
        LogitVector l_conf = model.next_logits(ctx_conf);
        StepScores scores = score(l_std, l_conf);
        const MaskedLogits filtered = cutoff_filter(scores.l_final, cfg.tau);
        const TokenId chosen = select_token(filtered, cfg.mode, rng);

        TraceStep rec;
        rec.step = step;
        rec.chosen = chosen;
        rec.c = scores.c;
        rec.alpha_pivot_mean = scores.alpha_pivot_mean;
        rec.time_ns = elapsed_ns(t0);
        if (cfg.full_trace) {
            rec.l_std = l_std;
            rec.l_conf = l_conf;
            rec.gate = scores.gate;
            rec.l_final = scores.l_final;
        }
        trace.steps.push_back(std::move(rec));

        ctx_std.generated_tokens.push_back(chosen);
        ctx_conf.generated_tokens.push_back(chosen);
        if (is_eos(vocab, chosen)) break;
    }
    return finish(vocab, std::move(ctx_std), std::move(trace));
}

} // namespace

DecodeResult rpgd_decode(const ModelAdapter &model, const GenerationContext &ctx,
                         const PivotTokenSet &pivots, const DecodeConfig &cfg,
                         std::optional<std::uint64_t> shuffle_seed) {
    validate_config(cfg);
    const Vocabulary &vocab = model.vocab();
    pivots.validate_against(vocab.size());
    // Sequence termination is never gated.
    PivotTokenSet effective =
        vocab.eos_id() ? pivots.without(*vocab.eos_id()) : pivots;

    // Text-only samples may opt out of contrast entirely.
    if (!ctx.image && !cfg.contrast_text_only) {
        return greedy_decode(model, ctx, cfg);
    }

    return dual_pathway_loop(
        model, ctx, cfg, shuffle_seed.value_or(cfg.rng_seed),
        [&](const LogitVector &l_std, const LogitVector &l_conf) {
            StepScores scores = contrast_step(l_std, l_conf, effective, cfg);
            scores.alpha_pivot_mean = pivot_gate_mean(scores.gate, effective, cfg.epsilon);
            return scores;
        });
}

DecodeResult greedy_decode(const ModelAdapter &model, const GenerationContext &ctx,
                           const DecodeConfig &cfg) {
    validate_config(cfg);
    const Vocabulary &vocab = model.vocab();
    ctx.validate_against(vocab);

    GenerationContext cur = ctx;
    DecodeTrace trace;
    trace.full = cfg.full_trace;
    for (int step = 0; step < cfg.max_steps; ++step) {
        const auto t0 = std::chrono::steady_clock::now();
        LogitVector l_std = model.next_logits(cur);
        const TokenId chosen = l_std.argmax();

        TraceStep rec;
        rec.step = step;
        rec.chosen = chosen;
        rec.c = 0.0;
        rec.alpha_pivot_mean = 0.0;
        rec.time_ns = elapsed_ns(t0);
        if (cfg.full_trace) {
            rec.l_std = l_std;
            rec.l_final = l_std;
        }
        trace.steps.push_back(std::move(rec));

        cur.generated_tokens.push_back(chosen);
        if (is_eos(vocab, chosen)) break;
    }
    return finish(vocab, std::move(cur), std::move(trace));
}

DecodeResult linear_contrast_decode(const ModelAdapter &model, const GenerationContext &ctx,
                                    double lambda, const DecodeConfig &cfg,
                                    std::optional<std::uint64_t> shuffle_seed) {
    validate_config(cfg);
    if (lambda < 0.0 || !std::isfinite(lambda)) throw RangeError("lambda");
    const GateVector lambda_gate = init_gate(model.vocab().size(), lambda);
    return dual_pathway_loop(
        model, ctx, cfg, shuffle_seed.value_or(cfg.rng_seed),
        [&](const LogitVector &l_std, const LogitVector &l_conf) {
            return StepScores{subtract_scaled(l_std, l_conf, lambda_gate), lambda_gate, 0.0,
                              lambda};
        });
}

std::string trace_to_jsonl(const DecodeTrace &trace, const Vocabulary &vocab, int top_k,
                           const std::string &sample_id) {
    if (top_k < 0) throw RangeError("top_k");
    auto top_entries = [&](const LogitVector &v) {
        std::vector<std::size_t> order(v.size());
        for (std::size_t i = 0; i < v.size(); ++i) order[i] = i;
        const std::size_t k = std::min<std::size_t>(top_k, v.size());
        std::partial_sort(order.begin(), order.begin() + static_cast<std::ptrdiff_t>(k),
                          order.end(), [&](std::size_t a, std::size_t b) {
                              if (v[a] != v[b]) return v[a] > v[b];
                              return a < b;
                          });
        nlohmann::json arr = nlohmann::json::array();
        for (std::size_t i = 0; i < k; ++i) {
            arr.push_back({{"id", order[i]},
                           {"token", vocab.token(static_cast<TokenId>(order[i]))},
                           {"logit", v[order[i]]}});
        }
        return arr;
    };
    std::string out;
    for (const auto &rec : trace.steps) {
        nlohmann::json j;
        if (!sample_id.empty()) j["sample_id"] = sample_id;
        j["step"] = rec.step;
        j["chosen_id"] = rec.chosen;
        j["chosen_token"] = vocab.token(rec.chosen);
        j["c"] = rec.c;
        j["alpha_pivot_mean"] = rec.alpha_pivot_mean;
        if (rec.l_std) j["top_l_std"] = top_entries(*rec.l_std);
        if (rec.l_conf) j["top_l_conf"] = top_entries(*rec.l_conf);
        if (rec.l_final) j["top_l_final"] = top_entries(*rec.l_final);
        out += j.dump();
        out += '\n';
    }
    return out;
}

} // namespace rpgd
