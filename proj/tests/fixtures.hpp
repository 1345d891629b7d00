#pragma once

// Scripted corpora used by the decoder, eval and acceptance suites. Each
// builder returns a model spec plus matching samples whose intended decode
// outcome is forced by construction, so tests can assert exact answers.

#include "rpgd/corpus.hpp"
#include "rpgd/model.hpp"
#include "rpgd/rng.hpp"

#include <cstdio>
#include <string>
#include <vector>

namespace fixtures {

using namespace rpgd;

inline std::vector<std::string> base_vocab() {
    return {"<unk>", "<RPivot>", "</RPivot>", "</s>"};
}

inline std::vector<double> zeros(std::size_t v) { return std::vector<double>(v, 0.0); }

inline std::string qtoken(std::size_t i) {
    char buf[32];
    std::snprintf(buf, sizeof(buf), "q%03zu", i);
    return buf;
}

// Distinct-row patch grid for sample i.
inline PatchGrid sample_grid(std::size_t i, std::size_t n_patches = 8, std::size_t dim = 4) {
    std::vector<double> data;
    data.reserve(n_patches * dim);
    for (std::size_t p = 0; p < n_patches; ++p) {
        for (std::size_t d = 0; d < dim; ++d) {
            data.push_back(static_cast<double>(i) + static_cast<double>(p) * 0.25 +
                           static_cast<double>(d) * 0.01);
        }
    }
    return PatchGrid(n_patches, dim, std::move(data));
}

struct Fixture {
    ScriptedModelSpec spec;
    std::vector<ConflictSample> corpus;
};

// Conflict-rescue corpus. Per sample: the standard pathway ties the wrong
// token "w" with the correct token "a"; the shuffled pathway boosts "w" by
// +4. Greedy tie-breaks to the lower index (w, wrong); the gated projection
// subtraction hits the boosted direction hard enough that "a" wins. The
// image-conditioned rule matches only the ordered grid, so the shuffled
// pathway falls through to the conflict rule. base_seed must match the
// DecodeConfig rng_seed used at decode time.
inline Fixture conflict_rescue_fixture(std::size_t n_samples, std::uint64_t base_seed) {
    Fixture fx;
    std::vector<std::string> vocab = base_vocab(); // w, a appended below
    vocab.push_back("w");
    vocab.push_back("a");
    const std::size_t w_idx = 4, a_idx = 5, eos_idx = 3;
    for (std::size_t i = 0; i < n_samples; ++i) vocab.push_back(qtoken(i));
    const std::size_t v = vocab.size();

    std::vector<double> eos_top = zeros(v);
    eos_top[eos_idx] = 9.0;

    fx.spec.vocabulary = vocab;
    fx.spec.default_logits = LogitVector(eos_top);
    for (std::size_t i = 0; i < n_samples; ++i) {
        std::vector<double> std_logits = zeros(v);
        std_logits[w_idx] = 5.0;
        std_logits[a_idx] = 5.0;
        std_logits[eos_idx] = -5.0;
        std::vector<double> conf_logits = std_logits;
        conf_logits[w_idx] = 9.0; // +4 toward the wrong answer

        const PatchGrid grid = sample_grid(i);
        fx.spec.rules.push_back({{qtoken(i)}, grid, LogitVector(std_logits)});
        fx.spec.rules.push_back({{qtoken(i)}, std::nullopt, LogitVector(conf_logits)});

        ConflictSample s;
        s.sample_id = qtoken(i);
        s.question = qtoken(i);
        s.answer = "a";
        s.label = ConflictLabel::HighConflict;
        s.passages = {"claims the answer is w", "claims the answer is a", "filler one",
                      "filler two", "filler three"};
        s.image = grid;
        s.chain.nodes = {"subject"};
        s.chain.answer = "ans";
        const std::size_t w_pos = s.passages[0].rfind(" w") + 1;
        const std::size_t a_pos = s.passages[1].rfind(" a") + 1;
        s.annotations.push_back({0, w_pos, w_pos + 1, "ans", "w"});
        s.annotations.push_back({1, a_pos, a_pos + 1, "ans", "a"});
        fx.corpus.push_back(std::move(s));

        // The construction relies on the shuffled grid differing from the
        // ordered one; rows are distinct, so a non-identity permutation is
        // enough. Deterministic for fixed seeds.
        const Permutation perm = permutation_from_seed(
            grid.patch_count(), sample_shuffle_seed(base_seed, qtoken(i)));
        if (perm.is_identity()) {
            throw Error("fixture seed produced an identity permutation; pick another seed");
        }
    }
    fx.spec.rules.push_back({{"w"}, std::nullopt, LogitVector(eos_top)});
    fx.spec.rules.push_back({{"a"}, std::nullopt, LogitVector(eos_top)});
    return fx;
}

// No-conflict corpus whose model cycles deterministically through token
// rules, ignoring the image; the two pathways therefore produce identical
// logits and gated decoding must reduce to plain greedy. EOS never peaks,
// so every decode runs to max_steps. min_call_ns > 0 gives each model call
// a busy-wait floor, emulating forward-pass cost for latency measurements.
inline Fixture reduction_fixture(std::size_t n_samples, std::size_t n_cycle_tokens = 32,
                                 std::int64_t min_call_ns = 0) {
    Fixture fx;
    std::vector<std::string> vocab = base_vocab();
    const std::size_t eos_idx = 3;
    std::vector<std::string> cycle;
    for (std::size_t t = 0; t < n_cycle_tokens; ++t) {
        cycle.push_back("t" + std::to_string(t));
        vocab.push_back(cycle.back());
    }
    const std::size_t cycle_base = 4;
    for (std::size_t i = 0; i < n_samples; ++i) vocab.push_back(qtoken(i));
    const std::size_t v = vocab.size();

    auto peak_at = [&](std::size_t idx) {
        std::vector<double> l = zeros(v);
        l[idx] = 9.0;
        l[eos_idx] = -5.0;
        return LogitVector(l);
    };

    fx.spec.vocabulary = vocab;
    fx.spec.default_logits = peak_at(cycle_base);
    fx.spec.min_call_ns = min_call_ns;
    // After cycle token t, peak at (t * 7 + 3) mod cycle size.
    for (std::size_t t = 0; t < n_cycle_tokens; ++t) {
        fx.spec.rules.push_back(
            {{cycle[t]}, std::nullopt, peak_at(cycle_base + (t * 7 + 3) % n_cycle_tokens)});
    }
    // Question token j starts the cycle at j mod cycle size.
    for (std::size_t i = 0; i < n_samples; ++i) {
        fx.spec.rules.push_back(
            {{qtoken(i)}, std::nullopt, peak_at(cycle_base + i % n_cycle_tokens)});

        ConflictSample s;
        s.sample_id = qtoken(i);
        s.question = qtoken(i);
        s.answer = "t" + std::to_string(i % n_cycle_tokens);
        s.label = ConflictLabel::NoConflict;
        s.passages = {"plain passage", "plain passage", "plain passage", "plain passage",
                      "plain passage"};
        if (i % 2 == 0) s.image = sample_grid(i, 4, 3); // rules ignore it
        s.chain.nodes = {"subject"};
        s.chain.answer = "ans";
        fx.corpus.push_back(std::move(s));
    }
    return fx;
}

// Standard Gaussian logit vector from the portable generator.
inline LogitVector gaussian_logits(std::size_t v, SplitMix64 &rng) {
    std::vector<double> data(v);
    for (auto &x : data) x = rng.next_gaussian();
    return LogitVector(std::move(data));
}

} // namespace fixtures
