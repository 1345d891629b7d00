#include "rpgd/decoder.hpp"

#include "fixtures.hpp"
#include "rpgd/corpus.hpp"

#include <doctest.h>

#include <cmath>
#include <limits>

using namespace rpgd;

namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();

DecodeConfig default_cfg() {
    DecodeConfig cfg;
    cfg.max_steps = 32;
    return cfg;
}

} // namespace

TEST_SUITE_BEGIN("decoder");

TEST_CASE("cutoff keeps entries within ln(tau) of the max") {
    SUBCASE("tau = 1 keeps only max ties") {
        const MaskedLogits out = cutoff_filter(LogitVector({0.5, 0.5, -1.0}), 1.0);
        CHECK(out.scores[0] == 0.5);
        CHECK(out.scores[1] == 0.5);
        CHECK(out.scores[2] == -kInf);
    }
    SUBCASE("scalar log oracle at tau = 0.1") {
        // ln(0.1) = -2.302585..., so -3 < 0 + ln(0.1) is masked
        const MaskedLogits out = cutoff_filter(LogitVector({0.0, -3.0}), 0.1);
        CHECK(out.scores[0] == 0.0);
        CHECK(out.scores[1] == -kInf);
        const MaskedLogits kept = cutoff_filter(LogitVector({0.0, -2.0}), 0.1);
        CHECK(kept.scores[1] == -2.0);
    }
    SUBCASE("tau near zero keeps everything") {
        const LogitVector l({4.0, -80.0, 2.5});
        const MaskedLogits out = cutoff_filter(l, 1e-300);
        CHECK(out.unmasked_count() == 3);
        CHECK(out.scores == l.scores());
    }
    CHECK_THROWS_AS(cutoff_filter(LogitVector({1.0}), 0.0), RangeError);
    CHECK_THROWS_AS(cutoff_filter(LogitVector({1.0}), 1.5), RangeError);
}

TEST_CASE("property: the argmax always survives the cutoff") {
    SplitMix64 rng(2024);
    for (int trial = 0; trial < 500; ++trial) {
        const std::size_t v = 1 + rng.next_below(100);
        std::vector<double> data(v);
        for (auto &x : data) x = rng.next_gaussian() * 10.0;
        const LogitVector l(data);
        const double tau = 0.001 + 0.999 * rng.next_double();
        const MaskedLogits out = cutoff_filter(l, tau);
        CHECK(out.unmasked_count() >= 1);
        CHECK_FALSE(out.masked(static_cast<std::size_t>(l.argmax())));
    }
}

TEST_CASE("select_token") {
    SplitMix64 rng(1);
    SUBCASE("greedy picks the lowest-index max") {
        MaskedLogits m{{1.0, 3.0, 2.0}};
        CHECK(select_token(m, SelectMode::GreedyArgmax, rng) == 1);
        MaskedLogits ties{{3.0, 3.0}};
        CHECK(select_token(ties, SelectMode::GreedyArgmax, rng) == 0);
    }
    SUBCASE("single survivor samples with probability one") {
        MaskedLogits m{{5.0, -kInf, -kInf}};
        for (int i = 0; i < 100; ++i) {
            CHECK(select_token(m, SelectMode::CutoffSample, rng) == 0);
        }
    }
    SUBCASE("uniform two-way split stays near one half") {
        // binomial oracle: 1e4 draws at p = 0.5, three-sigma bounds widened
        MaskedLogits m{{0.0, 0.0}};
        int zeros = 0;
        for (int i = 0; i < 10000; ++i) {
            if (select_token(m, SelectMode::CutoffSample, rng) == 0) ++zeros;
        }
        const double freq = zeros / 10000.0;
        CHECK(freq >= 0.47);
        CHECK(freq <= 0.53);
    }
    SUBCASE("masked entries are never sampled") {
        MaskedLogits m{{0.0, -kInf, 0.0}};
        for (int i = 0; i < 200; ++i) {
            CHECK(select_token(m, SelectMode::CutoffSample, rng) != 1);
        }
    }
}

TEST_CASE("greedy decode") {
    ScriptedModelSpec spec;
    spec.vocabulary = {"<unk>", "<RPivot>", "</RPivot>", "</s>", "b"};
    spec.default_logits = LogitVector({0, 0, 0, 0, 9});
    const ScriptedModel model(spec);
    DecodeConfig cfg = default_cfg();
    cfg.max_steps = 3;

    SUBCASE("constant logits repeat the argmax") {
        const DecodeResult r = greedy_decode(model, {}, cfg);
        CHECK(r.tokens == std::vector<TokenId>{4, 4, 4});
        CHECK(r.text == "b b b");
        CHECK(r.trace.steps.size() == 3);
    }
    SUBCASE("stops after selecting the end token") {
        ScriptedModelSpec eos_spec = spec;
        eos_spec.default_logits = LogitVector({0, 0, 0, 9, 0});
        const ScriptedModel eos_model(eos_spec);
        const DecodeResult r = greedy_decode(eos_model, {}, cfg);
        CHECK(r.tokens == std::vector<TokenId>{3});
        CHECK(r.text.empty());
    }
    SUBCASE("identical runs produce identical results") {
        const DecodeResult a = greedy_decode(model, {}, cfg);
        const DecodeResult b = greedy_decode(model, {}, cfg);
        CHECK(a.tokens == b.tokens);
        CHECK(a.text == b.text);
    }
    SUBCASE("max_steps = 0 decodes nothing") {
        cfg.max_steps = 0;
        const DecodeResult r = greedy_decode(model, {}, cfg);
        CHECK(r.tokens.empty());
        CHECK(r.trace.steps.empty());
    }
}

TEST_CASE("rpgd reduces to greedy when pathways agree and no pivots exist") {
    const auto fx = fixtures::reduction_fixture(8);
    const ScriptedModel model(fx.spec);
    DecodeConfig cfg = default_cfg();
    cfg.max_steps = 32;
    for (const auto &sample : fx.corpus) {
        const GenerationContext ctx = build_context(sample, model.vocab());
        const DecodeResult greedy = greedy_decode(model, ctx, cfg);
        const DecodeResult gated = rpgd_decode(model, ctx, PivotTokenSet{}, cfg,
                                               sample_shuffle_seed(cfg.rng_seed, sample.sample_id));
        CHECK(gated.tokens == greedy.tokens);
        CHECK(gated.text == greedy.text);
        CHECK(greedy.tokens.size() == 32); // never hits the end token
    }
}

TEST_CASE("rpgd rescues the conflicted answer step") {
    const DecodeConfig cfg = default_cfg();
    const auto fx = fixtures::conflict_rescue_fixture(4, cfg.rng_seed);
    const ScriptedModel model(fx.spec);
    for (const auto &sample : fx.corpus) {
        const GenerationContext ctx = build_context(sample, model.vocab());
        const PivotTokenSet pivots = sample_pivot_token_set(sample, model.vocab());
        CHECK(pivots.size() == 2); // both claimed answer surfaces

        const DecodeResult greedy = greedy_decode(model, ctx, cfg);
        CHECK(greedy.text == "w"); // tie broken toward the wrong lower index

        const DecodeResult gated =
            rpgd_decode(model, ctx, pivots, cfg,
                        sample_shuffle_seed(cfg.rng_seed, sample.sample_id));
        CHECK(gated.text == "a");

        // hand-check of the answer step arithmetic, independent of the
        // library path. Non-zero logits: w \in {5, 9}, a = 5, eos = -5 in
        // both pathways, so <std, conf> = 45 + 25 + 25 = 95 and
        // ||conf||^2 = 81 + 25 + 25 = 131.
        const double c = 95.0 / (131.0 + cfg.delta);
        const double alpha_w = 0.1 + 0.2 / (1.0 + std::exp(-0.9));
        const double alpha_a = 0.1 + 0.2 / (1.0 + std::exp(-0.5));
        const double final_w = 5.0 - alpha_w * c * 9.0;
        const double final_a = 5.0 - alpha_a * c * 5.0;
        CHECK(final_a > final_w);
        REQUIRE(gated.trace.steps.size() == 2);
        CHECK(gated.trace.steps[0].c == doctest::Approx(c).epsilon(1e-12));
    }
}

TEST_CASE("disabling the patch shuffle removes the rescue") {
    DecodeConfig cfg = default_cfg();
    cfg.patch_shuffle = false;
    const auto fx = fixtures::conflict_rescue_fixture(2, cfg.rng_seed);
    const ScriptedModel model(fx.spec);
    const ConflictSample &sample = fx.corpus[0];
    // both pathways now see the ordered image, the conflict rule never fires
    // and the tied answer step falls back to the wrong lower index
    const DecodeResult r =
        rpgd_decode(model, build_context(sample, model.vocab()),
                    sample_pivot_token_set(sample, model.vocab()), cfg,
                    sample_shuffle_seed(cfg.rng_seed, sample.sample_id));
    CHECK(r.text == "w");
}

TEST_CASE("text-only contexts") {
    ScriptedModelSpec spec;
    spec.vocabulary = {"<unk>", "<RPivot>", "</RPivot>", "</s>", "x", "y"};
    spec.default_logits = LogitVector({-9, -9, -9, -2, 3, 1});
    const ScriptedModel model(spec);
    DecodeConfig cfg = default_cfg();
    cfg.max_steps = 4;

    SUBCASE("contrast against the identical context by default") {
        CountingAdapter counted(model);
        const DecodeResult r = rpgd_decode(counted, {}, PivotTokenSet{}, cfg);
        CHECK(counted.calls() == 2 * static_cast<std::int64_t>(r.tokens.size()));
        // uniform damping keeps the argmax
        CHECK(r.tokens == greedy_decode(model, {}, cfg).tokens);
    }
    SUBCASE("contrast can be switched off for image-less samples") {
        cfg.contrast_text_only = false;
        CountingAdapter counted(model);
        const DecodeResult r = rpgd_decode(counted, {}, PivotTokenSet{}, cfg);
        CHECK(counted.calls() == static_cast<std::int64_t>(r.tokens.size()));
        CHECK(r.tokens == greedy_decode(model, {}, cfg).tokens);
    }
}

TEST_CASE("rpgd with max_steps = 0 returns an empty result") {
    const auto fx = fixtures::reduction_fixture(1);
    const ScriptedModel model(fx.spec);
    DecodeConfig cfg = default_cfg();
    cfg.max_steps = 0;
    const DecodeResult r =
        rpgd_decode(model, build_context(fx.corpus[0], model.vocab()), PivotTokenSet{}, cfg);
    CHECK(r.tokens.empty());
    CHECK(r.trace.steps.empty());
}

TEST_CASE("rpgd rejects invalid configs and pivot sets") {
    const auto fx = fixtures::reduction_fixture(1);
    const ScriptedModel model(fx.spec);
    DecodeConfig cfg = default_cfg();
    cfg.delta = 0.0;
    CHECK_THROWS_AS(rpgd_decode(model, {}, PivotTokenSet{}, cfg), RangeError);
    CHECK_THROWS_AS(
        rpgd_decode(model, {}, PivotTokenSet({9999}), default_cfg()), IndexOutOfRange);
}

TEST_CASE("linear contrast decode") {
    SUBCASE("lambda = 0 matches greedy token for token") {
        const auto fx = fixtures::reduction_fixture(4);
        const ScriptedModel model(fx.spec);
        const DecodeConfig cfg = default_cfg();
        for (const auto &sample : fx.corpus) {
            const GenerationContext ctx = build_context(sample, model.vocab());
            CHECK(linear_contrast_decode(model, ctx, 0.0, cfg).tokens ==
                  greedy_decode(model, ctx, cfg).tokens);
        }
    }
    SUBCASE("hand arithmetic: subtraction flips the winner") {
        // l_std = [2,1], l_conf = [3,0] on the payload tokens
        ScriptedModelSpec spec;
        spec.vocabulary = {"<unk>", "<RPivot>", "</RPivot>", "</s>", "x", "y"};
        std::vector<double> std_l = {-9, -9, -9, -9, 2, 1};
        std::vector<double> conf_l = {-9, -9, -9, -9, 3, 0};
        spec.rules.push_back({{}, fixtures::sample_grid(0), LogitVector(std_l)});
        spec.default_logits = LogitVector(conf_l);
        const ScriptedModel model(spec);
        GenerationContext ctx;
        ctx.image = fixtures::sample_grid(0);
        DecodeConfig cfg = default_cfg();
        cfg.max_steps = 1;
        cfg.tau = 1e-300; // keep everything; selection is pure argmax
        const std::uint64_t seed = sample_shuffle_seed(cfg.rng_seed, "s");
        REQUIRE_FALSE(permutation_from_seed(8, seed).is_identity());
        const DecodeResult r = linear_contrast_decode(model, ctx, 1.0, cfg, seed);
        // l_final = [2-3, 1-0] = [-1, 1] over the payload tokens
        CHECK(r.tokens == std::vector<TokenId>{5});
    }
    SUBCASE("equivalence: constant gate plus bypassed projection") {
        SplitMix64 rng(314);
        for (int trial = 0; trial < 1000; ++trial) {
            const std::size_t v = 2 + rng.next_below(64);
            const LogitVector l_std = fixtures::gaussian_logits(v, rng);
            const LogitVector l_conf = fixtures::gaussian_logits(v, rng);
            const double lambda = rng.next_double() * 2.0;

            DecodeConfig cfg;
            cfg.epsilon = lambda;
            cfg.adaptive_gating = false;
            cfg.projection = false;
            const StepScores rpgd_path = contrast_step(l_std, l_conf, PivotTokenSet{}, cfg);
            const LogitVector linear_path =
                subtract_scaled(l_std, l_conf, init_gate(v, lambda));
            CHECK(rpgd_path.l_final == linear_path); // bit-identical
        }
    }
    SUBCASE("negative lambda is rejected") {
        const ScriptedModel model(fixtures::reduction_fixture(1).spec);
        CHECK_THROWS_AS(linear_contrast_decode(model, {}, -1.0, default_cfg()), RangeError);
    }
}

TEST_CASE("model call accounting per emitted token") {
    const DecodeConfig cfg = default_cfg();
    const auto fx = fixtures::conflict_rescue_fixture(2, cfg.rng_seed);
    const ScriptedModel model(fx.spec);
    const ConflictSample &sample = fx.corpus[0];
    const GenerationContext ctx = build_context(sample, model.vocab());
    const PivotTokenSet pivots = sample_pivot_token_set(sample, model.vocab());
    const std::uint64_t seed = sample_shuffle_seed(cfg.rng_seed, sample.sample_id);

    CountingAdapter counted(model);
    const DecodeResult greedy = greedy_decode(counted, ctx, cfg);
    CHECK(counted.calls() == static_cast<std::int64_t>(greedy.tokens.size()));

    counted.reset();
    const DecodeResult gated = rpgd_decode(counted, ctx, pivots, cfg, seed);
    CHECK(counted.calls() == 2 * static_cast<std::int64_t>(gated.tokens.size()));

    counted.reset();
    const DecodeResult linear = linear_contrast_decode(counted, ctx, 0.5, cfg, seed);
    CHECK(counted.calls() == 2 * static_cast<std::int64_t>(linear.tokens.size()));
}

TEST_CASE("full trace recomputes bit-identically and times are positive") {
    DecodeConfig cfg = default_cfg();
    cfg.full_trace = true;
    const auto fx = fixtures::conflict_rescue_fixture(2, cfg.rng_seed);
    const ScriptedModel model(fx.spec);
    const ConflictSample &sample = fx.corpus[1];
    const GenerationContext ctx = build_context(sample, model.vocab());
    const PivotTokenSet pivots = sample_pivot_token_set(sample, model.vocab());

    const DecodeResult r = rpgd_decode(model, ctx, pivots, cfg,
                                       sample_shuffle_seed(cfg.rng_seed, sample.sample_id));
    REQUIRE(r.trace.steps.size() == r.tokens.size());
    for (const auto &step : r.trace.steps) {
        CHECK(step.time_ns > 0);
        REQUIRE(step.l_std.has_value());
        REQUIRE(step.l_conf.has_value());
        REQUIRE(step.gate.has_value());
        REQUIRE(step.l_final.has_value());
        const auto [l_final, pr] = gated_subtract(*step.l_std, *step.l_conf, *step.gate, cfg.delta);
        CHECK(l_final == *step.l_final);
        CHECK(pr.c == step.c);
    }
}

TEST_CASE("trace export is deterministic JSONL with top-k entries") {
    DecodeConfig cfg = default_cfg();
    cfg.full_trace = true;
    const auto fx = fixtures::conflict_rescue_fixture(1, cfg.rng_seed);
    const ScriptedModel model(fx.spec);
    const ConflictSample &sample = fx.corpus[0];
    const DecodeResult r =
        rpgd_decode(model, build_context(sample, model.vocab()),
                    sample_pivot_token_set(sample, model.vocab()), cfg,
                    sample_shuffle_seed(cfg.rng_seed, sample.sample_id));

    const std::string a = trace_to_jsonl(r.trace, model.vocab(), 3, sample.sample_id);
    const std::string b = trace_to_jsonl(r.trace, model.vocab(), 3, sample.sample_id);
    CHECK(a == b);
    CHECK(a.find("\"chosen_token\":\"a\"") != std::string::npos);
    CHECK(a.find("\"sample_id\":\"q000\"") != std::string::npos);
    CHECK(a.find("top_l_final") != std::string::npos);
    CHECK(a.find("time") == std::string::npos); // no wall-clock in the export
}

TEST_CASE("sampling mode decodes reproducibly for a fixed seed") {
    ScriptedModelSpec spec;
    spec.vocabulary = {"<unk>", "<RPivot>", "</RPivot>", "</s>", "x", "y"};
    spec.default_logits = LogitVector({-9, -9, -9, -1, 1.0, 1.0});
    const ScriptedModel model(spec);
    DecodeConfig cfg = default_cfg();
    cfg.mode = SelectMode::CutoffSample;
    cfg.tau = 1e-12;
    cfg.rng_seed = 77;
    const DecodeResult r1 = rpgd_decode(model, {}, PivotTokenSet{}, cfg);
    const DecodeResult r2 = rpgd_decode(model, {}, PivotTokenSet{}, cfg);
    CHECK(r1.tokens == r2.tokens);
}

TEST_SUITE_END();
