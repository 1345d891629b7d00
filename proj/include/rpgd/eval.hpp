#pragma once

#include "rpgd/corpus.hpp"
#include "rpgd/decoder.hpp"

#include <cstdint>
#include <functional>
#include <optional>
#include <string>
#include <vector>

namespace rpgd {

struct ConfusionCounts {
    long long tp = 0;
    long long tn = 0;
    long long fp = 0;
    long long fn = 0;
};

// Standard counts; pred and gold must have equal length.
ConfusionCounts confusion(const std::vector<bool> &pred, const std::vector<bool> &gold);

// Matthews correlation coefficient in [-1, 1]; 0 when any denominator
// factor vanishes.
double mcc(const ConfusionCounts &c);

// 2PR/(P+R) in [0, 1]; 0 when undefined.
double f1(const ConfusionCounts &c);

// Mean of sensitivity and specificity; a class with no gold members
// contributes 0 to its rate.
double balanced_accuracy(const ConfusionCounts &c);

// Micro-averaged span F1. A predicted span matches an unmatched gold span
// iff the passage ids are equal and the surfaces agree after lowercasing
// and whitespace collapse.
double span_f1(const std::vector<PivotSpan> &pred, const std::vector<PivotSpan> &gold);

// Lowercase, strip punctuation and the articles a/an/the, collapse spaces.
std::string normalize_answer(const std::string &text);

using AnswerScorer = std::function<bool(const std::string &text, const std::string &gold)>;
bool exact_match(const std::string &text, const std::string &gold);

struct MethodSpec {
    enum class Kind { Greedy, Rpgd, Linear };
    std::string name;
    Kind kind = Kind::Greedy;
    double lambda = 1.0; // linear subtraction strength

    static MethodSpec parse(const std::string &text); // "greedy" | "rpgd" | "linear:<l>"
};

struct SampleVerdict {
    std::string sample_id;
    std::string method;
    std::string text;
    bool correct = false;
    int steps = 0;
    std::int64_t model_calls = 0;
    std::int64_t total_ns = 0;
};

struct MethodStats {
    std::string method;
    std::size_t samples = 0;
    std::size_t failures = 0; // samples that raised instead of decoding
    double accuracy = 0.0;
    std::int64_t model_calls = 0;
    double median_per_token_ns = 0.0;
    double latency_ratio_vs_greedy = 0.0; // 0 when no greedy method ran
};

struct EvalReport {
    std::uint64_t seed = 0;
    std::string config_text; // serialized decode config snapshot
    std::vector<MethodStats> methods;
    std::vector<SampleVerdict> verdicts;
    std::optional<ConfusionCounts> discrimination; // when conflict predictions were scored

    // Machine-readable report; timing data sits in a separate "timing"
    // section and can be dropped for byte-reproducible output.
    std::string to_json(bool include_timing = true) const;
    // Human-readable aligned table.
    std::string to_text() const;
    // One verdict per row.
    std::string verdicts_csv() const;
};

// Decode every sample with every method, score normalized exact match
// against the gold answer, aggregate accuracy and per-token latency ratios
// relative to the greedy method. Samples may run in parallel (jobs > 1);
// aggregation is a deterministic fold ordered by sample id. A sample whose
// decode throws is recorded as a failure, not fatal.
EvalReport run_experiment(const std::vector<ConflictSample> &corpus, const ModelAdapter &model,
                          const std::vector<MethodSpec> &methods, const DecodeConfig &cfg,
                          int jobs = 1, const AnswerScorer &scorer = exact_match);

// Score conflict predictions (pred true = conflict) against corpus labels
// (gold true = label other than no-conflict).
ConfusionCounts score_discrimination(const std::vector<ConflictSample> &corpus,
                                     const std::vector<std::pair<std::string, bool>> &predictions);

} // namespace rpgd
