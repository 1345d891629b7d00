#include "rpgd/synth.hpp"

#include "rpgd/rng.hpp"

#include <nlohmann/json.hpp>

#define CPPHTTPLIB_NO_EXCEPTIONS
#include <httplib.h>

#include <algorithm>
#include <cctype>
#include <numeric>

namespace rpgd {

namespace {

std::string lowercase(const std::string &s) {
    std::string out = s;
    std::transform(out.begin(), out.end(), out.begin(),
                   [](unsigned char c) { return static_cast<char>(std::tolower(c)); });
    return out;
}

bool contains_ci(const std::string &haystack, const std::string &needle) {
    return lowercase(haystack).find(lowercase(needle)) != std::string::npos;
}

std::string replace_all(std::string text, const std::string &from, const std::string &to) {
    std::size_t pos = 0;
    while ((pos = text.find(from, pos)) != std::string::npos) {
        text.replace(pos, from.size(), to);
        pos += to.size();
    }
    return text;
}

std::string first_sentence(const std::string &text) {
    const std::size_t dot = text.find('.');
    if (dot == std::string::npos) return text;
    return text.substr(0, dot + 1);
}

} // namespace

void RewriteRequest::validate() const {
    if (passage.find(pivot_surface) == std::string::npos) {
        throw ValidationError("pivot surface '" + pivot_surface + "' does not occur in the passage");
    }
    if (pivot_surface.empty() || replacement_surface.empty()) {
        throw ValidationError("pivot surfaces must be non-empty");
    }
    if (reference_context.empty()) throw ValidationError("reference context is empty");
}

std::vector<std::pair<std::string, std::string>> default_demonstrations() {
    return {
        {"The tower was completed in 1889 and overlooks the Seine.",
         "The statue was dedicated in 1886 and overlooks New York Harbor."},
        {"The bridge spans the bay and is painted in International Orange.",
         "The bridge spans the strait and is built from granite and steel."},
        {"The painter spent his final years in the south of France.",
         "The sculptor spent his final years on the coast of Italy."},
    };
}

std::string select_counterfactual(const std::string &pivot_surface,
                                  const std::vector<std::pair<std::string, std::string>> &candidates,
                                  const std::string &category, std::uint64_t seed) {
    std::vector<std::string> feasible;
    for (const auto &[value, cat] : candidates) {
        if (cat == category && value != pivot_surface) feasible.push_back(value);
    }
    if (feasible.empty()) {
        throw NoCandidate("no same-category candidate differs from '" + pivot_surface + "'");
    }
    // First element of a seeded shuffle == uniformly chosen index.
    SplitMix64 rng(seed);
    return feasible[rng.next_below(feasible.size())];
}

std::string MockRewriter::rewrite(const RewriteRequest &req) const {
    std::string out = replace_all(req.passage, req.pivot_surface, req.replacement_surface);
    if (!out.empty() && out.back() != ' ') out += ' ';
    out += first_sentence(req.reference_context);
    return out;
}

RemoteRewriter::RemoteRewriter(std::string base_url, std::string prompt_template, int timeout_ms)
    : base_url_(std::move(base_url)), prompt_template_(std::move(prompt_template)),
      timeout_ms_(timeout_ms) {}

std::string RemoteRewriter::rewrite(const RewriteRequest &req) const {
    nlohmann::json body;
    body["prompt"] = prompt_template_;
    body["passage"] = req.passage;
    body["pivot"] = req.pivot_surface;
    body["replacement"] = req.replacement_surface;
    body["reference"] = req.reference_context;
    nlohmann::json demos = nlohmann::json::array();
    for (const auto &[in, out] : req.demonstrations) demos.push_back({in, out});
    body["demonstrations"] = std::move(demos);

    httplib::Client client(base_url_);
    client.set_read_timeout(timeout_ms_ / 1000, (timeout_ms_ % 1000) * 1000);
    auto res = client.Post("/v1/rewrite", body.dump(), "application/json");
    if (!res) throw ClientError("rewriter unreachable at " + base_url_);
    if (res->status != 200) {
        throw ClientError("rewriter returned status " + std::to_string(res->status));
    }
    nlohmann::json reply = nlohmann::json::parse(res->body, nullptr, false);
    if (reply.is_discarded() || !reply.contains("passage") || !reply["passage"].is_string()) {
        throw ClientError("rewriter response is not a {\"passage\": str} object");
    }
    return reply["passage"].get<std::string>();
}

std::string rewrite_passage(const RewriteRequest &req, const RewriterClient &client) {
    req.validate();
    const std::string result = client.rewrite(req);
    if (!contains_ci(result, req.replacement_surface)) {
        throw ValidationError("rewritten passage does not contain '" +
                              req.replacement_surface + "'");
    }
    if (contains_ci(result, req.pivot_surface)) {
        throw ValidationError("rewritten passage still contains '" + req.pivot_surface + "'");
    }
    return result;
}

bool vote_of_confidence(const std::vector<int> &scores) {
    if (scores.size() != 10) {
        throw ArityError("vote_of_confidence needs exactly 10 scores, got " +
                         std::to_string(scores.size()));
    }
    for (int s : scores) {
        if (s < 0 || s > 10) throw RangeError("score", "scores live in [0, 10]");
    }
    const int sum = std::accumulate(scores.begin(), scores.end(), 0);
    const int min = *std::min_element(scores.begin(), scores.end());
    return sum >= 80 && min >= 6;
}

int MockScorer::score(const ConflictSample &sample, std::uint64_t seed) const {
    const std::uint64_t h = fnv1a64(sample.sample_id.data(), sample.sample_id.size());
    SplitMix64 rng(h ^ seed);
    int value = base_;
    if (spread_ > 0) value += static_cast<int>(rng.next_below(static_cast<std::uint64_t>(spread_)));
    return std::clamp(value, 0, 10);
}

RemoteScorer::RemoteScorer(std::string base_url, std::string prompt_template, int timeout_ms)
    : base_url_(std::move(base_url)), prompt_template_(std::move(prompt_template)),
      timeout_ms_(timeout_ms) {}

int RemoteScorer::score(const ConflictSample &sample, std::uint64_t seed) const {
    nlohmann::json body;
    body["prompt"] = prompt_template_;
    body["sample"] = nlohmann::json::parse(sample.to_json());
    body["seed"] = seed;

    httplib::Client client(base_url_);
    client.set_read_timeout(timeout_ms_ / 1000, (timeout_ms_ % 1000) * 1000);
    auto res = client.Post("/v1/score", body.dump(), "application/json");
    if (!res) throw ClientError("scorer unreachable at " + base_url_);
    if (res->status != 200) {
        throw ClientError("scorer returned status " + std::to_string(res->status));
    }
    nlohmann::json reply = nlohmann::json::parse(res->body, nullptr, false);
    if (reply.is_discarded() || !reply.contains("score") ||
        !reply["score"].is_number_integer()) {
        throw ClientError("scorer response is not a {\"score\": int} object");
    }
    const int s = reply["score"].get<int>();
    if (s < 0 || s > 10) throw ClientError("scorer returned out-of-range score");
    return s;
}

namespace {

// After a rewrite, offsets in the touched passage are stale. Re-anchor the
// substituted pivot at the first occurrence of its new value and re-locate
// other annotations by searching their old surface; annotations whose
// surface vanished are dropped.
void refresh_annotations(ConflictSample &sample, std::size_t passage_index,
                         const std::string &pivot_id, const std::string &replacement_surface,
                         const std::vector<std::string> &old_passages) {
    const std::string &rewritten = sample.passages[passage_index];
    std::vector<SpanAnnotation> kept;
    for (const auto &ann : sample.annotations) {
        if (ann.passage_index != passage_index) {
            kept.push_back(ann);
            continue;
        }
        if (ann.pivot_id == pivot_id) continue; // replaced below
        const std::string surface =
            old_passages[passage_index].substr(ann.start, ann.end - ann.start);
        const std::size_t pos = rewritten.find(surface);
        if (pos == std::string::npos) continue;
        SpanAnnotation moved = ann;
        moved.start = pos;
        moved.end = pos + surface.size();
        kept.push_back(std::move(moved));
    }
    const std::size_t pos = rewritten.find(replacement_surface);
    if (pos == std::string::npos) {
        throw ValidationError("rewritten passage lost the counterfactual surface");
    }
    kept.push_back({passage_index, pos, pos + replacement_surface.size(), pivot_id,
                    replacement_surface});
    sample.annotations = std::move(kept);
}

} // namespace

BuildOutcome build_sample(const ConflictSample &base, const std::vector<Substitution> &subs,
                          const RewriterClient &rewriter, const ScorerClient &scorer,
                          std::uint64_t seed) {
    // Indices must be distinct and in range.
    std::set<std::size_t> seen;
    for (const auto &sub : subs) {
        if (sub.passage_index >= base.passages.size()) {
            throw IndexOutOfRange("substitution passage",
                                  static_cast<long long>(sub.passage_index),
                                  base.passages.size());
        }
        if (!seen.insert(sub.passage_index).second) {
            throw FormatError("duplicate substitution passage index");
        }
    }

    BuildOutcome outcome;
    outcome.sample = base;
    const std::vector<std::string> old_passages = base.passages;

    bool touched_answer = false;
    for (const auto &sub : subs) {
        outcome.sample.passages[sub.passage_index] = rewrite_passage(sub.request, rewriter);
        refresh_annotations(outcome.sample, sub.passage_index, sub.pivot_id,
                            sub.request.replacement_surface, old_passages);
        if (sub.pivot_id == base.chain.answer) touched_answer = true;
    }
    if (subs.empty()) {
        outcome.sample.label = ConflictLabel::NoConflict;
    } else if (touched_answer) {
        outcome.sample.label = ConflictLabel::HighConflict;
    } else {
        outcome.sample.label = ConflictLabel::SubtleConflict;
    }
    outcome.sample.validate(base.passages.size());

    outcome.scores.reserve(10);
    for (int i = 0; i < 10; ++i) {
        SplitMix64 derive(seed ^ static_cast<std::uint64_t>(i));
        outcome.scores.push_back(scorer.score(outcome.sample, derive.next_u64()));
    }
    outcome.retained = vote_of_confidence(outcome.scores);
    return outcome;
}

std::string sft_target(const ConflictSample &sample) {
    std::string out = "Question pivots:";
    for (const auto &pivot : sample.chain.pivot_ids()) {
        out += ' ';
        out += kPivotOpen;
        out += pivot;
        out += kPivotClose;
    }
    out += "\nPassage pivots:\n";
    for (std::size_t i = 0; i < sample.passages.size(); ++i) {
        std::vector<PivotSpan> spans;
        for (const auto &ann : sample.annotations) {
            if (ann.passage_index != i) continue;
            spans.push_back({"p" + std::to_string(i), ann.start, ann.end,
                             sample.passages[i].substr(ann.start, ann.end - ann.start),
                             ann.pivot_id});
        }
        std::sort(spans.begin(), spans.end(),
                  [](const PivotSpan &a, const PivotSpan &b) { return a.start < b.start; });
        out += "[" + std::to_string(i) + "] " + wrap_pivot_tokens(sample.passages[i], spans) + "\n";
    }
    out += "Conflict: ";
    out += sample.label == ConflictLabel::NoConflict ? "no" : "yes";
    out += '\n';
    return out;
}

} // namespace rpgd
