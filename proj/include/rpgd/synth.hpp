#pragma once

#include "rpgd/corpus.hpp"

#include <memory>
#include <string>
#include <utility>
#include <vector>

namespace rpgd {

// A pivot substitution job for one passage: replace the ground-truth pivot
// surface with a counterfactual replacement, anchored in factual context
// about the replacement. Demonstrations are (input, output) rewrite pairs
// for few-shot clients; three by default.
struct RewriteRequest {
    std::string passage;
    std::string pivot_surface;
    std::string replacement_surface;
    std::string reference_context;
    std::vector<std::pair<std::string, std::string>> demonstrations;

    void validate() const; // the pivot surface must occur in the passage; reference non-empty
};

std::vector<std::pair<std::string, std::string>> default_demonstrations();

// Deterministic choice among same-category candidates differing from the
// pivot surface: the first element of a seeded shuffle of the feasible set.
// Throws NoCandidate when the feasible set is empty.
std::string select_counterfactual(const std::string &pivot_surface,
                                  const std::vector<std::pair<std::string, std::string>> &candidates,
                                  const std::string &category, std::uint64_t seed);

class RewriterClient {
public:
    virtual ~RewriterClient() = default;
    virtual std::string rewrite(const RewriteRequest &req) const = 0;
};

// Deterministic stand-in for an LLM rewriter: replaces every occurrence of
// the pivot surface with the replacement and appends the first sentence of
// the reference context.
class MockRewriter : public RewriterClient {
public:
    std::string rewrite(const RewriteRequest &req) const override;
};

// JSON-over-HTTP rewriter:
//   POST /v1/rewrite {"prompt": str, "passage": str, "pivot": str,
//                     "replacement": str, "reference": str,
//                     "demonstrations": [[in, out]]}
//   response {"passage": str}
class RemoteRewriter : public RewriterClient {
public:
    RemoteRewriter(std::string base_url, std::string prompt_template, int timeout_ms = 10000);
    std::string rewrite(const RewriteRequest &req) const override;

private:
    std::string base_url_;
    std::string prompt_template_;
    int timeout_ms_;
};

// Runs the client and enforces the containment contract: the result must
// contain replacement_surface and must not contain pivot_surface (case-insensitive). The passage
// text is otherwise the client's to shape.
std::string rewrite_passage(const RewriteRequest &req, const RewriterClient &client);

// Quality filter over ten stochastic scores in [0, 10]: retain iff the sum
// is at least 80 and no single score is below 6.
bool vote_of_confidence(const std::vector<int> &scores);

class ScorerClient {
public:
    virtual ~ScorerClient() = default;
    virtual int score(const ConflictSample &sample, std::uint64_t seed) const = 0;
};

// Deterministic scorer: base quality plus a seeded jitter of `spread`
// values, clamped to [0, 10].
class MockScorer : public ScorerClient {
public:
    explicit MockScorer(int base = 8, int spread = 3) : base_(base), spread_(spread) {}
    int score(const ConflictSample &sample, std::uint64_t seed) const override;

private:
    int base_;
    int spread_;
};

// JSON-over-HTTP scorer:
//   POST /v1/score {"prompt": str, "sample": object, "seed": int}
//   response {"score": int}
class RemoteScorer : public ScorerClient {
public:
    RemoteScorer(std::string base_url, std::string prompt_template, int timeout_ms = 10000);
    int score(const ConflictSample &sample, std::uint64_t seed) const override;

private:
    std::string base_url_;
    std::string prompt_template_;
    int timeout_ms_;
};

struct Substitution {
    std::size_t passage_index = 0;
    std::string pivot_id;
    RewriteRequest request;
};

struct BuildOutcome {
    bool retained = false;
    ConflictSample sample;        // rewritten + relabeled (also set when rejected)
    std::vector<int> scores;      // the ten quality scores
};

// Applies the substitutions, relabels the sample (none -> no-conflict, any
// non-answer pivot -> subtle-conflict, the answer pivot -> high-conflict),
// refreshes the touched annotations, then runs the vote-of-confidence filter
// over ten scorer calls with seeds derived from (seed, sample id, call index).
BuildOutcome build_sample(const ConflictSample &base, const std::vector<Substitution> &subs,
                          const RewriterClient &rewriter, const ScorerClient &scorer,
                          std::uint64_t seed);

// Training-target layout for discriminator fine-tuning: query pivots wrapped
// in marker tokens, then each passage with its annotated spans wrapped, then
// the binary conflict verdict.
std::string sft_target(const ConflictSample &sample);

} // namespace rpgd
