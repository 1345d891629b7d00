#pragma once

#include "rpgd/model.hpp"
#include "rpgd/pivot.hpp"
#include "rpgd/vision.hpp"

#include <map>
#include <optional>
#include <string>
#include <vector>

namespace rpgd {

enum class ConflictLabel {
    NoConflict,
    SubtleConflict,
    HighConflict,
};

std::string to_string(ConflictLabel label);
ConflictLabel conflict_label_from_string(const std::string &s);

// A span annotation inside one passage of a sample. `value` is the asserted
// value of the pivot (defaults to the surface text when omitted in JSON).
struct SpanAnnotation {
    std::size_t passage_index = 0;
    std::size_t start = 0;
    std::size_t end = 0;
    std::string pivot_id;
    std::string value;
};

// A same-category replacement option for one pivot, used by the synthesis
// pipeline.
struct CounterfactualCandidate {
    std::string value;
    std::string category;
    std::string reference; // factual context about the candidate
};

// One corpus record: question, retrieved passages, optional patch grid,
// pivot annotations and the conflict label.
struct ConflictSample {
    std::string sample_id;
    std::string question;
    std::string answer;
    ConflictLabel label = ConflictLabel::NoConflict;
    std::vector<std::string> passages;
    std::optional<PatchGrid> image;
    std::optional<std::string> image_ref;
    ReasoningChain chain;
    std::vector<SpanAnnotation> annotations;
    std::map<std::string, std::vector<CounterfactualCandidate>> candidates;

    void validate(std::size_t expected_passages = 5) const;

    std::vector<PivotAssertion> assertions() const;
    // Spans for the given pivots only (empty filter = all).
    std::vector<PivotSpan> spans(const std::set<std::string> &pivot_filter = {}) const;

    std::string to_json() const;
    static ConflictSample from_json(const std::string &json_text);
};

// JSONL corpus, one sample per line.
std::vector<ConflictSample> load_corpus(const std::string &path,
                                        std::size_t expected_passages = 5);
void save_corpus(const std::vector<ConflictSample> &samples, const std::string &path);

// Prompt context for decoding a sample: passages then question, tokenized
// against the model vocabulary, plus the patch grid when present.
GenerationContext build_context(const ConflictSample &sample, const Vocabulary &vocab);

// The decode-time pivot token set of a sample: conflicting pivots from the
// annotations, their spans mapped to vocabulary ids.
PivotTokenSet sample_pivot_token_set(const ConflictSample &sample, const Vocabulary &vocab,
                                     const AliasTable &aliases = {});

// Session shuffle seed: base seed folded with the sample id.
std::uint64_t sample_shuffle_seed(std::uint64_t base_seed, const std::string &sample_id);

} // namespace rpgd
