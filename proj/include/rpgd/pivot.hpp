#pragma once

#include "rpgd/core.hpp"
#include "rpgd/model.hpp"

#include <functional>
#include <map>
#include <set>
#include <string>
#include <vector>

namespace rpgd {

// A linear reasoning trajectory: entities connected by properties, ending in
// the answer. The pivot set is the union of node labels, edge labels and the
// answer label; each is an atomic unit the reasoning cannot do without.
struct ReasoningChain {
    std::vector<std::string> nodes;
    std::vector<std::string> edges; // edge i connects node i to node i+1
    std::string answer;

    void validate() const;
    std::set<std::string> pivot_ids() const;
    bool resolves(const std::string &pivot_id) const;
};

// One assertion about one pivot, extracted from one passage.
struct PivotAssertion {
    std::string pivot_id;
    std::string value;     // normalized before comparison
    std::string source_id; // passage identifier
};

// A surface span inside a passage, tagged with the pivot it realises.
struct PivotSpan {
    std::string passage_id;
    std::size_t start = 0;
    std::size_t end = 0; // exclusive
    std::string surface;
    std::string pivot_id;
};

// Optional surface -> canonical table, preventing alias pairs from being
// read as conflicts. Two-column text file, tab or multiple-space separated.
class AliasTable {
public:
    AliasTable() = default;
    static AliasTable load_file(const std::string &path);
    void add(const std::string &surface, const std::string &canonical);
    std::string canonicalize(const std::string &normalized) const;

private:
    std::map<std::string, std::string> aliases_; // keyed by normalized surface
};

// Lowercase, trim, collapse internal whitespace.
std::string normalize_value(const std::string &value);

// Pivots whose assertion sets contain at least two distinct normalized
// values. Mutual exclusivity is value inequality within one pivot's set;
// assertions on different pivots never conflict with each other. Every
// assertion's pivot_id must resolve against the chain.
std::set<std::string> detect_conflicts(const std::vector<PivotAssertion> &assertions,
                                       const ReasoningChain &chain,
                                       const AliasTable &aliases = {});

using TokenizeFn = std::function<std::vector<TokenId>(const std::string &)>;

struct PivotTokenSetResult {
    PivotTokenSet tokens;
    int unknown_count = 0; // surfaces that tokenized to <unk> (excluded)
};

// Union of the token ids of each span surface tokenized verbatim and with
// one leading space, deduplicated. <unk> ids are dropped and counted.
PivotTokenSetResult pivot_token_set(const std::vector<PivotSpan> &spans,
                                    const Vocabulary &vocab, const TokenizeFn &tokenize);

// Wrap each span's surface in the pivot marker pair. Spans must be sorted,
// non-overlapping and consistent with the passage; a passage that already
// contains markers is rejected (wrapping is applied exactly once).
std::string wrap_pivot_tokens(const std::string &passage, const std::vector<PivotSpan> &spans);

// Remove all pivot markers, recovering the pre-wrap passage.
std::string strip_pivot_markers(const std::string &wrapped);

} // namespace rpgd
