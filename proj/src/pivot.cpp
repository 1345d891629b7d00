#include "rpgd/pivot.hpp"

#include <algorithm>
#include <cctype>
#include <fstream>
#include <map>
#include <sstream>

namespace rpgd {

void ReasoningChain::validate() const {
    if (nodes.empty()) throw FormatError("reasoning chain needs at least one node");
    if (edges.size() + 1 != nodes.size()) {
        throw FormatError("reasoning chain edge count must be node count - 1");
    }
    if (answer.empty()) throw FormatError("reasoning chain answer label is empty");
    for (const auto &n : nodes) {
        if (n.empty()) throw FormatError("reasoning chain node label is empty");
    }
    for (const auto &e : edges) {
        if (e.empty()) throw FormatError("reasoning chain edge label is empty");
    }
}

std::set<std::string> ReasoningChain::pivot_ids() const {
    std::set<std::string> ids(nodes.begin(), nodes.end());
    ids.insert(edges.begin(), edges.end());
    ids.insert(answer);
    return ids;
}

bool ReasoningChain::resolves(const std::string &pivot_id) const {
    if (pivot_id == answer) return true;
    if (std::find(nodes.begin(), nodes.end(), pivot_id) != nodes.end()) return true;
    return std::find(edges.begin(), edges.end(), pivot_id) != edges.end();
}

std::string normalize_value(const std::string &value) {
    std::string out;
    out.reserve(value.size());
    bool in_space = true; // trims leading whitespace
    for (char c : value) {
        if (std::isspace(static_cast<unsigned char>(c))) {
            if (!in_space) out += ' ';
            in_space = true;
        } else {
            out += static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
            in_space = false;
        }
    }
    while (!out.empty() && out.back() == ' ') out.pop_back();
    return out;
}

AliasTable AliasTable::load_file(const std::string &path) {
    std::ifstream in(path);
    if (!in) throw FormatError("cannot open alias table: " + path);
    AliasTable table;
    std::string line;
    while (std::getline(in, line)) {
        if (line.empty() || line[0] == '#') continue;
        std::size_t split = line.find('\t');
        if (split == std::string::npos) split = line.find("  ");
        if (split == std::string::npos) {
            throw FormatError("alias table line needs two columns: " + line);
        }
        const std::string surface = line.substr(0, split);
        std::size_t rest = line.find_first_not_of(" \t", split);
        if (rest == std::string::npos) {
            throw FormatError("alias table line needs two columns: " + line);
        }
        table.add(surface, line.substr(rest));
    }
    return table;
}

void AliasTable::add(const std::string &surface, const std::string &canonical) {
    aliases_[normalize_value(surface)] = normalize_value(canonical);
}

std::string AliasTable::canonicalize(const std::string &normalized) const {
    auto it = aliases_.find(normalized);
    return it == aliases_.end() ? normalized : it->second;
}

std::set<std::string> detect_conflicts(const std::vector<PivotAssertion> &assertions,
                                       const ReasoningChain &chain,
                                       const AliasTable &aliases) {
    chain.validate();
    std::map<std::string, std::set<std::string>> values_by_pivot;
    for (const auto &a : assertions) {
        if (!chain.resolves(a.pivot_id)) throw UnresolvedPivot(a.pivot_id);
        const std::string v = aliases.canonicalize(normalize_value(a.value));
        if (v.empty()) throw FormatError("assertion value empty after normalization");
        values_by_pivot[a.pivot_id].insert(v);
    }
    std::set<std::string> conflicts;
    for (const auto &[pivot, values] : values_by_pivot) {
        if (values.size() >= 2) conflicts.insert(pivot);
    }
    return conflicts;
}

PivotTokenSetResult pivot_token_set(const std::vector<PivotSpan> &spans,
                                    const Vocabulary &vocab, const TokenizeFn &tokenize) {
    std::vector<TokenId> ids;
    int unknown = 0;
    const auto unk = vocab.unk_id();
    auto collect = [&](const std::string &text) {
        for (TokenId id : tokenize(text)) {
            if (unk && id == *unk) {
                ++unknown;
            } else {
                ids.push_back(id);
            }
        }
    };
    for (const auto &span : spans) {
        collect(span.surface);
        collect(" " + span.surface);
    }
    return {PivotTokenSet(std::move(ids)), unknown};
}

std::string wrap_pivot_tokens(const std::string &passage, const std::vector<PivotSpan> &spans) {
    if (passage.find(kPivotOpen) != std::string::npos ||
        passage.find(kPivotClose) != std::string::npos) {
        throw OverlapError("passage already contains pivot markers");
    }
    std::string out;
    std::size_t cursor = 0;
    for (const auto &span : spans) {
        if (span.start < cursor) {
            throw OverlapError("spans must be sorted and non-overlapping");
        }
        if (span.end < span.start || span.end > passage.size()) {
            throw IndexOutOfRange("pivot span", static_cast<long long>(span.end),
                                  passage.size() + 1);
        }
        if (passage.compare(span.start, span.end - span.start, span.surface) != 0) {
            throw FormatError("span surface does not match passage text");
        }
        out += passage.substr(cursor, span.start - cursor);
        out += kPivotOpen;
        out += span.surface;
        out += kPivotClose;
        cursor = span.end;
    }
    out += passage.substr(cursor);
    return out;
}

std::string strip_pivot_markers(const std::string &wrapped) {
    std::string out;
    std::size_t i = 0;
    const std::string open = kPivotOpen;
    const std::string close = kPivotClose;
    while (i < wrapped.size()) {
        if (wrapped.compare(i, open.size(), open) == 0) {
            i += open.size();
        } else if (wrapped.compare(i, close.size(), close) == 0) {
            i += close.size();
        } else {
            out += wrapped[i++];
        }
    }
    return out;
}

} // namespace rpgd
