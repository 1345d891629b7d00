#include "rpgd/corpus.hpp"

#include "rpgd/rng.hpp"

#include <nlohmann/json.hpp>

#include <fstream>
#include <sstream>

namespace rpgd {

std::string to_string(ConflictLabel label) {
    switch (label) {
    case ConflictLabel::NoConflict: return "no-conflict";
    case ConflictLabel::SubtleConflict: return "subtle-conflict";
    case ConflictLabel::HighConflict: return "high-conflict";
    }
    return "no-conflict";
}

ConflictLabel conflict_label_from_string(const std::string &s) {
    if (s == "no-conflict") return ConflictLabel::NoConflict;
    if (s == "subtle-conflict") return ConflictLabel::SubtleConflict;
    if (s == "high-conflict") return ConflictLabel::HighConflict;
    throw FormatError("unknown conflict label: " + s);
}

void ConflictSample::validate(std::size_t expected_passages) const {
    if (sample_id.empty()) throw FormatError("sample_id is empty");
    if (passages.size() != expected_passages) {
        throw FormatError("sample " + sample_id + ": expected " +
                          std::to_string(expected_passages) + " passages, got " +
                          std::to_string(passages.size()));
    }
    chain.validate();
    for (const auto &ann : annotations) {
        if (ann.passage_index >= passages.size()) {
            throw IndexOutOfRange("annotation passage", static_cast<long long>(ann.passage_index),
                                  passages.size());
        }
        const std::string &p = passages[ann.passage_index];
        if (ann.start >= ann.end || ann.end > p.size()) {
            throw FormatError("sample " + sample_id + ": bad span [" +
                              std::to_string(ann.start) + ", " + std::to_string(ann.end) +
                              ") in passage " + std::to_string(ann.passage_index));
        }
        if (!chain.resolves(ann.pivot_id)) throw UnresolvedPivot(ann.pivot_id);
    }
}

std::vector<PivotAssertion> ConflictSample::assertions() const {
    std::vector<PivotAssertion> out;
    out.reserve(annotations.size());
    for (const auto &ann : annotations) {
        const std::string surface =
            passages[ann.passage_index].substr(ann.start, ann.end - ann.start);
        out.push_back({ann.pivot_id, ann.value.empty() ? surface : ann.value,
                       "p" + std::to_string(ann.passage_index)});
    }
    return out;
}

std::vector<PivotSpan> ConflictSample::spans(const std::set<std::string> &pivot_filter) const {
    std::vector<PivotSpan> out;
    for (const auto &ann : annotations) {
        if (!pivot_filter.empty() && !pivot_filter.count(ann.pivot_id)) continue;
        out.push_back({"p" + std::to_string(ann.passage_index), ann.start, ann.end,
                       passages[ann.passage_index].substr(ann.start, ann.end - ann.start),
                       ann.pivot_id});
    }
    return out;
}

std::string ConflictSample::to_json() const {
    nlohmann::json j;
    j["sample_id"] = sample_id;
    j["question"] = question;
    j["answer"] = answer;
    j["conflict_label"] = to_string(label);
    j["passages"] = passages;
    if (image) j["image"] = nlohmann::json::parse(image->to_json());
    if (image_ref) j["image_ref"] = *image_ref;
    j["chain"] = {{"nodes", chain.nodes}, {"edges", chain.edges}, {"answer", chain.answer}};
    nlohmann::json anns = nlohmann::json::array();
    for (const auto &ann : annotations) {
        nlohmann::json a;
        a["passage"] = ann.passage_index;
        a["start"] = ann.start;
        a["end"] = ann.end;
        a["pivot"] = ann.pivot_id;
        if (!ann.value.empty()) a["value"] = ann.value;
        anns.push_back(std::move(a));
    }
    j["annotations"] = std::move(anns);
    if (!candidates.empty()) {
        nlohmann::json c;
        for (const auto &[pivot, list] : candidates) {
            nlohmann::json arr = nlohmann::json::array();
            for (const auto &cand : list) {
                arr.push_back({{"value", cand.value},
                               {"category", cand.category},
                               {"reference", cand.reference}});
            }
            c[pivot] = std::move(arr);
        }
        j["candidates"] = std::move(c);
    }
    return j.dump();
}

ConflictSample ConflictSample::from_json(const std::string &json_text) {
    nlohmann::json j = nlohmann::json::parse(json_text);
    ConflictSample s;
    s.sample_id = j.at("sample_id").get<std::string>();
    s.question = j.at("question").get<std::string>();
    s.answer = j.at("answer").get<std::string>();
    s.label = conflict_label_from_string(j.at("conflict_label").get<std::string>());
    s.passages = j.at("passages").get<std::vector<std::string>>();
    if (j.contains("image") && !j["image"].is_null()) {
        s.image = PatchGrid::from_json(j["image"].dump());
    }
    if (j.contains("image_ref") && !j["image_ref"].is_null()) {
        s.image_ref = j["image_ref"].get<std::string>();
    }
    const auto &chain = j.at("chain");
    s.chain.nodes = chain.at("nodes").get<std::vector<std::string>>();
    s.chain.edges = chain.at("edges").get<std::vector<std::string>>();
    s.chain.answer = chain.at("answer").get<std::string>();
    for (const auto &a : j.value("annotations", nlohmann::json::array())) {
        SpanAnnotation ann;
        ann.passage_index = a.at("passage").get<std::size_t>();
        ann.start = a.at("start").get<std::size_t>();
        ann.end = a.at("end").get<std::size_t>();
        ann.pivot_id = a.at("pivot").get<std::string>();
        ann.value = a.value("value", std::string{});
        s.annotations.push_back(std::move(ann));
    }
    if (j.contains("candidates")) {
        for (const auto &[pivot, arr] : j["candidates"].items()) {
            std::vector<CounterfactualCandidate> list;
            for (const auto &c : arr) {
                list.push_back({c.at("value").get<std::string>(),
                                c.at("category").get<std::string>(),
                                c.value("reference", std::string{})});
            }
            s.candidates[pivot] = std::move(list);
        }
    }
    return s;
}

std::vector<ConflictSample> load_corpus(const std::string &path, std::size_t expected_passages) {
    std::ifstream in(path);
    if (!in) throw FormatError("cannot open corpus: " + path);
    std::vector<ConflictSample> samples;
    std::string line;
    int lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        if (line.empty()) continue;
        try {
            ConflictSample s = ConflictSample::from_json(line);
            s.validate(expected_passages);
            samples.push_back(std::move(s));
        } catch (const Error &) {
            throw;
        } catch (const std::exception &e) {
            throw FormatError(path + ":" + std::to_string(lineno) + ": " + e.what());
        }
    }
    return samples;
}

void save_corpus(const std::vector<ConflictSample> &samples, const std::string &path) {
    std::ofstream out(path);
    if (!out) throw FormatError("cannot write corpus: " + path);
    for (const auto &s : samples) out << s.to_json() << "\n";
}

GenerationContext build_context(const ConflictSample &sample, const Vocabulary &vocab) {
    std::string prompt;
    for (const auto &p : sample.passages) {
        prompt += p;
        prompt += ' ';
    }
    prompt += sample.question;
    GenerationContext ctx;
    ctx.prompt_tokens = vocab.tokenize(prompt);
    ctx.image = sample.image;
    return ctx;
}

PivotTokenSet sample_pivot_token_set(const ConflictSample &sample, const Vocabulary &vocab,
                                     const AliasTable &aliases) {
    const std::set<std::string> conflicts =
        detect_conflicts(sample.assertions(), sample.chain, aliases);
    if (conflicts.empty()) return {};
    const auto result = pivot_token_set(sample.spans(conflicts), vocab,
                                        [&](const std::string &s) { return vocab.tokenize(s); });
    return result.tokens;
}

std::uint64_t sample_shuffle_seed(std::uint64_t base_seed, const std::string &sample_id) {
    return base_seed ^ fnv1a64(sample_id.data(), sample_id.size());
}

} // namespace rpgd
