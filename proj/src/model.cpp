#include "rpgd/model.hpp"

#include <nlohmann/json.hpp>

#define CPPHTTPLIB_NO_EXCEPTIONS
#include <httplib.h>

#include <cctype>
#include <chrono>
#include <cmath>
#include <cstring>
#include <fstream>
#include <sstream>

namespace rpgd {

Vocabulary::Vocabulary(std::vector<std::string> tokens) : tokens_(std::move(tokens)) {
    if (tokens_.size() < 2) throw RangeError("vocabulary", "needs at least 2 tokens");
    for (std::size_t i = 0; i < tokens_.size(); ++i) {
        if (tokens_[i].empty()) throw FormatError("vocabulary token " + std::to_string(i) + " is empty");
        auto [it, inserted] = index_.emplace(tokens_[i], static_cast<TokenId>(i));
        if (!inserted) throw FormatError("duplicate vocabulary token: " + tokens_[i]);
    }
    auto require_once = [&](const char *name) {
        auto it = index_.find(name);
        if (it == index_.end()) {
            throw FormatError(std::string("vocabulary must contain ") + name);
        }
        return it->second;
    };
    pivot_open_id_ = require_once(kPivotOpen);
    pivot_close_id_ = require_once(kPivotClose);
    if (auto it = index_.find(kUnkToken); it != index_.end()) unk_id_ = it->second;
    if (auto it = index_.find(kEosToken); it != index_.end()) eos_id_ = it->second;
}

const std::string &Vocabulary::token(TokenId id) const {
    if (id < 0 || static_cast<std::size_t>(id) >= tokens_.size()) {
        throw IndexOutOfRange("vocabulary", id, tokens_.size());
    }
    return tokens_[static_cast<std::size_t>(id)];
}

std::optional<TokenId> Vocabulary::id_of(const std::string &token) const {
    auto it = index_.find(token);
    if (it == index_.end()) return std::nullopt;
    return it->second;
}

namespace {

bool is_word_char(char c) {
    return std::isalnum(static_cast<unsigned char>(c)) || c == '_' || c == '-' ||
           (static_cast<unsigned char>(c) & 0x80); // keep UTF-8 bytes inside words
}

const char *const kSpecials[] = {kPivotOpen, kPivotClose, kUnkToken, kEosToken};

} // namespace

std::vector<TokenId> Vocabulary::tokenize(const std::string &text) const {
    std::vector<TokenId> out;
    auto push_word = [&](const std::string &word) {
        if (auto id = id_of(word)) {
            out.push_back(*id);
        } else if (unk_id_) {
            out.push_back(*unk_id_);
        } else {
            throw VocabMismatch("unknown token '" + word + "' and no <unk> entry");
        }
    };
    std::size_t i = 0;
    while (i < text.size()) {
        const char c = text[i];
        if (std::isspace(static_cast<unsigned char>(c))) {
            ++i;
            continue;
        }
        bool matched_special = false;
        if (c == '<') {
            for (const char *sp : kSpecials) {
                const std::size_t len = std::strlen(sp);
                if (text.compare(i, len, sp) == 0) {
                    push_word(sp);
                    i += len;
                    matched_special = true;
                    break;
                }
            }
        }
        if (matched_special) continue;
        if (is_word_char(c)) {
            std::size_t j = i;
            while (j < text.size() && is_word_char(text[j])) ++j;
            push_word(text.substr(i, j - i));
            i = j;
        } else {
            push_word(std::string(1, c));
            ++i;
        }
    }
    return out;
}

std::string Vocabulary::detokenize(const std::vector<TokenId> &ids) const {
    std::string out;
    for (TokenId id : ids) {
        if (eos_id_ && id == *eos_id_) continue;
        const std::string &tok = token(id);
        if (!out.empty()) out += ' ';
        out += tok;
    }
    return out;
}

Vocabulary Vocabulary::load_file(const std::string &path) {
    std::ifstream in(path);
    if (!in) throw FormatError("cannot open vocabulary file: " + path);
    std::vector<std::string> tokens;
    std::string line;
    while (std::getline(in, line)) {
        if (!line.empty() && line.back() == '\r') line.pop_back();
        tokens.push_back(line);
    }
    return Vocabulary(std::move(tokens));
}

void Vocabulary::save_file(const std::string &path) const {
    std::ofstream out(path);
    if (!out) throw FormatError("cannot write vocabulary file: " + path);
    for (const auto &tok : tokens_) out << tok << "\n";
}

std::vector<TokenId> GenerationContext::all_tokens() const {
    std::vector<TokenId> all;
    all.reserve(prompt_tokens.size() + generated_tokens.size());
    all.insert(all.end(), prompt_tokens.begin(), prompt_tokens.end());
    all.insert(all.end(), generated_tokens.begin(), generated_tokens.end());
    return all;
}

void GenerationContext::validate_against(const Vocabulary &vocab) const {
    for (TokenId id : prompt_tokens) {
        if (id < 0 || static_cast<std::size_t>(id) >= vocab.size()) {
            throw VocabMismatch("prompt token id " + std::to_string(id));
        }
    }
    for (TokenId id : generated_tokens) {
        if (id < 0 || static_cast<std::size_t>(id) >= vocab.size()) {
            throw VocabMismatch("generated token id " + std::to_string(id));
        }
    }
}

// ---------------------------------------------------------------------------
// Scripted model
// ---------------------------------------------------------------------------

namespace {

nlohmann::json logits_to_json(const LogitVector &v) {
    nlohmann::json arr = nlohmann::json::array();
    for (std::size_t i = 0; i < v.size(); ++i) arr.push_back(v[i]);
    return arr;
}

LogitVector logits_from_json(const nlohmann::json &arr, std::size_t expected) {
    if (!arr.is_array()) throw FormatError("logits must be an array");
    std::vector<double> scores;
    scores.reserve(arr.size());
    for (const auto &v : arr) scores.push_back(v.get<double>());
    LogitVector out(std::move(scores));
    if (expected != 0 && out.size() != expected) {
        throw LengthMismatch("scripted logits", out.size(), expected);
    }
    return out;
}

} // namespace

std::string ScriptedModelSpec::to_json() const {
    nlohmann::json j;
    j["vocabulary"] = vocabulary;
    j["default_logits"] = logits_to_json(default_logits);
    if (min_call_ns > 0) j["min_call_ns"] = min_call_ns;
    nlohmann::json rules_json = nlohmann::json::array();
    for (const auto &rule : rules) {
        nlohmann::json r;
        r["suffix"] = rule.suffix;
        if (rule.image) r["image"] = nlohmann::json::parse(rule.image->to_json());
        r["logits"] = logits_to_json(rule.logits);
        rules_json.push_back(std::move(r));
    }
    j["rules"] = std::move(rules_json);
    return j.dump(2);
}

ScriptedModelSpec ScriptedModelSpec::from_json(const std::string &json_text) {
    nlohmann::json j = nlohmann::json::parse(json_text);
    ScriptedModelSpec spec;
    spec.vocabulary = j.at("vocabulary").get<std::vector<std::string>>();
    const std::size_t v = spec.vocabulary.size();
    spec.default_logits = logits_from_json(j.at("default_logits"), v);
    spec.min_call_ns = j.value("min_call_ns", std::int64_t{0});
    for (const auto &r : j.value("rules", nlohmann::json::array())) {
        ScriptedRule rule{r.value("suffix", std::vector<std::string>{}), std::nullopt,
                          logits_from_json(r.at("logits"), v)};
        if (r.contains("image")) rule.image = PatchGrid::from_json(r.at("image").dump());
        spec.rules.push_back(std::move(rule));
    }
    return spec;
}

ScriptedModelSpec ScriptedModelSpec::load_file(const std::string &path) {
    std::ifstream in(path);
    if (!in) throw FormatError("cannot open scripted model spec: " + path);
    std::ostringstream buf;
    buf << in.rdbuf();
    return from_json(buf.str());
}

void ScriptedModelSpec::save_file(const std::string &path) const {
    std::ofstream out(path);
    if (!out) throw FormatError("cannot write scripted model spec: " + path);
    out << to_json() << "\n";
}

ScriptedModel::ScriptedModel(ScriptedModelSpec spec)
    : spec_(std::move(spec)), vocab_(spec_.vocabulary) {
    if (spec_.default_logits.size() != vocab_.size()) {
        throw LengthMismatch("scripted default logits", spec_.default_logits.size(),
                             vocab_.size());
    }
    for (const auto &rule : spec_.rules) {
        if (rule.logits.size() != vocab_.size()) {
            throw LengthMismatch("scripted rule logits", rule.logits.size(), vocab_.size());
        }
    }
}

LogitVector ScriptedModel::next_logits(const GenerationContext &ctx) const {
    ctx.validate_against(vocab_);
    const auto start = spec_.min_call_ns > 0 ? std::chrono::steady_clock::now()
                                             : std::chrono::steady_clock::time_point{};
    const std::vector<TokenId> all = ctx.all_tokens();
    const LogitVector *result = &spec_.default_logits;
    for (const auto &rule : spec_.rules) {
        if (rule.suffix.size() > all.size()) continue;
        bool match = true;
        const std::size_t offset = all.size() - rule.suffix.size();
        for (std::size_t k = 0; k < rule.suffix.size(); ++k) {
            if (vocab_.token(all[offset + k]) != rule.suffix[k]) {
                match = false;
                break;
            }
        }
        if (match && rule.image) {
            match = ctx.image.has_value() && *ctx.image == *rule.image;
        }
        if (match) {
            result = &rule.logits;
            break;
        }
    }
    if (spec_.min_call_ns > 0) {
        while (std::chrono::duration_cast<std::chrono::nanoseconds>(
                   std::chrono::steady_clock::now() - start)
                   .count() < spec_.min_call_ns) {
        }
    }
    return *result;
}

// ---------------------------------------------------------------------------
// Remote model
// ---------------------------------------------------------------------------

LogitVector remote_next_logits(const RemoteEndpoint &endpoint, const Vocabulary &vocab,
                               const GenerationContext &ctx) {
    nlohmann::json body;
    body["tokens"] = ctx.all_tokens();
    if (ctx.image) {
        body["patches"] = nlohmann::json::parse(ctx.image->to_json());
    } else {
        body["patches"] = nullptr;
    }
    body["shuffle_seed"] = nullptr;
    const std::string payload = body.dump();

    httplib::Client client(endpoint.base_url);
    client.set_connection_timeout(0, endpoint.timeout_ms * 1000);
    client.set_read_timeout(endpoint.timeout_ms / 1000, (endpoint.timeout_ms % 1000) * 1000);

    std::string last_error;
    for (int attempt = 0; attempt <= endpoint.retries; ++attempt) {
        auto res = client.Post("/v1/logits", payload, "application/json");
        if (!res) {
            last_error = "no response from " + endpoint.base_url;
            continue;
        }
        if (res->status != 200) {
            throw ModelError("server returned status " + std::to_string(res->status) +
                             ": " + res->body);
        }
        nlohmann::json reply = nlohmann::json::parse(res->body, nullptr, false);
        if (reply.is_discarded() || !reply.contains("logits") || !reply["logits"].is_array()) {
            throw ProtocolError("response is not a {\"logits\": [...]} object");
        }
        const auto &arr = reply["logits"];
        if (arr.size() != vocab.size()) {
            throw ProtocolError("expected " + std::to_string(vocab.size()) +
                                " logits, got " + std::to_string(arr.size()));
        }
        std::vector<double> scores;
        scores.reserve(arr.size());
        for (const auto &v : arr) {
            if (!v.is_number()) throw ProtocolError("non-numeric logit entry");
            const double d = v.get<double>();
            if (!std::isfinite(d)) throw ProtocolError("non-finite logit entry");
            scores.push_back(d);
        }
        return LogitVector(std::move(scores));
    }
    throw TransportError(last_error);
}

RemoteModel::RemoteModel(RemoteEndpoint endpoint, Vocabulary vocab)
    : endpoint_(std::move(endpoint)), vocab_(std::move(vocab)) {
    if (endpoint_.timeout_ms <= 0) throw RangeError("timeout_ms");
}

LogitVector RemoteModel::next_logits(const GenerationContext &ctx) const {
    ctx.validate_against(vocab_);
    return remote_next_logits(endpoint_, vocab_, ctx);
}

// ---------------------------------------------------------------------------

std::pair<LogitVector, LogitVector>
dual_pathway_logits(const ModelAdapter &model, const GenerationContext &ctx,
                    std::uint64_t shuffle_seed, bool shuffle_enabled) {
    LogitVector l_std = model.next_logits(ctx);
    if (!ctx.image || !shuffle_enabled) {
        // Text-only (or shuffle disabled): the conflict pathway sees the
        // identical context. Still one separate call, keeping the call
        // budget uniform.
        LogitVector l_conf = model.next_logits(ctx);
        return {std::move(l_std), std::move(l_conf)};
    }
    GenerationContext shuffled = ctx;
    const Permutation perm = permutation_from_seed(ctx.image->patch_count(), shuffle_seed);
    shuffled.image = shuffle_patches(*ctx.image, perm);
    LogitVector l_conf = model.next_logits(shuffled);
    return {std::move(l_std), std::move(l_conf)};
}

std::unique_ptr<ModelAdapter> open_model(const std::string &uri) {
    if (uri.rfind("scripted:", 0) == 0) {
        return std::make_unique<ScriptedModel>(ScriptedModelSpec::load_file(uri.substr(9)));
    }
    if (uri.rfind("remote:", 0) == 0) {
        const std::string rest = uri.substr(7);
        const std::size_t at = rest.rfind('@');
        if (at == std::string::npos) {
            throw ConfigError("remote model URI needs a vocabulary: remote:<url>@<vocab path>");
        }
        RemoteEndpoint ep;
        ep.base_url = rest.substr(0, at);
        return std::make_unique<RemoteModel>(ep, Vocabulary::load_file(rest.substr(at + 1)));
    }
    throw ConfigError("unknown model URI scheme: " + uri +
                      " (expected scripted:<path> or remote:<url>@<vocab>)");
}

} // namespace rpgd
