#pragma once

#include "rpgd/core.hpp"
#include "rpgd/vision.hpp"

#include <atomic>
#include <memory>
#include <optional>
#include <string>
#include <unordered_map>
#include <vector>

namespace rpgd {

inline constexpr const char *kPivotOpen = "<RPivot>";
inline constexpr const char *kPivotClose = "</RPivot>";
inline constexpr const char *kUnkToken = "<unk>";
inline constexpr const char *kEosToken = "</s>";

// Ordered list of distinct token strings. The pivot marker pair must be
// present exactly once; <unk> and </s> are conventional and optional.
class Vocabulary {
public:
    explicit Vocabulary(std::vector<std::string> tokens);

    std::size_t size() const { return tokens_.size(); }
    const std::string &token(TokenId id) const;
    std::optional<TokenId> id_of(const std::string &token) const;

    std::optional<TokenId> unk_id() const { return unk_id_; }
    std::optional<TokenId> eos_id() const { return eos_id_; }
    TokenId pivot_open_id() const { return pivot_open_id_; }
    TokenId pivot_close_id() const { return pivot_close_id_; }

    // Whitespace-and-punctuation tokenizer: words split on whitespace,
    // punctuation characters become single-char tokens, special tokens
    // (<RPivot>, </RPivot>, <unk>, </s>) match verbatim. Unknown words map
    // to <unk>; without an <unk> entry they raise VocabMismatch.
    std::vector<TokenId> tokenize(const std::string &text) const;

    // Inverse of tokenize for display: tokens joined by single spaces,
    // skipping </s>.
    std::string detokenize(const std::vector<TokenId> &ids) const;

    // One token per line, UTF-8, line number = id.
    static Vocabulary load_file(const std::string &path);
    void save_file(const std::string &path) const;

private:
    std::vector<std::string> tokens_;
    std::unordered_map<std::string, TokenId> index_;
    std::optional<TokenId> unk_id_;
    std::optional<TokenId> eos_id_;
    TokenId pivot_open_id_ = -1;
    TokenId pivot_close_id_ = -1;
};

// Everything a model sees when asked for next-token logits.
struct GenerationContext {
    std::vector<TokenId> prompt_tokens;
    std::vector<TokenId> generated_tokens;
    std::optional<PatchGrid> image;

    std::vector<TokenId> all_tokens() const;
    void validate_against(const Vocabulary &vocab) const;
};

// Produces next-token logits for (text, image) contexts. Implementations
// must be safe for concurrent read-only use across decode sessions.
class ModelAdapter {
public:
    virtual ~ModelAdapter() = default;
    virtual const Vocabulary &vocab() const = 0;
    virtual LogitVector next_logits(const GenerationContext &ctx) const = 0;
};

// One rule of a scripted model: matches when the context's token string
// sequence ends with `suffix` and, if `image` is set, the context image
// equals it exactly. First matching rule wins.
struct ScriptedRule {
    std::vector<std::string> suffix;
    std::optional<PatchGrid> image;
    LogitVector logits;
};

struct ScriptedModelSpec {
    std::vector<std::string> vocabulary;
    std::vector<ScriptedRule> rules;
    LogitVector default_logits;
    // Busy-wait floor per call, emulating forward-pass cost for latency
    // experiments. 0 disables it.
    std::int64_t min_call_ns = 0;

    std::string to_json() const;
    static ScriptedModelSpec from_json(const std::string &json_text);
    static ScriptedModelSpec load_file(const std::string &path);
    void save_file(const std::string &path) const;
};

// Deterministic rule-dispatch model. Referentially transparent: the same
// context always yields the same logits.
class ScriptedModel : public ModelAdapter {
public:
    explicit ScriptedModel(ScriptedModelSpec spec);

    const Vocabulary &vocab() const override { return vocab_; }
    LogitVector next_logits(const GenerationContext &ctx) const override;

private:
    ScriptedModelSpec spec_;
    Vocabulary vocab_;
};

struct RemoteEndpoint {
    std::string base_url;
    int timeout_ms = 5000;
    int retries = 2;
};

// Wire client for a remote inference server.
//   POST /v1/logits  {"tokens":[int], "patches":[[double]]|null, "shuffle_seed":int|null}
//   response         {"logits":[double]}  with exactly V entries
class RemoteModel : public ModelAdapter {
public:
    RemoteModel(RemoteEndpoint endpoint, Vocabulary vocab);

    const Vocabulary &vocab() const override { return vocab_; }
    LogitVector next_logits(const GenerationContext &ctx) const override;

private:
    RemoteEndpoint endpoint_;
    Vocabulary vocab_;
};

LogitVector remote_next_logits(const RemoteEndpoint &endpoint, const Vocabulary &vocab,
                               const GenerationContext &ctx);

// Pass-through wrapper that counts adapter calls; used to verify the
// model-call budget of each decoding method.
class CountingAdapter : public ModelAdapter {
public:
    explicit CountingAdapter(const ModelAdapter &inner) : inner_(inner) {}

    const Vocabulary &vocab() const override { return inner_.vocab(); }
    LogitVector next_logits(const GenerationContext &ctx) const override {
        calls_.fetch_add(1, std::memory_order_relaxed);
        return inner_.next_logits(ctx);
    }
    std::int64_t calls() const { return calls_.load(std::memory_order_relaxed); }
    void reset() { calls_.store(0, std::memory_order_relaxed); }

private:
    const ModelAdapter &inner_;
    mutable std::atomic<std::int64_t> calls_{0};
};

// Standard and conflict-dominant pathway logits for one step. The conflict
// pathway sees the same text with the image patches permuted by the seeded
// shuffle; a single-patch image shuffles to itself. Text-only contexts fall
// back to the identical context, which makes the contrast a mild uniform
// damping. Exactly two adapter calls.
std::pair<LogitVector, LogitVector>
dual_pathway_logits(const ModelAdapter &model, const GenerationContext &ctx,
                    std::uint64_t shuffle_seed, bool shuffle_enabled = true);

// Model URI: "scripted:<spec.json path>" or "remote:<base url>". Remote
// models need the vocabulary file next to the URI: "remote:<url>@<vocab path>".
std::unique_ptr<ModelAdapter> open_model(const std::string &uri);

} // namespace rpgd
