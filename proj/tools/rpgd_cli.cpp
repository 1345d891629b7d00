// Command-line front end: decode a corpus with a chosen method, synthesize
// conflict corpora, score results into reports, and inspect decode traces.

#include "rpgd/corpus.hpp"
#include "rpgd/decoder.hpp"
#include "rpgd/eval.hpp"
#include "rpgd/synth.hpp"

#include <CLI11.hpp>
#include <nlohmann/json.hpp>

#include <fstream>
#include <iostream>
#include <map>
#include <sstream>
#include <thread>

namespace {

using namespace rpgd;

std::string read_file(const std::string &path) {
    std::ifstream in(path);
    if (!in) throw FormatError("cannot open file: " + path);
    std::ostringstream buf;
    buf << in.rdbuf();
    return buf.str();
}

void write_file(const std::string &path, const std::string &content) {
    std::ofstream out(path);
    if (!out) throw FormatError("cannot write file: " + path);
    out << content;
}

// ---------------------------------------------------------------------------
// decode
// ---------------------------------------------------------------------------

struct DecodeArgs {
    std::string corpus;
    std::string model_uri;
    std::string method = "greedy";
    std::string config_path;
    std::string out_path;
    std::string trace_out;
    int trace_top_k = 5;
    std::uint64_t seed = 0;
    bool seed_given = false;
    int jobs = 1;
    std::size_t k = 5;
};

int run_decode(const DecodeArgs &args) {
    DecodeConfig cfg;
    if (!args.config_path.empty()) cfg = load_config_file(args.config_path);
    if (args.seed_given) cfg.rng_seed = args.seed;
    if (!args.trace_out.empty()) cfg.full_trace = true;
    validate_config(cfg);

    const MethodSpec method = MethodSpec::parse(args.method);
    const auto model = open_model(args.model_uri);
    const std::vector<ConflictSample> corpus = load_corpus(args.corpus, args.k);

    struct Row {
        std::string result_line;
        std::string trace_lines;
    };
    std::vector<Row> rows(corpus.size());
    auto work = [&](std::size_t begin, std::size_t end) {
        for (std::size_t i = begin; i < end; ++i) {
            const ConflictSample &sample = corpus[i];
            const CountingAdapter counted(*model);
            const std::uint64_t shuffle_seed = sample_shuffle_seed(cfg.rng_seed, sample.sample_id);
            GenerationContext ctx = build_context(sample, model->vocab());
            DecodeResult result;
            switch (method.kind) {
            case MethodSpec::Kind::Greedy:
                result = greedy_decode(counted, ctx, cfg);
                break;
            case MethodSpec::Kind::Rpgd:
                result = rpgd_decode(counted, ctx, sample_pivot_token_set(sample, model->vocab()),
                                     cfg, shuffle_seed);
                break;
            case MethodSpec::Kind::Linear:
                result = linear_contrast_decode(counted, ctx, method.lambda, cfg, shuffle_seed);
                break;
            }
            std::int64_t total_ns = 0;
            for (const auto &step : result.trace.steps) total_ns += step.time_ns;
            nlohmann::json line;
            line["sample_id"] = sample.sample_id;
            line["method"] = method.name;
            line["tokens"] = result.tokens;
            line["text"] = result.text;
            line["steps"] = result.tokens.size();
            line["model_calls"] = counted.calls();
            line["timing"] = {{"total_ns", total_ns},
                              {"per_token_ns",
                               result.tokens.empty()
                                   ? 0.0
                                   : static_cast<double>(total_ns) /
                                         static_cast<double>(result.tokens.size())}};
            rows[i].result_line = line.dump();
            if (!args.trace_out.empty()) {
                rows[i].trace_lines =
                    trace_to_jsonl(result.trace, model->vocab(), args.trace_top_k,
                                   sample.sample_id);
            }
        }
    };
    if (args.jobs <= 1) {
        work(0, corpus.size());
    } else {
        std::vector<std::thread> pool;
        const std::size_t stride =
            (corpus.size() + static_cast<std::size_t>(args.jobs) - 1) /
            static_cast<std::size_t>(args.jobs);
        for (int t = 0; t < args.jobs; ++t) {
            const std::size_t begin = static_cast<std::size_t>(t) * stride;
            if (begin >= corpus.size()) break;
            pool.emplace_back(work, begin, std::min(corpus.size(), begin + stride));
        }
        for (auto &th : pool) th.join();
    }

    std::ostringstream out;
    for (const auto &row : rows) out << row.result_line << "\n";
    write_file(args.out_path, out.str());
    if (!args.trace_out.empty()) {
        std::ostringstream traces;
        for (const auto &row : rows) traces << row.trace_lines;
        write_file(args.trace_out, traces.str());
    }
    std::cerr << "decoded " << corpus.size() << " samples with " << method.name << " -> "
              << args.out_path << "\n";
    return 0;
}

// ---------------------------------------------------------------------------
// synth
// ---------------------------------------------------------------------------

struct SynthArgs {
    std::string corpus;
    std::string out_path;
    std::string rejected_out;
    std::string sft_out;
    std::string client = "mock";
    std::string endpoint;
    std::string templates_dir = "templates";
    std::uint64_t seed = 0;
    std::size_t k = 5;
};

// Category of the gold value: the candidate entry matching it, else the
// first candidate's category.
std::string gold_category(const std::vector<CounterfactualCandidate> &candidates,
                          const std::string &pivot_surface) {
    for (const auto &c : candidates) {
        if (c.value == pivot_surface) return c.category;
    }
    return candidates.front().category;
}

int run_synth(const SynthArgs &args) {
    const std::vector<ConflictSample> corpus = load_corpus(args.corpus, args.k);

    std::unique_ptr<RewriterClient> rewriter;
    std::unique_ptr<ScorerClient> scorer;
    if (args.client == "mock") {
        rewriter = std::make_unique<MockRewriter>();
        scorer = std::make_unique<MockScorer>();
    } else if (args.client == "remote") {
        if (args.endpoint.empty()) throw ConfigError("remote client needs --endpoint");
        rewriter = std::make_unique<RemoteRewriter>(
            args.endpoint, read_file(args.templates_dir + "/rewrite_prompt.txt"));
        scorer = std::make_unique<RemoteScorer>(
            args.endpoint, read_file(args.templates_dir + "/score_prompt.txt"));
    } else {
        throw ConfigError("unknown client: " + args.client + " (expected mock or remote)");
    }

    std::ostringstream retained_out, rejected_out, sft_out;
    std::size_t retained = 0, rejected = 0, skipped = 0;
    for (const ConflictSample &base : corpus) {
        const std::uint64_t sample_seed =
            args.seed ^ fnv1a64(base.sample_id.data(), base.sample_id.size());
        SplitMix64 rng(sample_seed);

        // Pick the substitution shape: none, a non-answer pivot, or the
        // answer pivot. Falls back to none when the target pivot has no
        // candidates or no annotated occurrence.
        const std::uint64_t shape = rng.next_below(3);
        std::vector<Substitution> subs;
        if (shape != 0) {
            std::string target;
            if (shape == 2) {
                target = base.chain.answer;
            } else {
                for (const auto &[pivot, list] : base.candidates) {
                    if (pivot != base.chain.answer && !list.empty()) {
                        target = pivot;
                        break;
                    }
                }
            }
            auto cand_it = base.candidates.find(target);
            const SpanAnnotation *ann = nullptr;
            for (const auto &a : base.annotations) {
                if (a.pivot_id == target) {
                    ann = &a;
                    break;
                }
            }
            if (!target.empty() && cand_it != base.candidates.end() &&
                !cand_it->second.empty() && ann != nullptr) {
                const std::string pivot_surface = base.passages[ann->passage_index].substr(
                    ann->start, ann->end - ann->start);
                std::vector<std::pair<std::string, std::string>> options;
                for (const auto &c : cand_it->second) options.emplace_back(c.value, c.category);
                try {
                    const std::string replacement_surface = select_counterfactual(
                        pivot_surface, options,
                        gold_category(cand_it->second, pivot_surface), rng.next_u64());
                    std::string reference;
                    for (const auto &c : cand_it->second) {
                        if (c.value == replacement_surface) reference = c.reference;
                    }
                    if (reference.empty()) {
                        reference = "Reference facts about " + replacement_surface + ".";
                    }
                    RewriteRequest req{base.passages[ann->passage_index], pivot_surface,
                                       replacement_surface, reference,
                                       default_demonstrations()};
                    subs.push_back({ann->passage_index, target, std::move(req)});
                } catch (const NoCandidate &) {
                    // fall through to a no-substitution build
                }
            }
        }

        try {
            const BuildOutcome outcome =
                build_sample(base, subs, *rewriter, *scorer, sample_seed);
            if (outcome.retained) {
                retained_out << outcome.sample.to_json() << "\n";
                if (!args.sft_out.empty()) {
                    nlohmann::json sft;
                    sft["sample_id"] = outcome.sample.sample_id;
                    sft["target"] = sft_target(outcome.sample);
                    sft_out << sft.dump() << "\n";
                }
                ++retained;
            } else {
                nlohmann::json rej;
                rej["sample_id"] = base.sample_id;
                rej["scores"] = outcome.scores;
                rejected_out << rej.dump() << "\n";
                ++rejected;
            }
        } catch (const Error &e) {
            std::cerr << "skipping " << base.sample_id << ": " << e.what() << "\n";
            ++skipped;
        }
    }
    write_file(args.out_path, retained_out.str());
    if (!args.rejected_out.empty()) write_file(args.rejected_out, rejected_out.str());
    if (!args.sft_out.empty()) write_file(args.sft_out, sft_out.str());
    std::cerr << "synth: " << retained << " retained, " << rejected << " rejected, " << skipped
              << " skipped -> " << args.out_path << "\n";
    return 0;
}

// ---------------------------------------------------------------------------
// eval
// ---------------------------------------------------------------------------

struct EvalArgs {
    std::vector<std::string> results;
    std::string gold;
    std::string report_path;
    std::string csv_path;
    std::string discrimination;
    bool strip_timing = false;
    std::size_t k = 5;
};

int run_eval(const EvalArgs &args) {
    const std::vector<ConflictSample> corpus = load_corpus(args.gold, args.k);
    std::map<std::string, const ConflictSample *> by_id;
    for (const auto &s : corpus) by_id[s.sample_id] = &s;

    EvalReport report;
    {
        std::string inputs = "gold=" + args.gold;
        for (const auto &path : args.results) inputs += " results=" + path;
        report.config_text = inputs;
    }
    std::map<std::string, MethodStats> stats;
    std::map<std::string, std::vector<double>> latencies;
    struct Row {
        SampleVerdict verdict;
        double per_token_ns = 0.0;
    };
    std::vector<Row> rows;
    for (const auto &path : args.results) {
        std::ifstream in(path);
        if (!in) throw FormatError("cannot open results: " + path);
        std::string line;
        int lineno = 0;
        while (std::getline(in, line)) {
            ++lineno;
            if (line.empty()) continue;
            nlohmann::json j = nlohmann::json::parse(line, nullptr, false);
            if (j.is_discarded()) {
                throw FormatError(path + ":" + std::to_string(lineno) + ": bad JSON");
            }
            Row row;
            row.verdict.sample_id = j.at("sample_id").get<std::string>();
            row.verdict.method = j.at("method").get<std::string>();
            row.verdict.text = j.at("text").get<std::string>();
            row.verdict.steps = j.value("steps", 0);
            row.verdict.model_calls = j.value("model_calls", std::int64_t{0});
            auto it = by_id.find(row.verdict.sample_id);
            if (it == by_id.end()) {
                throw FormatError("result for unknown sample: " + row.verdict.sample_id);
            }
            row.verdict.correct = exact_match(row.verdict.text, it->second->answer);
            if (j.contains("timing")) {
                row.verdict.total_ns = j["timing"].value("total_ns", std::int64_t{0});
                row.per_token_ns = j["timing"].value("per_token_ns", 0.0);
            }
            rows.push_back(std::move(row));
        }
    }
    if (rows.empty()) throw ConfigError("no result rows to score");

    std::sort(rows.begin(), rows.end(), [](const Row &a, const Row &b) {
        if (a.verdict.method != b.verdict.method) return a.verdict.method < b.verdict.method;
        return a.verdict.sample_id < b.verdict.sample_id;
    });
    for (const auto &row : rows) {
        report.verdicts.push_back(row.verdict);
        MethodStats &s = stats[row.verdict.method];
        s.method = row.verdict.method;
        ++s.samples;
        s.accuracy += row.verdict.correct ? 1.0 : 0.0;
        s.model_calls += row.verdict.model_calls;
        if (row.per_token_ns > 0.0) latencies[row.verdict.method].push_back(row.per_token_ns);
    }
    for (auto &[name, s] : stats) {
        s.accuracy = s.samples > 0 ? s.accuracy / static_cast<double>(s.samples) : 0.0;
        auto &lat = latencies[name];
        std::sort(lat.begin(), lat.end());
        if (!lat.empty()) {
            const std::size_t mid = lat.size() / 2;
            s.median_per_token_ns =
                lat.size() % 2 == 1 ? lat[mid] : (lat[mid - 1] + lat[mid]) / 2.0;
        }
    }
    const double greedy_latency =
        stats.count("greedy") ? stats["greedy"].median_per_token_ns : 0.0;
    for (auto &[name, s] : stats) {
        s.latency_ratio_vs_greedy =
            greedy_latency > 0.0 ? s.median_per_token_ns / greedy_latency : 0.0;
        report.methods.push_back(s);
    }

    if (!args.discrimination.empty()) {
        std::ifstream in(args.discrimination);
        if (!in) throw FormatError("cannot open discrimination file: " + args.discrimination);
        std::vector<std::pair<std::string, bool>> predictions;
        std::string line;
        while (std::getline(in, line)) {
            if (line.empty()) continue;
            nlohmann::json j = nlohmann::json::parse(line);
            predictions.emplace_back(j.at("sample_id").get<std::string>(),
                                     j.at("pred").get<bool>());
        }
        report.discrimination = score_discrimination(corpus, predictions);
    }

    write_file(args.report_path, report.to_json(!args.strip_timing));
    if (!args.csv_path.empty()) write_file(args.csv_path, report.verdicts_csv());
    std::cout << report.to_text();
    return 0;
}

// ---------------------------------------------------------------------------
// trace-dump
// ---------------------------------------------------------------------------

struct TraceDumpArgs {
    std::string trace_path;
    int step = -1;
    std::string sample_id;
};

int run_trace_dump(const TraceDumpArgs &args) {
    std::ifstream in(args.trace_path);
    if (!in) throw FormatError("cannot open trace: " + args.trace_path);
    std::string line;
    std::size_t shown = 0;
    while (std::getline(in, line)) {
        if (line.empty()) continue;
        nlohmann::json j = nlohmann::json::parse(line);
        if (args.step >= 0 && j.value("step", -1) != args.step) continue;
        if (!args.sample_id.empty() && j.value("sample_id", "") != args.sample_id) continue;
        std::cout << j.dump(2) << "\n";
        ++shown;
    }
    std::cerr << shown << " trace record(s)\n";
    return 0;
}

} // namespace

int main(int argc, char **argv) {
    CLI::App app{"conflict-aware contrastive decoding engine"};
    app.require_subcommand(1);

    DecodeArgs decode_args;
    auto *decode = app.add_subcommand("decode", "decode a corpus with one method");
    decode->add_option("--corpus", decode_args.corpus, "corpus JSONL")->required();
    decode->add_option("--model", decode_args.model_uri,
                       "model URI: scripted:<spec.json> or remote:<url>@<vocab>")
        ->required();
    decode->add_option("--method", decode_args.method, "greedy | rpgd | linear:<lambda>");
    decode->add_option("--config", decode_args.config_path, "decode config file");
    auto *seed_opt = decode->add_option("--seed", decode_args.seed, "override rng_seed");
    decode->add_option("--out", decode_args.out_path, "results JSONL")->required();
    decode->add_option("--jobs", decode_args.jobs, "parallel samples");
    decode->add_option("--trace-out", decode_args.trace_out, "step trace JSONL");
    decode->add_option("--trace-top-k", decode_args.trace_top_k, "top-k logits per trace record");
    decode->add_option("--k", decode_args.k, "passages per sample");

    SynthArgs synth_args;
    auto *synth = app.add_subcommand("synth", "synthesize a conflict corpus");
    synth->add_option("--corpus", synth_args.corpus, "base corpus JSONL")->required();
    synth->add_option("--seed", synth_args.seed, "pipeline seed");
    synth->add_option("--client", synth_args.client, "mock | remote");
    synth->add_option("--endpoint", synth_args.endpoint, "remote client base URL");
    synth->add_option("--templates", synth_args.templates_dir, "prompt template directory");
    synth->add_option("--out", synth_args.out_path, "retained samples JSONL")->required();
    synth->add_option("--rejected-out", synth_args.rejected_out, "rejection records JSONL");
    synth->add_option("--sft-out", synth_args.sft_out, "training-target JSONL");
    synth->add_option("--k", synth_args.k, "passages per sample");

    EvalArgs eval_args;
    auto *eval = app.add_subcommand("eval", "score decode results into a report");
    eval->add_option("--results", eval_args.results, "results JSONL (repeatable)")->required();
    eval->add_option("--gold", eval_args.gold, "gold corpus JSONL")->required();
    eval->add_option("--report", eval_args.report_path, "report JSON")->required();
    eval->add_option("--csv", eval_args.csv_path, "per-sample verdicts CSV");
    eval->add_option("--discrimination", eval_args.discrimination,
                     "conflict predictions JSONL ({sample_id, pred})");
    eval->add_flag("--strip-timing", eval_args.strip_timing,
                   "omit the timing section for byte-reproducible reports");
    eval->add_option("--k", eval_args.k, "passages per sample");

    TraceDumpArgs trace_args;
    auto *trace = app.add_subcommand("trace-dump", "print decode trace records");
    trace->add_option("--trace", trace_args.trace_path, "trace JSONL")->required();
    trace->add_option("--step", trace_args.step, "only this step");
    trace->add_option("--sample", trace_args.sample_id, "only this sample");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError &e) {
        const int code = app.exit(e);
        return code == 0 ? 0 : 1;
    }

    decode_args.seed_given = seed_opt->count() > 0;
    try {
        if (decode->parsed()) return run_decode(decode_args);
        if (synth->parsed()) return run_synth(synth_args);
        if (eval->parsed()) return run_eval(eval_args);
        if (trace->parsed()) return run_trace_dump(trace_args);
    } catch (const std::exception &e) {
        std::cerr << "error: " << e.what() << "\n";
        return 2;
    }
    return 1;
}
