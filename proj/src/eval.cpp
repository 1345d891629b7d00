#include "rpgd/eval.hpp"

#include <nlohmann/json.hpp>

#include <algorithm>
#include <cctype>
#include <cmath>
#include <map>
#include <sstream>
#include <thread>

namespace rpgd {

ConfusionCounts confusion(const std::vector<bool> &pred, const std::vector<bool> &gold) {
    if (pred.size() != gold.size()) throw LengthMismatch("confusion", pred.size(), gold.size());
    ConfusionCounts c;
    for (std::size_t i = 0; i < pred.size(); ++i) {
        if (pred[i] && gold[i]) ++c.tp;
        else if (pred[i] && !gold[i]) ++c.fp;
        else if (!pred[i] && gold[i]) ++c.fn;
        else ++c.tn;
    }
    return c;
}

double mcc(const ConfusionCounts &c) {
    const double tp = static_cast<double>(c.tp), tn = static_cast<double>(c.tn);
    const double fp = static_cast<double>(c.fp), fn = static_cast<double>(c.fn);
    const double d1 = tp + fp, d2 = tp + fn, d3 = tn + fp, d4 = tn + fn;
    if (d1 == 0.0 || d2 == 0.0 || d3 == 0.0 || d4 == 0.0) return 0.0;
    return (tp * tn - fp * fn) / std::sqrt(d1 * d2 * d3 * d4);
}

double f1(const ConfusionCounts &c) {
    const double tp = static_cast<double>(c.tp);
    const double denom = 2.0 * tp + static_cast<double>(c.fp) + static_cast<double>(c.fn);
    if (denom == 0.0) return 0.0;
    return 2.0 * tp / denom;
}

double balanced_accuracy(const ConfusionCounts &c) {
    const double pos = static_cast<double>(c.tp + c.fn);
    const double neg = static_cast<double>(c.tn + c.fp);
    const double tpr = pos > 0.0 ? static_cast<double>(c.tp) / pos : 0.0;
    const double tnr = neg > 0.0 ? static_cast<double>(c.tn) / neg : 0.0;
    return (tpr + tnr) / 2.0;
}

double span_f1(const std::vector<PivotSpan> &pred, const std::vector<PivotSpan> &gold) {
    if (pred.empty() && gold.empty()) return 1.0;
    if (pred.empty() || gold.empty()) return 0.0;
    std::vector<bool> used(gold.size(), false);
    std::size_t matched = 0;
    for (const auto &p : pred) {
        const std::string p_surface = normalize_value(p.surface);
        for (std::size_t i = 0; i < gold.size(); ++i) {
            if (used[i]) continue;
            if (gold[i].passage_id == p.passage_id &&
                normalize_value(gold[i].surface) == p_surface) {
                used[i] = true;
                ++matched;
                break;
            }
        }
    }
    const double precision = static_cast<double>(matched) / static_cast<double>(pred.size());
    const double recall = static_cast<double>(matched) / static_cast<double>(gold.size());
    if (precision + recall == 0.0) return 0.0;
    return 2.0 * precision * recall / (precision + recall);
}

std::string normalize_answer(const std::string &text) {
    std::string spaced;
    spaced.reserve(text.size());
    for (char ch : text) {
        const unsigned char c = static_cast<unsigned char>(ch);
        if (std::isalnum(c) || (c & 0x80)) {
            spaced += static_cast<char>(std::tolower(c));
        } else {
            spaced += ' ';
        }
    }
    std::istringstream in(spaced);
    std::string word, out;
    while (in >> word) {
        if (word == "a" || word == "an" || word == "the") continue;
        if (!out.empty()) out += ' ';
        out += word;
    }
    return out;
}

bool exact_match(const std::string &text, const std::string &gold) {
    return normalize_answer(text) == normalize_answer(gold);
}

MethodSpec MethodSpec::parse(const std::string &text) {
    if (text == "greedy") return {"greedy", Kind::Greedy, 0.0};
    if (text == "rpgd") return {"rpgd", Kind::Rpgd, 0.0};
    if (text.rfind("linear:", 0) == 0) {
        const std::string rest = text.substr(7);
        try {
            std::size_t pos = 0;
            const double lambda = std::stod(rest, &pos);
            if (pos != rest.size() || lambda < 0.0) throw std::invalid_argument(rest);
            return {text, Kind::Linear, lambda};
        } catch (const std::exception &) {
            throw ConfigError("bad linear method spec: " + text);
        }
    }
    throw ConfigError("unknown method: " + text + " (expected greedy, rpgd or linear:<l>)");
}

namespace {

double median(std::vector<double> values) {
    if (values.empty()) return 0.0;
    std::sort(values.begin(), values.end());
    const std::size_t mid = values.size() / 2;
    if (values.size() % 2 == 1) return values[mid];
    return (values[mid - 1] + values[mid]) / 2.0;
}

struct CellResult {
    SampleVerdict verdict;
    bool failed = false;
    double per_token_ns = 0.0;
};

CellResult decode_one(const ConflictSample &sample, const ModelAdapter &model,
                      const MethodSpec &method, const DecodeConfig &cfg,
                      const AnswerScorer &scorer) {
    CellResult cell;
    cell.verdict.sample_id = sample.sample_id;
    cell.verdict.method = method.name;
    try {
        const CountingAdapter counted(model);
        const std::uint64_t shuffle_seed = sample_shuffle_seed(cfg.rng_seed, sample.sample_id);
        GenerationContext ctx = build_context(sample, model.vocab());
        DecodeResult result;
        switch (method.kind) {
        case MethodSpec::Kind::Greedy:
            result = greedy_decode(counted, ctx, cfg);
            break;
        case MethodSpec::Kind::Rpgd: {
            const PivotTokenSet pivots = sample_pivot_token_set(sample, model.vocab());
            result = rpgd_decode(counted, ctx, pivots, cfg, shuffle_seed);
            break;
        }
        case MethodSpec::Kind::Linear:
            result = linear_contrast_decode(counted, ctx, method.lambda, cfg, shuffle_seed);
            break;
        }
        cell.verdict.text = result.text;
        cell.verdict.correct = scorer(result.text, sample.answer);
        cell.verdict.steps = static_cast<int>(result.tokens.size());
        cell.verdict.model_calls = counted.calls();
        std::int64_t total = 0;
        for (const auto &step : result.trace.steps) total += step.time_ns;
        cell.verdict.total_ns = total;
        cell.per_token_ns = result.tokens.empty()
                                ? 0.0
                                : static_cast<double>(total) /
                                      static_cast<double>(result.tokens.size());
    } catch (const std::exception &e) {
        cell.failed = true;
        cell.verdict.text = std::string("<error: ") + e.what() + ">";
    }
    return cell;
}

} // namespace

EvalReport run_experiment(const std::vector<ConflictSample> &corpus, const ModelAdapter &model,
                          const std::vector<MethodSpec> &methods, const DecodeConfig &cfg,
                          int jobs, const AnswerScorer &scorer) {
    if (corpus.empty()) throw ConfigError("corpus is empty");
    if (methods.empty()) throw ConfigError("methods list is empty");
    if (jobs < 1) throw RangeError("jobs");
    validate_config(cfg);

    // Row-major grid: sample-major so parallel workers split by sample.
    const std::size_t n = corpus.size();
    std::vector<CellResult> grid(n * methods.size());
    auto work = [&](std::size_t begin, std::size_t end) {
        for (std::size_t i = begin; i < end; ++i) {
            for (std::size_t m = 0; m < methods.size(); ++m) {
                grid[i * methods.size() + m] =
                    decode_one(corpus[i], model, methods[m], cfg, scorer);
            }
        }
    };
    if (jobs == 1) {
        work(0, n);
    } else {
        std::vector<std::thread> pool;
        const std::size_t stride = (n + static_cast<std::size_t>(jobs) - 1) /
                                   static_cast<std::size_t>(jobs);
        for (int t = 0; t < jobs; ++t) {
            const std::size_t begin = static_cast<std::size_t>(t) * stride;
            if (begin >= n) break;
            pool.emplace_back(work, begin, std::min(n, begin + stride));
        }
        for (auto &th : pool) th.join();
    }

    // Deterministic fold ordered by sample id.
    std::vector<std::size_t> order(n);
    for (std::size_t i = 0; i < n; ++i) order[i] = i;
    std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
        return corpus[a].sample_id < corpus[b].sample_id;
    });

    EvalReport report;
    report.seed = cfg.rng_seed;
    report.config_text = serialize_config(cfg);
    std::map<std::string, std::vector<double>> latencies;
    std::map<std::string, MethodStats> stats;
    for (const auto &m : methods) {
        stats[m.name] = MethodStats{m.name, 0, 0, 0.0, 0, 0.0, 0.0};
    }
    for (std::size_t i : order) {
        for (std::size_t m = 0; m < methods.size(); ++m) {
            const CellResult &cell = grid[i * methods.size() + m];
            report.verdicts.push_back(cell.verdict);
            MethodStats &s = stats[methods[m].name];
            ++s.samples;
            if (cell.failed) {
                ++s.failures;
                continue;
            }
            s.accuracy += cell.verdict.correct ? 1.0 : 0.0;
            s.model_calls += cell.verdict.model_calls;
            if (cell.per_token_ns > 0.0) latencies[methods[m].name].push_back(cell.per_token_ns);
        }
    }
    for (const auto &m : methods) {
        MethodStats &s = stats[m.name];
        const std::size_t scored = s.samples - s.failures;
        s.accuracy = scored > 0 ? s.accuracy / static_cast<double>(scored) : 0.0;
        s.median_per_token_ns = median(latencies[m.name]);
    }
    double greedy_latency = 0.0;
    for (const auto &m : methods) {
        if (m.kind == MethodSpec::Kind::Greedy) {
            greedy_latency = stats[m.name].median_per_token_ns;
            break;
        }
    }
    for (const auto &m : methods) {
        MethodStats &s = stats[m.name];
        s.latency_ratio_vs_greedy =
            greedy_latency > 0.0 ? s.median_per_token_ns / greedy_latency : 0.0;
        report.methods.push_back(s);
    }
    return report;
}

ConfusionCounts score_discrimination(const std::vector<ConflictSample> &corpus,
                                     const std::vector<std::pair<std::string, bool>> &predictions) {
    std::map<std::string, bool> gold;
    for (const auto &s : corpus) gold[s.sample_id] = s.label != ConflictLabel::NoConflict;
    std::vector<bool> pred_v, gold_v;
    for (const auto &[id, pred] : predictions) {
        auto it = gold.find(id);
        if (it == gold.end()) throw FormatError("prediction for unknown sample: " + id);
        pred_v.push_back(pred);
        gold_v.push_back(it->second);
    }
    return confusion(pred_v, gold_v);
}

std::string EvalReport::to_json(bool include_timing) const {
    nlohmann::json body;
    body["seed"] = seed;
    body["config"] = config_text;
    nlohmann::json methods_json = nlohmann::json::array();
    for (const auto &m : methods) {
        methods_json.push_back({{"method", m.method},
                                {"samples", m.samples},
                                {"failures", m.failures},
                                {"accuracy", m.accuracy},
                                {"model_calls", m.model_calls}});
    }
    body["methods"] = std::move(methods_json);
    nlohmann::json verdicts_json = nlohmann::json::array();
    for (const auto &v : verdicts) {
        verdicts_json.push_back({{"sample_id", v.sample_id},
                                 {"method", v.method},
                                 {"text", v.text},
                                 {"correct", v.correct},
                                 {"steps", v.steps}});
    }
    body["verdicts"] = std::move(verdicts_json);
    if (discrimination) {
        const ConfusionCounts &c = *discrimination;
        body["discrimination"] = {{"tp", c.tp},         {"tn", c.tn},
                                  {"fp", c.fp},         {"fn", c.fn},
                                  {"mcc", mcc(c)},      {"f1", f1(c)},
                                  {"balanced_accuracy", balanced_accuracy(c)}};
    }
    nlohmann::json root;
    root["report"] = std::move(body);
    if (include_timing) {
        nlohmann::json per_method = nlohmann::json::array();
        for (const auto &m : methods) {
            per_method.push_back({{"method", m.method},
                                  {"median_per_token_ns", m.median_per_token_ns},
                                  {"latency_ratio_vs_greedy", m.latency_ratio_vs_greedy}});
        }
        // per-sample rows so the medians above are recomputable
        nlohmann::json per_sample = nlohmann::json::array();
        for (const auto &v : verdicts) {
            per_sample.push_back({{"sample_id", v.sample_id},
                                  {"method", v.method},
                                  {"total_ns", v.total_ns}});
        }
        root["timing"] = {{"methods", std::move(per_method)},
                          {"samples", std::move(per_sample)}};
    }
    return root.dump(2);
}

std::string EvalReport::to_text() const {
    std::ostringstream out;
    out << "method            samples  fail  accuracy  calls      ns/token   vs greedy\n";
    for (const auto &m : methods) {
        char line[160];
        std::snprintf(line, sizeof(line), "%-17s %7zu %5zu %9.4f %6lld %12.1f %10.3f\n",
                      m.method.c_str(), m.samples, m.failures, m.accuracy,
                      static_cast<long long>(m.model_calls), m.median_per_token_ns,
                      m.latency_ratio_vs_greedy);
        out << line;
    }
    if (discrimination) {
        const ConfusionCounts &c = *discrimination;
        char line[160];
        std::snprintf(line, sizeof(line),
                      "discrimination: tp=%lld tn=%lld fp=%lld fn=%lld mcc=%.4f f1=%.4f ba=%.4f\n",
                      c.tp, c.tn, c.fp, c.fn, mcc(c), f1(c), balanced_accuracy(c));
        out << line;
    }
    return out.str();
}

std::string EvalReport::verdicts_csv() const {
    std::ostringstream out;
    out << "sample_id,method,correct,steps,text\n";
    for (const auto &v : verdicts) {
        std::string text = v.text;
        std::replace(text.begin(), text.end(), ',', ';');
        out << v.sample_id << ',' << v.method << ',' << (v.correct ? 1 : 0) << ',' << v.steps
            << ',' << text << '\n';
    }
    return out.str();
}

} // namespace rpgd
