#include "rpgd/core.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <sstream>

namespace rpgd {

LogitVector::LogitVector(std::vector<double> scores) : scores_(std::move(scores)) {
    if (scores_.empty()) {
        throw RangeError("logits", "vector must be non-empty");
    }
    for (double v : scores_) {
        if (!std::isfinite(v)) {
            throw RangeError("logits", "entries must be finite");
        }
    }
}

TokenId LogitVector::argmax() const {
    std::size_t best = 0;
    for (std::size_t i = 1; i < scores_.size(); ++i) {
        if (scores_[i] > scores_[best]) best = i;
    }
    return static_cast<TokenId>(best);
}

PivotTokenSet::PivotTokenSet(std::vector<TokenId> indices) : indices_(std::move(indices)) {
    std::sort(indices_.begin(), indices_.end());
    indices_.erase(std::unique(indices_.begin(), indices_.end()), indices_.end());
}

bool PivotTokenSet::contains(TokenId id) const {
    return std::binary_search(indices_.begin(), indices_.end(), id);
}

void PivotTokenSet::validate_against(std::size_t vocab_size) const {
    for (TokenId id : indices_) {
        if (id < 0 || static_cast<std::size_t>(id) >= vocab_size) {
            throw IndexOutOfRange("pivot token set", id, vocab_size);
        }
    }
}

PivotTokenSet PivotTokenSet::without(TokenId id) const {
    std::vector<TokenId> kept;
    kept.reserve(indices_.size());
    for (TokenId t : indices_) {
        if (t != id) kept.push_back(t);
    }
    return PivotTokenSet(std::move(kept));
}

std::string to_string(SelectMode mode) {
    switch (mode) {
    case SelectMode::GreedyArgmax: return "greedy-argmax";
    case SelectMode::CutoffSample: return "cutoff-sample";
    }
    return "greedy-argmax";
}

SelectMode select_mode_from_string(const std::string &s) {
    if (s == "greedy-argmax") return SelectMode::GreedyArgmax;
    if (s == "cutoff-sample") return SelectMode::CutoffSample;
    throw RangeError("mode", "expected greedy-argmax or cutoff-sample, got '" + s + "'");
}

DecodeConfig validate_config(const DecodeConfig &cfg) {
    if (!(cfg.epsilon >= 0.0) || !std::isfinite(cfg.epsilon)) throw RangeError("epsilon");
    if (!(cfg.beta >= 0.0) || !std::isfinite(cfg.beta)) throw RangeError("beta");
    if (!(cfg.kappa > 0.0) || !std::isfinite(cfg.kappa)) throw RangeError("kappa");
    if (!(cfg.tau > 0.0 && cfg.tau <= 1.0)) throw RangeError("tau");
    if (!(cfg.delta > 0.0) || !std::isfinite(cfg.delta)) throw RangeError("delta");
    if (cfg.max_steps < 0) throw RangeError("max_steps");
    return cfg;
}

namespace {

// %.17g round-trips any double exactly.
std::string fmt_double(double v) {
    char buf[64];
    std::snprintf(buf, sizeof(buf), "%.17g", v);
    return buf;
}

double parse_double(const std::string &key, const std::string &value) {
    try {
        std::size_t pos = 0;
        double v = std::stod(value, &pos);
        if (pos != value.size()) throw std::invalid_argument(value);
        return v;
    } catch (const std::exception &) {
        throw ConfigError("bad number for key '" + key + "': '" + value + "'");
    }
}

bool parse_bool(const std::string &key, const std::string &value) {
    if (value == "true" || value == "1") return true;
    if (value == "false" || value == "0") return false;
    throw ConfigError("bad bool for key '" + key + "': '" + value + "'");
}

std::string trim(const std::string &s) {
    std::size_t a = s.find_first_not_of(" \t\r\n");
    if (a == std::string::npos) return "";
    std::size_t b = s.find_last_not_of(" \t\r\n");
    return s.substr(a, b - a + 1);
}

} // namespace

DecodeConfig parse_config_text(const std::string &text) {
    DecodeConfig cfg;
    std::istringstream in(text);
    std::string line;
    int lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        std::string t = trim(line);
        if (t.empty() || t[0] == '#') continue;
        std::size_t eq = t.find('=');
        if (eq == std::string::npos) {
            throw ConfigError("line " + std::to_string(lineno) + ": expected key=value");
        }
        std::string key = trim(t.substr(0, eq));
        std::string value = trim(t.substr(eq + 1));
        if (key == "epsilon") cfg.epsilon = parse_double(key, value);
        else if (key == "beta") cfg.beta = parse_double(key, value);
        else if (key == "kappa") cfg.kappa = parse_double(key, value);
        else if (key == "tau") cfg.tau = parse_double(key, value);
        else if (key == "delta") cfg.delta = parse_double(key, value);
        else if (key == "max_steps") cfg.max_steps = static_cast<int>(parse_double(key, value));
        else if (key == "mode") cfg.mode = select_mode_from_string(value);
        else if (key == "rng_seed") cfg.rng_seed = std::stoull(value);
        else if (key == "adaptive_gating") cfg.adaptive_gating = parse_bool(key, value);
        else if (key == "projection") cfg.projection = parse_bool(key, value);
        else if (key == "patch_shuffle") cfg.patch_shuffle = parse_bool(key, value);
        else if (key == "contrast_text_only") cfg.contrast_text_only = parse_bool(key, value);
        else if (key == "full_trace") cfg.full_trace = parse_bool(key, value);
        else throw ConfigError("unknown key '" + key + "'");
    }
    return validate_config(cfg);
}

DecodeConfig load_config_file(const std::string &path) {
    std::ifstream in(path);
    if (!in) throw ConfigError("cannot open config file: " + path);
    std::ostringstream buf;
    buf << in.rdbuf();
    return parse_config_text(buf.str());
}

std::string serialize_config(const DecodeConfig &cfg) {
    std::ostringstream out;
    out << "epsilon=" << fmt_double(cfg.epsilon) << "\n"
        << "beta=" << fmt_double(cfg.beta) << "\n"
        << "kappa=" << fmt_double(cfg.kappa) << "\n"
        << "tau=" << fmt_double(cfg.tau) << "\n"
        << "delta=" << fmt_double(cfg.delta) << "\n"
        << "max_steps=" << cfg.max_steps << "\n"
        << "mode=" << to_string(cfg.mode) << "\n"
        << "rng_seed=" << cfg.rng_seed << "\n"
        << "adaptive_gating=" << (cfg.adaptive_gating ? "true" : "false") << "\n"
        << "projection=" << (cfg.projection ? "true" : "false") << "\n"
        << "patch_shuffle=" << (cfg.patch_shuffle ? "true" : "false") << "\n"
        << "contrast_text_only=" << (cfg.contrast_text_only ? "true" : "false") << "\n"
        << "full_trace=" << (cfg.full_trace ? "true" : "false") << "\n";
    return out.str();
}

void save_config_file(const DecodeConfig &cfg, const std::string &path) {
    std::ofstream out(path);
    if (!out) throw ConfigError("cannot write config file: " + path);
    out << serialize_config(cfg);
}

} // namespace rpgd
