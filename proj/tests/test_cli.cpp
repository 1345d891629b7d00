// Drives the installed command-line binary end to end. Needs RPGD_CLI_BIN
// (set by ctest); run standalone the cases skip.

#include "fixtures.hpp"
#include "rpgd/corpus.hpp"
#include "rpgd/eval.hpp"

#include <doctest.h>
#include <nlohmann/json.hpp>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>

#include <sys/wait.h>

using namespace rpgd;

namespace {

#define REQUIRE_CLI()                                                                             \
    const char *cli = std::getenv("RPGD_CLI_BIN");                                                \
    if (!cli || !*cli) {                                                                          \
        MESSAGE("[ SKIP ] RPGD_CLI_BIN not set");                                                 \
        return;                                                                                   \
    }

int run_cli(const std::string &cli, const std::string &args, const std::string &out_file = "",
            const std::string &err_file = "") {
    std::string cmd = "\"" + cli + "\" " + args;
    cmd += out_file.empty() ? " > /dev/null" : " > " + out_file;
    cmd += err_file.empty() ? " 2> /dev/null" : " 2> " + err_file;
    const int status = std::system(cmd.c_str());
    return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
}

std::string slurp(const std::filesystem::path &path) {
    std::ifstream in(path);
    std::ostringstream buf;
    buf << in.rdbuf();
    return buf.str();
}

std::size_t line_count(const std::string &text) {
    std::size_t n = 0;
    for (char ch : text) {
        if (ch == '\n') ++n;
    }
    return n;
}

} // namespace

TEST_SUITE_BEGIN("cli");

TEST_CASE("decode writes one result line per sample and traces on request") {
    REQUIRE_CLI();
    namespace fs = std::filesystem;
    const fs::path dir = "cli_tmp_decode";
    fs::create_directories(dir);

    DecodeConfig cfg;
    cfg.max_steps = 8;
    const auto fx = fixtures::conflict_rescue_fixture(5, cfg.rng_seed);
    save_corpus(fx.corpus, (dir / "c.jsonl").string());
    fx.spec.save_file((dir / "m.json").string());
    save_config_file(cfg, (dir / "d.cfg").string());

    const std::string base = "decode --corpus " + (dir / "c.jsonl").string() +
                             " --model scripted:" + (dir / "m.json").string() +
                             " --method rpgd --config " + (dir / "d.cfg").string();
    CHECK(run_cli(cli, base + " --out " + (dir / "r.jsonl").string() + " --trace-out " +
                           (dir / "t.jsonl").string()) == 0);

    const std::string results = slurp(dir / "r.jsonl");
    CHECK(line_count(results) == 5);
    std::istringstream in(results);
    std::string line;
    while (std::getline(in, line)) {
        const auto j = nlohmann::json::parse(line);
        CHECK(j.at("method") == "rpgd");
        CHECK(j.at("text") == "a");
        CHECK(j.at("model_calls").get<int>() == 2 * j.at("steps").get<int>());
    }

    SUBCASE("jobs > 1 produces the same rows") {
        CHECK(run_cli(cli, base + " --jobs 3 --out " + (dir / "rj.jsonl").string()) == 0);
        auto strip = [](const std::string &jsonl) {
            std::istringstream ss(jsonl);
            std::string l, out;
            while (std::getline(ss, l)) {
                auto j = nlohmann::json::parse(l);
                j.erase("timing");
                out += j.dump() + "\n";
            }
            return out;
        };
        CHECK(strip(slurp(dir / "rj.jsonl")) == strip(slurp(dir / "r.jsonl")));
    }

    SUBCASE("trace-dump filters by step") {
        CHECK(run_cli(cli,
                      "trace-dump --trace " + (dir / "t.jsonl").string() + " --step 0 --sample q001",
                      (dir / "dump.txt").string()) == 0);
        const std::string dump = slurp(dir / "dump.txt");
        CHECK(dump.find("\"q001\"") != std::string::npos);
        CHECK(dump.find("\"step\": 0") != std::string::npos);
        CHECK(dump.find("top_l_final") != std::string::npos);
    }

    fs::remove_all(dir);
}

TEST_CASE("eval scores results against the gold corpus") {
    REQUIRE_CLI();
    namespace fs = std::filesystem;
    const fs::path dir = "cli_tmp_eval";
    fs::create_directories(dir);

    DecodeConfig cfg;
    cfg.max_steps = 8;
    const auto fx = fixtures::conflict_rescue_fixture(6, cfg.rng_seed);
    save_corpus(fx.corpus, (dir / "c.jsonl").string());
    fx.spec.save_file((dir / "m.json").string());
    save_config_file(cfg, (dir / "d.cfg").string());

    const std::string model_arg = " --model scripted:" + (dir / "m.json").string();
    const std::string shared = " --corpus " + (dir / "c.jsonl").string() + model_arg +
                               " --config " + (dir / "d.cfg").string();
    CHECK(run_cli(cli, "decode" + shared + " --method greedy --out " +
                           (dir / "greedy.jsonl").string()) == 0);
    CHECK(run_cli(cli, "decode" + shared + " --method rpgd --out " +
                           (dir / "rpgd.jsonl").string()) == 0);

    // conflict predictions: flag everything (all samples are conflicted)
    {
        std::ofstream disc(dir / "disc.jsonl");
        for (const auto &s : fx.corpus) {
            disc << "{\"sample_id\": \"" << s.sample_id << "\", \"pred\": true}\n";
        }
    }

    CHECK(run_cli(cli,
                  "eval --results " + (dir / "greedy.jsonl").string() + " --results " +
                      (dir / "rpgd.jsonl").string() + " --gold " + (dir / "c.jsonl").string() +
                      " --discrimination " + (dir / "disc.jsonl").string() + " --report " +
                      (dir / "rep.json").string() + " --csv " + (dir / "v.csv").string(),
                  (dir / "table.txt").string()) == 0);

    const auto rep = nlohmann::json::parse(slurp(dir / "rep.json"));
    double greedy_acc = -1, rpgd_acc = -1;
    for (const auto &m : rep["report"]["methods"]) {
        if (m["method"] == "greedy") greedy_acc = m["accuracy"].get<double>();
        if (m["method"] == "rpgd") rpgd_acc = m["accuracy"].get<double>();
    }
    CHECK(greedy_acc == 0.0);
    CHECK(rpgd_acc == 1.0);
    CHECK(rep["report"]["discrimination"]["f1"].get<double>() == 1.0);
    CHECK(rep.contains("timing"));

    const std::string table = slurp(dir / "table.txt");
    CHECK(table.find("rpgd") != std::string::npos);
    const std::string csv = slurp(dir / "v.csv");
    CHECK(line_count(csv) == 13); // header + 6 samples x 2 methods

    fs::remove_all(dir);
}

TEST_CASE("synth pipeline runs the mock clients deterministically") {
    REQUIRE_CLI();
    namespace fs = std::filesystem;
    const fs::path dir = "cli_tmp_synth";
    fs::create_directories(dir);

    // base corpus with counterfactual candidates for the answer pivot
    std::vector<ConflictSample> base;
    for (int i = 0; i < 8; ++i) {
        ConflictSample s;
        s.sample_id = "b" + std::to_string(i);
        s.question = "which city is shown?";
        s.answer = "Paris";
        s.passages = {"The tower stands in Paris.", "It was finished in 1889.",
                      "The structure is iron.", "It is very tall.", "Plain filler."};
        s.chain.nodes = {"structure"};
        s.chain.answer = "city";
        const std::size_t pos = s.passages[0].find("Paris");
        s.annotations.push_back({0, pos, pos + 5, "city", "Paris"});
        s.candidates["city"] = {
            {"Paris", "city", ""},
            {"New York", "city", "The statue stands in New York."},
            {"London", "city", "The clock tower stands in London."}};
        base.push_back(std::move(s));
    }
    save_corpus(base, (dir / "base.jsonl").string());

    const std::string args = "synth --corpus " + (dir / "base.jsonl").string() +
                             " --seed 5 --client mock --out " + (dir / "out.jsonl").string() +
                             " --rejected-out " + (dir / "rej.jsonl").string() + " --sft-out " +
                             (dir / "sft.jsonl").string();
    CHECK(run_cli(cli, args) == 0);

    const auto retained = load_corpus((dir / "out.jsonl").string());
    CHECK(!retained.empty());
    bool saw_high = false, saw_rewrite = false;
    for (const auto &s : retained) {
        if (s.label == ConflictLabel::HighConflict) saw_high = true;
        if (s.passages[0].find("Paris") == std::string::npos) saw_rewrite = true;
    }
    CHECK(saw_high == saw_rewrite); // substitutions target the answer pivot here

    // deterministic re-run
    CHECK(run_cli(cli, "synth --corpus " + (dir / "base.jsonl").string() +
                           " --seed 5 --client mock --out " + (dir / "out2.jsonl").string()) == 0);
    CHECK(slurp(dir / "out.jsonl") == slurp(dir / "out2.jsonl"));

    const std::string sft = slurp(dir / "sft.jsonl");
    CHECK(sft.find("Question pivots:") != std::string::npos);
    CHECK(sft.find("<RPivot>") != std::string::npos);

    fs::remove_all(dir);
}

TEST_CASE("usage and runtime failures use distinct exit codes") {
    REQUIRE_CLI();
    namespace fs = std::filesystem;
    const fs::path dir = "cli_tmp_err";
    fs::create_directories(dir);

    SUBCASE("unknown flag exits 1 with usage text") {
        CHECK(run_cli(cli, "decode --nonsense", "", (dir / "err.txt").string()) == 1);
        const std::string err = slurp(dir / "err.txt");
        CHECK(err.find("--help") != std::string::npos);
    }
    SUBCASE("no subcommand exits 1") {
        CHECK(run_cli(cli, "", "", (dir / "err0.txt").string()) == 1);
    }
    SUBCASE("missing corpus file exits 2 and names the path") {
        const auto fx = fixtures::reduction_fixture(1);
        fx.spec.save_file((dir / "m.json").string());
        CHECK(run_cli(cli,
                      "decode --corpus " + (dir / "missing.jsonl").string() +
                          " --model scripted:" + (dir / "m.json").string() + " --out " +
                          (dir / "o.jsonl").string(),
                      "", (dir / "err2.txt").string()) == 2);
        CHECK(slurp(dir / "err2.txt").find("missing.jsonl") != std::string::npos);
    }

    fs::remove_all(dir);
}

TEST_SUITE_END();
