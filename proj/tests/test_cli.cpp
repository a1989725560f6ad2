#include "chainqa/corpus.hpp"
#include "chainqa/eval.hpp"
#include "chainqa/pipeline.hpp"
#include "chainqa/retrieval.hpp"

#include "fixtures.hpp"

#include <doctest.h>
#include <json.hpp>

#include <cstdlib>
#include <fstream>
#include <sstream>

using namespace chainqa;
using namespace chainqa::testing;
namespace fs = std::filesystem;

namespace {

int run(const std::string& args, const fs::path& out = {}, const fs::path& err = {}) {
    std::string cmd = std::string(CHAINQA_CLI_PATH) + " " + args;
    cmd += " > " + (out.empty() ? std::string("/dev/null") : out.string());
    cmd += " 2> " + (err.empty() ? std::string("/dev/null") : err.string());
    const int status = std::system(cmd.c_str());
    return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
}

std::string slurp(const fs::path& p) {
    std::ifstream in(p);
    std::stringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

std::vector<std::string> lines(const fs::path& p) {
    std::vector<std::string> out;
    std::ifstream in(p);
    for (std::string line; std::getline(in, line);) {
        if (!line.empty()) {
            out.push_back(line);
        }
    }
    return out;
}

struct Workspace {
    fs::path dir;
    std::string corpus_args;

    explicit Workspace(const std::string& name) : dir(scratch_dir(name)) {
        synthetic_corpus({.tables = 6, .rows_per_table = 5, .columns = 4, .passages = 30,
                          .sentences_per_passage = 2, .questions = 12, .seed = 31})
            .write(dir);
        corpus_args = "--tables " + (dir / "tables.jsonl").string() + " --passages " +
                      (dir / "passages.jsonl").string() + " --links " + (dir / "links.jsonl").string();
    }
    ~Workspace() { fs::remove_all(dir); }
    fs::path operator/(const std::string& name) const { return dir / name; }
};

} // namespace

TEST_CASE("cli help and errors") {
    CHECK(run("--help") == 0);
    CHECK(run("pipeline --help") == 0);
    CHECK(run("no-such-command") != 0);
    const auto err = scratch_dir("cli-err") / "err.txt";
    CHECK(run("blocks --tables /nonexistent --passages /nonexistent", {}, err) != 0);
}

TEST_CASE("cli stages compose through files") {
    Workspace ws("cli-stages");
    const std::string qa = (ws / "qa.jsonl").string();

    REQUIRE(run("ingest " + ws.corpus_args + " --out-dir " + (ws / "norm").string()) == 0);
    CHECK(lines(ws / "norm/tables.jsonl").size() == 6);
    CHECK(lines(ws / "norm/passages.jsonl").size() == 30);

    REQUIRE(run("blocks " + ws.corpus_args + " -o " + (ws / "blocks.jsonl").string()) == 0);
    CHECK(lines(ws / "blocks.jsonl").size() == 30);

    REQUIRE(run("index " + ws.corpus_args + " --kind sparse -o " + (ws / "index.txt").string()) == 0);
    CHECK(slurp(ws / "index.txt").rfind("chainqa-index 1 sparse\n", 0) == 0);

    REQUIRE(run("retrieve --index " + (ws / "index.txt").string() + " --qa " + qa + " -k 3 -o " +
                (ws / "retrieval.jsonl").string()) == 0);
    const auto retrieval = lines(ws / "retrieval.jsonl");
    REQUIRE(retrieval.size() == 12);
    const auto gold = load_qa(ws / "qa.jsonl");
    for (std::size_t i = 0; i < gold.size(); ++i) {
        const auto [id, ranked] = parse_retrieval_record(retrieval[i]);
        CHECK(id == gold[i].question_id);
        CHECK(ranked.size() == 3);
        CHECK(ranked.front().block_id == *gold[i].gold_block_id);
    }

    REQUIRE(run("select " + ws.corpus_args + " --qa " + qa + " --retrieval " + (ws / "retrieval.jsonl").string() +
                " -o " + (ws / "pred.jsonl").string()) == 0);
    REQUIRE(run("eval --qa " + qa + " --predictions " + (ws / "pred.jsonl").string() + " -o " +
                (ws / "report.json").string()) == 0);
    const auto report = nlohmann::json::parse(slurp(ws / "report.json"));
    CHECK(report["em"] == 1.0);
    CHECK(report["evaluated"] == 12);

    REQUIRE(run("pipeline " + ws.corpus_args + " --qa " + qa + " --index " + (ws / "index.txt").string() + " -o " +
                (ws / "pipe.jsonl").string() + " --report " + (ws / "pipe_report.json").string()) == 0);
    CHECK(slurp(ws / "pipe.jsonl") == slurp(ws / "pred.jsonl"));
    CHECK(nlohmann::json::parse(slurp(ws / "pipe_report.json"))["em"] == 1.0);

    REQUIRE(run("make-train " + ws.corpus_args + " --qa " + qa + " --strategy bmneg -o " +
                (ws / "train.jsonl").string()) == 0);
    CHECK(lines(ws / "train.jsonl").size() == 12);

    const std::string graph_args = ws.corpus_args + " --question \"" + gold[0].question + "\" --block " +
                                   *gold[0].gold_block_id;
    REQUIRE(run("graph " + graph_args + " -o " + (ws / "graph.jsonl").string()) == 0);
    CHECK(lines(ws / "graph.jsonl").back().find("\"mode\":\"weighted\"") != std::string::npos);
    REQUIRE(run("chains " + graph_args + " --answer " + gold[0].answer + " -o " + (ws / "chains.jsonl").string()) ==
            0);
    CHECK(slurp(ws / "chains.jsonl").find(gold[0].answer) != std::string::npos);

    REQUIRE(run("link " + ws.corpus_args + " -o " + (ws / "links2.jsonl").string()) == 0);
    CHECK(lines(ws / "links2.jsonl").size() >= lines(ws / "links.jsonl").size());
}

TEST_CASE("cli pre-training synthesis is reproducible") {
    Workspace ws("cli-synth");
    const std::string base = "synth-pretrain " + ws.corpus_args + " --size 200 --seed 9 --negatives 2";
    REQUIRE(run(base + " -o " + (ws / "a.jsonl").string() + " --stats " + (ws / "a.stats").string()) == 0);
    REQUIRE(run(base + " --threads 3 -o " + (ws / "b.jsonl").string() + " --stats " + (ws / "b.stats").string()) ==
            0);
    CHECK(slurp(ws / "a.jsonl") == slurp(ws / "b.jsonl"));
    CHECK(slurp(ws / "a.stats") == slurp(ws / "b.stats"));
    const auto stats = nlohmann::json::parse(slurp(ws / "a.stats"));
    CHECK(stats["target"] == 200);
    CHECK(run("synth-pretrain " + ws.corpus_args + " --size 10 --ratios 0.5,0.5,0.5,0") != 0);
}

TEST_CASE("cli configuration file") {
    Workspace ws("cli-config");
    {
        std::ofstream cfg(ws / "chainqa.conf");
        cfg << "# pipeline settings\nretrieval_k = 2\ngraph_mode = simple\n";
    }
    REQUIRE(run("--config " + (ws / "chainqa.conf").string() + " pipeline " + ws.corpus_args + " --qa " +
                (ws / "qa.jsonl").string() + " -o " + (ws / "p.jsonl").string() + " --report " +
                (ws / "r.json").string()) == 0);
    CHECK(lines(ws / "p.jsonl").size() == 12);
    {
        std::ofstream cfg(ws / "bad.conf");
        cfg << "retrieval_k = lots\n";
    }
    CHECK(run("--config " + (ws / "bad.conf").string() + " pipeline " + ws.corpus_args + " --qa " +
              (ws / "qa.jsonl").string()) != 0);
}
