#include "chainqa/chains.hpp"
#include "chainqa/error.hpp"
#include "chainqa/gateway.hpp"
#include "chainqa/pretrain.hpp"
#include "chainqa/text.hpp"

#include "fixtures.hpp"
#include "oracles.hpp"

#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <set>
#include <sstream>

using namespace chainqa;
using namespace chainqa::testing;

namespace {

Passage passage(std::string id, std::string title, std::string text) {
    Passage p;
    p.passage_id = std::move(id);
    p.title = std::move(title);
    p.text = std::move(text);
    p.sentences = split_sentences(p.text);
    return p;
}

// Row 0 links two cells, row 1 has no links.
Corpus two_link_corpus() {
    Table t;
    t.table_id = "clubs";
    t.title = "Clubs";
    t.header = {"Club", "City", "Founded"};
    t.rows = {{"Ajax", "Amsterdam", "1900"}, {"Feyenoord", "Rotterdam", "1908"}};
    return Corpus::from_records(
        {t},
        {passage("ajax", "AFC Ajax", "AFC Ajax is a football club. It plays in Amsterdam."),
         passage("amsterdam", "Amsterdam", "Amsterdam is the capital. Canals cross the city.")},
        {CellLink{"clubs", 0, 0, "ajax"}, CellLink{"clubs", 0, 1, "amsterdam"}});
}

std::string corpus_bytes(const PretrainCorpus& pc) {
    std::ostringstream out;
    write_pretrain_corpus(pc, out);
    return out.str();
}

SyntheticCorpusSpec pretrain_spec() {
    // Every filler cell linked, so every row has two distinct linked passages.
    return {.tables = 10, .rows_per_table = 10, .columns = 4, .passages = 200, .sentences_per_passage = 2,
            .questions = 0, .seed = 11};
}

} // namespace

TEST_CASE("hop ratio config") {
    HopRatioConfig paper;
    CHECK_NOTHROW(paper.validate());
    const auto parsed = HopRatioConfig::parse("0.1,0.25,0.35,0.3");
    CHECK(parsed.ratios == paper.ratios);
    CHECK_THROWS_AS(HopRatioConfig::parse("0.5,0.5,0.1,0"), Error);
    CHECK_THROWS_AS(HopRatioConfig::parse("1.2,-0.2,0,0"), Error);
    CHECK_THROWS_AS(HopRatioConfig::parse("0.5,0.5"), Error);
    CHECK_NOTHROW(HopRatioConfig::parse("0,0,0,1"));
}

TEST_CASE("best sentence") {
    CHECK(best_sentence(passage("p", "Anything", "Only one sentence here.")) == "Only one sentence here.");
    const auto covid = passage("c", "COVID-19", "Cases were counted daily. The league paused because of COVID-19.");
    CHECK(best_sentence_index(covid) == 1);
    CHECK(best_sentence(passage("z", "Zebra", "Alpha beta. Gamma delta.")) == "Alpha beta.");
    Passage empty;
    empty.passage_id = "e";
    CHECK_THROWS_AS(best_sentence_index(empty), Error);
}

TEST_CASE("synthesized chains follow the templates") {
    const auto corpus = two_link_corpus();
    const auto blocks = build_fused_blocks(corpus);
    const auto& linked = blocks.blocks()[0];
    const auto& bare = blocks.blocks()[1];

    const auto four = synthesize_chain(linked, corpus, 4, 3);
    REQUIRE(four.has_value());
    REQUIRE(four->hop_length() == 4);
    const auto& e = four->elements;
    CHECK(e[0].kind == NodeKind::Sentence);
    CHECK(e[1].kind == NodeKind::Cell);
    CHECK(e[2].kind == NodeKind::Cell);
    CHECK(e[3].kind == NodeKind::Sentence);
    CHECK(e[0].col_index == e[1].col_index);
    CHECK(e[3].col_index == e[2].col_index);
    CHECK(e[0].passage_id != e[3].passage_id);
    CHECK(synth_chain_follows_graph(*four, linked, corpus));

    CHECK_FALSE(synthesize_chain(bare, corpus, 4, 3).has_value());
    CHECK_FALSE(synthesize_chain(bare, corpus, 3, 3).has_value());
    const auto one = synthesize_chain(bare, corpus, 1, 3);
    REQUIRE(one.has_value());
    CHECK(one->elements.front().kind == NodeKind::Cell);
    const auto two = synthesize_chain(bare, corpus, 2, 3);
    REQUIRE(two.has_value());
    CHECK(two->elements[0].kind == NodeKind::Cell);
    CHECK(two->elements[1].kind == NodeKind::Cell);
    CHECK(two->elements[0].col_index != two->elements[1].col_index);

    for (std::size_t hop = 1; hop <= 4; ++hop) {
        for (std::uint64_t seed = 0; seed < 50; ++seed) {
            const auto a = synthesize_chain(linked, corpus, hop, seed);
            const auto b = synthesize_chain(linked, corpus, hop, seed);
            REQUIRE(a.has_value());
            REQUIRE(b.has_value());
            CHECK(verbalize_synth_chain(*a) == verbalize_synth_chain(*b));
            CHECK(a->hop_length() == hop);
            CHECK(synth_chain_follows_graph(*a, linked, corpus));
        }
    }
    CHECK_THROWS_AS(synthesize_chain(linked, corpus, 5, 0), Error);
}

TEST_CASE("every template instantiation is a graph path") {
    const auto synth = synthetic_corpus(pretrain_spec());
    const auto corpus = synth.build();
    const auto blocks = build_fused_blocks(corpus);
    std::size_t checked = 0;
    for (const auto& block : blocks.blocks()) {
        const auto all = enumerate_synth_chains(block, corpus);
        std::set<std::string> texts;
        for (const auto& c : all) {
            CHECK(synth_chain_follows_graph(c, block, corpus));
            CHECK(texts.insert(verbalize_synth_chain(c)).second);
            ++checked;
        }
        CHECK(all.size() <= 256);
    }
    CHECK(checked > 1000);
}

TEST_CASE("synthesized chain verbalization") {
    SynthChain chain;
    chain.elements.push_back({NodeKind::Cell, 0, "Year", "", "", 0, "19-20"});
    chain.elements.push_back({NodeKind::Cell, 3, "Points", "", "", 0, "25.3"});
    const auto text = verbalize_synth_chain(chain);
    CHECK(text == "[Table] Year is 19-20. [SEP] [Table] Points is 25.3.");
    CHECK(template_question(chain) == "what is points when year is 19-20?");
    CHECK(template_question_from_text(text) == "what is points when year is 19-20?");

    SynthChain to_sentence;
    to_sentence.elements.push_back({NodeKind::Cell, 0, "Club", "", "", 0, "Ajax"});
    to_sentence.elements.push_back({NodeKind::Sentence, 0, "Club", "ajax", "AFC Ajax", 1, "It plays in Amsterdam."});
    CHECK(verbalize_synth_chain(to_sentence) == "[Table] Club is Ajax. [SEP] [Passage] It plays in Amsterdam.");
    const auto q = template_question(to_sentence);
    CHECK(q.rfind("which ", 0) == 0);
    CHECK(q.find("afc ajax") != std::string::npos);
    CHECK(q.back() == '?');
    CHECK_FALSE(template_question_from_text("[Passage] Lone sentence.").empty());
}

TEST_CASE("fallback question generation warns") {
    const ModelGateway offline;
    SynthChain chain;
    chain.elements.push_back({NodeKind::Cell, 0, "Year", "", "", 0, "19-20"});
    chain.elements.push_back({NodeKind::Cell, 3, "Points", "", "", 0, "25.3"});
    CHECK(generate_question(chain, offline) == "what is points when year is 19-20?");
    CHECK(offline.warning_count() == 1);
}

TEST_CASE("hard negatives") {
    const auto corpus = two_link_corpus();
    const auto blocks = build_fused_blocks(corpus);
    const auto& linked = blocks.blocks()[0];
    const auto all = enumerate_synth_chains(linked, corpus);
    const auto positive = *synthesize_chain(linked, corpus, 4, 1);
    const auto positive_text = verbalize_synth_chain(positive);
    const std::string question = "which city hosts the Ajax club";

    const auto everything = sample_hard_negatives(positive, linked, corpus, question, 1000);
    CHECK(everything.size() == all.size() - 1);

    std::vector<std::pair<double, std::string>> brute;
    for (const auto& c : all) {
        const auto t = verbalize_synth_chain(c);
        if (t != positive_text) {
            brute.emplace_back(-similarity(question, t), t);
        }
    }
    std::sort(brute.begin(), brute.end());
    const auto top2 = sample_hard_negatives(positive, linked, corpus, question, 2);
    REQUIRE(top2.size() == 2);
    CHECK(verbalize_synth_chain(top2[0]) == brute[0].second);
    CHECK(verbalize_synth_chain(top2[1]) == brute[1].second);

    Table lone;
    lone.table_id = "lone";
    lone.header = {"Only"};
    lone.rows = {{"cell"}};
    const auto lone_corpus = Corpus::from_records({lone}, {}, {});
    const auto lone_blocks = build_fused_blocks(lone_corpus);
    const auto lone_chain = *synthesize_chain(lone_blocks.blocks()[0], lone_corpus, 1, 0);
    CHECK(sample_hard_negatives(lone_chain, lone_blocks.blocks()[0], lone_corpus, "q", 3).empty());

    Table pair;
    pair.table_id = "pair";
    pair.header = {"A", "B"};
    pair.rows = {{"x", ""}};
    const auto pair_corpus = Corpus::from_records({pair}, {}, {});
    const auto pair_blocks = build_fused_blocks(pair_corpus);
    CHECK(enumerate_synth_chains(pair_blocks.blocks()[0], pair_corpus).size() == 1);
}

TEST_CASE("pool thresholds") {
    CHECK(pool_threshold(1) == 1);
    CHECK(pool_threshold(3) == 1);
    CHECK(pool_threshold(4) == 2);
}

TEST_CASE("empty target gives empty output") {
    const auto corpus = two_link_corpus();
    PretrainOptions options;
    const auto pc = build_pretrain_corpus(corpus, options, ModelGateway{});
    CHECK(pc.instances.empty());
    CHECK(pc.stats.emitted == 0);
    CHECK(corpus_bytes(pc).empty());
    CHECK(pretrain_stats_record(pc.stats).find(R"("hop_histogram":{"1":0,"2":0,"3":0,"4":0})") != std::string::npos);
}

TEST_CASE("shortfall when a hop bucket cannot be filled") {
    Table t;
    t.table_id = "plain";
    t.header = {"A", "B"};
    t.rows = {{"one", "two"}, {"three", "four"}};
    const auto unlinked = Corpus::from_records({t}, {}, {});
    PretrainOptions options;
    options.target_size = 200;
    options.seed = 4;
    const auto none = build_pretrain_corpus(unlinked, options, ModelGateway{});
    CHECK(none.instances.empty());
    CHECK(none.stats.shortfall[0] + none.stats.shortfall[1] + none.stats.shortfall[2] + none.stats.shortfall[3] ==
          200);

    const auto single = Corpus::from_records({t}, {passage("p", "One", "One is a number.")},
                                             {CellLink{"plain", 0, 0, "p"}});
    const auto pc = build_pretrain_corpus(single, options, ModelGateway{});
    CHECK(pc.stats.hop_histogram[3] == 0);
    CHECK(pc.stats.shortfall[3] > 0);
    CHECK(pc.stats.shortfall[0] + pc.stats.shortfall[1] + pc.stats.shortfall[2] == 0);
    CHECK(pc.stats.emitted + pc.stats.shortfall[3] == 200);
    CHECK(pc.instances.size() == pc.stats.emitted);
    for (const auto& inst : pc.instances) {
        CHECK(inst.source_block_id == "plain#0");
    }
}

TEST_CASE("pretraining corpus properties") {
    const auto synth = synthetic_corpus(pretrain_spec());
    const auto corpus = synth.build();
    const auto blocks = build_fused_blocks(corpus);
    PretrainOptions options;
    options.target_size = 2000;
    options.seed = 42;
    options.negatives_per_instance = 2;
    const ModelGateway offline;
    const auto pc = build_pretrain_corpus(corpus, options, offline);
    REQUIRE(pc.instances.size() == 2000);
    CHECK(pc.stats.emitted == 2000);

    std::set<std::string> ids;
    for (const auto& inst : pc.instances) {
        CHECK(ids.insert(inst.instance_id).second);
        CHECK_FALSE(inst.question.empty());
        CHECK(inst.hop_length == inst.chain.hop_length());
        CHECK(inst.positive == verbalize_synth_chain(inst.chain));
        const auto* block = blocks.find(inst.source_block_id);
        REQUIRE(block != nullptr);
        CHECK(synth_chain_follows_graph(inst.chain, *block, corpus));
        std::set<std::string> alternatives;
        for (const auto& c : enumerate_synth_chains(*block, corpus)) {
            alternatives.insert(verbalize_synth_chain(c));
        }
        for (const auto& neg : inst.negatives) {
            CHECK(neg != inst.positive);
            CHECK(alternatives.contains(neg));
        }
        CHECK(inst.negatives.size() <= 2);
    }
    CHECK(pc.instances.front().instance_id == "pt-00000000");
    CHECK(offline.warning_count() == 2000);

    options.threads = 3;
    const auto threaded = build_pretrain_corpus(corpus, options, ModelGateway{});
    CHECK(corpus_bytes(threaded) == corpus_bytes(pc));
    options.seed = 43;
    CHECK(corpus_bytes(build_pretrain_corpus(corpus, options, ModelGateway{})) != corpus_bytes(pc));
}

TEST_CASE("table-scoped negatives come from the source table") {
    const auto synth = synthetic_corpus(pretrain_spec());
    const auto corpus = synth.build();
    PretrainOptions options;
    options.target_size = 100;
    options.seed = 5;
    options.table_scope_negatives = true;
    options.negatives_per_instance = 3;
    const auto pc = build_pretrain_corpus(corpus, options, ModelGateway{});
    const auto blocks = build_fused_blocks(corpus);
    for (const auto& inst : pc.instances) {
        const auto table_id = parse_block_id(inst.source_block_id).first;
        std::set<std::string> alternatives;
        for (const auto* block : blocks.of_table(table_id)) {
            for (const auto& c : enumerate_synth_chains(*block, corpus)) {
                alternatives.insert(verbalize_synth_chain(c));
            }
        }
        CHECK(inst.negatives.size() == 3);
        for (const auto& neg : inst.negatives) {
            CHECK(alternatives.contains(neg));
            CHECK(neg != inst.positive);
        }
    }
}

TEST_CASE("pretraining records") {
    PretrainInstance inst;
    inst.instance_id = "pt-00000001";
    inst.question = "what is b when a is x?";
    inst.positive = "[Table] A is x. [SEP] [Table] B is y.";
    inst.negatives = {"[Table] A is x."};
    inst.hop_length = 2;
    inst.source_block_id = "t#0";
    CHECK(pretrain_record(inst) ==
          R"({"instance_id":"pt-00000001","question":"what is b when a is x?","positive":"[Table] A is x. [SEP] [Table] B is y.","negatives":["[Table] A is x."],"hop_length":2,"source_block_id":"t#0"})");
}
