#include "chainqa/error.hpp"
#include "chainqa/gateway.hpp"
#include "chainqa/pretrain.hpp"
#include "chainqa/retrieval.hpp"
#include "chainqa/text.hpp"

#include "fixtures.hpp"
#include "mock_server.hpp"
#include "oracles.hpp"

#include <doctest.h>
#include <json.hpp>

#include <cmath>
#include <cstdlib>
#include <mutex>

using namespace chainqa;
using namespace chainqa::testing;
using nlohmann::json;

namespace {

EndpointConfig quick() {
    EndpointConfig c;
    c.timeout = std::chrono::milliseconds(2000);
    c.retries = 0;
    c.backoff = std::chrono::milliseconds(1);
    return c;
}

void reply(httplib::Response& res, const json& body) { res.set_content(body.dump(), "application/json"); }

double norm(const std::vector<double>& v) {
    double s = 0.0;
    for (double x : v) {
        s += x * x;
    }
    return std::sqrt(s);
}

} // namespace

TEST_CASE("fallback scorer") {
    const std::string gold = "[Passage] The season was suspended by COVID-19. [SEP] [Table] Year is 19-20. [SEP] "
                             "[Table] Points is 25.3.";
    const std::string gp = "[Passage] The season was suspended by COVID-19. [SEP] [Table] Year is 19-20. [SEP] "
                           "[Table] GP is 67.";
    const ModelGateway gw;
    const auto scored = gw.score_chains(kExampleQuestion, {gold, gp});
    REQUIRE(scored.size() == 2);
    CHECK(scored[0].text == gold);
    const auto brute = brute_fallback_scores(kExampleQuestion, {gold, gp});
    CHECK(scored[0].score == doctest::Approx(brute[0]).epsilon(1e-12));
    CHECK(scored[1].score == doctest::Approx(brute[1]).epsilon(1e-12));
    CHECK(scored[0].score > scored[1].score);
    CHECK(ModelGateway::fallback_score("alpha beta", "alpha beta") == 1.0);
    CHECK(ModelGateway::fallback_score("alpha beta", "gamma") == 0.0);
    CHECK(gw.score_chains("q", {}).empty());
}

TEST_CASE("fallback embedder") {
    const auto v = ModelGateway::fallback_embedding("river delta river");
    CHECK(v.size() == kFallbackEmbeddingDim);
    CHECK(norm(v) == doctest::Approx(1.0));
    CHECK(v == brute_embedding("river delta river"));
    const auto empty = ModelGateway::fallback_embedding("");
    CHECK(empty[ModelGateway::fallback_bucket("")] == 1.0);
    CHECK(norm(empty) == 1.0);
    CHECK(ModelGateway::fallback_embedding("[SEP]") == empty);
}

TEST_CASE("scorer round-trip in batches") {
    MockServer server;
    std::mutex mu;
    std::vector<json> seen;
    std::string auth;
    server.post("/api/v1/score", [&](const httplib::Request& req, httplib::Response& res) {
        const auto body = json::parse(req.body);
        {
            std::lock_guard lock(mu);
            seen.push_back(body);
            auth = req.get_header_value("Authorization");
        }
        json scores = json::array();
        for (const auto& c : body["chains"]) {
            scores.push_back(static_cast<double>(c.get<std::string>().size()));
        }
        reply(res, {{"scores", scores}});
    });
    server.start();
    auto config = quick();
    config.scorer_url = server.url() + "/api/";
    config.batch_size = 2;
    config.bearer_token = "secret";
    const ModelGateway gw(config);
    const std::vector<std::string> chains = {"a", "bbb", "cc", "dddd", "eeeee"};
    const auto scored = gw.score_chains("the question", chains);
    REQUIRE(scored.size() == 5);
    for (std::size_t i = 0; i < chains.size(); ++i) {
        CHECK(scored[i].text == chains[i]);
        CHECK(scored[i].score == static_cast<double>(chains[i].size()));
    }
    CHECK(server.requests() == 3);
    CHECK(seen.front()["question"] == "the question");
    CHECK(auth == "Bearer secret");
}

TEST_CASE("scorer failures are fatal") {
    MockServer server;
    server.post("/short/v1/score", [](const httplib::Request&, httplib::Response& res) {
        reply(res, {{"scores", {0.5}}});
    });
    server.post("/down/v1/score", [](const httplib::Request&, httplib::Response& res) { res.status = 503; });
    server.post("/junk/v1/score", [](const httplib::Request&, httplib::Response& res) {
        res.set_content("not json", "text/plain");
    });
    server.post("/nan/v1/score", [](const httplib::Request&, httplib::Response& res) {
        reply(res, {{"scores", {"high", 1.0}}});
    });
    server.start();
    auto config = quick();
    for (const char* path : {"/short", "/down", "/junk", "/nan"}) {
        config.scorer_url = server.url() + path;
        CHECK_THROWS_AS(ModelGateway(config).score_chains("q", {"x", "y"}), GatewayError);
    }
    config.scorer_url = server.url() + "/down";
    config.retries = 2;
    const int before = server.requests();
    CHECK_THROWS_WITH_AS(ModelGateway(config).score_chains("q", {"x"}), doctest::Contains("3 attempts"),
                         GatewayError);
    CHECK(server.requests() - before == 3);

    config.scorer_url = "ftp://example";
    CHECK_THROWS_AS(ModelGateway(config).score_chains("q", {"x"}), GatewayError);
}

TEST_CASE("unreachable endpoint") {
    int port = 0;
    {
        MockServer closed;
        closed.start();
        port = std::stoi(closed.url().substr(closed.url().rfind(':') + 1));
    }
    auto config = quick();
    config.scorer_url = "http://127.0.0.1:" + std::to_string(port);
    CHECK_THROWS_AS(ModelGateway(config).score_chains("q", {"x"}), GatewayError);
}

TEST_CASE("embedder round-trip and checks") {
    MockServer server;
    server.post("/ok/v1/embed", [](const httplib::Request& req, httplib::Response& res) {
        json vectors = json::array();
        const auto body = json::parse(req.body);
        for (const auto& t : body["texts"]) {
            vectors.push_back(json::array({3.0, 4.0 + static_cast<double>(t.get<std::string>().size())}));
        }
        reply(res, {{"vectors", vectors}});
    });
    server.post("/ragged/v1/embed", [](const httplib::Request& req, httplib::Response& res) {
        json vectors = json::array();
        std::size_t i = 0;
        const auto body = json::parse(req.body);
        for (const auto& t : body["texts"]) {
            (void)t;
            vectors.push_back(i++ == 0 ? json::array({1.0}) : json::array({1.0, 2.0}));
        }
        reply(res, {{"vectors", vectors}});
    });
    server.post("/count/v1/embed", [](const httplib::Request&, httplib::Response& res) {
        reply(res, {{"vectors", json::array({json::array({1.0, 0.0})})}});
    });
    server.post("/zero/v1/embed", [](const httplib::Request&, httplib::Response& res) {
        reply(res, {{"vectors", json::array({json::array({0.0, 0.0}), json::array({0.0, 0.0})})}});
    });
    server.start();
    auto config = quick();
    config.embedder_url = server.url() + "/ok";
    const auto v = ModelGateway(config).embed_texts(std::vector<std::string>{""});
    REQUIRE(v.size() == 1);
    CHECK(v[0][0] == doctest::Approx(0.6));
    CHECK(v[0][1] == doctest::Approx(0.8));
    CHECK(ModelGateway(config).embed_texts({}).empty());
    for (const char* path : {"/ragged", "/count", "/zero"}) {
        config.embedder_url = server.url() + path;
        CHECK_THROWS_AS(ModelGateway(config).embed_texts({"a", "b"}), GatewayError);
    }
}

TEST_CASE("dense index build reports embedding progress on failure") {
    MockServer server;
    std::atomic<int> calls{0};
    server.post("/v1/embed", [&](const httplib::Request& req, httplib::Response& res) {
        if (calls++ > 0) {
            res.status = 500;
            return;
        }
        json vectors = json::array();
        const auto body = json::parse(req.body);
        for (const auto& t : body["texts"]) {
            (void)t;
            vectors.push_back(json::array({1.0, 0.0}));
        }
        reply(res, {{"vectors", vectors}});
    });
    server.start();
    const auto synth = synthetic_corpus({.tables = 2, .rows_per_table = 3, .columns = 3, .passages = 0,
                                         .sentences_per_passage = 1, .questions = 0, .seed = 1});
    const auto corpus = synth.build();
    const auto blocks = build_fused_blocks(corpus);
    auto config = quick();
    config.embedder_url = server.url();
    config.batch_size = 2;
    config.max_in_flight = 1;
    CHECK_THROWS_WITH_AS(build_index(blocks.blocks(), corpus, IndexKind::Dense, ModelGateway(config)),
                         doctest::Contains("of 6 blocks embedded"), GatewayError);
}

TEST_CASE("generator passthrough and fallback routing") {
    MockServer server;
    server.post("/echo/v1/generate", [](const httplib::Request& req, httplib::Response& res) {
        reply(res, {{"question", json::parse(req.body)["chain"]}});
    });
    server.post("/fail/v1/generate", [](const httplib::Request&, httplib::Response& res) { res.status = 500; });
    server.post("/blank/v1/generate", [](const httplib::Request&, httplib::Response& res) {
        reply(res, {{"question", "  "}});
    });
    server.start();
    const std::string chain = "[Table] Year is 19-20. [SEP] [Table] Points is 25.3.";
    auto config = quick();

    config.generator_url = server.url() + "/echo";
    const ModelGateway echo(config);
    CHECK(echo.generate_from_chain(chain) == chain);
    CHECK(echo.warning_count() == 0);

    for (const char* path : {"/fail", "/blank"}) {
        config.generator_url = server.url() + path;
        const ModelGateway broken(config);
        CHECK(broken.generate_from_chain(chain) == "what is points when year is 19-20?");
        CHECK(broken.generate_from_chain(chain, "given fallback") == "given fallback");
        CHECK(broken.warning_count() == 2);
    }

    const ModelGateway offline;
    CHECK(offline.generate_from_chain(chain) == "what is points when year is 19-20?");
    CHECK(offline.warning_count() == 1);

    config.generator_url = server.url() + "/echo";
    const ModelGateway synth_echo(config);
    SynthChain sc;
    sc.elements.push_back({NodeKind::Cell, 0, "Year", "", "", 0, "19-20"});
    CHECK(generate_question(sc, synth_echo) == "[Table] Year is 19-20.");
}

TEST_CASE("endpoint configuration") {
    EndpointConfig c;
    c.apply_settings({{"scorer_url", "http://h:1"}, {"timeout_ms", "250"}, {"retries", "5"},
                      {"batch_size", "7"}, {"unknown", "x"}, {"embedder_url", ""}});
    CHECK(c.scorer_url == "http://h:1");
    CHECK(c.timeout.count() == 250);
    CHECK(c.retries == 5);
    CHECK(c.batch_size == 7);
    CHECK_FALSE(c.embedder_url.has_value());
    CHECK_THROWS_AS(c.apply_settings({{"retries", "-1"}}), Error);

    setenv("CHAINQA_GENERATOR_URL", "http://gen:9", 1);
    setenv("CHAINQA_TIMEOUT_MS", "1500", 1);
    c.apply_environment();
    unsetenv("CHAINQA_GENERATOR_URL");
    unsetenv("CHAINQA_TIMEOUT_MS");
    CHECK(c.generator_url == "http://gen:9");
    CHECK(c.timeout.count() == 1500);

    EndpointConfig zero;
    zero.batch_size = 0;
    CHECK_THROWS_AS(zero.validate(), Error);
    CHECK_THROWS_AS(ModelGateway{zero}, Error);
}
