#include "chainqa/gateway.hpp"

#include "chainqa/error.hpp"
#include "chainqa/parallel.hpp"
#include "chainqa/pretrain.hpp"
#include "chainqa/text.hpp"

#include <httplib.h>
#include <json.hpp>

#include <cmath>
#include <cstdlib>
#include <set>
#include <thread>

namespace chainqa {

using nlohmann::json;

namespace {

struct Endpoint {
    std::string origin; // scheme://host:port
    std::string base;   // path prefix without trailing '/'
};

Endpoint split_url(std::string_view service, const std::string& url) {
    auto scheme = url.find("://");
    if (scheme == std::string::npos || url.compare(0, scheme, "http") != 0) {
        throw GatewayError(std::string(service) + ": unsupported endpoint URL '" + url +
                           "' (expected http://host[:port][/prefix])");
    }
    auto slash = url.find('/', scheme + 3);
    Endpoint ep;
    ep.origin = url.substr(0, slash);
    ep.base = slash == std::string::npos ? std::string() : url.substr(slash);
    while (!ep.base.empty() && ep.base.back() == '/') {
        ep.base.pop_back();
    }
    return ep;
}

json post_json(std::string_view service, const EndpointConfig& config, const std::string& url,
               const std::string& path, const json& request) {
    const auto ep = split_url(service, url);
    const std::string body = request.dump();
    std::string last_error;
    auto delay = config.backoff;
    for (std::size_t attempt = 0; attempt <= config.retries; ++attempt) {
        if (attempt > 0) {
            std::this_thread::sleep_for(delay);
            delay = std::min(delay * 2, std::chrono::milliseconds(5000));
        }
        httplib::Client client(ep.origin);
        client.set_connection_timeout(config.timeout);
        client.set_read_timeout(config.timeout);
        client.set_write_timeout(config.timeout);
        if (config.bearer_token) {
            client.set_bearer_token_auth(*config.bearer_token);
        }
        auto res = client.Post(ep.base + path, body, "application/json");
        if (!res) {
            last_error = httplib::to_string(res.error());
            continue;
        }
        if (res->status != 200) {
            last_error = "HTTP " + std::to_string(res->status);
            continue;
        }
        try {
            return json::parse(res->body);
        } catch (const json::parse_error& e) {
            throw GatewayError(std::string(service) + ": malformed response: " + e.what());
        }
    }
    throw GatewayError(std::string(service) + ": request to " + url + path + " failed after " +
                       std::to_string(config.retries + 1) + " attempts: " + last_error);
}

std::size_t chunk_count(std::size_t n, std::size_t batch) { return (n + batch - 1) / batch; }

std::optional<std::string> env(const char* name) {
    const char* value = std::getenv(name);
    if (value == nullptr || *value == '\0') {
        return std::nullopt;
    }
    return std::string(value);
}

std::size_t parse_count(const std::string& key, const std::string& value) {
    try {
        std::size_t used = 0;
        if (value.empty() || value.front() < '0' || value.front() > '9') {
            throw std::invalid_argument(value);
        }
        auto v = std::stoull(value, &used);
        if (used != value.size()) {
            throw std::invalid_argument(value);
        }
        return static_cast<std::size_t>(v);
    } catch (const std::exception&) {
        throw Error("setting '" + key + "' expects a non-negative integer, got '" + value + "'");
    }
}

void normalize_in_place(std::string_view service, std::vector<double>& v) {
    double norm = 0.0;
    for (double x : v) {
        if (!std::isfinite(x)) {
            throw GatewayError(std::string(service) + ": non-finite vector component");
        }
        norm += x * x;
    }
    norm = std::sqrt(norm);
    if (norm == 0.0) {
        throw GatewayError(std::string(service) + ": zero vector cannot be normalized");
    }
    for (double& x : v) {
        x /= norm;
    }
}

} // namespace

void EndpointConfig::validate() const {
    if (timeout.count() <= 0) {
        throw Error("endpoint timeout must be positive");
    }
    if (batch_size == 0 || max_in_flight == 0) {
        throw Error("batch_size and max_in_flight must be positive");
    }
}

void EndpointConfig::apply_environment() {
    if (auto v = env("CHAINQA_SCORER_URL")) {
        scorer_url = *v;
    }
    if (auto v = env("CHAINQA_GENERATOR_URL")) {
        generator_url = *v;
    }
    if (auto v = env("CHAINQA_EMBEDDER_URL")) {
        embedder_url = *v;
    }
    if (auto v = env("CHAINQA_TIMEOUT_MS")) {
        timeout = std::chrono::milliseconds(parse_count("CHAINQA_TIMEOUT_MS", *v));
    }
    if (auto v = env("CHAINQA_RETRIES")) {
        retries = parse_count("CHAINQA_RETRIES", *v);
    }
    if (auto v = env("CHAINQA_BEARER_TOKEN")) {
        bearer_token = *v;
    }
}

void EndpointConfig::apply_settings(const std::map<std::string, std::string>& settings) {
    auto get = [&](const char* key) -> const std::string* {
        auto it = settings.find(key);
        return it == settings.end() ? nullptr : &it->second;
    };
    auto url = [](const std::string& v) -> std::optional<std::string> {
        return v.empty() ? std::nullopt : std::optional<std::string>(v);
    };
    if (auto* v = get("scorer_url")) {
        scorer_url = url(*v);
    }
    if (auto* v = get("generator_url")) {
        generator_url = url(*v);
    }
    if (auto* v = get("embedder_url")) {
        embedder_url = url(*v);
    }
    if (auto* v = get("timeout_ms")) {
        timeout = std::chrono::milliseconds(parse_count("timeout_ms", *v));
    }
    if (auto* v = get("retries")) {
        retries = parse_count("retries", *v);
    }
    if (auto* v = get("max_in_flight")) {
        max_in_flight = parse_count("max_in_flight", *v);
    }
    if (auto* v = get("batch_size")) {
        batch_size = parse_count("batch_size", *v);
    }
    if (auto* v = get("bearer_token")) {
        bearer_token = url(*v);
    }
}

ModelGateway::ModelGateway(EndpointConfig config) : config_(std::move(config)) { config_.validate(); }

double ModelGateway::fallback_score(std::string_view question, std::string_view chain_text) {
    const auto chain_tokens = tokenize(chain_text).tokens;
    const std::set<std::string> present(chain_tokens.begin(), chain_tokens.end());
    std::size_t hits = 0;
    for (const auto& kw : extract_keywords(question).keywords) {
        if (present.contains(kw)) {
            ++hits;
        }
    }
    const double raw = similarity(question, chain_text) + 0.05 * static_cast<double>(hits);
    return std::min(1.0, raw);
}

std::size_t ModelGateway::fallback_bucket(std::string_view token) {
    // FNV-1a, 64-bit.
    std::uint64_t h = 14695981039346656037ULL;
    for (char c : token) {
        h ^= static_cast<unsigned char>(c);
        h *= 1099511628211ULL;
    }
    return static_cast<std::size_t>(h % kFallbackEmbeddingDim);
}

std::vector<double> ModelGateway::fallback_embedding(std::string_view text) {
    std::vector<double> v(kFallbackEmbeddingDim, 0.0);
    const auto tokens = tokenize(text).tokens;
    if (tokens.empty()) {
        v[fallback_bucket("")] = 1.0;
        return v;
    }
    for (const auto& t : tokens) {
        v[fallback_bucket(t)] += 1.0;
    }
    normalize_in_place("embedder", v);
    return v;
}

std::vector<ScoredChain> ModelGateway::score_chains(std::string_view question,
                                                    const std::vector<std::string>& chain_texts) const {
    std::vector<ScoredChain> out(chain_texts.size());
    for (std::size_t i = 0; i < chain_texts.size(); ++i) {
        out[i].text = chain_texts[i];
    }
    if (!config_.scorer_url) {
        for (auto& sc : out) {
            sc.score = fallback_score(question, sc.text);
        }
        return out;
    }
    const std::size_t batch = config_.batch_size;
    parallel_for(chunk_count(chain_texts.size(), batch), config_.max_in_flight, [&](std::size_t c) {
        const std::size_t begin = c * batch;
        const std::size_t end = std::min(chain_texts.size(), begin + batch);
        json request;
        request["question"] = std::string(question);
        request["chains"] = std::vector<std::string>(chain_texts.begin() + begin, chain_texts.begin() + end);
        const json reply = post_json("scorer", config_, *config_.scorer_url, "/v1/score", request);
        auto scores = reply.find("scores");
        if (scores == reply.end() || !scores->is_array()) {
            throw GatewayError("scorer: response lacks a 'scores' array");
        }
        if (scores->size() != end - begin) {
            throw GatewayError("scorer: expected " + std::to_string(end - begin) + " scores, got " +
                               std::to_string(scores->size()));
        }
        for (std::size_t i = begin; i < end; ++i) {
            const auto& s = (*scores)[i - begin];
            if (!s.is_number() || !std::isfinite(s.get<double>())) {
                throw GatewayError("scorer: non-numeric or non-finite score");
            }
            out[i].score = s.get<double>();
        }
    });
    return out;
}

std::vector<std::vector<double>> ModelGateway::embed_texts(const std::vector<std::string>& texts) const {
    std::vector<std::vector<double>> out(texts.size());
    if (!config_.embedder_url) {
        for (std::size_t i = 0; i < texts.size(); ++i) {
            out[i] = fallback_embedding(texts[i]);
        }
        return out;
    }
    const std::size_t batch = config_.batch_size;
    parallel_for(chunk_count(texts.size(), batch), config_.max_in_flight, [&](std::size_t c) {
        const std::size_t begin = c * batch;
        const std::size_t end = std::min(texts.size(), begin + batch);
        json request;
        request["texts"] = std::vector<std::string>(texts.begin() + begin, texts.begin() + end);
        const json reply = post_json("embedder", config_, *config_.embedder_url, "/v1/embed", request);
        auto vectors = reply.find("vectors");
        if (vectors == reply.end() || !vectors->is_array() || vectors->size() != end - begin) {
            throw GatewayError("embedder: response must carry one vector per text");
        }
        for (std::size_t i = begin; i < end; ++i) {
            const auto& v = (*vectors)[i - begin];
            if (!v.is_array() || v.empty()) {
                throw GatewayError("embedder: each vector must be a non-empty array");
            }
            std::vector<double> vec;
            vec.reserve(v.size());
            for (const auto& x : v) {
                if (!x.is_number()) {
                    throw GatewayError("embedder: vector components must be numbers");
                }
                vec.push_back(x.get<double>());
            }
            normalize_in_place("embedder", vec);
            out[i] = std::move(vec);
        }
    });
    for (const auto& v : out) {
        if (v.size() != out.front().size()) {
            throw GatewayError("embedder: inconsistent vector dimensions in one batch");
        }
    }
    return out;
}

std::string ModelGateway::generate_from_chain(std::string_view chain_text, std::string_view fallback) const {
    auto fall_back = [&] {
        return fallback.empty() ? template_question_from_text(chain_text) : std::string(fallback);
    };
    if (!config_.generator_url) {
        ++warnings_;
        return fall_back();
    }
    try {
        json request;
        request["chain"] = std::string(chain_text);
        const json reply = post_json("generator", config_, *config_.generator_url, "/v1/generate", request);
        auto q = reply.find("question");
        if (q != reply.end() && q->is_string() && !trim(q->get<std::string>()).empty()) {
            return q->get<std::string>();
        }
    } catch (const GatewayError&) {
        // degrade to the template below
    }
    ++warnings_;
    return fall_back();
}

} // namespace chainqa
