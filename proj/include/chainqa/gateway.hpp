#pragma once

#include <atomic>
#include <chrono>
#include <cstddef>
#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

namespace chainqa {

/// Where the neural services live. A missing URL puts that service in local
/// fallback mode.
struct EndpointConfig {
    std::optional<std::string> scorer_url;
    std::optional<std::string> generator_url;
    std::optional<std::string> embedder_url;
    std::chrono::milliseconds timeout{10000};
    std::size_t retries = 2;
    std::chrono::milliseconds backoff{100};
    std::size_t max_in_flight = 8;
    std::size_t batch_size = 64;
    std::optional<std::string> bearer_token;

    /// Throws Error when timeout, batch size or in-flight cap are zero.
    void validate() const;

    /// Applies CHAINQA_SCORER_URL, CHAINQA_GENERATOR_URL, CHAINQA_EMBEDDER_URL,
    /// CHAINQA_TIMEOUT_MS, CHAINQA_RETRIES and CHAINQA_BEARER_TOKEN when set.
    void apply_environment();
    /// Reads scorer_url, generator_url, embedder_url, timeout_ms, retries,
    /// max_in_flight, batch_size and bearer_token from key=value settings;
    /// unknown keys are ignored.
    void apply_settings(const std::map<std::string, std::string>& settings);
};

struct ScoredChain {
    std::string text;
    double score = 0.0;
};

inline constexpr std::size_t kFallbackEmbeddingDim = 256;

/// Client for the scorer, generator and embedder services with deterministic
/// local fallbacks. Safe for concurrent use.
///
/// Wire protocol (JSON over HTTP POST, non-200 is a failure):
///   /v1/score    {question, chains:[..]} -> {scores:[..]}
///   /v1/generate {chain}                 -> {question}
///   /v1/embed    {texts:[..]}            -> {vectors:[[..]]}
class ModelGateway {
public:
    explicit ModelGateway(EndpointConfig config = {});

    const EndpointConfig& config() const { return config_; }

    /// Scores in input order. Endpoint errors are fatal (GatewayError).
    std::vector<ScoredChain> score_chains(std::string_view question,
                                          const std::vector<std::string>& chain_texts) const;

    /// Unit-norm vectors, one per text. Throws GatewayError on endpoint failure
    /// or inconsistent dimensions.
    std::vector<std::vector<double>> embed_texts(const std::vector<std::string>& texts) const;

    /// Generated question for a verbalized chain. Endpoint failure or an empty
    /// reply falls back to `fallback` (or the template question when empty)
    /// and bumps warning_count().
    std::string generate_from_chain(std::string_view chain_text, std::string_view fallback = {}) const;

    std::size_t warning_count() const { return warnings_.load(); }

    /// similarity(question, chain) + 0.05 per distinct question keyword found
    /// among the chain's tokens, capped at 1.
    static double fallback_score(std::string_view question, std::string_view chain_text);
    /// L2-normalized 256-bucket hashed term frequencies.
    static std::vector<double> fallback_embedding(std::string_view text);
    static std::size_t fallback_bucket(std::string_view token);

private:
    EndpointConfig config_;
    mutable std::atomic<std::size_t> warnings_{0};
};

} // namespace chainqa
