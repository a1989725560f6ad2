#pragma once

#include "chainqa/chains.hpp"
#include "chainqa/graph.hpp"

#include <cstddef>
#include <filesystem>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace chainqa {

class ModelGateway;

struct RankedChain {
    /// Position in the candidate list given to select_chain.
    std::size_t input_index = 0;
    HybridChain chain;
    std::string text;
    double score = 0.0;
};

struct ChainSelection {
    std::string question_id;
    /// Every candidate, descending score, ties by input index.
    std::vector<RankedChain> ranked;
    std::optional<bool> best_contains_answer;

    const RankedChain& best() const { return ranked.front(); }
    /// Best score minus runner-up score; 0 with a single candidate.
    double margin() const;
};

/// Scores every candidate's verbalization with the gateway and ranks them.
/// Throws Error when there are no candidates.
ChainSelection select_chain(std::string_view question, std::span<const HybridChain> candidates,
                            const HybridGraph& graph, const ModelGateway& scorer);

bool chain_contains_answer(const HybridChain& chain, const HybridGraph& graph, std::string_view answer);

/// Fraction of questions with an answer node on at least one of the top-k ranked chains.
double chain_recall(std::span<const ChainSelection> selections, std::span<const HybridGraph> graphs,
                    std::span<const std::string> answers, std::size_t k);

/// Lowercase, drop ASCII punctuation and the articles a/an/the, collapse whitespace.
std::string normalize_answer(std::string_view text);
int exact_match(std::string_view prediction, std::string_view gold);
double token_f1(std::string_view prediction, std::string_view gold);

struct EvalReport {
    std::map<std::size_t, double> recall_at;
    double em = 0.0;
    double f1 = 0.0;
    std::size_t evaluated = 0;
    std::size_t skipped = 0;
    std::size_t failed = 0;
    std::size_t sentence_answers = 0;
};

std::string eval_report_record(const EvalReport& report);

/// key=value lines; '#' starts a comment. Throws Error on a line without '='.
std::map<std::string, std::string> load_config(const std::filesystem::path& path);
std::map<std::string, std::string> parse_config(std::string_view text);

} // namespace chainqa
