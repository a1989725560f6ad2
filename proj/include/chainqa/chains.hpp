#pragma once

#include "chainqa/corpus.hpp"
#include "chainqa/graph.hpp"

#include <cstdint>
#include <iosfwd>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace chainqa {

/// Node path starting at the question node.
struct HybridChain {
    std::vector<NodeId> node_ids;
    double total_cost = 0.0;

    /// Number of non-question nodes.
    std::size_t hop_count() const { return node_ids.empty() ? 0 : node_ids.size() - 1; }
    NodeId terminal() const { return node_ids.back(); }

    bool operator==(const HybridChain& other) const { return node_ids == other.node_ids; }
};

struct EnumerationLimits {
    std::size_t max_paths_per_node = 64;
    std::size_t max_hops = 4;
};

struct ChainCandidateSet {
    /// Grouped by terminal node id, each group in lexicographic node-id order.
    std::vector<HybridChain> chains;
    /// Number of minimum-cost paths within max_hops per reachable node
    /// (saturating). Equals the emitted count when nothing was truncated.
    std::map<NodeId, std::uint64_t> per_node_counts;
    bool truncated = false;
};

/// Minimum-cost paths from the question to every other node: breadth-first in
/// Simple mode, least-cost search with predecessor sets in Weighted mode
/// (costs within 1e-9 count as equal).
ChainCandidateSet enumerate_candidates(const HybridGraph& graph, const EnumerationLimits& limits = {});

/// Distance from the question to every node; negative for unreachable nodes.
std::vector<double> shortest_distances(const HybridGraph& graph);

/// Consecutive nodes adjacent, no repeats, starts at the question.
bool is_valid_chain(const HybridChain& chain, const HybridGraph& graph);

/// Among shortest paths ending at an answer node, the one most similar to the
/// question; ties go to fewer hops, then the smaller node-id sequence.
std::optional<HybridChain> oracle_chain(const HybridGraph& graph, std::string_view answer,
                                        const EnumerationLimits& limits = {});

/// Same rule over shortest paths that touch no answer node at all.
std::optional<HybridChain> negative_chain(const HybridGraph& graph, std::string_view answer,
                                          const EnumerationLimits& limits = {});

/// The top `n` answer-free chains in negative_chain order.
std::vector<HybridChain> ranked_negative_chains(const HybridGraph& graph, std::string_view answer,
                                                std::size_t n, const EnumerationLimits& limits = {});

std::string question_segment(std::string_view question);
/// "[Table] <column> is <content>."
std::string cell_segment(std::string_view column_name, std::string_view content);
std::string sentence_segment(std::string_view sentence);
inline constexpr std::string_view kSegmentSeparator = " [SEP] ";

std::string verbalize_chain(const HybridChain& chain, const HybridGraph& graph,
                            bool include_question = false);

enum class NegativeStrategy { InnerNeg, BMNeg };

std::string_view to_string(NegativeStrategy strategy);
NegativeStrategy parse_negative_strategy(std::string_view text);

struct TrainingInstance {
    std::string question_id;
    std::string question;
    std::string block_id;
    std::string positive;
    std::vector<std::string> negatives;
    /// Block each negative was drawn from, parallel to `negatives`.
    std::vector<std::string> negative_blocks;
    NegativeStrategy strategy = NegativeStrategy::InnerNeg;
};

struct TrainingOptions {
    NegativeStrategy strategy = NegativeStrategy::InnerNeg;
    std::size_t negatives_per_instance = 1;
    GraphOptions graph;
    EnumerationLimits limits;
};

struct SkippedQuestion {
    std::string question_id;
    std::string reason;
};

struct TrainingReport {
    std::vector<TrainingInstance> instances;
    std::vector<SkippedQuestion> skipped;
    std::map<std::string, std::size_t> skip_counts;
};

inline constexpr std::string_view kSkipNoGoldBlock = "no gold block";
inline constexpr std::string_view kSkipAnswerUnreachable = "answer unreachable";
inline constexpr std::string_view kSkipNoNegative = "no negative chain";

/// True when any cell or linked sentence of the block contains the answer.
bool block_contains_answer(const FusedBlock& block, const Corpus& corpus, std::string_view answer);

/// Gold block: the given gold_block_id, else the first block of the gold table
/// containing the answer, else the first block anywhere containing it.
const FusedBlock* resolve_gold_block(const QAInstance& qa, const FusedBlockSet& blocks,
                                     const Corpus& corpus);

/// Extractor training data: one instance per question with a constructible
/// positive chain. InnerNeg draws negatives from the gold block's answer-free
/// chains; BMNeg from other questions' positives ranked by BM25 against the question.
TrainingReport emit_training_instances(std::span<const QAInstance> qa_set, const Corpus& corpus,
                                       const FusedBlockSet& blocks, const TrainingOptions& options);

std::string training_record(const TrainingInstance& instance);

} // namespace chainqa
