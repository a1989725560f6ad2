#pragma once

#include "chainqa/chains.hpp"
#include "chainqa/corpus.hpp"
#include "chainqa/eval.hpp"
#include "chainqa/graph.hpp"
#include "chainqa/retrieval.hpp"

#include <cstddef>
#include <iosfwd>
#include <map>
#include <span>
#include <string>
#include <vector>

namespace chainqa {

class ModelGateway;

struct PipelineConfig {
    std::size_t retrieval_k = kDefaultRetrievalDepth;
    IndexKind index_kind = IndexKind::Sparse;
    GraphOptions graph;
    EnumerationLimits limits;
    /// Ranked chains kept per prediction, which bounds the recall depths reported.
    std::size_t keep_chains = 5;
    std::vector<std::size_t> recall_ks{1, 3, 5};
    std::size_t threads = 1;

    /// Keys: retrieval_k, index_kind, graph_mode, contextual_degree_cap,
    /// max_paths_per_node, max_hops, keep_chains, recall_ks ("1,3,5"), threads.
    /// Unknown keys are left to other consumers (endpoint settings).
    void apply_settings(const std::map<std::string, std::string>& settings);
};

struct NodeDescriptor {
    NodeKind kind = NodeKind::Question;
    std::string block_id;
    std::size_t col_index = 0;
    std::string column_name;
    std::string passage_id;
    std::size_t sentence_index = 0;
    std::string content;
};

struct ScoredDescriptorChain {
    double score = 0.0;
    std::vector<NodeDescriptor> nodes;
};

inline constexpr std::string_view kFlagSentenceAnswer = "sentence-answer";
inline constexpr std::string_view kFlagNoRetrieval = "no-retrieval";
inline constexpr std::string_view kFlagNoCandidates = "no-candidates";
inline constexpr std::string_view kFlagTruncated = "candidates-truncated";
inline constexpr std::string_view kFlagCapped = "contextual-capped";
inline constexpr std::string_view kFlagError = "error";

struct Prediction {
    std::string question_id;
    std::string prediction;
    std::vector<NodeDescriptor> chain;
    std::vector<std::string> flags;
    double score = 0.0;
    double margin = 0.0;
    /// Top ranked chains, best first, at most PipelineConfig::keep_chains.
    std::vector<ScoredDescriptorChain> top_chains;
    std::string error;

    bool has_flag(std::string_view flag) const;
};

NodeDescriptor describe_node(const GraphNode& node);
bool descriptor_contains_answer(const NodeDescriptor& node, std::string_view answer);

/// Graph, candidates and chain selection for one question over retrieved blocks.
/// Blocks with non-positive retrieval score are dropped first; when none remain
/// the prediction is empty and flagged no-retrieval. Failures are caught and
/// flagged, never thrown.
Prediction answer_question(const QAInstance& qa, const RetrievalResult& retrieved, const Corpus& corpus,
                           const FusedBlockSet& blocks, const ModelGateway& gateway,
                           const PipelineConfig& config);

struct PipelineResult {
    std::vector<Prediction> predictions;
    EvalReport report;
};

/// Retrieve, build the joint graph, enumerate, select, answer; parallel over questions.
PipelineResult run_pipeline(std::span<const QAInstance> questions, const Corpus& corpus,
                            const FusedBlockSet& blocks, const BlockIndex& index, const ModelGateway& gateway,
                            const PipelineConfig& config);

/// Predictions against gold answers. Every question with a non-empty answer
/// counts; a missing prediction scores 0 everywhere.
EvalReport evaluate_predictions(std::span<const Prediction> predictions, std::span<const QAInstance> gold,
                                std::span<const std::size_t> recall_ks);

std::string prediction_record(const Prediction& prediction);
Prediction parse_prediction_record(std::string_view line);
std::vector<Prediction> load_predictions(const std::filesystem::path& path);

} // namespace chainqa
