#pragma once

#include "chainqa/bm25.hpp"
#include "chainqa/corpus.hpp"

#include <cstddef>
#include <filesystem>
#include <iosfwd>
#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace chainqa {

class ModelGateway;

enum class IndexKind { Sparse, Dense };

std::string_view to_string(IndexKind kind);
IndexKind parse_index_kind(std::string_view text);

inline constexpr std::size_t kDefaultRetrievalDepth = 15;

struct RetrievedBlock {
    std::string block_id;
    double score = 0.0;
};

/// Descending score, ties by block_id.
using RetrievalResult = std::vector<RetrievedBlock>;

/// Exhaustive-search index over verbalized fused blocks. Immutable once built.
class BlockIndex {
public:
    IndexKind kind() const { return kind_; }
    std::size_t size() const { return block_ids_.size(); }
    const std::vector<std::string>& block_ids() const { return block_ids_; }
    const std::vector<std::string>& documents() const { return documents_; }
    const Bm25& bm25() const { return bm25_; }
    const std::vector<std::vector<double>>& vectors() const { return vectors_; }
    std::size_t dimension() const { return vectors_.empty() ? 0 : vectors_.front().size(); }

    /// Header line "chainqa-index 1 <kind>", then one JSON document per line.
    void save(std::ostream& out) const;
    void save(const std::filesystem::path& path) const;
    static BlockIndex load(std::istream& in);
    static BlockIndex load(const std::filesystem::path& path);

    /// Throws Error on an empty or duplicate block id, or mismatched vector dimensions.
    static BlockIndex from_documents(IndexKind kind, std::vector<std::string> block_ids,
                                     std::vector<std::string> documents,
                                     std::vector<std::vector<double>> vectors = {});

private:
    IndexKind kind_ = IndexKind::Sparse;
    std::vector<std::string> block_ids_;
    std::vector<std::string> documents_;
    Bm25 bm25_;
    std::vector<std::vector<double>> vectors_;
};

/// Tokens BM25 sees for a document or query.
std::vector<std::string> index_tokens(std::string_view text);

/// Throws Error for an empty block set. A failing embedder aborts the build
/// with a GatewayError that reports how many blocks were embedded.
BlockIndex build_index(std::span<const FusedBlock> blocks, const Corpus& corpus, IndexKind kind,
                       const ModelGateway& embedder);

/// Top-k by BM25 (Sparse) or dot product (Dense); k is clamped to the index size.
RetrievalResult retrieve(const BlockIndex& index, std::string_view question, std::size_t k,
                         const ModelGateway& embedder);

/// Fraction of questions with at least one top-k block from the gold table.
double table_recall(std::span<const RetrievalResult> results, std::span<const std::string> gold_table_ids,
                    std::size_t k);

/// Like table_recall, but the block must also contain the answer in a cell or
/// linked sentence. Blocks missing from `blocks` never count.
double block_recall(std::span<const RetrievalResult> results, std::span<const std::string> gold_table_ids,
                    std::span<const std::string> answers, std::size_t k, const FusedBlockSet& blocks,
                    const Corpus& corpus);

std::string retrieval_record(std::string_view question_id, const RetrievalResult& result);
std::pair<std::string, RetrievalResult> parse_retrieval_record(std::string_view line);

} // namespace chainqa
