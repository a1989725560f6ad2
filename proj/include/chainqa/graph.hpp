#pragma once

#include "chainqa/corpus.hpp"
#include "chainqa/text.hpp"

#include <cstddef>
#include <iosfwd>
#include <span>
#include <string>
#include <string_view>
#include <variant>
#include <vector>

namespace chainqa {

using NodeId = std::size_t;

enum class NodeKind { Question, Cell, Sentence };
enum class EdgeKind { Structural, Contextual };
enum class GraphMode { Simple, Weighted };

std::string_view to_string(NodeKind kind);
std::string_view to_string(EdgeKind kind);
std::string_view to_string(GraphMode mode);
GraphMode parse_graph_mode(std::string_view text);

struct CellOrigin {
    std::string block_id;
    std::size_t col_index = 0;
    std::string column_name;
};

struct SentenceOrigin {
    std::string block_id;
    std::string passage_id;
    std::size_t sentence_index = 0;
};

using NodeOrigin = std::variant<std::monostate, CellOrigin, SentenceOrigin>;

struct GraphNode {
    NodeId id = 0;
    NodeKind kind = NodeKind::Question;
    std::string content;
    NodeOrigin origin;
    KeywordSet keywords;
};

struct GraphEdge {
    NodeId a = 0;
    NodeId b = 0;
    EdgeKind kind = EdgeKind::Structural;
    double weight = 1.0;
};

struct Neighbor {
    NodeId node = 0;
    double weight = 1.0;
    bool structural = false;
    bool contextual = false;
};

/// Question/cell/sentence graph. Node 0 is always the question.
class HybridGraph {
public:
    explicit HybridGraph(GraphMode mode = GraphMode::Simple) : mode_(mode) {}

    /// Adds a node and caches its keywords. The first node must be the
    /// question and no other question node is accepted; content must be non-empty.
    NodeId add_node(NodeKind kind, std::string content, NodeOrigin origin = {});
    /// Throws on self-loops, unknown ids, weights outside (0, 1], or a repeated
    /// (pair, kind).
    void add_edge(NodeId a, NodeId b, EdgeKind kind, double weight);

    GraphMode mode() const { return mode_; }
    NodeId question() const { return 0; }
    std::size_t node_count() const { return nodes_.size(); }
    const std::vector<GraphNode>& nodes() const { return nodes_; }
    const GraphNode& node(NodeId id) const { return nodes_.at(id); }
    const std::vector<GraphEdge>& edges() const { return edges_; }
    /// Neighbors sorted by id; parallel edges of both kinds appear once with the lower weight.
    std::span<const Neighbor> neighbors(NodeId id) const { return adjacency_.at(id); }
    bool adjacent(NodeId a, NodeId b) const;
    /// Weight of the a-b hop, or a negative value when not adjacent.
    double hop_weight(NodeId a, NodeId b) const;
    bool has_edge(NodeId a, NodeId b, EdgeKind kind) const;

    /// True when the contextual degree cap dropped at least one edge.
    bool contextual_capped() const { return contextual_capped_; }
    void set_contextual_capped(bool capped) { contextual_capped_ = capped; }

private:
    GraphMode mode_;
    std::vector<GraphNode> nodes_;
    std::vector<GraphEdge> edges_;
    std::vector<std::vector<Neighbor>> adjacency_;
    bool contextual_capped_ = false;
};

struct GraphOptions {
    GraphMode mode = GraphMode::Weighted;
    /// Max contextual edges per node, highest overlap first. 0 disables the cap.
    std::size_t contextual_degree_cap = 32;
};

/// Builds the graph over a question and one or more blocks.
///
/// Nodes: question (id 0), then per block its non-empty cells by column and the
/// sentences of its linked passages. Structural edges join every cell pair of a
/// row and each cell to every sentence of its linked passages. Contextual edges
/// join any two nodes whose keyword sets intersect, across blocks included.
HybridGraph build_graph(std::string_view question, std::span<const FusedBlock* const> blocks,
                        const Corpus& corpus, const GraphOptions& options = {});
HybridGraph build_graph(std::string_view question, const FusedBlock& block, const Corpus& corpus,
                        const GraphOptions& options = {});

/// Simple: 1. Weighted: 1 - 0.5 * overlap_ratio(a, b), for both edge kinds.
double edge_weight(const GraphNode& a, const GraphNode& b, EdgeKind kind, GraphMode mode);

/// Question nodes never contain the answer.
bool contains_answer(const GraphNode& node, std::string_view answer);

/// Debug dump: node records then edge records, one JSON object per line.
void dump_graph(const HybridGraph& graph, std::ostream& out);

} // namespace chainqa
