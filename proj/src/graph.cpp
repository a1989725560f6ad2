#include "chainqa/graph.hpp"

#include "chainqa/error.hpp"

#include <json.hpp>

#include <algorithm>
#include <map>
#include <ostream>

namespace chainqa {

std::string_view to_string(NodeKind kind) {
    switch (kind) {
    case NodeKind::Question: return "question";
    case NodeKind::Cell: return "cell";
    case NodeKind::Sentence: return "sentence";
    }
    return "?";
}

std::string_view to_string(EdgeKind kind) {
    return kind == EdgeKind::Structural ? "structural" : "contextual";
}

std::string_view to_string(GraphMode mode) { return mode == GraphMode::Simple ? "simple" : "weighted"; }

GraphMode parse_graph_mode(std::string_view text) {
    auto lower = to_lower(text);
    if (lower == "simple" || lower == "s") {
        return GraphMode::Simple;
    }
    if (lower == "weighted" || lower == "w") {
        return GraphMode::Weighted;
    }
    throw Error("unknown graph mode '" + std::string(text) + "'");
}

NodeId HybridGraph::add_node(NodeKind kind, std::string content, NodeOrigin origin) {
    if (nodes_.empty() != (kind == NodeKind::Question)) {
        throw Error("the question must be the first and only question node");
    }
    if (content.empty()) {
        throw Error("graph node content must be non-empty");
    }
    GraphNode node;
    node.id = nodes_.size();
    node.kind = kind;
    node.keywords = extract_keywords(content);
    node.content = std::move(content);
    node.origin = std::move(origin);
    nodes_.push_back(std::move(node));
    adjacency_.emplace_back();
    return nodes_.back().id;
}

void HybridGraph::add_edge(NodeId a, NodeId b, EdgeKind kind, double weight) {
    if (a >= nodes_.size() || b >= nodes_.size()) {
        throw Error("edge endpoint out of range");
    }
    if (a == b) {
        throw Error("self-loop on node " + std::to_string(a));
    }
    if (!(weight > 0.0 && weight <= 1.0)) {
        throw Error("edge weight must lie in (0, 1]");
    }
    if (has_edge(a, b, kind)) {
        throw Error("duplicate edge " + std::to_string(a) + "-" + std::to_string(b));
    }
    edges_.push_back({std::min(a, b), std::max(a, b), kind, weight});

    auto link = [&](NodeId from, NodeId to) {
        auto& adj = adjacency_[from];
        auto it = std::lower_bound(adj.begin(), adj.end(), to,
                                   [](const Neighbor& n, NodeId id) { return n.node < id; });
        if (it == adj.end() || it->node != to) {
            it = adj.insert(it, Neighbor{to, weight});
        }
        it->weight = std::min(it->weight, weight);
        (kind == EdgeKind::Structural ? it->structural : it->contextual) = true;
    };
    link(a, b);
    link(b, a);
}

bool HybridGraph::adjacent(NodeId a, NodeId b) const { return hop_weight(a, b) > 0.0; }

double HybridGraph::hop_weight(NodeId a, NodeId b) const {
    if (a >= adjacency_.size()) {
        return -1.0;
    }
    const auto& adj = adjacency_[a];
    auto it = std::lower_bound(adj.begin(), adj.end(), b,
                               [](const Neighbor& n, NodeId id) { return n.node < id; });
    return it != adj.end() && it->node == b ? it->weight : -1.0;
}

bool HybridGraph::has_edge(NodeId a, NodeId b, EdgeKind kind) const {
    if (a >= adjacency_.size()) {
        return false;
    }
    const auto& adj = adjacency_[a];
    auto it = std::lower_bound(adj.begin(), adj.end(), b,
                               [](const Neighbor& n, NodeId id) { return n.node < id; });
    if (it == adj.end() || it->node != b) {
        return false;
    }
    return kind == EdgeKind::Structural ? it->structural : it->contextual;
}

double edge_weight(const GraphNode& a, const GraphNode& b, EdgeKind /*kind*/, GraphMode mode) {
    if (mode == GraphMode::Simple) {
        return 1.0;
    }
    return 1.0 - 0.5 * overlap_ratio(a.keywords, b.keywords);
}

bool contains_answer(const GraphNode& node, std::string_view answer) {
    switch (node.kind) {
    case NodeKind::Question: return false;
    case NodeKind::Cell: return cell_matches_answer(node.content, answer);
    case NodeKind::Sentence: return text_contains_answer(node.content, answer);
    }
    return false;
}

namespace {

struct ContextualCandidate {
    NodeId a;
    NodeId b;
    double overlap;
};

std::size_t shared_terms(const std::vector<std::string>& a, const std::vector<std::string>& b) {
    std::size_t shared = 0;
    auto ia = a.begin();
    auto ib = b.begin();
    while (ia != a.end() && ib != b.end()) {
        if (*ia < *ib) {
            ++ia;
        } else if (*ib < *ia) {
            ++ib;
        } else {
            ++shared;
            ++ia;
            ++ib;
        }
    }
    return shared;
}

} // namespace

HybridGraph build_graph(std::string_view question, std::span<const FusedBlock* const> blocks,
                        const Corpus& corpus, const GraphOptions& options) {
    if (trim(question).empty()) {
        throw Error("build_graph: question must be non-empty");
    }
    if (blocks.empty()) {
        throw Error("build_graph: at least one block is required");
    }
    HybridGraph graph(options.mode);
    graph.add_node(NodeKind::Question, std::string(question));

    struct Pending {
        NodeId a;
        NodeId b;
    };
    std::vector<Pending> structural;

    for (const FusedBlock* block : blocks) {
        std::vector<std::pair<std::size_t, NodeId>> cell_nodes; // (col_index, node)
        for (const auto& cell : block->cells) {
            if (cell.content.empty()) {
                continue;
            }
            auto id = graph.add_node(NodeKind::Cell, cell.content,
                                     CellOrigin{block->block_id, cell.col_index, cell.column_name});
            cell_nodes.emplace_back(cell.col_index, id);
        }
        for (std::size_t i = 0; i < cell_nodes.size(); ++i) {
            for (std::size_t j = i + 1; j < cell_nodes.size(); ++j) {
                structural.push_back({cell_nodes[i].second, cell_nodes[j].second});
            }
        }
        std::map<std::string, std::vector<NodeId>> passage_nodes;
        for (const auto& pid : block->distinct_passages()) {
            const Passage* passage = corpus.find_passage(pid);
            if (passage == nullptr) {
                throw CorpusError("block '" + block->block_id + "' links unknown passage '" + pid + "'");
            }
            auto& ids = passage_nodes[pid];
            for (std::size_t s = 0; s < passage->sentences.size(); ++s) {
                if (passage->sentences[s].empty()) {
                    continue;
                }
                ids.push_back(graph.add_node(NodeKind::Sentence, passage->sentences[s],
                                             SentenceOrigin{block->block_id, pid, s}));
            }
        }
        for (const auto& lp : block->linked_passages) {
            auto cell = std::find_if(cell_nodes.begin(), cell_nodes.end(),
                                     [&](const auto& cn) { return cn.first == lp.col_index; });
            if (cell == cell_nodes.end()) {
                continue;
            }
            for (NodeId s : passage_nodes[lp.passage_id]) {
                structural.push_back({cell->second, s});
            }
        }
    }

    const auto& nodes = graph.nodes();
    for (const auto& [a, b] : structural) {
        if (!graph.has_edge(a, b, EdgeKind::Structural)) {
            graph.add_edge(a, b, EdgeKind::Structural,
                           edge_weight(nodes[a], nodes[b], EdgeKind::Structural, options.mode));
        }
    }

    const std::size_t n = nodes.size();
    std::vector<std::vector<std::string>> terms(n);
    for (std::size_t i = 0; i < n; ++i) {
        terms[i] = nodes[i].keywords.terms();
    }
    std::vector<ContextualCandidate> candidates;
    std::vector<std::vector<std::size_t>> per_node(n);
    for (NodeId a = 0; a < n; ++a) {
        if (terms[a].empty()) {
            continue;
        }
        for (NodeId b = a + 1; b < n; ++b) {
            if (terms[b].empty()) {
                continue;
            }
            auto shared = shared_terms(terms[a], terms[b]);
            if (shared == 0) {
                continue;
            }
            const double overlap = static_cast<double>(shared) /
                                   static_cast<double>(std::min(terms[a].size(), terms[b].size()));
            per_node[a].push_back(candidates.size());
            per_node[b].push_back(candidates.size());
            candidates.push_back({a, b, overlap});
        }
    }

    std::vector<bool> keep(candidates.size(), true);
    if (options.contextual_degree_cap > 0) {
        std::vector<unsigned char> votes(candidates.size(), 0);
        for (NodeId v = 0; v < n; ++v) {
            auto& list = per_node[v];
            auto other = [&](std::size_t c) { return candidates[c].a == v ? candidates[c].b : candidates[c].a; };
            std::sort(list.begin(), list.end(), [&](std::size_t x, std::size_t y) {
                if (candidates[x].overlap != candidates[y].overlap) {
                    return candidates[x].overlap > candidates[y].overlap;
                }
                return other(x) < other(y);
            });
            for (std::size_t r = 0; r < list.size() && r < options.contextual_degree_cap; ++r) {
                ++votes[list[r]];
            }
        }
        for (std::size_t c = 0; c < candidates.size(); ++c) {
            keep[c] = votes[c] == 2;
            if (!keep[c]) {
                graph.set_contextual_capped(true);
            }
        }
    }
    for (std::size_t c = 0; c < candidates.size(); ++c) {
        if (keep[c]) {
            const auto& cand = candidates[c];
            graph.add_edge(cand.a, cand.b, EdgeKind::Contextual,
                           edge_weight(nodes[cand.a], nodes[cand.b], EdgeKind::Contextual, options.mode));
        }
    }
    return graph;
}

HybridGraph build_graph(std::string_view question, const FusedBlock& block, const Corpus& corpus,
                        const GraphOptions& options) {
    const FusedBlock* blocks[] = {&block};
    return build_graph(question, std::span<const FusedBlock* const>(blocks), corpus, options);
}

void dump_graph(const HybridGraph& graph, std::ostream& out) {
    using nlohmann::ordered_json;
    for (const auto& node : graph.nodes()) {
        ordered_json j;
        j["node_id"] = node.id;
        j["kind"] = to_string(node.kind);
        j["content"] = node.content;
        if (const auto* cell = std::get_if<CellOrigin>(&node.origin)) {
            j["origin"] = {{"block_id", cell->block_id},
                           {"col_index", cell->col_index},
                           {"column_name", cell->column_name}};
        } else if (const auto* sent = std::get_if<SentenceOrigin>(&node.origin)) {
            j["origin"] = {{"block_id", sent->block_id},
                           {"passage_id", sent->passage_id},
                           {"sentence_index", sent->sentence_index}};
        } else {
            j["origin"] = nullptr;
        }
        out << j.dump() << '\n';
    }
    for (const auto& edge : graph.edges()) {
        ordered_json j;
        j["a"] = edge.a;
        j["b"] = edge.b;
        j["kind"] = to_string(edge.kind);
        j["weight"] = edge.weight;
        out << j.dump() << '\n';
    }
    ordered_json meta;
    meta["mode"] = to_string(graph.mode());
    meta["contextual_capped"] = graph.contextual_capped();
    out << meta.dump() << '\n';
}

} // namespace chainqa
