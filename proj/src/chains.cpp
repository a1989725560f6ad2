#include "chainqa/chains.hpp"

#include "chainqa/bm25.hpp"
#include "chainqa/error.hpp"
#include "chainqa/text.hpp"

#include <json.hpp>

#include <algorithm>
#include <deque>
#include <limits>
#include <queue>

namespace chainqa {

namespace {

constexpr double kCostTolerance = 1e-9;

std::uint64_t saturating_add(std::uint64_t a, std::uint64_t b) {
    return a > std::numeric_limits<std::uint64_t>::max() - b ? std::numeric_limits<std::uint64_t>::max()
                                                             : a + b;
}

/// Shortest-path DAG: successors[u] holds v when u is a minimum-cost parent of v.
struct PathDag {
    std::vector<double> dist;
    std::vector<std::vector<NodeId>> preds;
    std::vector<std::vector<NodeId>> succs;
    std::vector<NodeId> order; // reachable nodes by increasing distance
};

PathDag build_dag(const HybridGraph& graph) {
    PathDag dag;
    const std::size_t n = graph.node_count();
    dag.dist = shortest_distances(graph);
    dag.preds.assign(n, {});
    dag.succs.assign(n, {});
    for (NodeId v = 0; v < n; ++v) {
        if (dag.dist[v] < 0.0) {
            continue;
        }
        dag.order.push_back(v);
        if (v == graph.question()) {
            continue;
        }
        for (const auto& nb : graph.neighbors(v)) {
            const double du = dag.dist[nb.node];
            if (du < 0.0 || du >= dag.dist[v]) {
                continue;
            }
            const double w = graph.mode() == GraphMode::Simple ? 1.0 : nb.weight;
            if (std::abs(du + w - dag.dist[v]) <= kCostTolerance) {
                dag.preds[v].push_back(nb.node);
            }
        }
    }
    std::stable_sort(dag.order.begin(), dag.order.end(),
                     [&](NodeId a, NodeId b) { return dag.dist[a] < dag.dist[b]; });
    // preds are in ascending id order (neighbors are sorted), so succs end up sorted too.
    for (NodeId v = 0; v < n; ++v) {
        for (NodeId u : dag.preds[v]) {
            dag.succs[u].push_back(v);
        }
    }
    for (auto& s : dag.succs) {
        std::sort(s.begin(), s.end());
    }
    return dag;
}

double path_cost(const HybridGraph& graph, const std::vector<NodeId>& path) {
    double cost = 0.0;
    for (std::size_t i = 1; i < path.size(); ++i) {
        cost += graph.mode() == GraphMode::Simple ? 1.0 : graph.hop_weight(path[i - 1], path[i]);
    }
    return cost;
}

struct ScoredChain {
    const HybridChain* chain;
    double similarity;
};

bool chain_before(const ScoredChain& x, const ScoredChain& y) {
    if (x.similarity != y.similarity) {
        return x.similarity > y.similarity;
    }
    if (x.chain->node_ids.size() != y.chain->node_ids.size()) {
        return x.chain->node_ids.size() < y.chain->node_ids.size();
    }
    return x.chain->node_ids < y.chain->node_ids;
}

std::vector<ScoredChain> score_against_question(const HybridGraph& graph,
                                                const std::vector<const HybridChain*>& chains) {
    const auto question = content_tokens(graph.node(graph.question()).content);
    std::vector<ScoredChain> out;
    out.reserve(chains.size());
    for (const HybridChain* c : chains) {
        out.push_back({c, similarity(question, content_tokens(verbalize_chain(*c, graph, false)))});
    }
    std::sort(out.begin(), out.end(), chain_before);
    return out;
}

std::vector<bool> answer_flags(const HybridGraph& graph, std::string_view answer) {
    std::vector<bool> flags(graph.node_count());
    for (const auto& node : graph.nodes()) {
        flags[node.id] = contains_answer(node, answer);
    }
    return flags;
}

} // namespace

std::vector<double> shortest_distances(const HybridGraph& graph) {
    const std::size_t n = graph.node_count();
    std::vector<double> dist(n, -1.0);
    if (n == 0) {
        return dist;
    }
    const NodeId q = graph.question();
    dist[q] = 0.0;
    if (graph.mode() == GraphMode::Simple) {
        std::deque<NodeId> queue{q};
        while (!queue.empty()) {
            NodeId u = queue.front();
            queue.pop_front();
            for (const auto& nb : graph.neighbors(u)) {
                if (dist[nb.node] < 0.0) {
                    dist[nb.node] = dist[u] + 1.0;
                    queue.push_back(nb.node);
                }
            }
        }
        return dist;
    }
    using Item = std::pair<double, NodeId>;
    std::priority_queue<Item, std::vector<Item>, std::greater<>> heap;
    std::vector<bool> done(n, false);
    heap.push({0.0, q});
    while (!heap.empty()) {
        auto [d, u] = heap.top();
        heap.pop();
        if (done[u]) {
            continue;
        }
        done[u] = true;
        for (const auto& nb : graph.neighbors(u)) {
            const double nd = d + nb.weight;
            if (dist[nb.node] < 0.0 || nd < dist[nb.node]) {
                dist[nb.node] = nd;
                heap.push({nd, nb.node});
            }
        }
    }
    return dist;
}

ChainCandidateSet enumerate_candidates(const HybridGraph& graph, const EnumerationLimits& limits) {
    ChainCandidateSet result;
    const std::size_t n = graph.node_count();
    if (n == 0 || limits.max_hops == 0) {
        return result;
    }
    const PathDag dag = build_dag(graph);
    const std::size_t max_hops = limits.max_hops;

    // counts[v][h]: minimum-cost paths reaching v in exactly h hops.
    std::vector<std::vector<std::uint64_t>> counts(n, std::vector<std::uint64_t>(max_hops + 1, 0));
    counts[graph.question()][0] = 1;
    for (NodeId v : dag.order) {
        for (NodeId u : dag.preds[v]) {
            for (std::size_t h = 1; h <= max_hops; ++h) {
                counts[v][h] = saturating_add(counts[v][h], counts[u][h - 1]);
            }
        }
    }

    std::vector<std::size_t> to_target(n);
    constexpr std::size_t kUnreached = std::numeric_limits<std::size_t>::max();
    std::vector<NodeId> path;

    for (NodeId t = 0; t < n; ++t) {
        if (t == graph.question()) {
            continue;
        }
        std::uint64_t total = 0;
        for (std::size_t h = 1; h <= max_hops; ++h) {
            total = saturating_add(total, counts[t][h]);
        }
        if (total == 0) {
            continue;
        }
        result.per_node_counts[t] = total;

        // Fewest hops from each ancestor down to t within the DAG.
        std::fill(to_target.begin(), to_target.end(), kUnreached);
        to_target[t] = 0;
        std::deque<NodeId> queue{t};
        while (!queue.empty()) {
            NodeId v = queue.front();
            queue.pop_front();
            for (NodeId u : dag.preds[v]) {
                if (to_target[u] == kUnreached) {
                    to_target[u] = to_target[v] + 1;
                    queue.push_back(u);
                }
            }
        }

        std::size_t emitted = 0;
        path.assign(1, graph.question());
        auto dfs = [&](auto&& self, NodeId u) -> void {
            if (emitted >= limits.max_paths_per_node) {
                return;
            }
            if (u == t) {
                result.chains.push_back({path, path_cost(graph, path)});
                ++emitted;
                return;
            }
            const std::size_t depth = path.size() - 1;
            for (NodeId v : dag.succs[u]) {
                if (to_target[v] == kUnreached || depth + 1 + to_target[v] > max_hops) {
                    continue;
                }
                path.push_back(v);
                self(self, v);
                path.pop_back();
                if (emitted >= limits.max_paths_per_node) {
                    return;
                }
            }
        };
        dfs(dfs, graph.question());
        if (emitted < total) {
            result.truncated = true;
        }
    }
    return result;
}

bool is_valid_chain(const HybridChain& chain, const HybridGraph& graph) {
    if (chain.node_ids.empty() || chain.node_ids.front() != graph.question()) {
        return false;
    }
    std::vector<NodeId> sorted = chain.node_ids;
    std::sort(sorted.begin(), sorted.end());
    if (std::adjacent_find(sorted.begin(), sorted.end()) != sorted.end()) {
        return false;
    }
    for (std::size_t i = 1; i < chain.node_ids.size(); ++i) {
        if (!graph.adjacent(chain.node_ids[i - 1], chain.node_ids[i])) {
            return false;
        }
    }
    return true;
}

std::optional<HybridChain> oracle_chain(const HybridGraph& graph, std::string_view answer,
                                        const EnumerationLimits& limits) {
    const auto flags = answer_flags(graph, answer);
    const auto candidates = enumerate_candidates(graph, limits);
    std::vector<const HybridChain*> pool;
    for (const auto& c : candidates.chains) {
        if (flags[c.terminal()]) {
            pool.push_back(&c);
        }
    }
    if (pool.empty()) {
        return std::nullopt;
    }
    return *score_against_question(graph, pool).front().chain;
}

std::vector<HybridChain> ranked_negative_chains(const HybridGraph& graph, std::string_view answer,
                                                std::size_t n, const EnumerationLimits& limits) {
    const auto flags = answer_flags(graph, answer);
    const auto candidates = enumerate_candidates(graph, limits);
    std::vector<const HybridChain*> pool;
    for (const auto& c : candidates.chains) {
        if (std::none_of(c.node_ids.begin(), c.node_ids.end(), [&](NodeId id) { return flags[id]; })) {
            pool.push_back(&c);
        }
    }
    std::vector<HybridChain> out;
    for (const auto& scored : score_against_question(graph, pool)) {
        if (out.size() >= n) {
            break;
        }
        out.push_back(*scored.chain);
    }
    return out;
}

std::optional<HybridChain> negative_chain(const HybridGraph& graph, std::string_view answer,
                                          const EnumerationLimits& limits) {
    auto ranked = ranked_negative_chains(graph, answer, 1, limits);
    if (ranked.empty()) {
        return std::nullopt;
    }
    return std::move(ranked.front());
}

std::string question_segment(std::string_view question) { return "[Question] " + std::string(question); }

std::string cell_segment(std::string_view column_name, std::string_view content) {
    std::string out = "[Table] ";
    out += column_name;
    out += " is ";
    out += content;
    out += '.';
    return out;
}

std::string sentence_segment(std::string_view sentence) { return "[Passage] " + std::string(sentence); }

std::string verbalize_chain(const HybridChain& chain, const HybridGraph& graph, bool include_question) {
    std::string out;
    for (NodeId id : chain.node_ids) {
        const auto& node = graph.node(id);
        std::string segment;
        switch (node.kind) {
        case NodeKind::Question:
            if (!include_question) {
                continue;
            }
            segment = question_segment(node.content);
            break;
        case NodeKind::Cell: {
            const auto* origin = std::get_if<CellOrigin>(&node.origin);
            segment = cell_segment(origin != nullptr ? origin->column_name : std::string(), node.content);
            break;
        }
        case NodeKind::Sentence:
            segment = sentence_segment(node.content);
            break;
        }
        if (!out.empty()) {
            out += kSegmentSeparator;
        }
        out += segment;
    }
    return out;
}

std::string_view to_string(NegativeStrategy strategy) {
    return strategy == NegativeStrategy::InnerNeg ? "InnerNeg" : "BMNeg";
}

NegativeStrategy parse_negative_strategy(std::string_view text) {
    const auto lower = to_lower(text);
    if (lower == "innerneg" || lower == "inner") {
        return NegativeStrategy::InnerNeg;
    }
    if (lower == "bmneg" || lower == "bm25") {
        return NegativeStrategy::BMNeg;
    }
    throw Error("unknown negative strategy '" + std::string(text) + "'");
}

bool block_contains_answer(const FusedBlock& block, const Corpus& corpus, std::string_view answer) {
    for (const auto& cell : block.cells) {
        if (!cell.content.empty() && cell_matches_answer(cell.content, answer)) {
            return true;
        }
    }
    for (const auto& pid : block.distinct_passages()) {
        if (const Passage* p = corpus.find_passage(pid)) {
            for (const auto& s : p->sentences) {
                if (text_contains_answer(s, answer)) {
                    return true;
                }
            }
        }
    }
    return false;
}

const FusedBlock* resolve_gold_block(const QAInstance& qa, const FusedBlockSet& blocks, const Corpus& corpus) {
    if (qa.gold_block_id) {
        return blocks.find(*qa.gold_block_id);
    }
    if (qa.gold_table_id) {
        for (const FusedBlock* b : blocks.of_table(*qa.gold_table_id)) {
            if (block_contains_answer(*b, corpus, qa.answer)) {
                return b;
            }
        }
        return nullptr;
    }
    for (const auto& b : blocks.blocks()) {
        if (block_contains_answer(b, corpus, qa.answer)) {
            return &b;
        }
    }
    return nullptr;
}

TrainingReport emit_training_instances(std::span<const QAInstance> qa_set, const Corpus& corpus,
                                       const FusedBlockSet& blocks, const TrainingOptions& options) {
    struct Slot {
        std::optional<TrainingInstance> instance;
        std::string skip_reason;
    };
    std::vector<Slot> slots(qa_set.size());

    for (std::size_t i = 0; i < qa_set.size(); ++i) {
        const auto& qa = qa_set[i];
        const FusedBlock* gold = resolve_gold_block(qa, blocks, corpus);
        if (gold == nullptr) {
            slots[i].skip_reason = kSkipNoGoldBlock;
            continue;
        }
        const auto graph = build_graph(qa.question, *gold, corpus, options.graph);
        auto positive = oracle_chain(graph, qa.answer, options.limits);
        if (!positive) {
            slots[i].skip_reason = kSkipAnswerUnreachable;
            continue;
        }
        TrainingInstance inst;
        inst.question_id = qa.question_id;
        inst.question = qa.question;
        inst.block_id = gold->block_id;
        inst.positive = verbalize_chain(*positive, graph, false);
        inst.strategy = options.strategy;
        if (options.strategy == NegativeStrategy::InnerNeg) {
            for (const auto& neg : ranked_negative_chains(graph, qa.answer, options.negatives_per_instance,
                                                          options.limits)) {
                auto text = verbalize_chain(neg, graph, false);
                if (text_contains_answer(text, qa.answer) || text == inst.positive) {
                    continue;
                }
                inst.negatives.push_back(std::move(text));
                inst.negative_blocks.push_back(gold->block_id);
            }
        }
        slots[i].instance = std::move(inst);
    }

    if (options.strategy == NegativeStrategy::BMNeg) {
        Bm25 index;
        std::vector<std::size_t> owners;
        for (std::size_t i = 0; i < slots.size(); ++i) {
            if (slots[i].instance) {
                index.add_document(tokenize(slots[i].instance->positive).tokens);
                owners.push_back(i);
            }
        }
        for (std::size_t d = 0; d < owners.size(); ++d) {
            auto& inst = *slots[owners[d]].instance;
            const auto& answer = qa_set[owners[d]].answer;
            auto scores = index.score_all(tokenize(inst.question).tokens);
            std::vector<std::size_t> order(owners.size());
            for (std::size_t k = 0; k < order.size(); ++k) {
                order[k] = k;
            }
            std::stable_sort(order.begin(), order.end(),
                             [&](std::size_t x, std::size_t y) { return scores[x] > scores[y]; });
            for (std::size_t other : order) {
                if (inst.negatives.size() >= options.negatives_per_instance) {
                    break;
                }
                const auto& cand = *slots[owners[other]].instance;
                if (other == d || cand.positive == inst.positive ||
                    text_contains_answer(cand.positive, answer)) {
                    continue;
                }
                inst.negatives.push_back(cand.positive);
                inst.negative_blocks.push_back(cand.block_id);
            }
        }
    }

    TrainingReport report;
    for (std::size_t i = 0; i < slots.size(); ++i) {
        auto& slot = slots[i];
        if (slot.instance && slot.instance->negatives.empty()) {
            slot.instance.reset();
            slot.skip_reason = kSkipNoNegative;
        }
        if (slot.instance) {
            report.instances.push_back(std::move(*slot.instance));
        } else {
            report.skipped.push_back({qa_set[i].question_id, slot.skip_reason});
            ++report.skip_counts[slot.skip_reason];
        }
    }
    return report;
}

std::string training_record(const TrainingInstance& instance) {
    nlohmann::ordered_json j;
    j["question_id"] = instance.question_id;
    j["question"] = instance.question;
    j["positive"] = instance.positive;
    j["negatives"] = instance.negatives;
    j["strategy"] = to_string(instance.strategy);
    j["block_id"] = instance.block_id;
    return j.dump();
}

} // namespace chainqa
