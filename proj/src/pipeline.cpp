#include "chainqa/pipeline.hpp"

#include "chainqa/error.hpp"
#include "chainqa/gateway.hpp"
#include "chainqa/jsonl.hpp"
#include "chainqa/parallel.hpp"
#include "chainqa/text.hpp"

#include <json.hpp>

#include <algorithm>
#include <unordered_map>

namespace chainqa {

namespace {

using ojson = nlohmann::ordered_json;

std::size_t parse_count(const std::string& key, const std::string& value) {
    try {
        std::size_t used = 0;
        if (value.empty() || value.front() < '0' || value.front() > '9') {
            throw Error("");
        }
        const auto v = std::stoull(value, &used);
        if (used != value.size()) {
            throw Error("");
        }
        return static_cast<std::size_t>(v);
    } catch (const std::exception&) {
        throw Error("config: " + key + " must be a non-negative integer, got '" + value + "'");
    }
}

std::vector<std::size_t> parse_count_list(const std::string& key, const std::string& value) {
    std::vector<std::size_t> out;
    std::size_t pos = 0;
    while (pos <= value.size()) {
        const auto comma = value.find(',', pos);
        const auto item = trim(std::string_view(value).substr(pos, comma == std::string::npos ? std::string::npos : comma - pos));
        const auto k = parse_count(key, item);
        if (k == 0) {
            throw Error("config: " + key + " entries must be >= 1");
        }
        out.push_back(k);
        if (comma == std::string::npos) {
            break;
        }
        pos = comma + 1;
    }
    std::sort(out.begin(), out.end());
    out.erase(std::unique(out.begin(), out.end()), out.end());
    return out;
}

ojson descriptor_json(const NodeDescriptor& d) {
    ojson j;
    j["kind"] = to_string(d.kind);
    if (d.kind == NodeKind::Cell) {
        j["block_id"] = d.block_id;
        j["col_index"] = d.col_index;
        j["column_name"] = d.column_name;
    } else if (d.kind == NodeKind::Sentence) {
        j["block_id"] = d.block_id;
        j["passage_id"] = d.passage_id;
        j["sentence_index"] = d.sentence_index;
    }
    j["content"] = d.content;
    return j;
}

NodeDescriptor parse_descriptor(const nlohmann::json& j) {
    NodeDescriptor d;
    const auto kind = j.at("kind").get<std::string>();
    if (kind == "question") {
        d.kind = NodeKind::Question;
    } else if (kind == "cell") {
        d.kind = NodeKind::Cell;
        d.block_id = j.at("block_id").get<std::string>();
        d.col_index = j.at("col_index").get<std::size_t>();
        d.column_name = j.at("column_name").get<std::string>();
    } else if (kind == "sentence") {
        d.kind = NodeKind::Sentence;
        d.block_id = j.at("block_id").get<std::string>();
        d.passage_id = j.at("passage_id").get<std::string>();
        d.sentence_index = j.at("sentence_index").get<std::size_t>();
    } else {
        throw CorpusError("unknown node kind '" + kind + "'");
    }
    d.content = j.at("content").get<std::string>();
    return d;
}

ojson chain_json(const std::vector<NodeDescriptor>& nodes) {
    auto arr = ojson::array();
    for (const auto& d : nodes) {
        arr.push_back(descriptor_json(d));
    }
    return arr;
}

std::vector<NodeDescriptor> parse_chain(const nlohmann::json& j) {
    std::vector<NodeDescriptor> out;
    for (const auto& item : j) {
        out.push_back(parse_descriptor(item));
    }
    return out;
}

std::vector<NodeDescriptor> describe_chain(const HybridChain& chain, const HybridGraph& graph) {
    std::vector<NodeDescriptor> out;
    out.reserve(chain.node_ids.size());
    for (NodeId id : chain.node_ids) {
        out.push_back(describe_node(graph.node(id)));
    }
    return out;
}

} // namespace

void PipelineConfig::apply_settings(const std::map<std::string, std::string>& settings) {
    for (const auto& [key, value] : settings) {
        if (key == "retrieval_k") {
            retrieval_k = parse_count(key, value);
        } else if (key == "index_kind") {
            index_kind = parse_index_kind(value);
        } else if (key == "graph_mode") {
            graph.mode = parse_graph_mode(value);
        } else if (key == "contextual_degree_cap") {
            graph.contextual_degree_cap = parse_count(key, value);
        } else if (key == "max_paths_per_node") {
            limits.max_paths_per_node = parse_count(key, value);
        } else if (key == "max_hops") {
            limits.max_hops = parse_count(key, value);
        } else if (key == "keep_chains") {
            keep_chains = parse_count(key, value);
        } else if (key == "recall_ks") {
            recall_ks = parse_count_list(key, value);
        } else if (key == "threads") {
            threads = std::max<std::size_t>(1, parse_count(key, value));
        }
    }
}

bool Prediction::has_flag(std::string_view flag) const {
    return std::find(flags.begin(), flags.end(), flag) != flags.end();
}

NodeDescriptor describe_node(const GraphNode& node) {
    NodeDescriptor d;
    d.kind = node.kind;
    d.content = node.content;
    if (const auto* cell = std::get_if<CellOrigin>(&node.origin)) {
        d.block_id = cell->block_id;
        d.col_index = cell->col_index;
        d.column_name = cell->column_name;
    } else if (const auto* sentence = std::get_if<SentenceOrigin>(&node.origin)) {
        d.block_id = sentence->block_id;
        d.passage_id = sentence->passage_id;
        d.sentence_index = sentence->sentence_index;
    }
    return d;
}

bool descriptor_contains_answer(const NodeDescriptor& node, std::string_view answer) {
    GraphNode probe;
    probe.kind = node.kind;
    probe.content = node.content;
    return contains_answer(probe, answer);
}

Prediction answer_question(const QAInstance& qa, const RetrievalResult& retrieved, const Corpus& corpus,
                           const FusedBlockSet& blocks, const ModelGateway& gateway,
                           const PipelineConfig& config) {
    Prediction out;
    out.question_id = qa.question_id;
    try {
        std::vector<const FusedBlock*> evidence;
        for (const auto& r : retrieved) {
            if (!(r.score > 0.0)) {
                continue;
            }
            if (const FusedBlock* block = blocks.find(r.block_id)) {
                evidence.push_back(block);
            }
        }
        if (evidence.empty()) {
            out.flags.emplace_back(kFlagNoRetrieval);
            return out;
        }
        const HybridGraph graph = build_graph(qa.question, evidence, corpus, config.graph);
        if (graph.contextual_capped()) {
            out.flags.emplace_back(kFlagCapped);
        }
        const ChainCandidateSet candidates = enumerate_candidates(graph, config.limits);
        if (candidates.truncated) {
            out.flags.emplace_back(kFlagTruncated);
        }
        if (candidates.chains.empty()) {
            out.flags.emplace_back(kFlagNoCandidates);
            return out;
        }
        const ChainSelection selection = select_chain(qa.question, candidates.chains, graph, gateway);
        const RankedChain& best = selection.best();
        const GraphNode& terminal = graph.node(best.chain.terminal());
        out.prediction = terminal.content;
        if (terminal.kind == NodeKind::Sentence) {
            out.flags.emplace_back(kFlagSentenceAnswer);
        }
        out.chain = describe_chain(best.chain, graph);
        out.score = best.score;
        out.margin = selection.margin();
        const std::size_t keep = std::min(config.keep_chains, selection.ranked.size());
        for (std::size_t i = 0; i < keep; ++i) {
            out.top_chains.push_back({selection.ranked[i].score, describe_chain(selection.ranked[i].chain, graph)});
        }
    } catch (const std::exception& e) {
        out.prediction.clear();
        out.chain.clear();
        out.top_chains.clear();
        out.flags.emplace_back(kFlagError);
        out.error = e.what();
    }
    return out;
}

PipelineResult run_pipeline(std::span<const QAInstance> questions, const Corpus& corpus,
                            const FusedBlockSet& blocks, const BlockIndex& index, const ModelGateway& gateway,
                            const PipelineConfig& config) {
    PipelineResult result;
    result.predictions.resize(questions.size());
    parallel_for(questions.size(), config.threads, [&](std::size_t i) {
        const QAInstance& qa = questions[i];
        RetrievalResult retrieved;
        try {
            retrieved = retrieve(index, qa.question, config.retrieval_k, gateway);
        } catch (const std::exception& e) {
            Prediction failed;
            failed.question_id = qa.question_id;
            failed.flags.emplace_back(kFlagError);
            failed.error = e.what();
            result.predictions[i] = std::move(failed);
            return;
        }
        result.predictions[i] = answer_question(qa, retrieved, corpus, blocks, gateway, config);
    });
    result.report = evaluate_predictions(result.predictions, questions, config.recall_ks);
    return result;
}

EvalReport evaluate_predictions(std::span<const Prediction> predictions, std::span<const QAInstance> gold,
                                std::span<const std::size_t> recall_ks) {
    EvalReport report;
    std::unordered_map<std::string_view, const Prediction*> by_id;
    for (const auto& p : predictions) {
        by_id.emplace(p.question_id, &p);
        if (p.has_flag(kFlagNoRetrieval) || p.has_flag(kFlagNoCandidates)) {
            ++report.skipped;
        }
        if (p.has_flag(kFlagError)) {
            ++report.failed;
        }
        if (p.has_flag(kFlagSentenceAnswer)) {
            ++report.sentence_answers;
        }
    }
    std::map<std::size_t, std::size_t> hits;
    for (std::size_t k : recall_ks) {
        hits[k] = 0;
    }
    double em = 0.0;
    double f1 = 0.0;
    for (const auto& qa : gold) {
        if (qa.answer.empty()) {
            continue;
        }
        ++report.evaluated;
        auto it = by_id.find(qa.question_id);
        if (it == by_id.end()) {
            continue;
        }
        const Prediction& p = *it->second;
        em += exact_match(p.prediction, qa.answer);
        f1 += token_f1(p.prediction, qa.answer);
        std::size_t first_hit = p.top_chains.size();
        for (std::size_t r = 0; r < p.top_chains.size(); ++r) {
            const auto& nodes = p.top_chains[r].nodes;
            if (std::any_of(nodes.begin(), nodes.end(),
                            [&](const NodeDescriptor& d) { return descriptor_contains_answer(d, qa.answer); })) {
                first_hit = r;
                break;
            }
        }
        for (auto& [k, count] : hits) {
            if (first_hit < k) {
                ++count;
            }
        }
    }
    if (report.evaluated > 0) {
        const auto n = static_cast<double>(report.evaluated);
        report.em = em / n;
        report.f1 = f1 / n;
        for (const auto& [k, count] : hits) {
            report.recall_at[k] = static_cast<double>(count) / n;
        }
    } else {
        for (const auto& [k, count] : hits) {
            report.recall_at[k] = 0.0;
        }
    }
    return report;
}

std::string prediction_record(const Prediction& prediction) {
    ojson j;
    j["question_id"] = prediction.question_id;
    j["prediction"] = prediction.prediction;
    j["chain"] = chain_json(prediction.chain);
    j["flags"] = prediction.flags;
    j["score"] = prediction.score;
    j["margin"] = prediction.margin;
    auto top = ojson::array();
    for (const auto& c : prediction.top_chains) {
        ojson item;
        item["score"] = c.score;
        item["chain"] = chain_json(c.nodes);
        top.push_back(std::move(item));
    }
    j["top_chains"] = std::move(top);
    if (!prediction.error.empty()) {
        j["error"] = prediction.error;
    }
    return j.dump();
}

Prediction parse_prediction_record(std::string_view line) {
    try {
        const auto j = nlohmann::json::parse(line);
        Prediction p;
        p.question_id = j.at("question_id").get<std::string>();
        p.prediction = j.at("prediction").get<std::string>();
        p.chain = parse_chain(j.at("chain"));
        p.flags = j.at("flags").get<std::vector<std::string>>();
        p.score = j.value("score", 0.0);
        p.margin = j.value("margin", 0.0);
        if (auto top = j.find("top_chains"); top != j.end()) {
            for (const auto& item : *top) {
                p.top_chains.push_back({item.at("score").get<double>(), parse_chain(item.at("chain"))});
            }
        }
        p.error = j.value("error", std::string());
        return p;
    } catch (const nlohmann::json::exception& e) {
        throw CorpusError(std::string("prediction record: ") + e.what());
    }
}

std::vector<Prediction> load_predictions(const std::filesystem::path& path) {
    std::vector<Prediction> out;
    for_each_record(path, [&](std::string_view line, std::size_t) { out.push_back(parse_prediction_record(line)); });
    return out;
}

} // namespace chainqa
