#include "chainqa/eval.hpp"

#include "chainqa/error.hpp"
#include "chainqa/gateway.hpp"
#include "chainqa/text.hpp"

#include <json.hpp>

#include <algorithm>
#include <cctype>
#include <fstream>
#include <numeric>
#include <sstream>

namespace chainqa {

double ChainSelection::margin() const {
    return ranked.size() < 2 ? 0.0 : ranked[0].score - ranked[1].score;
}

ChainSelection select_chain(std::string_view question, std::span<const HybridChain> candidates,
                            const HybridGraph& graph, const ModelGateway& scorer) {
    if (candidates.empty()) {
        throw Error("select_chain: no candidate chains");
    }
    std::vector<std::string> texts;
    texts.reserve(candidates.size());
    for (const auto& c : candidates) {
        texts.push_back(verbalize_chain(c, graph));
    }
    const auto scored = scorer.score_chains(question, texts);
    ChainSelection selection;
    selection.ranked.reserve(candidates.size());
    for (std::size_t i = 0; i < candidates.size(); ++i) {
        selection.ranked.push_back({i, candidates[i], std::move(texts[i]), scored[i].score});
    }
    std::stable_sort(selection.ranked.begin(), selection.ranked.end(),
                     [](const RankedChain& a, const RankedChain& b) { return a.score > b.score; });
    return selection;
}

bool chain_contains_answer(const HybridChain& chain, const HybridGraph& graph, std::string_view answer) {
    return std::any_of(chain.node_ids.begin(), chain.node_ids.end(),
                       [&](NodeId id) { return contains_answer(graph.node(id), answer); });
}

double chain_recall(std::span<const ChainSelection> selections, std::span<const HybridGraph> graphs,
                    std::span<const std::string> answers, std::size_t k) {
    if (selections.size() != graphs.size() || selections.size() != answers.size()) {
        throw Error("chain_recall: one graph and answer per selection required");
    }
    if (selections.empty()) {
        return 0.0;
    }
    std::size_t hits = 0;
    for (std::size_t q = 0; q < selections.size(); ++q) {
        const auto& ranked = selections[q].ranked;
        const std::size_t depth = std::min(k, ranked.size());
        for (std::size_t i = 0; i < depth; ++i) {
            if (chain_contains_answer(ranked[i].chain, graphs[q], answers[q])) {
                ++hits;
                break;
            }
        }
    }
    return static_cast<double>(hits) / static_cast<double>(selections.size());
}

namespace {

std::vector<std::string> answer_tokens(std::string_view text) {
    std::istringstream in(normalize_answer(text));
    std::vector<std::string> tokens;
    for (std::string t; in >> t;) {
        tokens.push_back(std::move(t));
    }
    return tokens;
}

} // namespace

std::string normalize_answer(std::string_view text) {
    std::string stripped;
    stripped.reserve(text.size());
    for (char c : text) {
        const auto u = static_cast<unsigned char>(c);
        if (std::ispunct(u)) {
            continue;
        }
        stripped.push_back(static_cast<char>(std::tolower(u)));
    }
    std::istringstream in(stripped);
    std::string out;
    for (std::string word; in >> word;) {
        if (word == "a" || word == "an" || word == "the") {
            continue;
        }
        if (!out.empty()) {
            out.push_back(' ');
        }
        out += word;
    }
    return out;
}

int exact_match(std::string_view prediction, std::string_view gold) {
    return normalize_answer(prediction) == normalize_answer(gold) ? 1 : 0;
}

double token_f1(std::string_view prediction, std::string_view gold) {
    const auto pred = answer_tokens(prediction);
    const auto ref = answer_tokens(gold);
    if (pred.empty() && ref.empty()) {
        return 1.0;
    }
    if (pred.empty() || ref.empty()) {
        return 0.0;
    }
    std::map<std::string, std::size_t> counts;
    for (const auto& t : ref) {
        ++counts[t];
    }
    std::size_t common = 0;
    for (const auto& t : pred) {
        auto it = counts.find(t);
        if (it != counts.end() && it->second > 0) {
            --it->second;
            ++common;
        }
    }
    if (common == 0) {
        return 0.0;
    }
    const double precision = static_cast<double>(common) / static_cast<double>(pred.size());
    const double recall = static_cast<double>(common) / static_cast<double>(ref.size());
    return 2.0 * precision * recall / (precision + recall);
}

std::string eval_report_record(const EvalReport& report) {
    nlohmann::ordered_json j;
    nlohmann::ordered_json recall;
    for (const auto& [k, v] : report.recall_at) {
        recall[std::to_string(k)] = v;
    }
    j["recall_at"] = recall;
    j["em"] = report.em;
    j["f1"] = report.f1;
    j["evaluated"] = report.evaluated;
    j["skipped"] = report.skipped;
    j["failed"] = report.failed;
    j["sentence_answers"] = report.sentence_answers;
    return j.dump();
}

std::map<std::string, std::string> parse_config(std::string_view text) {
    std::map<std::string, std::string> out;
    std::istringstream in{std::string(text)};
    std::string line;
    std::size_t lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        if (auto hash = line.find('#'); hash != std::string::npos) {
            line.erase(hash);
        }
        const auto body = trim(line);
        if (body.empty()) {
            continue;
        }
        const auto eq = body.find('=');
        if (eq == std::string::npos) {
            throw Error("config line " + std::to_string(lineno) + ": expected key=value");
        }
        auto key = trim(std::string_view(body).substr(0, eq));
        if (key.empty()) {
            throw Error("config line " + std::to_string(lineno) + ": empty key");
        }
        out[key] = trim(std::string_view(body).substr(eq + 1));
    }
    return out;
}

std::map<std::string, std::string> load_config(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) {
        throw Error("cannot open config " + path.string());
    }
    std::stringstream buffer;
    buffer << in.rdbuf();
    return parse_config(buffer.str());
}

} // namespace chainqa
