#include "chainqa/retrieval.hpp"

#include "chainqa/chains.hpp"
#include "chainqa/error.hpp"
#include "chainqa/gateway.hpp"
#include "chainqa/text.hpp"

#include <json.hpp>

#include <algorithm>
#include <fstream>
#include <istream>
#include <ostream>
#include <set>
#include <sstream>

namespace chainqa {

namespace {

constexpr std::string_view kIndexMagic = "chainqa-index";
constexpr int kIndexVersion = 1;

bool ranks_before(const RetrievedBlock& a, const RetrievedBlock& b) {
    if (a.score != b.score) {
        return a.score > b.score;
    }
    return a.block_id < b.block_id;
}

std::string table_of(std::string_view block_id) {
    try {
        return parse_block_id(block_id).first;
    } catch (const CorpusError&) {
        return {};
    }
}

template <typename Hit>
double recall_fraction(std::span<const RetrievalResult> results, std::size_t k, Hit&& hit) {
    if (results.empty()) {
        return 0.0;
    }
    std::size_t hits = 0;
    for (std::size_t q = 0; q < results.size(); ++q) {
        const auto& ranked = results[q];
        const std::size_t depth = std::min(k, ranked.size());
        for (std::size_t i = 0; i < depth; ++i) {
            if (hit(q, ranked[i])) {
                ++hits;
                break;
            }
        }
    }
    return static_cast<double>(hits) / static_cast<double>(results.size());
}

} // namespace

std::string_view to_string(IndexKind kind) { return kind == IndexKind::Sparse ? "sparse" : "dense"; }

IndexKind parse_index_kind(std::string_view text) {
    const auto lower = to_lower(text);
    if (lower == "sparse") {
        return IndexKind::Sparse;
    }
    if (lower == "dense") {
        return IndexKind::Dense;
    }
    throw Error("unknown index kind '" + std::string(text) + "' (expected sparse or dense)");
}

std::vector<std::string> index_tokens(std::string_view text) { return tokenize(text).tokens; }

BlockIndex BlockIndex::from_documents(IndexKind kind, std::vector<std::string> block_ids,
                                      std::vector<std::string> documents,
                                      std::vector<std::vector<double>> vectors) {
    if (block_ids.empty()) {
        throw Error("cannot build an index over zero blocks");
    }
    if (block_ids.size() != documents.size()) {
        throw Error("index: block ids and documents differ in length");
    }
    std::set<std::string_view> seen;
    for (const auto& id : block_ids) {
        if (id.empty() || !seen.insert(id).second) {
            throw Error("index: empty or duplicate block id '" + id + "'");
        }
    }
    BlockIndex index;
    index.kind_ = kind;
    if (kind == IndexKind::Sparse) {
        for (const auto& doc : documents) {
            index.bm25_.add_document(index_tokens(doc));
        }
    } else {
        if (vectors.size() != block_ids.size()) {
            throw Error("index: dense index needs one vector per block");
        }
        for (const auto& v : vectors) {
            if (v.empty() || v.size() != vectors.front().size()) {
                throw Error("index: dense vectors must share one non-zero dimension");
            }
        }
        index.vectors_ = std::move(vectors);
    }
    index.block_ids_ = std::move(block_ids);
    index.documents_ = std::move(documents);
    return index;
}

BlockIndex build_index(std::span<const FusedBlock> blocks, const Corpus& corpus, IndexKind kind,
                       const ModelGateway& embedder) {
    if (blocks.empty()) {
        throw Error("cannot build an index over zero blocks");
    }
    std::vector<std::string> ids;
    std::vector<std::string> docs;
    ids.reserve(blocks.size());
    docs.reserve(blocks.size());
    for (const auto& block : blocks) {
        ids.push_back(block.block_id);
        docs.push_back(verbalize_fused_block(block, corpus));
    }
    std::vector<std::vector<double>> vectors;
    if (kind == IndexKind::Dense) {
        const auto& cfg = embedder.config();
        const std::size_t step = std::max<std::size_t>(1, cfg.batch_size * cfg.max_in_flight);
        vectors.reserve(docs.size());
        for (std::size_t begin = 0; begin < docs.size(); begin += step) {
            const std::size_t end = std::min(docs.size(), begin + step);
            std::vector<std::string> chunk(docs.begin() + begin, docs.begin() + end);
            std::vector<std::vector<double>> part;
            try {
                part = embedder.embed_texts(chunk);
            } catch (const GatewayError& e) {
                throw GatewayError(std::string(e.what()) + " (index build aborted after " + std::to_string(begin) +
                                   " of " + std::to_string(docs.size()) + " blocks embedded)");
            }
            for (auto& v : part) {
                vectors.push_back(std::move(v));
            }
        }
    }
    return BlockIndex::from_documents(kind, std::move(ids), std::move(docs), std::move(vectors));
}

RetrievalResult retrieve(const BlockIndex& index, std::string_view question, std::size_t k,
                         const ModelGateway& embedder) {
    if (k == 0) {
        return {};
    }
    std::vector<double> scores;
    if (index.kind() == IndexKind::Sparse) {
        scores = index.bm25().score_all(index_tokens(question));
    } else {
        const auto query = embedder.embed_texts({std::string(question)}).front();
        if (query.size() != index.dimension()) {
            throw GatewayError("embedder: query dimension " + std::to_string(query.size()) +
                               " does not match index dimension " + std::to_string(index.dimension()));
        }
        scores.resize(index.size());
        for (std::size_t i = 0; i < index.size(); ++i) {
            const auto& v = index.vectors()[i];
            double dot = 0.0;
            for (std::size_t d = 0; d < v.size(); ++d) {
                dot += query[d] * v[d];
            }
            scores[i] = dot;
        }
    }
    RetrievalResult all;
    all.reserve(scores.size());
    for (std::size_t i = 0; i < scores.size(); ++i) {
        all.push_back({index.block_ids()[i], scores[i]});
    }
    const std::size_t depth = std::min(k, all.size());
    std::partial_sort(all.begin(), all.begin() + static_cast<std::ptrdiff_t>(depth), all.end(), ranks_before);
    all.resize(depth);
    return all;
}

double table_recall(std::span<const RetrievalResult> results, std::span<const std::string> gold_table_ids,
                    std::size_t k) {
    if (results.size() != gold_table_ids.size()) {
        throw Error("table_recall: one gold table per question required");
    }
    return recall_fraction(results, k, [&](std::size_t q, const RetrievedBlock& b) {
        return table_of(b.block_id) == gold_table_ids[q];
    });
}

double block_recall(std::span<const RetrievalResult> results, std::span<const std::string> gold_table_ids,
                    std::span<const std::string> answers, std::size_t k, const FusedBlockSet& blocks,
                    const Corpus& corpus) {
    if (results.size() != gold_table_ids.size() || results.size() != answers.size()) {
        throw Error("block_recall: one gold table and answer per question required");
    }
    return recall_fraction(results, k, [&](std::size_t q, const RetrievedBlock& b) {
        if (table_of(b.block_id) != gold_table_ids[q]) {
            return false;
        }
        const FusedBlock* block = blocks.find(b.block_id);
        return block != nullptr && block_contains_answer(*block, corpus, answers[q]);
    });
}

void BlockIndex::save(std::ostream& out) const {
    out << kIndexMagic << ' ' << kIndexVersion << ' ' << to_string(kind_) << '\n';
    for (std::size_t i = 0; i < size(); ++i) {
        nlohmann::ordered_json j;
        j["block_id"] = block_ids_[i];
        j["text"] = documents_[i];
        if (kind_ == IndexKind::Dense) {
            j["vector"] = vectors_[i];
        }
        out << j.dump() << '\n';
    }
}

void BlockIndex::save(const std::filesystem::path& path) const {
    std::ofstream out(path);
    if (!out) {
        throw Error("cannot write " + path.string());
    }
    save(out);
}

BlockIndex BlockIndex::load(std::istream& in) {
    std::string header;
    if (!std::getline(in, header)) {
        throw Error("index: missing header");
    }
    std::istringstream hs(header);
    std::string magic;
    int version = 0;
    std::string kind_text;
    if (!(hs >> magic >> version >> kind_text) || magic != kIndexMagic) {
        throw Error("index: bad header '" + header + "'");
    }
    if (version != kIndexVersion) {
        throw Error("index: unsupported version " + std::to_string(version));
    }
    const IndexKind kind = parse_index_kind(kind_text);
    std::vector<std::string> ids;
    std::vector<std::string> docs;
    std::vector<std::vector<double>> vectors;
    std::string line;
    std::size_t lineno = 1;
    while (std::getline(in, line)) {
        ++lineno;
        if (trim(line).empty()) {
            continue;
        }
        try {
            const auto j = nlohmann::json::parse(line);
            ids.push_back(j.at("block_id").get<std::string>());
            docs.push_back(j.at("text").get<std::string>());
            if (kind == IndexKind::Dense) {
                vectors.push_back(j.at("vector").get<std::vector<double>>());
            }
        } catch (const nlohmann::json::exception& e) {
            throw Error("index line " + std::to_string(lineno) + ": " + e.what());
        }
    }
    return from_documents(kind, std::move(ids), std::move(docs), std::move(vectors));
}

BlockIndex BlockIndex::load(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) {
        throw Error("cannot open " + path.string());
    }
    return load(in);
}

std::string retrieval_record(std::string_view question_id, const RetrievalResult& result) {
    nlohmann::ordered_json j;
    j["question_id"] = question_id;
    auto ranked = nlohmann::ordered_json::array();
    for (const auto& r : result) {
        nlohmann::ordered_json item;
        item["block_id"] = r.block_id;
        item["score"] = r.score;
        ranked.push_back(std::move(item));
    }
    j["ranked"] = std::move(ranked);
    return j.dump();
}

std::pair<std::string, RetrievalResult> parse_retrieval_record(std::string_view line) {
    try {
        const auto j = nlohmann::json::parse(line);
        RetrievalResult result;
        for (const auto& item : j.at("ranked")) {
            result.push_back({item.at("block_id").get<std::string>(), item.at("score").get<double>()});
        }
        return {j.at("question_id").get<std::string>(), std::move(result)};
    } catch (const nlohmann::json::exception& e) {
        throw CorpusError(std::string("retrieval record: ") + e.what());
    }
}

} // namespace chainqa
