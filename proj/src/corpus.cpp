#include "chainqa/corpus.hpp"

#include "chainqa/error.hpp"
#include "chainqa/jsonl.hpp"
#include "chainqa/text.hpp"

#include <json.hpp>

#include <algorithm>
#include <charconv>
#include <ostream>

namespace chainqa {

using nlohmann::json;
using nlohmann::ordered_json;

namespace {

json parse_object(std::string_view line) {
    json j;
    try {
        j = json::parse(line);
    } catch (const json::parse_error& e) {
        throw CorpusError(std::string("malformed record: ") + e.what());
    }
    if (!j.is_object()) {
        throw CorpusError("malformed record: expected a JSON object");
    }
    return j;
}

std::string require_string(const json& j, const char* field) {
    auto it = j.find(field);
    if (it == j.end() || !it->is_string()) {
        throw CorpusError(std::string("malformed record: field '") + field + "' must be a string");
    }
    return it->get<std::string>();
}

std::optional<std::string> optional_string(const json& j, const char* field) {
    auto it = j.find(field);
    if (it == j.end() || it->is_null()) {
        return std::nullopt;
    }
    if (!it->is_string()) {
        throw CorpusError(std::string("malformed record: field '") + field + "' must be a string");
    }
    return it->get<std::string>();
}

std::size_t require_index(const json& j, const char* field) {
    auto it = j.find(field);
    if (it == j.end() || !it->is_number_integer() || it->get<long long>() < 0) {
        throw CorpusError(std::string("malformed record: field '") + field +
                          "' must be a non-negative integer");
    }
    return it->get<std::size_t>();
}

std::vector<std::string> require_string_array(const json& j, const char* field) {
    if (!j.is_array()) {
        throw CorpusError(std::string("malformed record: field '") + field + "' must be an array");
    }
    std::vector<std::string> out;
    out.reserve(j.size());
    for (const auto& item : j) {
        if (!item.is_string()) {
            throw CorpusError(std::string("malformed record: field '") + field +
                              "' must contain only strings");
        }
        out.push_back(item.get<std::string>());
    }
    return out;
}

void validate_table(const Table& t) {
    if (t.table_id.empty()) {
        throw CorpusError("table_id must be non-empty");
    }
    if (t.header.empty()) {
        throw CorpusError("table '" + t.table_id + "' has an empty header");
    }
    for (std::size_t r = 0; r < t.rows.size(); ++r) {
        if (t.rows[r].size() != t.header.size()) {
            throw CorpusError("table '" + t.table_id + "' row " + std::to_string(r) + " has " +
                              std::to_string(t.rows[r].size()) + " cells, header has " +
                              std::to_string(t.header.size()));
        }
    }
}

} // namespace

std::vector<std::string> FusedBlock::distinct_passages() const {
    std::vector<std::string> out;
    for (const auto& lp : linked_passages) {
        if (std::find(out.begin(), out.end(), lp.passage_id) == out.end()) {
            out.push_back(lp.passage_id);
        }
    }
    return out;
}

std::string make_block_id(std::string_view table_id, std::size_t row_index) {
    return std::string(table_id) + "#" + std::to_string(row_index);
}

std::pair<std::string, std::size_t> parse_block_id(std::string_view block_id) {
    auto hash = block_id.rfind('#');
    if (hash == std::string_view::npos || hash == 0 || hash + 1 == block_id.size()) {
        throw CorpusError("malformed block id '" + std::string(block_id) + "'");
    }
    auto digits = block_id.substr(hash + 1);
    std::size_t row = 0;
    auto [ptr, ec] = std::from_chars(digits.data(), digits.data() + digits.size(), row);
    if (ec != std::errc() || ptr != digits.data() + digits.size()) {
        throw CorpusError("malformed block id '" + std::string(block_id) + "'");
    }
    return {std::string(block_id.substr(0, hash)), row};
}

Table parse_table_record(std::string_view line) {
    const auto j = parse_object(line);
    Table t;
    t.table_id = require_string(j, "table_id");
    t.title = require_string(j, "title");
    t.section_title = optional_string(j, "section_title").value_or("");
    auto header = j.find("header");
    if (header == j.end()) {
        throw CorpusError("malformed record: missing field 'header'");
    }
    t.header = require_string_array(*header, "header");
    auto rows = j.find("rows");
    if (rows == j.end() || !rows->is_array()) {
        throw CorpusError("malformed record: field 'rows' must be an array");
    }
    for (const auto& row : *rows) {
        t.rows.push_back(require_string_array(row, "rows"));
    }
    validate_table(t);
    return t;
}

Passage parse_passage_record(std::string_view line) {
    const auto j = parse_object(line);
    Passage p;
    p.passage_id = require_string(j, "passage_id");
    p.title = require_string(j, "title");
    p.text = require_string(j, "text");
    if (p.passage_id.empty()) {
        throw CorpusError("passage_id must be non-empty");
    }
    p.sentences = split_sentences(p.text);
    return p;
}

CellLink parse_link_record(std::string_view line) {
    const auto j = parse_object(line);
    CellLink l;
    l.table_id = require_string(j, "table_id");
    l.row_index = require_index(j, "row_index");
    l.col_index = require_index(j, "col_index");
    l.passage_id = require_string(j, "passage_id");
    return l;
}

QAInstance parse_qa_record(std::string_view line, bool require_answer) {
    const auto j = parse_object(line);
    QAInstance qa;
    qa.question_id = require_string(j, "question_id");
    qa.question = require_string(j, "question");
    if (require_answer) {
        qa.answer = require_string(j, "answer");
        if (trim(qa.answer).empty()) {
            throw CorpusError("question '" + qa.question_id + "' has an empty answer");
        }
    } else {
        qa.answer = optional_string(j, "answer").value_or("");
    }
    qa.gold_table_id = optional_string(j, "gold_table_id");
    qa.gold_block_id = optional_string(j, "gold_block_id");
    return qa;
}

std::string table_record(const Table& t) {
    ordered_json j;
    j["table_id"] = t.table_id;
    j["title"] = t.title;
    j["section_title"] = t.section_title;
    j["header"] = t.header;
    j["rows"] = t.rows;
    return j.dump();
}

std::string passage_record(const Passage& p) {
    ordered_json j;
    j["passage_id"] = p.passage_id;
    j["title"] = p.title;
    j["text"] = p.text;
    return j.dump();
}

std::string link_record(const CellLink& l) {
    ordered_json j;
    j["table_id"] = l.table_id;
    j["row_index"] = l.row_index;
    j["col_index"] = l.col_index;
    j["passage_id"] = l.passage_id;
    return j.dump();
}

std::string qa_record(const QAInstance& qa) {
    ordered_json j;
    j["question_id"] = qa.question_id;
    j["question"] = qa.question;
    j["answer"] = qa.answer;
    if (qa.gold_table_id) {
        j["gold_table_id"] = *qa.gold_table_id;
    }
    if (qa.gold_block_id) {
        j["gold_block_id"] = *qa.gold_block_id;
    }
    return j.dump();
}

Corpus Corpus::from_records(std::vector<Table> tables, std::vector<Passage> passages,
                            std::vector<CellLink> links) {
    Corpus c;
    c.tables_ = std::move(tables);
    c.passages_ = std::move(passages);
    c.links_ = std::move(links);

    for (std::size_t i = 0; i < c.tables_.size(); ++i) {
        validate_table(c.tables_[i]);
        if (!c.table_index_.emplace(c.tables_[i].table_id, i).second) {
            throw CorpusError("duplicate table_id '" + c.tables_[i].table_id + "'");
        }
    }
    for (std::size_t i = 0; i < c.passages_.size(); ++i) {
        auto& p = c.passages_[i];
        if (p.passage_id.empty()) {
            throw CorpusError("passage_id must be non-empty");
        }
        if (p.sentences.empty() && !p.text.empty()) {
            p.sentences = split_sentences(p.text);
        }
        if (!c.passage_index_.emplace(p.passage_id, i).second) {
            throw CorpusError("duplicate passage_id '" + p.passage_id + "'");
        }
    }
    std::set<CellLink> seen;
    for (const auto& l : c.links_) {
        const Table* t = c.find_table(l.table_id);
        if (t == nullptr) {
            throw CorpusError("dangling link: unknown table_id '" + l.table_id + "'");
        }
        if (l.row_index >= t->rows.size() || l.col_index >= t->header.size()) {
            throw CorpusError("dangling link: cell (" + std::to_string(l.row_index) + ", " +
                              std::to_string(l.col_index) + ") out of range for table '" +
                              l.table_id + "'");
        }
        if (c.find_passage(l.passage_id) == nullptr) {
            throw CorpusError("dangling link: unknown passage_id '" + l.passage_id + "'");
        }
        if (!seen.insert(l).second) {
            throw CorpusError("duplicate link " + link_record(l));
        }
        c.row_links_[{l.table_id, l.row_index}].push_back({l.col_index, l.passage_id});
    }
    for (auto& [key, row] : c.row_links_) {
        std::sort(row.begin(), row.end());
    }
    return c;
}

Corpus Corpus::load(const std::filesystem::path& tables_path,
                    const std::filesystem::path& passages_path,
                    const std::filesystem::path& links_path) {
    std::vector<Table> tables;
    std::vector<Passage> passages;
    std::vector<CellLink> links;
    std::set<std::string, std::less<>> table_ids;
    std::set<std::string, std::less<>> passage_ids;

    for_each_record(tables_path, [&](std::string_view line, std::size_t) {
        auto t = parse_table_record(line);
        if (!table_ids.insert(t.table_id).second) {
            throw CorpusError("duplicate table_id '" + t.table_id + "'");
        }
        tables.push_back(std::move(t));
    });
    for_each_record(passages_path, [&](std::string_view line, std::size_t) {
        auto p = parse_passage_record(line);
        if (!passage_ids.insert(p.passage_id).second) {
            throw CorpusError("duplicate passage_id '" + p.passage_id + "'");
        }
        passages.push_back(std::move(p));
    });
    // Links are checked against the ids here so errors carry a line number.
    std::map<std::string, std::pair<std::size_t, std::size_t>, std::less<>> shapes;
    for (const auto& t : tables) {
        shapes[t.table_id] = {t.rows.size(), t.header.size()};
    }
    std::set<CellLink> seen;
    if (links_path.empty()) {
        return from_records(std::move(tables), std::move(passages), std::move(links));
    }
    for_each_record(links_path, [&](std::string_view line, std::size_t) {
        auto l = parse_link_record(line);
        auto shape = shapes.find(l.table_id);
        if (shape == shapes.end()) {
            throw CorpusError("dangling link: unknown table_id '" + l.table_id + "'");
        }
        if (l.row_index >= shape->second.first || l.col_index >= shape->second.second) {
            throw CorpusError("dangling link: cell (" + std::to_string(l.row_index) + ", " +
                              std::to_string(l.col_index) + ") out of range for table '" +
                              l.table_id + "'");
        }
        if (!passage_ids.contains(l.passage_id)) {
            throw CorpusError("dangling link: unknown passage_id '" + l.passage_id + "'");
        }
        if (!seen.insert(l).second) {
            throw CorpusError("duplicate link");
        }
        links.push_back(std::move(l));
    });
    return from_records(std::move(tables), std::move(passages), std::move(links));
}

const Table* Corpus::find_table(std::string_view table_id) const {
    auto it = table_index_.find(table_id);
    return it == table_index_.end() ? nullptr : &tables_[it->second];
}

const Passage* Corpus::find_passage(std::string_view passage_id) const {
    auto it = passage_index_.find(passage_id);
    return it == passage_index_.end() ? nullptr : &passages_[it->second];
}

std::span<const LinkedPassage> Corpus::row_links(std::string_view table_id, std::size_t row_index) const {
    auto it = row_links_.find({std::string(table_id), row_index});
    if (it == row_links_.end()) {
        return {};
    }
    return it->second;
}

bool Corpus::has_block(std::string_view block_id) const {
    try {
        auto [table_id, row] = parse_block_id(block_id);
        const Table* t = find_table(table_id);
        return t != nullptr && row < t->rows.size();
    } catch (const CorpusError&) {
        return false;
    }
}

void Corpus::dump_tables(std::ostream& out) const {
    for (const auto& t : tables_) {
        out << table_record(t) << '\n';
    }
}

void Corpus::dump_passages(std::ostream& out) const {
    for (const auto& p : passages_) {
        out << passage_record(p) << '\n';
    }
}

void Corpus::dump_links(std::ostream& out) const {
    for (const auto& l : links_) {
        out << link_record(l) << '\n';
    }
}

std::vector<QAInstance> load_qa(const std::filesystem::path& path, const Corpus* corpus,
                                bool require_answer) {
    std::vector<QAInstance> out;
    std::set<std::string, std::less<>> ids;
    for_each_record(path, [&](std::string_view line, std::size_t) {
        auto qa = parse_qa_record(line, require_answer);
        if (!ids.insert(qa.question_id).second) {
            throw CorpusError("duplicate question_id '" + qa.question_id + "'");
        }
        if (corpus != nullptr) {
            if (qa.gold_table_id && corpus->find_table(*qa.gold_table_id) == nullptr) {
                throw CorpusError("unknown gold_table_id '" + *qa.gold_table_id + "'");
            }
            if (qa.gold_block_id && !corpus->has_block(*qa.gold_block_id)) {
                throw CorpusError("unknown gold_block_id '" + *qa.gold_block_id + "'");
            }
        }
        out.push_back(std::move(qa));
    });
    return out;
}

std::string normalize_title(std::string_view text) { return to_lower(normalize_whitespace(text)); }

TitleIndex::TitleIndex(std::span<const Passage> passages) {
    for (const auto& p : passages) {
        auto key = normalize_title(p.title);
        if (!key.empty()) {
            by_title_[key].push_back(p.passage_id);
        }
    }
    for (auto& [title, ids] : by_title_) {
        std::sort(ids.begin(), ids.end());
    }
}

std::span<const std::string> TitleIndex::find(std::string_view normalized_title) const {
    auto it = by_title_.find(normalized_title);
    if (it == by_title_.end()) {
        return {};
    }
    return it->second;
}

std::vector<CellLink> heuristic_link(const Table& table, const TitleIndex& titles,
                                     const std::set<CellLink>& existing) {
    std::vector<CellLink> out;
    for (std::size_t r = 0; r < table.rows.size(); ++r) {
        for (std::size_t c = 0; c < table.rows[r].size(); ++c) {
            auto key = normalize_title(table.rows[r][c]);
            if (key.empty()) {
                continue;
            }
            for (const auto& pid : titles.find(key)) {
                CellLink link{table.table_id, r, c, pid};
                if (!existing.contains(link)) {
                    out.push_back(std::move(link));
                }
            }
        }
    }
    return out;
}

FusedBlockSet::FusedBlockSet(std::vector<FusedBlock> blocks) : blocks_(std::move(blocks)) {
    for (std::size_t i = 0; i < blocks_.size(); ++i) {
        if (!index_.emplace(blocks_[i].block_id, i).second) {
            throw CorpusError("duplicate block_id '" + blocks_[i].block_id + "'");
        }
    }
}

const FusedBlock* FusedBlockSet::find(std::string_view block_id) const {
    auto it = index_.find(block_id);
    return it == index_.end() ? nullptr : &blocks_[it->second];
}

std::vector<const FusedBlock*> FusedBlockSet::of_table(std::string_view table_id) const {
    std::vector<const FusedBlock*> out;
    // Blocks are sorted by (table_id, row_index), so a table's rows are contiguous.
    auto first = std::lower_bound(blocks_.begin(), blocks_.end(), table_id,
                                  [](const FusedBlock& b, std::string_view id) { return b.table_id < id; });
    for (auto it = first; it != blocks_.end() && it->table_id == table_id; ++it) {
        out.push_back(&*it);
    }
    return out;
}

FusedBlockSet build_fused_blocks(const Corpus& corpus, std::size_t min_linked_passages) {
    std::vector<const Table*> tables;
    tables.reserve(corpus.tables().size());
    for (const auto& t : corpus.tables()) {
        tables.push_back(&t);
    }
    std::sort(tables.begin(), tables.end(),
              [](const Table* a, const Table* b) { return a->table_id < b->table_id; });

    std::vector<FusedBlock> blocks;
    for (const Table* t : tables) {
        for (std::size_t r = 0; r < t->rows.size(); ++r) {
            FusedBlock block;
            block.table_id = t->table_id;
            block.row_index = r;
            block.block_id = make_block_id(t->table_id, r);
            for (std::size_t c = 0; c < t->header.size(); ++c) {
                block.cells.push_back({c, trim(t->header[c]), trim(t->rows[r][c])});
            }
            auto links = corpus.row_links(t->table_id, r);
            block.linked_passages.assign(links.begin(), links.end());
            if (block.distinct_passages().size() >= min_linked_passages) {
                blocks.push_back(std::move(block));
            }
        }
    }
    return FusedBlockSet(std::move(blocks));
}

std::string passage_body(const Passage& passage) {
    std::string out;
    for (const auto& s : passage.sentences) {
        if (!out.empty()) {
            out += ' ';
        }
        out += s;
    }
    return out;
}

std::string verbalize_fused_block(const FusedBlock& block, const Corpus& corpus) {
    const Table* table = corpus.find_table(block.table_id);
    std::string out = "[TAB] [TITLE] ";
    out += table != nullptr ? table->title : std::string();
    out += " [DATA] ";
    for (std::size_t i = 0; i < block.cells.size(); ++i) {
        if (i > 0) {
            out += " [SEP] ";
        }
        out += block.cells[i].content;
    }
    const auto passages = block.distinct_passages();
    if (!passages.empty()) {
        out += " [PASSAGES] ";
        for (std::size_t i = 0; i < passages.size(); ++i) {
            if (i > 0) {
                out += " [SEP] ";
            }
            const Passage* p = corpus.find_passage(passages[i]);
            out += p != nullptr ? passage_body(*p) : std::string();
        }
    }
    return out;
}

} // namespace chainqa
