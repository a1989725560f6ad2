#pragma once

#include <cstddef>
#include <filesystem>
#include <iosfwd>
#include <map>
#include <optional>
#include <set>
#include <span>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

namespace chainqa {

struct Table {
    std::string table_id;
    std::string title;
    std::string section_title;
    std::vector<std::string> header;
    std::vector<std::vector<std::string>> rows;
};

struct Passage {
    std::string passage_id;
    std::string title;
    std::string text;
    /// Derived from `text` at load.
    std::vector<std::string> sentences;
};

struct CellLink {
    std::string table_id;
    std::size_t row_index = 0;
    std::size_t col_index = 0;
    std::string passage_id;

    auto operator<=>(const CellLink&) const = default;
};

struct FusedCell {
    std::size_t col_index = 0;
    std::string column_name;
    std::string content;
};

struct LinkedPassage {
    std::size_t col_index = 0;
    std::string passage_id;

    auto operator<=>(const LinkedPassage&) const = default;
};

/// One table row plus the passages linked from its cells.
struct FusedBlock {
    std::string block_id;
    std::string table_id;
    std::size_t row_index = 0;
    std::vector<FusedCell> cells;
    /// Sorted by (col_index, passage_id).
    std::vector<LinkedPassage> linked_passages;

    /// Linked passage ids, first occurrence order, no repeats.
    std::vector<std::string> distinct_passages() const;
};

struct QAInstance {
    std::string question_id;
    std::string question;
    std::string answer;
    std::optional<std::string> gold_table_id;
    std::optional<std::string> gold_block_id;
};

std::string make_block_id(std::string_view table_id, std::size_t row_index);
/// Inverse of make_block_id; splits at the last '#'. Throws CorpusError when malformed.
std::pair<std::string, std::size_t> parse_block_id(std::string_view block_id);

/// Validated, immutable corpus with id-indexed access.
class Corpus {
public:
    Corpus() = default;

    /// Validates everything and throws CorpusError on the first violation.
    static Corpus from_records(std::vector<Table> tables, std::vector<Passage> passages,
                               std::vector<CellLink> links);

    /// An empty links path loads the corpus without links.
    static Corpus load(const std::filesystem::path& tables_path,
                       const std::filesystem::path& passages_path,
                       const std::filesystem::path& links_path);

    const std::vector<Table>& tables() const { return tables_; }
    const std::vector<Passage>& passages() const { return passages_; }
    /// Links in input order.
    const std::vector<CellLink>& links() const { return links_; }

    const Table* find_table(std::string_view table_id) const;
    const Passage* find_passage(std::string_view passage_id) const;
    /// Links of one row, sorted by (col_index, passage_id).
    std::span<const LinkedPassage> row_links(std::string_view table_id, std::size_t row_index) const;
    bool has_block(std::string_view block_id) const;

    void dump_tables(std::ostream& out) const;
    void dump_passages(std::ostream& out) const;
    void dump_links(std::ostream& out) const;

private:
    std::vector<Table> tables_;
    std::vector<Passage> passages_;
    std::vector<CellLink> links_;
    std::map<std::string, std::size_t, std::less<>> table_index_;
    std::map<std::string, std::size_t, std::less<>> passage_index_;
    std::map<std::pair<std::string, std::size_t>, std::vector<LinkedPassage>> row_links_;
};

/// Parses one tables-file line. Throws CorpusError (without location) on malformed input.
Table parse_table_record(std::string_view line);
Passage parse_passage_record(std::string_view line);
CellLink parse_link_record(std::string_view line);
QAInstance parse_qa_record(std::string_view line, bool require_answer = true);

std::string table_record(const Table& table);
std::string passage_record(const Passage& passage);
std::string link_record(const CellLink& link);
std::string qa_record(const QAInstance& qa);

/// Loads a QA file. With a corpus, gold ids are checked for existence.
std::vector<QAInstance> load_qa(const std::filesystem::path& path, const Corpus* corpus = nullptr,
                                bool require_answer = true);

/// Passages keyed by normalized (lowercased, whitespace-collapsed) title.
class TitleIndex {
public:
    explicit TitleIndex(std::span<const Passage> passages);

    /// Passage ids whose normalized title equals `normalized_title`, sorted.
    std::span<const std::string> find(std::string_view normalized_title) const;

private:
    std::map<std::string, std::vector<std::string>, std::less<>> by_title_;
};

std::string normalize_title(std::string_view text);

/// Exact normalized-title linking of every cell of `table`. Links already in
/// `existing` are not emitted again.
std::vector<CellLink> heuristic_link(const Table& table, const TitleIndex& titles,
                                     const std::set<CellLink>& existing = {});

class FusedBlockSet {
public:
    FusedBlockSet() = default;
    explicit FusedBlockSet(std::vector<FusedBlock> blocks);

    const std::vector<FusedBlock>& blocks() const { return blocks_; }
    std::size_t size() const { return blocks_.size(); }
    bool empty() const { return blocks_.empty(); }
    const FusedBlock* find(std::string_view block_id) const;
    /// Blocks of one table in row order.
    std::vector<const FusedBlock*> of_table(std::string_view table_id) const;

private:
    std::vector<FusedBlock> blocks_;
    std::map<std::string, std::size_t, std::less<>> index_;
};

/// One block per row with at least `min_linked_passages` distinct linked
/// passages, ordered by (table_id, row_index).
FusedBlockSet build_fused_blocks(const Corpus& corpus, std::size_t min_linked_passages = 0);

/// "[TAB] [TITLE] <title> [DATA] <c1> [SEP] ... [PASSAGES] <p1> [SEP] ...".
/// The passage segment is left out when the row has no linked passages.
std::string verbalize_fused_block(const FusedBlock& block, const Corpus& corpus);

/// Normalized passage text: its sentences joined by single spaces.
std::string passage_body(const Passage& passage);

} // namespace chainqa
