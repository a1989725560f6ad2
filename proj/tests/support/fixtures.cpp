#include "fixtures.hpp"

#include "chainqa/pretrain.hpp"

#include <algorithm>
#include <fstream>
#include <numeric>
#include <set>
#include <stdexcept>

#include <unistd.h>

namespace chainqa::testing {

Corpus example_corpus() {
    Table table;
    table.table_id = kExampleTable;
    table.title = "Player career statistics";
    table.header = {"Year", "Team", "GP", "Points"};
    table.rows = {{"19-20", "LA Lakers", "67", "25.3"}};

    Passage passage;
    passage.passage_id = kExamplePassage;
    passage.title = "2019-20 NBA season";
    passage.text = "The 2019-20 NBA season was the 74th season of the National Basketball Association. "
                   "The season was suspended by COVID-19.";

    return Corpus::from_records({table}, {passage}, {CellLink{kExampleTable, 0, 0, kExamplePassage}});
}

ElidedChain elided_example_chain() {
    ElidedChain out{HybridGraph(GraphMode::Simple), {}};
    auto& g = out.graph;
    const NodeId q = g.add_node(NodeKind::Question, "How many ... COVID 19?");
    const NodeId s = g.add_node(NodeKind::Sentence, "The season ... COVID-19.",
                                SentenceOrigin{kExampleBlock, kExamplePassage, 1});
    const NodeId year = g.add_node(NodeKind::Cell, "19-20", CellOrigin{kExampleBlock, 0, "Year"});
    const NodeId points = g.add_node(NodeKind::Cell, "25.3", CellOrigin{kExampleBlock, 3, "Points"});
    g.add_edge(q, s, EdgeKind::Contextual, 1.0);
    g.add_edge(s, year, EdgeKind::Structural, 1.0);
    g.add_edge(year, points, EdgeKind::Structural, 1.0);
    out.chain = {q, s, year, points};
    return out;
}

const std::vector<std::string>& random_graph_vocabulary() {
    static const std::vector<std::string> vocab = {"amber", "basalt", "cobalt", "dune", "ember", "fjord"};
    return vocab;
}

HybridGraph random_graph(std::mt19937_64& rng, std::size_t max_nodes, GraphMode mode) {
    const auto& vocab = random_graph_vocabulary();
    auto pick = [&](std::size_t n) { return static_cast<std::size_t>(rng() % n); };
    auto words = [&](std::size_t count) {
        std::string s;
        for (std::size_t i = 0; i < count; ++i) {
            if (!s.empty()) {
                s += ' ';
            }
            s += vocab[pick(vocab.size())];
        }
        return s;
    };

    HybridGraph g(mode);
    const std::size_t n = 2 + pick(max_nodes - 1);
    g.add_node(NodeKind::Question, words(3));
    for (std::size_t i = 1; i < n; ++i) {
        if (pick(2) == 0) {
            g.add_node(NodeKind::Cell, words(1 + pick(2)), CellOrigin{"t#0", i, "col" + std::to_string(i)});
        } else {
            g.add_node(NodeKind::Sentence, "Some " + words(1 + pick(3)) + ".", SentenceOrigin{"t#0", "p", i});
        }
    }
    static const double kGrid[] = {0.5, 0.625, 0.75, 0.875, 1.0};
    const unsigned density = 20 + static_cast<unsigned>(pick(45)); // percent
    for (NodeId a = 0; a < n; ++a) {
        for (NodeId b = a + 1; b < n; ++b) {
            if (pick(100) >= density) {
                continue;
            }
            const auto kinds = pick(4);
            for (EdgeKind kind : {EdgeKind::Structural, EdgeKind::Contextual}) {
                const bool wanted = kind == EdgeKind::Structural ? kinds != 1 : kinds != 0;
                if (!wanted) {
                    continue;
                }
                const double w = mode == GraphMode::Simple ? 1.0 : kGrid[pick(5)];
                g.add_edge(a, b, kind, w);
            }
        }
    }
    return g;
}

std::string pseudo_word(std::uint64_t serial) {
    static const char* kOnsets[] = {"b", "d", "f", "g", "k", "l", "m", "n", "p", "r", "s", "t", "v", "z"};
    static const char* kVowels[] = {"a", "e", "i", "o", "u"};
    constexpr std::uint64_t kSyllables = 14 * 5;
    std::string word;
    std::uint64_t x = serial;
    // Bijective base-70 with at least two syllables.
    do {
        const auto s = x % kSyllables;
        word += kOnsets[s / 5];
        word += kVowels[s % 5];
        x /= kSyllables;
    } while (x > 0 || word.size() < 4);
    return word + "x";
}

namespace {

std::string capitalize(std::string s) {
    if (!s.empty()) {
        s[0] = static_cast<char>(s[0] - 'a' + 'A');
    }
    return s;
}

const std::vector<std::string>& column_vocabulary() {
    static const std::vector<std::string> cols = {"code",  "tally",  "rank",  "score", "height", "mass",
                                                  "votes", "seats",  "rating", "length", "depth", "speed",
                                                  "area",  "budget", "capacity", "elevation"};
    return cols;
}

constexpr std::uint64_t kFillerBase = 0;
constexpr std::uint64_t kFillerWords = 600;
constexpr std::uint64_t kKeyBase = 1'000'000;
constexpr std::uint64_t kTitleBase = 5'000'000;

} // namespace

Corpus SyntheticCorpus::build() const { return Corpus::from_records(tables, passages, links); }

void SyntheticCorpus::write(const std::filesystem::path& dir) const {
    std::filesystem::create_directories(dir);
    std::ofstream t(dir / "tables.jsonl");
    for (const auto& x : tables) {
        t << table_record(x) << '\n';
    }
    std::ofstream p(dir / "passages.jsonl");
    for (const auto& x : passages) {
        p << passage_record(x) << '\n';
    }
    std::ofstream l(dir / "links.jsonl");
    for (const auto& x : links) {
        l << link_record(x) << '\n';
    }
    std::ofstream q(dir / "qa.jsonl");
    for (const auto& x : questions) {
        q << qa_record(x) << '\n';
    }
}

SyntheticCorpus synthetic_corpus(const SyntheticCorpusSpec& spec) {
    if (spec.columns < 3) {
        throw std::invalid_argument("synthetic corpus needs at least 3 columns");
    }
    std::mt19937_64 rng(spec.seed);
    auto pick = [&](std::uint64_t n) { return rng() % n; };
    auto filler = [&] { return pseudo_word(kFillerBase + pick(kFillerWords)); };

    SyntheticCorpus out;
    std::uint64_t key_serial = 0;
    std::uint64_t number = 100000;
    const auto& colvocab = column_vocabulary();
    for (std::size_t t = 0; t < spec.tables; ++t) {
        Table table;
        table.table_id = "tab-" + std::to_string(t);
        table.title = capitalize(pseudo_word(kTitleBase + t)) + " records";
        std::vector<std::size_t> order(colvocab.size());
        std::iota(order.begin(), order.end(), 0);
        std::shuffle(order.begin(), order.end(), rng);
        for (std::size_t c = 0; c < spec.columns; ++c) {
            table.header.push_back(colvocab[order[c % order.size()]] + (c >= order.size() ? std::to_string(c) : ""));
        }
        for (std::size_t r = 0; r < spec.rows_per_table; ++r) {
            std::vector<std::string> row;
            row.push_back(pseudo_word(kKeyBase + key_serial++));
            row.push_back(std::to_string(number++));
            for (std::size_t c = 2; c < spec.columns; ++c) {
                row.push_back(pick(3) == 0 ? filler() + " " + filler() : filler());
            }
            table.rows.push_back(std::move(row));
        }
        out.tables.push_back(std::move(table));
    }

    std::set<std::pair<std::size_t, std::size_t>> used_cells;
    const std::size_t filler_cols = spec.columns - 2;
    const std::size_t total_filler_cells = spec.tables * spec.rows_per_table * filler_cols;
    for (std::size_t i = 0; i < spec.passages; ++i) {
        Passage p;
        p.passage_id = "pas-" + std::to_string(i);
        p.title = capitalize(pseudo_word(kTitleBase + 1'000'000 + i));
        for (std::size_t s = 0; s < spec.sentences_per_passage; ++s) {
            std::string sentence = capitalize(filler());
            const std::size_t len = 3 + pick(5);
            for (std::size_t w = 0; w < len; ++w) {
                sentence += " " + filler();
            }
            sentence += ".";
            if (!p.text.empty()) {
                p.text += " ";
            }
            p.text += sentence;
        }
        out.passages.push_back(std::move(p));

        if (used_cells.size() >= total_filler_cells) {
            continue;
        }
        std::size_t cell = 0;
        std::size_t table = 0;
        do {
            table = pick(spec.tables);
            cell = pick(spec.rows_per_table * filler_cols);
        } while (!used_cells.insert({table, cell}).second);
        out.links.push_back(CellLink{out.tables[table].table_id, cell / filler_cols, 2 + cell % filler_cols,
                                     out.passages.back().passage_id});
    }
    std::sort(out.links.begin(), out.links.end());

    const std::size_t total_rows = spec.tables * spec.rows_per_table;
    std::vector<std::size_t> rows(total_rows);
    std::iota(rows.begin(), rows.end(), 0);
    std::shuffle(rows.begin(), rows.end(), rng);
    for (std::size_t q = 0; q < std::min(spec.questions, total_rows); ++q) {
        const std::size_t t = rows[q] / spec.rows_per_table;
        const std::size_t r = rows[q] % spec.rows_per_table;
        const Table& table = out.tables[t];
        SynthChain chain;
        for (std::size_t c : {std::size_t{0}, std::size_t{1}}) {
            SynthElement e;
            e.kind = NodeKind::Cell;
            e.col_index = c;
            e.column_name = table.header[c];
            e.content = table.rows[r][c];
            chain.elements.push_back(std::move(e));
        }
        QAInstance qa;
        qa.question_id = "q-" + std::to_string(q);
        qa.question = template_question(chain);
        qa.answer = table.rows[r][1];
        qa.gold_table_id = table.table_id;
        qa.gold_block_id = make_block_id(table.table_id, r);
        out.questions.push_back(std::move(qa));
    }
    return out;
}

std::filesystem::path scratch_dir(const std::string& name) {
    auto dir = std::filesystem::temp_directory_path() /
               ("chainqa-" + name + "-" + std::to_string(static_cast<long>(::getpid())));
    std::filesystem::remove_all(dir);
    std::filesystem::create_directories(dir);
    return dir;
}

} // namespace chainqa::testing
