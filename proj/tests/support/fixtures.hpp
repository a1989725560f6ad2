#pragma once

#include "chainqa/corpus.hpp"
#include "chainqa/graph.hpp"

#include <cstdint>
#include <filesystem>
#include <random>
#include <string>
#include <vector>

namespace chainqa::testing {

// The running example: one table row, its Year cell linked to a season passage.
inline constexpr const char* kExampleQuestion =
    "How many points per game did the player average in the year the season was suspended by COVID-19?";
inline constexpr const char* kExampleAnswer = "25.3";
inline constexpr const char* kExampleTable = "player-career";
inline constexpr const char* kExamplePassage = "2019-20-nba-season";
inline constexpr const char* kExampleBlock = "player-career#0";

Corpus example_corpus();

/// Graph over the example exactly as the chain example prints it, ellipses included.
struct ElidedChain {
    HybridGraph graph;
    std::vector<NodeId> chain;
};
ElidedChain elided_example_chain();
inline constexpr const char* kElidedChainString =
    "[Question] How many ... COVID 19? [SEP] [Passage] The season ... COVID-19. [SEP] "
    "[Table] Year is 19-20. [SEP] [Table] Points is 25.3.";

/// Random graph with up to `max_nodes` nodes (node 0 the question), contents
/// drawn from a tiny vocabulary so answers repeat across nodes. Weighted
/// graphs get weights from a dyadic grid so equal-cost paths are common.
HybridGraph random_graph(std::mt19937_64& rng, std::size_t max_nodes, GraphMode mode);
/// Words random_graph draws node contents from.
const std::vector<std::string>& random_graph_vocabulary();

/// Pronounceable lowercase pseudo-word that is unique per `serial`.
std::string pseudo_word(std::uint64_t serial);

struct SyntheticCorpusSpec {
    std::size_t tables = 20;
    std::size_t rows_per_table = 10;
    std::size_t columns = 4;
    std::size_t passages = 100;
    std::size_t sentences_per_passage = 3;
    std::size_t questions = 50;
    std::uint64_t seed = 7;
};

/// Generated corpus with planted questions.
///
/// Column 0 of every row holds a unique key word and column 1 a unique number;
/// the remaining columns hold filler words. Passages are linked from the filler
/// columns and use a vocabulary disjoint from keys, numbers and column names.
/// Each question is the template question of the chain (key cell, answer cell)
/// of a distinct row, so its gold chain is that 2-hop path.
struct SyntheticCorpus {
    std::vector<Table> tables;
    std::vector<Passage> passages;
    std::vector<CellLink> links;
    std::vector<QAInstance> questions;

    Corpus build() const;
    /// Writes tables.jsonl, passages.jsonl, links.jsonl and qa.jsonl into `dir`.
    void write(const std::filesystem::path& dir) const;
};

SyntheticCorpus synthetic_corpus(const SyntheticCorpusSpec& spec);

/// Fresh empty directory under the system temp dir.
std::filesystem::path scratch_dir(const std::string& name);

} // namespace chainqa::testing
