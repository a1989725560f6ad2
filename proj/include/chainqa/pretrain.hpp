#pragma once

#include "chainqa/corpus.hpp"
#include "chainqa/graph.hpp"

#include <array>
#include <cstdint>
#include <iosfwd>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace chainqa {

class ModelGateway;

/// Share of synthesized chains per hop length 1..4.
struct HopRatioConfig {
    std::array<double, 4> ratios{0.10, 0.25, 0.35, 0.30};

    /// Throws Error unless every ratio is >= 0 and they sum to 1 within 1e-9.
    void validate() const;
    /// Parses "0.1,0.25,0.35,0.3".
    static HopRatioConfig parse(std::string_view text);
};

/// One element of a synthesized chain: a cell of the row, or the
/// representative sentence of a passage linked from that row.
struct SynthElement {
    NodeKind kind = NodeKind::Cell;
    /// Column of the cell, or of the cell the passage is linked from.
    std::size_t col_index = 0;
    std::string column_name;
    std::string passage_id;
    std::string passage_title;
    std::size_t sentence_index = 0;
    std::string content;
};

struct SynthChain {
    std::vector<SynthElement> elements;

    std::size_t hop_length() const { return elements.size(); }
};

std::string verbalize_synth_chain(const SynthChain& chain);

/// Index of the sentence most similar to the passage title; earliest on ties.
/// Throws Error when the passage has no sentences.
std::size_t best_sentence_index(const Passage& passage);
const std::string& best_sentence(const Passage& passage);

/// Samples one chain of `hop_length` elements from the row:
///   1: (c0) | (p0)   2: (p0,c0) | (c0,c1)   3: (c0,c1,p1) | (p0,c0,c1)   4: (p0,c0,c1,p1)
/// where p_i is a passage linked from c_i and p0 != p1. The template is drawn
/// uniformly among the satisfiable ones, then the instantiation uniformly.
/// Deterministic in `seed`; nullopt when no template is satisfiable.
std::optional<SynthChain> synthesize_chain(const FusedBlock& block, const Corpus& corpus,
                                           std::size_t hop_length, std::uint64_t seed);

/// Every instantiation of every template for hop lengths 1..4, in a fixed
/// order, without duplicates, at most `cap` chains.
std::vector<SynthChain> enumerate_synth_chains(const FusedBlock& block, const Corpus& corpus,
                                               std::size_t cap = 256);

/// Template question: "what is <column> when <context>?" for cell terminals,
/// "which <title> <context>?" for sentence terminals, context taken from the
/// first element. Never empty.
std::string template_question(const SynthChain& chain);
/// Same template over a verbalized chain. Passage titles are not recoverable
/// from text, so sentence terminals read "which <context>?".
std::string template_question_from_text(std::string_view chain_text);

/// Question for a chain via the gateway's generator, falling back to the template.
std::string generate_question(const SynthChain& chain, const ModelGateway& generator);

/// Top-n alternative chains by similarity to the question (ties by text),
/// excluding any chain whose verbalization equals the positive's.
std::vector<SynthChain> sample_hard_negatives(const SynthChain& positive,
                                              std::span<const FusedBlock* const> source_blocks,
                                              const Corpus& corpus, std::string_view question,
                                              std::size_t n);
std::vector<SynthChain> sample_hard_negatives(const SynthChain& positive, const FusedBlock& block,
                                              const Corpus& corpus, std::string_view question,
                                              std::size_t n);

struct PretrainInstance {
    std::string instance_id;
    std::string question;
    SynthChain chain;
    std::string positive;
    std::vector<std::string> negatives;
    std::size_t hop_length = 0;
    std::string source_block_id;
};

struct PretrainOptions {
    HopRatioConfig ratios;
    std::size_t target_size = 0;
    std::size_t negatives_per_instance = 1;
    std::uint64_t seed = 0;
    /// Draw negatives from every block of the source table instead of the source block.
    bool table_scope_negatives = false;
    std::size_t threads = 1;
};

struct PretrainStats {
    std::size_t target = 0;
    std::size_t emitted = 0;
    std::array<std::size_t, 4> hop_histogram{};
    /// Instances that could not be drawn because no block satisfies the hop length.
    std::array<std::size_t, 4> shortfall{};
    std::size_t without_negatives = 0;
    std::size_t warnings = 0;
};

struct PretrainCorpus {
    std::vector<PretrainInstance> instances;
    PretrainStats stats;
};

/// Minimum distinct linked passages for a row to enter the pool of a hop length.
std::size_t pool_threshold(std::size_t hop_length);

PretrainCorpus build_pretrain_corpus(const Corpus& corpus, const PretrainOptions& options,
                                     const ModelGateway& generator);

std::string pretrain_record(const PretrainInstance& instance);
std::string pretrain_stats_record(const PretrainStats& stats);
void write_pretrain_corpus(const PretrainCorpus& corpus, std::ostream& out);

} // namespace chainqa
