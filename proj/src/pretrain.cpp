#include "chainqa/pretrain.hpp"

#include "chainqa/chains.hpp"
#include "chainqa/error.hpp"
#include "chainqa/gateway.hpp"
#include "chainqa/parallel.hpp"
#include "chainqa/text.hpp"

#include <json.hpp>

#include <algorithm>
#include <cmath>
#include <ostream>
#include <iomanip>
#include <random>
#include <set>
#include <sstream>

namespace chainqa {

namespace {

enum class Slot { P0, C0, C1, P1 };

struct ChainTemplate {
    std::size_t hops;
    std::vector<Slot> slots;
};

const std::vector<ChainTemplate>& templates() {
    static const std::vector<ChainTemplate> all = {
        {1, {Slot::C0}},
        {1, {Slot::P0}},
        {2, {Slot::P0, Slot::C0}},
        {2, {Slot::C0, Slot::C1}},
        {3, {Slot::C0, Slot::C1, Slot::P1}},
        {3, {Slot::P0, Slot::C0, Slot::C1}},
        {4, {Slot::P0, Slot::C0, Slot::C1, Slot::P1}},
    };
    return all;
}

bool uses(const ChainTemplate& t, Slot s) { return std::find(t.slots.begin(), t.slots.end(), s) != t.slots.end(); }

/// Portable uniform draw in [0, n); std distributions differ across standard libraries.
std::size_t uniform_index(std::mt19937_64& rng, std::size_t n) {
    const std::uint64_t range = n;
    const std::uint64_t limit = std::numeric_limits<std::uint64_t>::max() -
                                std::numeric_limits<std::uint64_t>::max() % range;
    std::uint64_t x = 0;
    do {
        x = rng();
    } while (x >= limit);
    return static_cast<std::size_t>(x % range);
}

double uniform_unit(std::mt19937_64& rng) { return static_cast<double>(rng() >> 11) * 0x1.0p-53; }

std::uint64_t mix_seed(std::uint64_t seed, std::uint64_t salt) {
    // splitmix64 finalizer over the combined value
    std::uint64_t z = seed + 0x9E3779B97F4A7C15ULL * (salt + 1);
    z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
    z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
    return z ^ (z >> 31);
}

struct RowView {
    struct Cell {
        std::size_t col_index;
        const FusedCell* cell;
        std::vector<const Passage*> passages;
    };
    std::vector<Cell> cells;
};

RowView row_view(const FusedBlock& block, const Corpus& corpus) {
    RowView view;
    for (const auto& cell : block.cells) {
        if (cell.content.empty()) {
            continue;
        }
        RowView::Cell rc{cell.col_index, &cell, {}};
        for (const auto& lp : block.linked_passages) {
            if (lp.col_index != cell.col_index) {
                continue;
            }
            const Passage* p = corpus.find_passage(lp.passage_id);
            if (p != nullptr && !p->sentences.empty()) {
                rc.passages.push_back(p);
            }
        }
        view.cells.push_back(std::move(rc));
    }
    return view;
}

SynthElement cell_element(const RowView::Cell& c) {
    SynthElement e;
    e.kind = NodeKind::Cell;
    e.col_index = c.col_index;
    e.column_name = c.cell->column_name;
    e.content = c.cell->content;
    return e;
}

SynthElement passage_element(const RowView::Cell& c, const Passage& p) {
    SynthElement e;
    e.kind = NodeKind::Sentence;
    e.col_index = c.col_index;
    e.column_name = c.cell->column_name;
    e.passage_id = p.passage_id;
    e.passage_title = p.title;
    e.sentence_index = best_sentence_index(p);
    e.content = p.sentences[e.sentence_index];
    return e;
}

std::string element_key(const SynthElement& e) {
    return e.kind == NodeKind::Cell ? "c" + std::to_string(e.col_index) : "p" + e.passage_id;
}

/// All instantiations of one template over the row, deduplicated by element identity.
std::vector<SynthChain> instantiate(const ChainTemplate& t, const RowView& row, std::size_t cap) {
    std::vector<SynthChain> out;
    std::set<std::string> seen;
    const bool need_c0 = uses(t, Slot::C0) || uses(t, Slot::P0);
    const bool need_c1 = uses(t, Slot::C1) || uses(t, Slot::P1);
    const bool need_p0 = uses(t, Slot::P0);
    const bool need_p1 = uses(t, Slot::P1);
    static const std::vector<const Passage*> kNoPassage = {nullptr};

    for (std::size_t i0 = 0; i0 < row.cells.size() && need_c0; ++i0) {
        const auto& c0 = row.cells[i0];
        const auto& p0_choices = need_p0 ? c0.passages : kNoPassage;
        for (const Passage* p0 : p0_choices) {
            const std::size_t c1_count = need_c1 ? row.cells.size() : 1;
            for (std::size_t i1 = 0; i1 < c1_count; ++i1) {
                if (need_c1 && i1 == i0) {
                    continue;
                }
                const RowView::Cell* c1 = need_c1 ? &row.cells[i1] : nullptr;
                const auto& p1_choices = need_p1 ? c1->passages : kNoPassage;
                for (const Passage* p1 : p1_choices) {
                    if (need_p0 && need_p1 && p0 == p1) {
                        continue;
                    }
                    SynthChain chain;
                    for (Slot s : t.slots) {
                        switch (s) {
                        case Slot::P0: chain.elements.push_back(passage_element(c0, *p0)); break;
                        case Slot::C0: chain.elements.push_back(cell_element(c0)); break;
                        case Slot::C1: chain.elements.push_back(cell_element(*c1)); break;
                        case Slot::P1: chain.elements.push_back(passage_element(*c1, *p1)); break;
                        }
                    }
                    std::string key;
                    for (const auto& e : chain.elements) {
                        key += element_key(e);
                        key += '|';
                    }
                    if (seen.insert(key).second) {
                        out.push_back(std::move(chain));
                        if (out.size() >= cap) {
                            return out;
                        }
                    }
                }
            }
        }
    }
    return out;
}

std::string strip_terminal_punctuation(std::string text) {
    while (!text.empty() && (text.back() == '.' || text.back() == '!' || text.back() == '?')) {
        text.pop_back();
    }
    return trim(text);
}

struct Segment {
    NodeKind kind;
    std::string label; // column name or passage title
    std::string content;
};

std::string context_of(const Segment& s) {
    if (s.kind == NodeKind::Cell) {
        return to_lower(s.label) + " is " + to_lower(s.content);
    }
    return to_lower(strip_terminal_punctuation(s.content));
}

std::string question_from_segments(const std::vector<Segment>& segments) {
    const Segment& terminal = segments.back();
    const std::string context = segments.size() > 1 ? context_of(segments.front()) : std::string();
    std::string q;
    if (terminal.kind == NodeKind::Cell) {
        q = "what is " + to_lower(terminal.label);
        if (!context.empty()) {
            q += " when " + context;
        }
    } else {
        q = "which";
        if (!terminal.label.empty()) {
            q += " " + to_lower(terminal.label);
        }
        if (!context.empty()) {
            q += " " + context;
        } else if (terminal.label.empty()) {
            q += " " + to_lower(strip_terminal_punctuation(terminal.content));
        }
    }
    return normalize_whitespace(q) + "?";
}

std::vector<const FusedBlock*> negative_sources(const FusedBlock& block, const FusedBlockSet& blocks,
                                                bool table_scope) {
    if (!table_scope) {
        return {&block};
    }
    return blocks.of_table(block.table_id);
}

} // namespace

void HopRatioConfig::validate() const {
    double sum = 0.0;
    for (double r : ratios) {
        if (!(r >= 0.0) || !std::isfinite(r)) {
            throw Error("hop ratios must be non-negative");
        }
        sum += r;
    }
    if (std::abs(sum - 1.0) > 1e-9) {
        throw Error("hop ratios must sum to 1");
    }
}

HopRatioConfig HopRatioConfig::parse(std::string_view text) {
    HopRatioConfig cfg;
    std::stringstream in{std::string(text)};
    std::string item;
    std::size_t i = 0;
    while (std::getline(in, item, ',')) {
        if (i >= 4) {
            throw Error("expected four hop ratios");
        }
        try {
            cfg.ratios[i++] = std::stod(item);
        } catch (const std::exception&) {
            throw Error("bad hop ratio '" + item + "'");
        }
    }
    if (i != 4) {
        throw Error("expected four hop ratios");
    }
    cfg.validate();
    return cfg;
}

std::string verbalize_synth_chain(const SynthChain& chain) {
    std::string out;
    for (const auto& e : chain.elements) {
        if (!out.empty()) {
            out += kSegmentSeparator;
        }
        out += e.kind == NodeKind::Cell ? cell_segment(e.column_name, e.content) : sentence_segment(e.content);
    }
    return out;
}

std::size_t best_sentence_index(const Passage& passage) {
    if (passage.sentences.empty()) {
        throw Error("passage '" + passage.passage_id + "' has no sentences");
    }
    const auto title = content_tokens(passage.title);
    std::size_t best = 0;
    double best_score = -1.0;
    for (std::size_t i = 0; i < passage.sentences.size(); ++i) {
        const double s = similarity(content_tokens(passage.sentences[i]), title);
        if (s > best_score) {
            best_score = s;
            best = i;
        }
    }
    return best;
}

const std::string& best_sentence(const Passage& passage) {
    return passage.sentences[best_sentence_index(passage)];
}

std::optional<SynthChain> synthesize_chain(const FusedBlock& block, const Corpus& corpus,
                                           std::size_t hop_length, std::uint64_t seed) {
    if (hop_length < 1 || hop_length > 4) {
        throw Error("hop_length must be in 1..4");
    }
    const RowView row = row_view(block, corpus);
    std::vector<std::vector<SynthChain>> options;
    for (const auto& t : templates()) {
        if (t.hops != hop_length) {
            continue;
        }
        auto inst = instantiate(t, row, std::numeric_limits<std::size_t>::max());
        if (!inst.empty()) {
            options.push_back(std::move(inst));
        }
    }
    if (options.empty()) {
        return std::nullopt;
    }
    std::mt19937_64 rng(seed);
    auto& chosen = options[uniform_index(rng, options.size())];
    return std::move(chosen[uniform_index(rng, chosen.size())]);
}

std::vector<SynthChain> enumerate_synth_chains(const FusedBlock& block, const Corpus& corpus, std::size_t cap) {
    const RowView row = row_view(block, corpus);
    std::vector<SynthChain> out;
    for (const auto& t : templates()) {
        if (out.size() >= cap) {
            break;
        }
        for (auto& c : instantiate(t, row, cap - out.size())) {
            out.push_back(std::move(c));
        }
    }
    return out;
}

std::string template_question(const SynthChain& chain) {
    if (chain.elements.empty()) {
        throw Error("template_question: empty chain");
    }
    std::vector<Segment> segments;
    for (const auto& e : chain.elements) {
        segments.push_back({e.kind, e.kind == NodeKind::Cell ? e.column_name : e.passage_title, e.content});
    }
    return question_from_segments(segments);
}

std::string template_question_from_text(std::string_view chain_text) {
    std::vector<Segment> segments;
    std::size_t pos = 0;
    while (pos <= chain_text.size()) {
        auto next = chain_text.find(kSegmentSeparator, pos);
        auto piece = trim(chain_text.substr(pos, next == std::string_view::npos ? std::string_view::npos : next - pos));
        constexpr std::string_view kTable = "[Table] ";
        constexpr std::string_view kPassage = "[Passage] ";
        if (piece.starts_with(kTable)) {
            auto body = piece.substr(kTable.size());
            auto is = body.find(" is ");
            if (is != std::string::npos) {
                auto content = body.substr(is + 4);
                if (!content.empty() && content.back() == '.') {
                    content.pop_back();
                }
                segments.push_back({NodeKind::Cell, body.substr(0, is), content});
            }
        } else if (piece.starts_with(kPassage)) {
            segments.push_back({NodeKind::Sentence, "", piece.substr(kPassage.size())});
        }
        if (next == std::string_view::npos) {
            break;
        }
        pos = next + kSegmentSeparator.size();
    }
    if (segments.empty()) {
        auto body = to_lower(strip_terminal_punctuation(normalize_whitespace(chain_text)));
        return body.empty() ? std::string("what is it?") : "what is " + body + "?";
    }
    return question_from_segments(segments);
}

std::string generate_question(const SynthChain& chain, const ModelGateway& generator) {
    return generator.generate_from_chain(verbalize_synth_chain(chain), template_question(chain));
}

std::vector<SynthChain> sample_hard_negatives(const SynthChain& positive,
                                              std::span<const FusedBlock* const> source_blocks,
                                              const Corpus& corpus, std::string_view question, std::size_t n) {
    const std::string positive_text = verbalize_synth_chain(positive);
    const auto question_tokens = content_tokens(question);
    struct Candidate {
        SynthChain chain;
        std::string text;
        double score;
    };
    std::vector<Candidate> pool;
    std::set<std::string> seen{positive_text};
    std::size_t budget = 256;
    for (const FusedBlock* block : source_blocks) {
        if (budget == 0) {
            break;
        }
        auto chains = enumerate_synth_chains(*block, corpus, budget);
        budget -= chains.size();
        for (auto& c : chains) {
            auto text = verbalize_synth_chain(c);
            if (!seen.insert(text).second) {
                continue;
            }
            const double score = similarity(question_tokens, content_tokens(text));
            pool.push_back({std::move(c), std::move(text), score});
        }
    }
    std::sort(pool.begin(), pool.end(), [](const Candidate& a, const Candidate& b) {
        if (a.score != b.score) {
            return a.score > b.score;
        }
        return a.text < b.text;
    });
    std::vector<SynthChain> out;
    for (std::size_t i = 0; i < pool.size() && i < n; ++i) {
        out.push_back(std::move(pool[i].chain));
    }
    return out;
}

std::vector<SynthChain> sample_hard_negatives(const SynthChain& positive, const FusedBlock& block,
                                              const Corpus& corpus, std::string_view question, std::size_t n) {
    const FusedBlock* blocks[] = {&block};
    return sample_hard_negatives(positive, std::span<const FusedBlock* const>(blocks), corpus, question, n);
}

std::size_t pool_threshold(std::size_t hop_length) { return hop_length == 4 ? 2 : 1; }

PretrainCorpus build_pretrain_corpus(const Corpus& corpus, const PretrainOptions& options,
                                     const ModelGateway& generator) {
    options.ratios.validate();
    PretrainCorpus result;
    result.stats.target = options.target_size;
    if (options.target_size == 0) {
        return result;
    }

    const FusedBlockSet blocks = build_fused_blocks(corpus, 1);
    std::array<std::vector<const FusedBlock*>, 4> pools;
    for (const auto& block : blocks.blocks()) {
        const RowView row = row_view(block, corpus);
        const std::size_t linked = block.distinct_passages().size();
        for (std::size_t h = 1; h <= 4; ++h) {
            if (linked < pool_threshold(h)) {
                continue;
            }
            const bool satisfiable = std::any_of(templates().begin(), templates().end(), [&](const ChainTemplate& t) {
                return t.hops == h && !instantiate(t, row, 1).empty();
            });
            if (satisfiable) {
                pools[h - 1].push_back(&block);
            }
        }
    }

    struct Draw {
        std::size_t index;
        std::size_t hops;
        const FusedBlock* block;
    };
    std::vector<Draw> draws;
    std::mt19937_64 rng(options.seed);
    for (std::size_t i = 0; i < options.target_size; ++i) {
        const double u = uniform_unit(rng);
        std::size_t hops = 4;
        double cumulative = 0.0;
        for (std::size_t h = 0; h < 4; ++h) {
            cumulative += options.ratios.ratios[h];
            if (u < cumulative) {
                hops = h + 1;
                break;
            }
        }
        auto& pool = pools[hops - 1];
        if (pool.empty()) {
            ++result.stats.shortfall[hops - 1];
            continue;
        }
        draws.push_back({i, hops, pool[uniform_index(rng, pool.size())]});
    }

    const std::size_t warnings_before = generator.warning_count();
    std::vector<PretrainInstance> instances(draws.size());
    parallel_for(draws.size(), options.threads, [&](std::size_t k) {
        const Draw& d = draws[k];
        auto chain = synthesize_chain(*d.block, corpus, d.hops, mix_seed(options.seed, d.index));
        PretrainInstance inst;
        std::ostringstream id;
        id << "pt-" << std::setw(8) << std::setfill('0') << d.index;
        inst.instance_id = id.str();
        inst.chain = std::move(*chain);
        inst.positive = verbalize_synth_chain(inst.chain);
        inst.hop_length = inst.chain.hop_length();
        inst.source_block_id = d.block->block_id;
        inst.question = generate_question(inst.chain, generator);
        const auto sources = negative_sources(*d.block, blocks, options.table_scope_negatives);
        for (const auto& neg : sample_hard_negatives(inst.chain, sources, corpus, inst.question,
                                                     options.negatives_per_instance)) {
            inst.negatives.push_back(verbalize_synth_chain(neg));
        }
        instances[k] = std::move(inst);
    });

    for (auto& inst : instances) {
        ++result.stats.hop_histogram[inst.hop_length - 1];
        if (inst.negatives.empty()) {
            ++result.stats.without_negatives;
        }
    }
    result.stats.emitted = instances.size();
    result.stats.warnings = generator.warning_count() - warnings_before;
    result.instances = std::move(instances);
    return result;
}

std::string pretrain_record(const PretrainInstance& instance) {
    nlohmann::ordered_json j;
    j["instance_id"] = instance.instance_id;
    j["question"] = instance.question;
    j["positive"] = instance.positive;
    j["negatives"] = instance.negatives;
    j["hop_length"] = instance.hop_length;
    j["source_block_id"] = instance.source_block_id;
    return j.dump();
}

std::string pretrain_stats_record(const PretrainStats& stats) {
    nlohmann::ordered_json j;
    j["target"] = stats.target;
    j["emitted"] = stats.emitted;
    nlohmann::ordered_json hist;
    nlohmann::ordered_json realized;
    nlohmann::ordered_json shortfall;
    for (std::size_t h = 0; h < 4; ++h) {
        const auto key = std::to_string(h + 1);
        hist[key] = stats.hop_histogram[h];
        realized[key] = stats.emitted == 0 ? 0.0
                                           : static_cast<double>(stats.hop_histogram[h]) /
                                                 static_cast<double>(stats.emitted);
        shortfall[key] = stats.shortfall[h];
    }
    j["hop_histogram"] = hist;
    j["hop_ratios"] = realized;
    j["shortfall"] = shortfall;
    j["without_negatives"] = stats.without_negatives;
    j["warnings"] = stats.warnings;
    return j.dump();
}

void write_pretrain_corpus(const PretrainCorpus& corpus, std::ostream& out) {
    for (const auto& inst : corpus.instances) {
        out << pretrain_record(inst) << '\n';
    }
}

} // namespace chainqa
