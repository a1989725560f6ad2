// chainqa command line: every stage reads and writes line-delimited JSON so
// stages compose through files.

#include "chainqa/chains.hpp"
#include "chainqa/corpus.hpp"
#include "chainqa/error.hpp"
#include "chainqa/eval.hpp"
#include "chainqa/gateway.hpp"
#include "chainqa/graph.hpp"
#include "chainqa/jsonl.hpp"
#include "chainqa/parallel.hpp"
#include "chainqa/pipeline.hpp"
#include "chainqa/pretrain.hpp"
#include "chainqa/retrieval.hpp"
#include "chainqa/text.hpp"

#include <CLI11.hpp>
#include <json.hpp>

#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <memory>
#include <set>
#include <unordered_map>

namespace fs = std::filesystem;
using namespace chainqa;

namespace {

struct CorpusArgs {
    std::string tables;
    std::string passages;
    std::string links;

    void add(CLI::App* cmd, bool links_required = true) {
        cmd->add_option("--tables", tables, "Tables JSONL")->required()->check(CLI::ExistingFile);
        cmd->add_option("--passages", passages, "Passages JSONL")->required()->check(CLI::ExistingFile);
        auto* opt = cmd->add_option("--links", links, "Cell-to-passage links JSONL")->check(CLI::ExistingFile);
        if (links_required) {
            opt->required();
        }
    }

    Corpus load() const { return Corpus::load(tables, passages, links); }
};

/// Output stream: a file, or stdout for "-".
class Output {
public:
    explicit Output(const std::string& path) {
        if (path.empty() || path == "-") {
            return;
        }
        file_ = std::make_unique<std::ofstream>(path);
        if (!*file_) {
            throw Error("cannot write " + path);
        }
    }
    std::ostream& stream() { return file_ ? *file_ : std::cout; }

private:
    std::unique_ptr<std::ofstream> file_;
};

struct Settings {
    std::string config_path;
    std::map<std::string, std::string> values;

    void load() {
        if (!config_path.empty()) {
            values = load_config(config_path);
        }
    }

    EndpointConfig endpoints() const {
        EndpointConfig cfg;
        cfg.apply_settings(values);
        cfg.apply_environment();
        cfg.validate();
        return cfg;
    }

    PipelineConfig pipeline() const {
        PipelineConfig cfg;
        cfg.apply_settings(values);
        return cfg;
    }
};

void add_out(CLI::App* cmd, std::string& out, const std::string& what) {
    cmd->add_option("-o,--out", out, what + " (default stdout)");
}

std::vector<const FusedBlock*> resolve_blocks(const FusedBlockSet& blocks, const std::vector<std::string>& ids) {
    std::vector<const FusedBlock*> out;
    for (const auto& id : ids) {
        const FusedBlock* b = blocks.find(id);
        if (b == nullptr) {
            throw Error("unknown block '" + id + "'");
        }
        out.push_back(b);
    }
    return out;
}

nlohmann::ordered_json chain_json(const HybridChain& chain, const HybridGraph& graph) {
    nlohmann::ordered_json j;
    j["node_ids"] = chain.node_ids;
    j["hops"] = chain.hop_count();
    j["cost"] = chain.total_cost;
    j["text"] = verbalize_chain(chain, graph);
    return j;
}

std::unordered_map<std::string, RetrievalResult> load_retrieval(const std::string& path) {
    std::unordered_map<std::string, RetrievalResult> out;
    for_each_record(path, [&](std::string_view line, std::size_t) {
        auto [qid, result] = parse_retrieval_record(line);
        out[qid] = std::move(result);
    });
    return out;
}

void print_report(const EvalReport& report, const std::string& path) {
    Output out(path);
    out.stream() << eval_report_record(report) << '\n';
}

} // namespace

int main(int argc, char** argv) {
    CLI::App app{"Question answering over tables and linked passages"};
    app.require_subcommand(1);

    std::string stopwords_path;
    Settings settings;
    app.add_option("--stopwords", stopwords_path, "Replace the built-in stopword list (one word per line)")
        ->check(CLI::ExistingFile);
    app.add_option("--config", settings.config_path,
                   "key=value settings: endpoint URLs, timeout_ms, retries, retrieval_k, graph_mode, ...")
        ->check(CLI::ExistingFile);

    // ingest
    auto* ingest = app.add_subcommand("ingest", "Validate a corpus and write normalized copies");
    CorpusArgs ingest_corpus;
    ingest_corpus.add(ingest);
    std::string ingest_dir;
    ingest->add_option("--out-dir", ingest_dir, "Directory for tables/passages/links.jsonl")->required();

    // link
    auto* link = app.add_subcommand("link", "Add exact-title links from cells to passages");
    CorpusArgs link_corpus;
    link_corpus.add(link, false);
    std::string link_out;
    add_out(link, link_out, "Links JSONL, existing links first");

    // blocks
    auto* blocks_cmd = app.add_subcommand("blocks", "Build fused blocks");
    CorpusArgs blocks_corpus;
    blocks_corpus.add(blocks_cmd);
    std::size_t blocks_min = 0;
    std::string blocks_out;
    blocks_cmd->add_option("--min-linked", blocks_min, "Minimum distinct linked passages per row");
    add_out(blocks_cmd, blocks_out, "Blocks JSONL");

    // graph
    auto* graph_cmd = app.add_subcommand("graph", "Build and dump the hybrid graph of a question");
    CorpusArgs graph_corpus;
    graph_corpus.add(graph_cmd);
    std::string graph_question;
    std::vector<std::string> graph_blocks;
    std::string graph_mode = "weighted";
    std::size_t graph_cap = 32;
    std::string graph_out;
    graph_cmd->add_option("--question", graph_question, "Question text")->required();
    graph_cmd->add_option("--block", graph_blocks, "Block id (repeatable)")->required();
    graph_cmd->add_option("--mode", graph_mode, "simple or weighted");
    graph_cmd->add_option("--degree-cap", graph_cap, "Contextual edges kept per node (0 = no cap)");
    add_out(graph_cmd, graph_out, "Graph JSONL");

    // chains
    auto* chains_cmd = app.add_subcommand("chains", "Enumerate shortest-path candidate chains");
    CorpusArgs chains_corpus;
    chains_corpus.add(chains_cmd);
    std::string chains_question;
    std::string chains_answer;
    std::vector<std::string> chains_blocks;
    std::string chains_mode = "weighted";
    EnumerationLimits chains_limits;
    std::string chains_out;
    chains_cmd->add_option("--question", chains_question, "Question text")->required();
    chains_cmd->add_option("--block", chains_blocks, "Block id (repeatable)")->required();
    chains_cmd->add_option("--answer", chains_answer, "Also report the oracle and negative chains");
    chains_cmd->add_option("--mode", chains_mode, "simple or weighted");
    chains_cmd->add_option("--max-paths", chains_limits.max_paths_per_node, "Paths kept per terminal node");
    chains_cmd->add_option("--max-hops", chains_limits.max_hops, "Longest chain in hops");
    add_out(chains_cmd, chains_out, "Chains JSONL");

    // make-train
    auto* train_cmd = app.add_subcommand("make-train", "Emit chain-extractor training instances");
    CorpusArgs train_corpus;
    train_corpus.add(train_cmd);
    std::string train_qa;
    std::string train_strategy = "innerneg";
    std::string train_mode = "weighted";
    std::size_t train_negatives = 1;
    std::string train_out;
    train_cmd->add_option("--qa", train_qa, "QA JSONL with answers")->required()->check(CLI::ExistingFile);
    train_cmd->add_option("--strategy", train_strategy, "innerneg or bmneg");
    train_cmd->add_option("--mode", train_mode, "simple or weighted");
    train_cmd->add_option("--negatives", train_negatives, "Negatives per instance");
    add_out(train_cmd, train_out, "Training JSONL");

    // synth-pretrain
    auto* synth_cmd = app.add_subcommand("synth-pretrain", "Synthesize the pre-training corpus");
    CorpusArgs synth_corpus;
    synth_corpus.add(synth_cmd);
    PretrainOptions synth;
    std::string synth_ratios = "0.1,0.25,0.35,0.3";
    std::string synth_out;
    std::string synth_stats;
    synth.threads = default_thread_count();
    synth_cmd->add_option("--size", synth.target_size, "Instances to draw")->required();
    synth_cmd->add_option("--ratios", synth_ratios, "Hop-length shares for 1..4 hops");
    synth_cmd->add_option("--seed", synth.seed, "Random seed");
    synth_cmd->add_option("--negatives", synth.negatives_per_instance, "Hard negatives per instance");
    synth_cmd->add_flag("--table-scope", synth.table_scope_negatives, "Draw negatives from the whole source table");
    synth_cmd->add_option("--threads", synth.threads, "Worker threads");
    synth_cmd->add_option("--stats", synth_stats, "Write the statistics record here (default stderr)");
    add_out(synth_cmd, synth_out, "Pre-training JSONL");

    // index
    auto* index_cmd = app.add_subcommand("index", "Index fused blocks for retrieval");
    CorpusArgs index_corpus;
    index_corpus.add(index_cmd);
    std::string index_kind = "sparse";
    std::string index_out;
    index_cmd->add_option("--kind", index_kind, "sparse or dense");
    index_cmd->add_option("-o,--out", index_out, "Index file")->required();

    // retrieve
    auto* retrieve_cmd = app.add_subcommand("retrieve", "Retrieve top-k blocks per question");
    std::string retrieve_index;
    std::string retrieve_qa;
    std::size_t retrieve_k = kDefaultRetrievalDepth;
    std::string retrieve_out;
    retrieve_cmd->add_option("--index", retrieve_index, "Index file")->required()->check(CLI::ExistingFile);
    retrieve_cmd->add_option("--qa", retrieve_qa, "QA JSONL")->required()->check(CLI::ExistingFile);
    retrieve_cmd->add_option("-k", retrieve_k, "Blocks per question")->check(CLI::PositiveNumber);
    add_out(retrieve_cmd, retrieve_out, "Retrieval JSONL");

    // select
    auto* select_cmd = app.add_subcommand("select", "Pick the best chain over retrieved blocks");
    CorpusArgs select_corpus;
    select_corpus.add(select_cmd);
    std::string select_qa;
    std::string select_retrieval;
    std::string select_out;
    select_cmd->add_option("--qa", select_qa, "QA JSONL")->required()->check(CLI::ExistingFile);
    select_cmd->add_option("--retrieval", select_retrieval, "Retrieval JSONL")->required()->check(CLI::ExistingFile);
    add_out(select_cmd, select_out, "Predictions JSONL");

    // eval
    auto* eval_cmd = app.add_subcommand("eval", "Score predictions against gold answers");
    std::string eval_qa;
    std::string eval_predictions;
    std::vector<std::size_t> eval_ks{1, 3, 5};
    std::string eval_out;
    eval_cmd->add_option("--qa", eval_qa, "QA JSONL with answers")->required()->check(CLI::ExistingFile);
    eval_cmd->add_option("--predictions", eval_predictions, "Predictions JSONL")->required()->check(CLI::ExistingFile);
    eval_cmd->add_option("--recall-k", eval_ks, "Recall depths");
    add_out(eval_cmd, eval_out, "Report JSON");

    // pipeline
    auto* pipe_cmd = app.add_subcommand("pipeline", "Retrieve, select and answer end to end");
    CorpusArgs pipe_corpus;
    pipe_corpus.add(pipe_cmd);
    std::string pipe_qa;
    std::string pipe_index;
    std::string pipe_out;
    std::string pipe_report;
    std::size_t pipe_threads = 0;
    pipe_cmd->add_option("--qa", pipe_qa, "QA JSONL")->required()->check(CLI::ExistingFile);
    pipe_cmd->add_option("--index", pipe_index, "Prebuilt index (otherwise built in memory)")
        ->check(CLI::ExistingFile);
    pipe_cmd->add_option("--threads", pipe_threads, "Worker threads (default from config, else 1)");
    pipe_cmd->add_option("--report", pipe_report, "Write the evaluation report here (default stderr)");
    add_out(pipe_cmd, pipe_out, "Predictions JSONL");

    CLI11_PARSE(app, argc, argv);

    try {
        if (!stopwords_path.empty()) {
            install_stopwords(StopwordList::from_file(stopwords_path));
        }
        settings.load();

        if (ingest->parsed()) {
            const Corpus corpus = ingest_corpus.load();
            fs::create_directories(ingest_dir);
            std::ofstream t(fs::path(ingest_dir) / "tables.jsonl");
            std::ofstream p(fs::path(ingest_dir) / "passages.jsonl");
            std::ofstream l(fs::path(ingest_dir) / "links.jsonl");
            corpus.dump_tables(t);
            corpus.dump_passages(p);
            corpus.dump_links(l);
            std::cerr << "tables=" << corpus.tables().size() << " passages=" << corpus.passages().size()
                      << " links=" << corpus.links().size() << '\n';
        } else if (link->parsed()) {
            const Corpus corpus = link_corpus.load();
            const TitleIndex titles(corpus.passages());
            std::set<CellLink> existing(corpus.links().begin(), corpus.links().end());
            Output out(link_out);
            for (const auto& l : corpus.links()) {
                out.stream() << link_record(l) << '\n';
            }
            std::size_t added = 0;
            for (const auto& table : corpus.tables()) {
                for (const auto& l : heuristic_link(table, titles, existing)) {
                    out.stream() << link_record(l) << '\n';
                    ++added;
                }
            }
            std::cerr << "existing=" << existing.size() << " added=" << added << '\n';
        } else if (blocks_cmd->parsed()) {
            const Corpus corpus = blocks_corpus.load();
            const FusedBlockSet blocks = build_fused_blocks(corpus, blocks_min);
            Output out(blocks_out);
            for (const auto& b : blocks.blocks()) {
                nlohmann::ordered_json j;
                j["block_id"] = b.block_id;
                j["table_id"] = b.table_id;
                j["row_index"] = b.row_index;
                j["passages"] = b.distinct_passages();
                j["text"] = verbalize_fused_block(b, corpus);
                out.stream() << j.dump() << '\n';
            }
        } else if (graph_cmd->parsed()) {
            const Corpus corpus = graph_corpus.load();
            const FusedBlockSet blocks = build_fused_blocks(corpus);
            const auto chosen = resolve_blocks(blocks, graph_blocks);
            const GraphOptions options{parse_graph_mode(graph_mode), graph_cap};
            Output out(graph_out);
            dump_graph(build_graph(graph_question, chosen, corpus, options), out.stream());
        } else if (chains_cmd->parsed()) {
            const Corpus corpus = chains_corpus.load();
            const FusedBlockSet blocks = build_fused_blocks(corpus);
            const auto chosen = resolve_blocks(blocks, chains_blocks);
            GraphOptions options;
            options.mode = parse_graph_mode(chains_mode);
            const HybridGraph graph = build_graph(chains_question, chosen, corpus, options);
            const auto candidates = enumerate_candidates(graph, chains_limits);
            Output out(chains_out);
            for (const auto& c : candidates.chains) {
                auto j = chain_json(c, graph);
                j["role"] = "candidate";
                out.stream() << j.dump() << '\n';
            }
            if (!chains_answer.empty()) {
                for (auto [role, chain] : {std::pair{"oracle", oracle_chain(graph, chains_answer, chains_limits)},
                                           std::pair{"negative", negative_chain(graph, chains_answer, chains_limits)}}) {
                    if (chain) {
                        auto j = chain_json(*chain, graph);
                        j["role"] = role;
                        out.stream() << j.dump() << '\n';
                    }
                }
            }
            std::cerr << "candidates=" << candidates.chains.size()
                      << (candidates.truncated ? " (truncated)" : "") << '\n';
        } else if (train_cmd->parsed()) {
            const Corpus corpus = train_corpus.load();
            const auto qa = load_qa(train_qa, &corpus);
            const FusedBlockSet blocks = build_fused_blocks(corpus);
            TrainingOptions options;
            options.strategy = parse_negative_strategy(train_strategy);
            options.negatives_per_instance = train_negatives;
            options.graph.mode = parse_graph_mode(train_mode);
            const auto report = emit_training_instances(qa, corpus, blocks, options);
            Output out(train_out);
            for (const auto& inst : report.instances) {
                out.stream() << training_record(inst) << '\n';
            }
            std::cerr << "instances=" << report.instances.size() << " skipped=" << report.skipped.size();
            for (const auto& [reason, count] : report.skip_counts) {
                std::cerr << " [" << reason << ": " << count << "]";
            }
            std::cerr << '\n';
        } else if (synth_cmd->parsed()) {
            const Corpus corpus = synth_corpus.load();
            synth.ratios = HopRatioConfig::parse(synth_ratios);
            const ModelGateway gateway(settings.endpoints());
            const auto result = build_pretrain_corpus(corpus, synth, gateway);
            Output out(synth_out);
            write_pretrain_corpus(result, out.stream());
            if (synth_stats.empty()) {
                std::cerr << pretrain_stats_record(result.stats) << '\n';
            } else {
                Output stats(synth_stats);
                stats.stream() << pretrain_stats_record(result.stats) << '\n';
            }
        } else if (index_cmd->parsed()) {
            const Corpus corpus = index_corpus.load();
            const FusedBlockSet blocks = build_fused_blocks(corpus);
            const ModelGateway gateway(settings.endpoints());
            const auto index = build_index(blocks.blocks(), corpus, parse_index_kind(index_kind), gateway);
            index.save(index_out);
            std::cerr << "indexed " << index.size() << " blocks (" << to_string(index.kind()) << ")\n";
        } else if (retrieve_cmd->parsed()) {
            const auto index = BlockIndex::load(retrieve_index);
            const auto qa = load_qa(retrieve_qa, nullptr, false);
            const ModelGateway gateway(settings.endpoints());
            std::vector<RetrievalResult> results(qa.size());
            parallel_for(qa.size(), settings.pipeline().threads,
                         [&](std::size_t i) { results[i] = retrieve(index, qa[i].question, retrieve_k, gateway); });
            Output out(retrieve_out);
            for (std::size_t i = 0; i < qa.size(); ++i) {
                out.stream() << retrieval_record(qa[i].question_id, results[i]) << '\n';
            }
        } else if (select_cmd->parsed()) {
            const Corpus corpus = select_corpus.load();
            const auto qa = load_qa(select_qa, &corpus, false);
            const auto retrieved = load_retrieval(select_retrieval);
            const FusedBlockSet blocks = build_fused_blocks(corpus);
            const ModelGateway gateway(settings.endpoints());
            const PipelineConfig config = settings.pipeline();
            std::vector<Prediction> predictions(qa.size());
            parallel_for(qa.size(), config.threads, [&](std::size_t i) {
                auto it = retrieved.find(qa[i].question_id);
                const RetrievalResult empty;
                predictions[i] = answer_question(qa[i], it == retrieved.end() ? empty : it->second, corpus,
                                                 blocks, gateway, config);
            });
            Output out(select_out);
            for (const auto& p : predictions) {
                out.stream() << prediction_record(p) << '\n';
            }
        } else if (eval_cmd->parsed()) {
            const auto qa = load_qa(eval_qa);
            const auto predictions = load_predictions(eval_predictions);
            print_report(evaluate_predictions(predictions, qa, eval_ks), eval_out);
        } else if (pipe_cmd->parsed()) {
            const Corpus corpus = pipe_corpus.load();
            const auto qa = load_qa(pipe_qa, &corpus, false);
            const FusedBlockSet blocks = build_fused_blocks(corpus);
            const ModelGateway gateway(settings.endpoints());
            PipelineConfig config = settings.pipeline();
            if (pipe_threads > 0) {
                config.threads = pipe_threads;
            }
            const BlockIndex index = pipe_index.empty()
                                         ? build_index(blocks.blocks(), corpus, config.index_kind, gateway)
                                         : BlockIndex::load(pipe_index);
            const auto result = run_pipeline(qa, corpus, blocks, index, gateway, config);
            Output out(pipe_out);
            for (const auto& p : result.predictions) {
                out.stream() << prediction_record(p) << '\n';
            }
            if (pipe_report.empty()) {
                std::cerr << eval_report_record(result.report) << '\n';
            } else {
                print_report(result.report, pipe_report);
            }
        }
    } catch (const std::exception& e) {
        std::cerr << "chainqa: " << e.what() << '\n';
        return 1;
    }
    return 0;
}
