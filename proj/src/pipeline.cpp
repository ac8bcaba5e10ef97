#include "glen/pipeline.hpp"

#include <algorithm>
#include <cstdio>
#include <functional>
#include <map>
#include <sstream>

#include "glen/error.hpp"
#include "glen/eval.hpp"
#include "glen/id_index.hpp"
#include "glen/inference.hpp"
#include "glen/io_util.hpp"
#include "glen/keyword.hpp"

namespace glen {

namespace {

std::string trim(const std::string& s) {
    std::size_t a = s.find_first_not_of(" \t\r\n");
    if (a == std::string::npos) return "";
    std::size_t b = s.find_last_not_of(" \t\r\n");
    return s.substr(a, b - a + 1);
}

long long parse_ll(const std::string& value, const std::string& key) {
    try {
        std::size_t used = 0;
        long long out = std::stoll(value, &used);
        if (used != value.size()) throw std::invalid_argument(value);
        return out;
    } catch (const std::exception&) {
        fail("config", "key '" + key + "' needs an integer, got '" + value + "'");
    }
}

int parse_int(const std::string& value, const std::string& key) {
    return static_cast<int>(parse_ll(value, key));
}

std::uint64_t parse_u64(const std::string& value, const std::string& key) {
    try {
        // stoull would silently wrap negative input, so reject it up front.
        if (value.empty() || value[0] == '-') throw std::invalid_argument(value);
        std::size_t used = 0;
        unsigned long long out = std::stoull(value, &used);
        if (used != value.size()) throw std::invalid_argument(value);
        return out;
    } catch (const std::exception&) {
        fail("config", "key '" + key + "' needs a non-negative integer, got '" + value + "'");
    }
}

double parse_double(const std::string& value, const std::string& key) {
    try {
        std::size_t used = 0;
        double out = std::stod(value, &used);
        if (used != value.size()) throw std::invalid_argument(value);
        return out;
    } catch (const std::exception&) {
        fail("config", "key '" + key + "' needs a number, got '" + value + "'");
    }
}

bool parse_bool(const std::string& value, const std::string& key) {
    if (value == "true" || value == "1") return true;
    if (value == "false" || value == "0") return false;
    fail("config", "key '" + key + "' needs true/false, got '" + value + "'");
}

std::vector<int> parse_int_list(const std::string& value, const std::string& key) {
    std::vector<int> out;
    std::string item;
    std::istringstream stream(value);
    while (std::getline(stream, item, ',')) out.push_back(parse_int(trim(item), key));
    if (out.empty()) fail("config", "key '" + key + "' needs a comma-separated integer list");
    return out;
}

using Setter = std::function<void(RunConfig&, const std::string&)>;

const std::map<std::string, Setter>& config_setters() {
    auto str = [](std::string RunConfig::* field) {
        return [field](RunConfig& c, const std::string& v) { c.*field = v; };
    };
    static const std::map<std::string, Setter> table = {
        {"corpus", str(&RunConfig::corpus)},
        {"queries", str(&RunConfig::queries)},
        {"qrels", str(&RunConfig::qrels)},
        {"train_qrels", str(&RunConfig::train_qrels)},
        {"stopwords", str(&RunConfig::stopwords)},
        {"keyword_table", str(&RunConfig::keyword_table)},
        {"term_stats", str(&RunConfig::term_stats)},
        {"checkpoint_in", str(&RunConfig::checkpoint_in)},
        {"checkpoint_out", str(&RunConfig::checkpoint_out)},
        {"id_table", str(&RunConfig::id_table)},
        {"run_output", str(&RunConfig::run_output)},
        {"report", str(&RunConfig::report)},
        {"keyword_trace", str(&RunConfig::keyword_trace)},
        {"refine_trace", str(&RunConfig::refine_trace)},

        {"embed_dim", [](RunConfig& c, const std::string& v) { c.embed_dim = parse_int(v, "embed_dim"); }},
        {"vocab_max", [](RunConfig& c, const std::string& v) { c.vocab_max = parse_int(v, "vocab_max"); }},
        {"min_df", [](RunConfig& c, const std::string& v) { c.min_df = parse_int(v, "min_df"); }},
        {"id_length", [](RunConfig& c, const std::string& v) { c.id_length = parse_int(v, "id_length"); }},
        {"enc_layers", [](RunConfig& c, const std::string& v) { c.enc_layers = parse_int(v, "enc_layers"); }},
        {"dec_layers", [](RunConfig& c, const std::string& v) { c.dec_layers = parse_int(v, "dec_layers"); }},
        {"max_doc_len", [](RunConfig& c, const std::string& v) { c.max_doc_len = parse_int(v, "max_doc_len"); }},
        {"max_query_len",
         [](RunConfig& c, const std::string& v) { c.max_query_len = parse_int(v, "max_query_len"); }},
        {"seed", [](RunConfig& c, const std::string& v) { c.seed = parse_u64(v, "seed"); }},

        {"bm25_k1", [](RunConfig& c, const std::string& v) { c.bm25_k1 = parse_double(v, "bm25_k1"); }},
        {"bm25_b", [](RunConfig& c, const std::string& v) { c.bm25_b = parse_double(v, "bm25_b"); }},

        {"lambda_point",
         [](RunConfig& c, const std::string& v) { c.training.lambda_point = parse_double(v, "lambda_point"); }},
        {"lambda_dist",
         [](RunConfig& c, const std::string& v) { c.training.lambda_dist = parse_double(v, "lambda_dist"); }},
        {"negatives",
         [](RunConfig& c, const std::string& v) { c.training.negatives_per_example = parse_int(v, "negatives"); }},
        {"batch_size",
         [](RunConfig& c, const std::string& v) { c.training.batch_size = parse_int(v, "batch_size"); }},
        {"lr_keyword",
         [](RunConfig& c, const std::string& v) { c.training.lr_keyword = parse_double(v, "lr_keyword"); }},
        {"lr_refine",
         [](RunConfig& c, const std::string& v) { c.training.lr_refine = parse_double(v, "lr_refine"); }},
        {"keyword_epochs",
         [](RunConfig& c, const std::string& v) { c.training.keyword_epochs = parse_int(v, "keyword_epochs"); }},
        {"refine_epochs",
         [](RunConfig& c, const std::string& v) { c.training.refine_epochs = parse_int(v, "refine_epochs"); }},
        {"keyword_step_cap",
         [](RunConfig& c, const std::string& v) { c.training.keyword_step_cap = parse_ll(v, "keyword_step_cap"); }},
        {"refine_step_cap",
         [](RunConfig& c, const std::string& v) { c.training.refine_step_cap = parse_ll(v, "refine_step_cap"); }},
        {"keyword_mix_docs",
         [](RunConfig& c, const std::string& v) { c.training.keyword_mix_docs = parse_int(v, "keyword_mix_docs"); }},
        {"keyword_mix_queries",
         [](RunConfig& c, const std::string& v) {
             c.training.keyword_mix_queries = parse_int(v, "keyword_mix_queries");
         }},
        {"optimizer", [](RunConfig& c, const std::string& v) { c.training.optimizer = v; }},
        {"adam_beta1",
         [](RunConfig& c, const std::string& v) { c.training.adam_beta1 = parse_double(v, "adam_beta1"); }},
        {"adam_beta2",
         [](RunConfig& c, const std::string& v) { c.training.adam_beta2 = parse_double(v, "adam_beta2"); }},
        {"adam_eps", [](RunConfig& c, const std::string& v) { c.training.adam_eps = parse_double(v, "adam_eps"); }},
        {"tau_floor",
         [](RunConfig& c, const std::string& v) { c.training.anneal.floor = parse_double(v, "tau_floor"); }},

        {"no_keyword_phase",
         [](RunConfig& c, const std::string& v) {
             c.training.flags.no_keyword_phase = parse_bool(v, "no_keyword_phase");
         }},
        {"no_annealing",
         [](RunConfig& c, const std::string& v) { c.training.flags.no_annealing = parse_bool(v, "no_annealing"); }},
        {"token_decoder_input",
         [](RunConfig& c, const std::string& v) {
             c.training.flags.token_decoder_input = parse_bool(v, "token_decoder_input");
         }},
        {"no_pairwise",
         [](RunConfig& c, const std::string& v) { c.training.flags.no_pairwise = parse_bool(v, "no_pairwise"); }},
        {"no_pointwise",
         [](RunConfig& c, const std::string& v) { c.training.flags.no_pointwise = parse_bool(v, "no_pointwise"); }},
        {"random_negatives",
         [](RunConfig& c, const std::string& v) {
             c.training.flags.random_negatives = parse_bool(v, "random_negatives");
         }},
        {"no_refinement",
         [](RunConfig& c, const std::string& v) { c.training.flags.no_refinement = parse_bool(v, "no_refinement"); }},

        {"top_k", [](RunConfig& c, const std::string& v) { c.top_k = parse_int(v, "top_k"); }},
        {"beam", [](RunConfig& c, const std::string& v) { c.beam = parse_int(v, "beam"); }},
        {"scorer", [](RunConfig& c, const std::string& v) { c.scorer = v; }},
        {"run_tag", [](RunConfig& c, const std::string& v) { c.run_tag = v; }},
        {"cutoffs", [](RunConfig& c, const std::string& v) { c.cutoffs = parse_int_list(v, "cutoffs"); }},
    };
    return table;
}

}  // namespace

void apply_config_line(RunConfig& config, const std::string& line, const std::string& context) {
    std::string text = line;
    std::size_t hash = text.find('#');
    if (hash != std::string::npos) text.resize(hash);
    text = trim(text);
    if (text.empty()) return;
    std::size_t eq = text.find('=');
    if (eq == std::string::npos) {
        fail("config", "expected key=value, got '" + text + "' (" + context + ")");
    }
    std::string key = trim(text.substr(0, eq));
    std::string value = trim(text.substr(eq + 1));
    auto it = config_setters().find(key);
    if (it == config_setters().end()) {
        fail("config", "unknown config key '" + key + "' (" + context + ")");
    }
    it->second(config, value);
}

RunConfig load_run_config(const std::string& config_path, const std::vector<std::string>& overrides,
                          const std::string& seed_override) {
    RunConfig config;
    if (!config_path.empty()) {
        std::istringstream in(read_file(config_path));
        std::string line;
        long line_no = 0;
        while (std::getline(in, line)) {
            ++line_no;
            apply_config_line(config, line, config_path + " line " + std::to_string(line_no));
        }
    }
    for (const std::string& entry : overrides) apply_config_line(config, entry, "--set " + entry);
    if (!seed_override.empty()) config.seed = parse_u64(seed_override, "seed");
    return config;
}

// ---------------------------------------------------------------------------
// shared command plumbing
// ---------------------------------------------------------------------------

namespace {

struct LoadedCorpus {
    std::vector<RawDocument> raw;
    Vocabulary vocab;
    Corpus corpus;
    std::set<std::string> stopwords;
};

LoadedCorpus load_corpus_bundle(const RunConfig& config) {
    if (config.corpus.empty()) fail("config", "no corpus path configured");
    LoadedCorpus out;
    out.raw = load_raw_corpus(config.corpus);
    std::vector<std::vector<std::string>> words;
    for (const RawDocument& doc : out.raw) words.push_back(split_words(doc.text));
    out.vocab = Vocabulary::build(words, config.min_df, config.vocab_max);
    out.corpus = make_corpus(out.raw, out.vocab, config.max_doc_len);
    if (!config.stopwords.empty()) out.stopwords = load_stopwords(config.stopwords);
    return out;
}

ModelConfig model_config_for(const RunConfig& config, const Vocabulary& vocab) {
    ModelConfig mc;
    mc.embed_dim = config.embed_dim;
    mc.vocab_size = vocab.size();
    mc.id_length = config.id_length;
    mc.enc_layers = config.enc_layers;
    mc.dec_layers = config.dec_layers;
    mc.seed = config.seed;
    mc.validate();
    return mc;
}

void check_vocab_matches(const ModelParams& params, const Vocabulary& vocab, const RunConfig& config) {
    if (params.config.vocab_size != vocab.size()) {
        fail("state", "checkpoint vocab_size " + std::to_string(params.config.vocab_size) +
                          " does not match the corpus vocabulary size " + std::to_string(vocab.size()));
    }
    if (params.config.id_length != config.id_length) {
        fail("state", "checkpoint id_length " + std::to_string(params.config.id_length) +
                          " does not match configured id_length " + std::to_string(config.id_length));
    }
}

void write_keyword_table(const std::vector<KeywordIdentifier>& ids, const Corpus& corpus,
                         const Vocabulary& vocab, const std::string& path) {
    std::vector<std::size_t> order(corpus.docs.size());
    for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
    std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
        return corpus.docs[a].doc_id < corpus.docs[b].doc_id;
    });
    std::ostringstream buf;
    for (std::size_t i : order) {
        buf << corpus.docs[i].doc_id << '\t';
        const KeywordIdentifier& id = ids[i];
        for (std::size_t t = 0; t < id.tokens.size(); ++t) {
            if (t) buf << ',';
            buf << vocab.token_of(id.tokens[t]);
        }
        buf << '\n';
    }
    atomic_write_file(path, buf.str());
}

std::vector<KeywordIdentifier> read_keyword_table(const std::string& path, const Corpus& corpus,
                                                  const Vocabulary& vocab, int id_length) {
    std::istringstream in(read_file(path));
    std::vector<KeywordIdentifier> ids(corpus.docs.size());
    std::vector<bool> filled(corpus.docs.size(), false);
    std::string line;
    long line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        if (line.empty()) continue;
        std::size_t tab = line.find('\t');
        if (tab == std::string::npos) {
            fail("format", "malformed keyword table line " + std::to_string(line_no) + " in " + path);
        }
        std::string doc_id = line.substr(0, tab);
        auto it = corpus.index.find(doc_id);
        if (it == corpus.index.end()) {
            fail("state", "keyword table names unknown doc '" + doc_id + "' (line " + std::to_string(line_no) + ")");
        }
        if (filled[it->second]) {
            fail("format", "duplicate keyword table entry for doc '" + doc_id + "'");
        }
        KeywordIdentifier id;
        std::istringstream tokens(line.substr(tab + 1));
        std::string token;
        while (std::getline(tokens, token, ',')) {
            if (token == Vocabulary::kPadToken) {
                id.tokens.push_back(vocab.pad_id());
                id.degenerate = true;
            } else {
                int tid = vocab.id_of(token);
                if (tid < 0 || tid >= vocab.content_size()) {
                    fail("state", "keyword table token '" + token + "' is not in the vocabulary (line " +
                                      std::to_string(line_no) + ")");
                }
                id.tokens.push_back(tid);
            }
        }
        if (static_cast<int>(id.tokens.size()) != id_length) {
            fail("state", "keyword table line " + std::to_string(line_no) + " has " +
                              std::to_string(id.tokens.size()) + " tokens, expected " + std::to_string(id_length));
        }
        id.scores.assign(id.tokens.size(), 0.0);
        ids[it->second] = std::move(id);
        filled[it->second] = true;
    }
    for (std::size_t i = 0; i < filled.size(); ++i) {
        if (!filled[i]) fail("state", "keyword table is missing doc '" + corpus.docs[i].doc_id + "'");
    }
    return ids;
}

void write_term_stats(const TermStats& stats, const Vocabulary& vocab, const std::string& path) {
    std::ostringstream buf;
    buf << "doc_count\t" << stats.doc_count << '\n';
    buf << "avg_doc_len\t" << fmt_g17(stats.avg_doc_len) << '\n';
    for (std::size_t t = 0; t < stats.doc_freq.size(); ++t) {
        buf << "df\t" << vocab.token_of(static_cast<int>(t)) << '\t' << stats.doc_freq[t] << '\n';
    }
    atomic_write_file(path, buf.str());
}

IdentifierTrie load_trie(const RunConfig& config, const Corpus& corpus, int id_length, int vocab_size) {
    std::vector<IdAssignment> assignments = read_id_table(config.id_table);
    for (const IdAssignment& a : assignments) {
        if (static_cast<int>(a.identifier.size()) != id_length) {
            fail("state", "identifier table entry '" + a.doc_id + "' has length " +
                              std::to_string(a.identifier.size()) + " but the checkpoint decodes " +
                              std::to_string(id_length) + " steps");
        }
        for (int token : a.identifier) {
            if (token < 0 || token >= vocab_size) {
                fail("state", "identifier table entry '" + a.doc_id + "' uses token " + std::to_string(token) +
                                  " outside the checkpoint vocabulary of " + std::to_string(vocab_size));
            }
        }
        if (!corpus.find(a.doc_id)) {
            fail("state", "identifier table names doc '" + a.doc_id + "' absent from the corpus");
        }
    }
    return IdentifierTrie::build(std::move(assignments));
}

}  // namespace

// ---------------------------------------------------------------------------
// commands
// ---------------------------------------------------------------------------

void cmd_build_index(const RunConfig& config) {
    LoadedCorpus loaded = load_corpus_bundle(config);
    Bm25Params bm25{config.bm25_k1, config.bm25_b};
    TermStats stats = compute_stats(loaded.corpus, loaded.vocab, bm25);
    std::vector<KeywordIdentifier> ids = extract_all_keyword_ids(stats, loaded.vocab, loaded.corpus,
                                                                 config.id_length, loaded.stopwords,
                                                                 ExecutionPolicy::parallel);
    write_term_stats(stats, loaded.vocab, config.term_stats);
    write_keyword_table(ids, loaded.corpus, loaded.vocab, config.keyword_table);
    std::printf("indexed %zu docs, vocabulary %d; wrote %s and %s\n", loaded.corpus.docs.size(),
                loaded.vocab.size(), config.term_stats.c_str(), config.keyword_table.c_str());
}

void cmd_train(const RunConfig& config, const std::string& phase) {
    if (phase != "keyword" && phase != "refine") {
        fail("config", "unknown training phase '" + phase + "' (expected keyword or refine)");
    }
    LoadedCorpus loaded = load_corpus_bundle(config);

    std::vector<Query> queries;
    QrelSet qrels;
    if (!config.queries.empty()) {
        queries = load_queries(config.queries, loaded.vocab, config.max_query_len);
        if (!config.qrels.empty()) qrels = load_qrels(config.qrels, loaded.corpus, queries);
    }

    TrainingData data;
    data.corpus = &loaded.corpus;
    data.queries = queries.empty() ? nullptr : &queries;
    data.qrels = qrels.empty() ? nullptr : &qrels;

    TrainResult result;
    if (phase == "keyword") {
        if (config.training.flags.no_keyword_phase) {
            fail("config", "phase keyword cannot run with no_keyword_phase set");
        }
        std::vector<KeywordIdentifier> keyword_ids =
            read_keyword_table(config.keyword_table, loaded.corpus, loaded.vocab, config.id_length);
        data.keyword_ids = &keyword_ids;
        ModelParams params = init_params(model_config_for(config, loaded.vocab));
        result = train_keyword_phase(std::move(params), data, config.training, ExecutionPolicy::parallel);
        write_keyword_trace(result.keyword_trace, config.keyword_trace);
    } else {
        ModelParams params;
        if (config.training.flags.no_keyword_phase) {
            params = init_params(model_config_for(config, loaded.vocab));
        } else {
            if (config.checkpoint_in.empty()) {
                fail("config", "phase refine needs checkpoint_in (or the no_keyword_phase flag)");
            }
            params = load_checkpoint(config.checkpoint_in);
            check_vocab_matches(params, loaded.vocab, config);
            params.config.seed = config.seed;
        }
        if (!data.queries || !data.qrels) fail("config", "phase refine needs queries and qrels");
        result = train_refine_phase(std::move(params), data, config.training, ExecutionPolicy::parallel);
        write_refine_trace(result.refine_trace, config.refine_trace);
    }
    save_checkpoint(result.params, config.checkpoint_out);
    std::printf("trained phase %s for %zu steps; wrote %s\n", phase.c_str(),
                phase == "keyword" ? result.keyword_trace.size() : result.refine_trace.size(),
                config.checkpoint_out.c_str());
}

void cmd_assign(const RunConfig& config) {
    if (config.checkpoint_in.empty()) fail("config", "assign needs checkpoint_in");
    ModelParams params = load_checkpoint(config.checkpoint_in);
    LoadedCorpus loaded = load_corpus_bundle(config);
    check_vocab_matches(params, loaded.vocab, config);
    DecodeOptions options = config.training.decode_options();
    std::vector<IdAssignment> assignments =
        assign_ids(params, loaded.corpus, ExecutionPolicy::parallel, options);
    write_id_table(assignments, config.id_table);
    IdentifierTrie trie = IdentifierTrie::build(assignments);
    std::printf("assigned %zu docs to %zu distinct identifiers; wrote %s\n", trie.doc_count(), trie.leaf_count(),
                config.id_table.c_str());
}

void cmd_retrieve(const RunConfig& config) {
    if (config.checkpoint_in.empty()) fail("config", "retrieve needs checkpoint_in");
    if (config.queries.empty()) fail("config", "retrieve needs a queries path");
    ModelParams params = load_checkpoint(config.checkpoint_in);
    LoadedCorpus loaded = load_corpus_bundle(config);
    check_vocab_matches(params, loaded.vocab, config);
    IdentifierTrie trie = load_trie(config, loaded.corpus, params.config.id_length, params.config.vocab_size);
    std::vector<Query> queries = load_queries(config.queries, loaded.vocab, config.max_query_len);
    std::vector<RankedList> runs =
        retrieve_batch(params, queries, trie, config.top_k, config.beam, config.training.decode_options(),
                       parse_scorer(config.scorer), ExecutionPolicy::parallel);
    write_trec_run(runs, config.run_output, config.run_tag);
    std::printf("retrieved top-%d for %zu queries; wrote %s\n", config.top_k, queries.size(),
                config.run_output.c_str());
}

void cmd_evaluate(const RunConfig& config) {
    if (config.queries.empty()) fail("config", "evaluate needs a queries path");
    if (config.qrels.empty()) fail("config", "evaluate needs a qrels path");
    LoadedCorpus loaded = load_corpus_bundle(config);
    std::vector<Query> queries = load_queries(config.queries, loaded.vocab, config.max_query_len);
    QrelSet qrels = load_qrels(config.qrels, loaded.corpus, queries);
    std::vector<RankedList> runs = read_trec_run(config.run_output);

    std::map<std::string, std::set<std::string>> subsets;
    if (!config.train_qrels.empty()) {
        QrelSet train = load_qrels(config.train_qrels, loaded.corpus, {});
        auto [seen, unseen] = split_seen_unseen(train, qrels);
        subsets["seen"] = std::move(seen);
        subsets["unseen"] = std::move(unseen);
    }
    if (!config.id_table.empty() && file_exists(config.id_table)) {
        IdentifierTrie trie = load_trie(config, loaded.corpus, config.id_length, loaded.vocab.size());
        subsets["collision"] = collision_subset(qrels, trie);
    }

    MetricReport report = evaluate_runs(runs, qrels, config.cutoffs, subsets);
    write_metric_report(report, config.report);
    std::fputs(format_metric_table(report).c_str(), stdout);
    std::printf("wrote %s\n", config.report.c_str());
}

}  // namespace glen
