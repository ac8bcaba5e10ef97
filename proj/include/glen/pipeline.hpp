#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "glen/objectives.hpp"

namespace glen {

// Flat key=value run configuration. Files set keys first, --set overrides
// apply in order, --seed wins last.
struct RunConfig {
    // artifact paths
    std::string corpus;
    std::string queries;
    std::string qrels;
    std::string train_qrels;
    std::string stopwords;
    std::string keyword_table = "keyword_ids.tsv";
    std::string term_stats = "term_stats.tsv";
    std::string checkpoint_in;
    std::string checkpoint_out = "model.ckpt";
    std::string id_table = "id_table.tsv";
    std::string run_output = "run.trec";
    std::string report = "metrics.csv";
    std::string keyword_trace = "trace_keyword.csv";
    std::string refine_trace = "trace_refine.csv";

    // model shape and corpus handling
    int embed_dim = 32;
    int vocab_max = 4096;
    int min_df = 1;
    int id_length = 3;
    int enc_layers = 2;
    int dec_layers = 2;
    int max_doc_len = 64;
    int max_query_len = 16;
    std::uint64_t seed = 7;

    // keyword scoring
    double bm25_k1 = 1.2;
    double bm25_b = 0.75;

    TrainingConfig training;

    // retrieval
    int top_k = 10;
    int beam = 100;
    std::string scorer = "log_softmax";
    std::string run_tag = "glen";
    std::vector<int> cutoffs = {1, 10, 100};
};

// Parses `key=value` lines ('#' starts a comment). Unknown keys and
// unparseable values are errors naming the key.
void apply_config_line(RunConfig& config, const std::string& line, const std::string& context);

RunConfig load_run_config(const std::string& config_path, const std::vector<std::string>& overrides,
                          const std::string& seed_override);

// Commands behind the CLI verbs. Each is deterministic given config + seed
// and never partially overwrites an output.
void cmd_build_index(const RunConfig& config);
void cmd_train(const RunConfig& config, const std::string& phase);
void cmd_assign(const RunConfig& config);
void cmd_retrieve(const RunConfig& config);
void cmd_evaluate(const RunConfig& config);

}  // namespace glen
