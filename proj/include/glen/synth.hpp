#pragma once

#include <cstdint>
#include <string>
#include <tuple>
#include <utility>
#include <vector>

#include "glen/corpus.hpp"

namespace glen {

// Seeded keyword-bag dataset: every document carries a few signature words
// that appear nowhere else (so BM25 must pick them) plus common fillers, and
// each document gets one train and one test query built from its signatures.
struct SynthSpec {
    int doc_count = 200;
    int signature_size = 3;    // unique words per document
    int signature_repeats = 3; // occurrences of each signature word
    int filler_vocab = 30;
    int fillers_per_doc = 6;
    int query_fillers = 2;
    double distractor_rate = 0.0;  // chance a query borrows a foreign signature word
    double unseen_fraction = 0.0;  // trailing docs excluded from train queries
    std::uint64_t seed = 7;
};

struct SynthQrel {
    std::string query_id;
    std::string doc_id;
    int grade;
};

struct SynthDataset {
    std::vector<RawDocument> docs;
    std::vector<std::pair<std::string, std::string>> train_queries;  // (query_id, text)
    std::vector<std::pair<std::string, std::string>> test_queries;
    std::vector<SynthQrel> train_qrels;
    std::vector<SynthQrel> test_qrels;
};

SynthDataset make_synth_dataset(const SynthSpec& spec);

// Writes corpus.jsonl, queries_train.tsv, queries_test.tsv, qrels_train.tsv,
// qrels_test.tsv under dir. All writes atomic; reruns are byte-identical.
void write_synth_dataset(const SynthDataset& data, const std::string& dir);

}  // namespace glen
