#pragma once

#include <set>
#include <string>
#include <vector>

#include "glen/corpus.hpp"
#include "glen/parallel.hpp"

namespace glen {

struct Bm25Params {
    double k1 = 1.2;
    double b = 0.75;
};

// Corpus-level statistics backing the term scorer.
struct TermStats {
    std::size_t doc_count = 0;
    double avg_doc_len = 0.0;
    std::vector<int> doc_freq;  // by token id, content tokens only
    Bm25Params params;
};

TermStats compute_stats(const Corpus& corpus, const Vocabulary& vocab, const Bm25Params& params);

// idf(t) * tf * (k1 + 1) / (tf + k1 * (1 - b + b * doc_len / avg_doc_len))
// with idf(t) = ln((N - df + 0.5) / (df + 0.5) + 1). Errors if the token does
// not occur in the document.
double term_score(const TermStats& stats, const Document& doc, int token);

// Top-n keyword identifier for a document. Distinct scoring tokens are ranked
// by score descending, ties by ascending token id; short documents are padded
// with the reserved pad id (score 0) and flagged degenerate.
struct KeywordIdentifier {
    std::vector<int> tokens;
    std::vector<double> scores;
    bool degenerate = false;
};

KeywordIdentifier extract_keyword_id(const TermStats& stats, const Vocabulary& vocab,
                                     const Document& doc, int length,
                                     const std::set<std::string>& stopwords);

// Batch kernel: one identifier per corpus document, output index-aligned.
std::vector<KeywordIdentifier> extract_all_keyword_ids(const TermStats& stats, const Vocabulary& vocab,
                                                       const Corpus& corpus, int length,
                                                       const std::set<std::string>& stopwords,
                                                       ExecutionPolicy policy);

}  // namespace glen
