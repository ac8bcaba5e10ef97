#pragma once

#include <string>
#include <vector>

#include "glen/corpus.hpp"
#include "glen/id_index.hpp"
#include "glen/model.hpp"
#include "glen/parallel.hpp"
#include "glen/rng.hpp"
#include "glen/tensor.hpp"

namespace glen {

// Identifier score during the constrained search. log_softmax sums per-step
// log-probabilities; ratio multiplies the un-exponentiated dot-product shares
// q_t.e_z / sum_j q_t.e_j, which can go negative and exists for comparison
// only.
enum class IdentifierScorer { log_softmax, ratio };

IdentifierScorer parse_scorer(const std::string& name);
std::string scorer_name(IdentifierScorer scorer);

// Per-step query-side decoder outputs. With hidden-state decoder feedback the
// rows do not depend on emitted tokens, so one decode serves the whole trie
// search; raw_dots row t is q_t.E^T and doubles as the w^q source.
struct QueryDecode {
    Tensor raw_dots;   // id_length x vocab_size
    Tensor log_probs;  // log-softmax of each raw_dots row
};

QueryDecode query_distributions(const ModelParams& params, const std::vector<int>& query_tokens,
                                const DecodeOptions& options = {});

// Builds the matching log-probability rows for externally crafted dot
// products (test fixtures).
QueryDecode decode_from_dots(Tensor raw_dots);

struct ScoredIdentifier {
    std::vector<int> tokens;
    double score = 0.0;
};

// Level-synchronous beam search over the trie. Exact (equal to brute-force
// enumeration of every stored identifier) whenever beam >= leaf count. Ties
// resolve by ascending lexicographic token order.
std::vector<ScoredIdentifier> constrained_search(const QueryDecode& decode, const IdentifierTrie& trie,
                                                 int k, int beam,
                                                 IdentifierScorer scorer = IdentifierScorer::log_softmax);

// Cosine of the two identifier weight vectors; 0 when either has zero norm.
double rel_id(const std::vector<double>& w_query, const std::vector<double>& w_doc);

struct RankedEntry {
    std::string doc_id;
    double score = 0.0;
};

struct RankedList {
    std::string query_id;
    std::vector<RankedEntry> entries;  // scores non-increasing, doc_ids distinct
    int k = 0;                         // requested cutoff
};

// Ranks identifiers with the constrained search, then expands each collision
// bucket in rel_id descending order (ties by ascending doc_id). Documents
// inherit their identifier's score; expansion stops once k documents are out.
RankedList rank_documents(const QueryDecode& decode, const IdentifierTrie& trie, const std::string& query_id,
                          int k, int beam, IdentifierScorer scorer = IdentifierScorer::log_softmax);

// Full query-to-documents path. With options.token_input the per-step
// distributions depend on the decoded prefix, so the search re-decodes per
// candidate prefix instead of reusing one QueryDecode.
RankedList retrieve(const ModelParams& params, const Query& query, const IdentifierTrie& trie, int k, int beam,
                    const DecodeOptions& options = {},
                    IdentifierScorer scorer = IdentifierScorer::log_softmax);

// As rank_documents, but collision buckets are shuffled by rng instead of
// rel_id-sorted (the random-ranking baseline).
RankedList random_collision_rank(const QueryDecode& decode, const IdentifierTrie& trie,
                                 const std::string& query_id, int k, int beam, IdentifierScorer scorer, Rng& rng);

std::vector<RankedList> retrieve_batch(const ModelParams& params, const std::vector<Query>& queries,
                                       const IdentifierTrie& trie, int k, int beam, const DecodeOptions& options,
                                       IdentifierScorer scorer, ExecutionPolicy policy);

// TREC run lines: query_id Q0 doc_id rank score tag. Write is atomic; read
// groups lines by query_id preserving file order.
void write_trec_run(const std::vector<RankedList>& runs, const std::string& path, const std::string& tag);
std::vector<RankedList> read_trec_run(const std::string& path);

}  // namespace glen
