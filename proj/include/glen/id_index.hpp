#pragma once

#include <map>
#include <string>
#include <vector>

#include "glen/corpus.hpp"
#include "glen/model.hpp"
#include "glen/parallel.hpp"
#include "glen/rng.hpp"

namespace glen {

struct IdAssignment {
    std::string doc_id;
    std::vector<int> identifier;   // id_length token ids
    std::vector<double> weights;   // w_t = hidden_t . embedding[z_t]
};

// Fixed-depth trie over assigned identifiers. Leaves hold collision buckets;
// bucket order is ascending doc_id. Multiple docs may share one identifier.
class IdentifierTrie {
public:
    static IdentifierTrie build(std::vector<IdAssignment> assignments);

    int id_length() const { return id_length_; }
    std::size_t doc_count() const { return assignments_.size(); }
    std::size_t leaf_count() const { return leaf_count_; }

    const std::vector<IdAssignment>& assignments() const { return assignments_; }  // sorted by doc_id
    const IdAssignment* find(const std::string& doc_id) const;

    // Token ids extending the prefix, ascending. Unknown prefixes yield {}.
    std::vector<int> valid_children(const std::vector<int>& prefix) const;

    // Assignment indices (ascending doc_id) stored exactly at `identifier`.
    std::vector<std::size_t> bucket(const std::vector<int>& identifier) const;

    // Node-level walk for the constrained search.
    int root() const { return 0; }
    int child(int node, int token) const;
    const std::map<int, int>& children_of(int node) const { return nodes_[static_cast<std::size_t>(node)].children; }
    const std::vector<std::size_t>& bucket_of(int node) const { return nodes_[static_cast<std::size_t>(node)].bucket; }

    // Negatives for a target document, hardest first: docs sharing the full
    // identifier, then the longest proper prefixes, down to depth 0. Whole
    // tiers are taken while they fit; the first tier that does not fit is
    // sampled uniformly without replacement. Result is doc_id ascending and
    // never contains the target.
    std::vector<std::string> prefix_negatives(const std::string& target_doc_id, int count, Rng& rng) const;

    // Uniform corpus sample excluding the target (ablation path).
    std::vector<std::string> random_negatives(const std::string& target_doc_id, int count, Rng& rng) const;

private:
    struct Node {
        std::map<int, int> children;
        std::vector<std::size_t> bucket;
    };

    std::vector<IdAssignment> assignments_;
    std::map<std::string, std::size_t> doc_index_;
    std::vector<Node> nodes_;
    std::size_t leaf_count_ = 0;
    int id_length_ = 0;
};

// Predicts identifiers for the whole corpus with the current parameters and
// rebuilds the trie. Runs per-document; outputs do not depend on the policy.
IdentifierTrie refresh_assignments(const ModelParams& params, const Corpus& corpus,
                                   ExecutionPolicy policy, const DecodeOptions& options = {});

std::vector<IdAssignment> assign_ids(const ModelParams& params, const Corpus& corpus,
                                     ExecutionPolicy policy, const DecodeOptions& options = {});

// TSV: doc_id <TAB> comma-joined token ids <TAB> comma-joined weights
// (17 significant digits), sorted by doc_id. Write is atomic.
void write_id_table(const std::vector<IdAssignment>& assignments, const std::string& path);
std::vector<IdAssignment> read_id_table(const std::string& path);

}  // namespace glen
