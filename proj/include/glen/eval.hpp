#pragma once

#include <map>
#include <set>
#include <string>
#include <vector>

#include "glen/corpus.hpp"
#include "glen/id_index.hpp"
#include "glen/inference.hpp"

namespace glen {

// |top-k of ranked that are relevant| / |relevant|.
double recall_at_k(const RankedList& ranked, const std::set<std::string>& relevant, int k);

// 1/rank of the first relevant document within the top k, else 0.
double mrr_at_k(const RankedList& ranked, const std::set<std::string>& relevant, int k);

// DCG@k with gain 2^grade - 1 and discount log2(rank + 1), normalized by the
// ideal DCG over the grade multiset.
double ndcg_at_k(const RankedList& ranked, const std::map<std::string, int>& grades, int k);

// A test query is seen when at least one of its judged documents is judged in
// the train qrels too. Returns (seen, unseen); together they cover every test
// query exactly once.
std::pair<std::set<std::string>, std::set<std::string>> split_seen_unseen(const QrelSet& train_qrels,
                                                                          const QrelSet& test_qrels);

// Test queries with at least one relevant document sitting in a collision
// bucket of size >= 2.
std::set<std::string> collision_subset(const QrelSet& test_qrels, const IdentifierTrie& trie);

struct MetricRow {
    std::string metric;  // recall | mrr | ndcg
    int cutoff;
    std::string subset;  // all, plus any caller-defined subsets
    double value;        // macro-average over the subset's evaluated queries
    std::size_t query_count;
};

struct MetricReport {
    std::vector<MetricRow> rows;
    std::size_t evaluated_queries = 0;
    std::size_t skipped_queries = 0;  // queries without positive judgments
};

// Macro-averages each metric/cutoff over every query that has positive
// judgments; queries judged but absent from the runs score zero. Subsets
// restrict the average to the named query-id sets ("all" is always present).
MetricReport evaluate_runs(const std::vector<RankedList>& runs, const QrelSet& qrels,
                           const std::vector<int>& cutoffs,
                           const std::map<std::string, std::set<std::string>>& subsets = {});

// CSV with header metric,cutoff,subset,value,query_count. Write is atomic.
void write_metric_report(const MetricReport& report, const std::string& path);

std::string format_metric_table(const MetricReport& report);

}  // namespace glen
