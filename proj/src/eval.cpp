#include "glen/eval.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

#include "glen/error.hpp"
#include "glen/io_util.hpp"

namespace glen {

namespace {
std::size_t top_k_count(const RankedList& ranked, int k) {
    if (k < 1) fail("config", "metric cutoff must be >= 1");
    return std::min(ranked.entries.size(), static_cast<std::size_t>(k));
}
}  // namespace

double recall_at_k(const RankedList& ranked, const std::set<std::string>& relevant, int k) {
    std::size_t top = top_k_count(ranked, k);
    if (relevant.empty()) fail("state", "recall needs a non-empty relevant set");
    std::size_t hits = 0;
    for (std::size_t i = 0; i < top; ++i) {
        if (relevant.count(ranked.entries[i].doc_id)) ++hits;
    }
    return static_cast<double>(hits) / static_cast<double>(relevant.size());
}

double mrr_at_k(const RankedList& ranked, const std::set<std::string>& relevant, int k) {
    std::size_t top = top_k_count(ranked, k);
    for (std::size_t i = 0; i < top; ++i) {
        if (relevant.count(ranked.entries[i].doc_id)) return 1.0 / static_cast<double>(i + 1);
    }
    return 0.0;
}

double ndcg_at_k(const RankedList& ranked, const std::map<std::string, int>& grades, int k) {
    std::size_t top = top_k_count(ranked, k);
    double dcg = 0.0;
    for (std::size_t i = 0; i < top; ++i) {
        auto it = grades.find(ranked.entries[i].doc_id);
        if (it == grades.end() || it->second <= 0) continue;
        dcg += (std::pow(2.0, it->second) - 1.0) / std::log2(static_cast<double>(i + 2));
    }
    std::vector<int> ideal;
    for (const auto& [doc, grade] : grades) {
        if (grade > 0) ideal.push_back(grade);
    }
    if (ideal.empty()) fail("state", "ndcg needs at least one positive grade");
    std::sort(ideal.begin(), ideal.end(), std::greater<>());
    double idcg = 0.0;
    for (std::size_t i = 0; i < std::min(ideal.size(), static_cast<std::size_t>(k)); ++i) {
        idcg += (std::pow(2.0, ideal[i]) - 1.0) / std::log2(static_cast<double>(i + 2));
    }
    return dcg / idcg;
}

std::pair<std::set<std::string>, std::set<std::string>> split_seen_unseen(const QrelSet& train_qrels,
                                                                          const QrelSet& test_qrels) {
    std::set<std::string> train_docs;
    for (const auto& [query_id, docs] : train_qrels.judgments()) {
        for (const auto& [doc_id, grade] : docs) train_docs.insert(doc_id);
    }
    std::set<std::string> seen, unseen;
    for (const auto& [query_id, docs] : test_qrels.judgments()) {
        bool overlaps = std::any_of(docs.begin(), docs.end(),
                                    [&](const auto& entry) { return train_docs.count(entry.first) > 0; });
        (overlaps ? seen : unseen).insert(query_id);
    }
    return {std::move(seen), std::move(unseen)};
}

std::set<std::string> collision_subset(const QrelSet& test_qrels, const IdentifierTrie& trie) {
    std::set<std::string> out;
    for (const auto& [query_id, docs] : test_qrels.judgments()) {
        for (const auto& [doc_id, grade] : docs) {
            if (grade <= 0) continue;
            const IdAssignment* assignment = trie.find(doc_id);
            if (assignment && trie.bucket(assignment->identifier).size() >= 2) {
                out.insert(query_id);
                break;
            }
        }
    }
    return out;
}

MetricReport evaluate_runs(const std::vector<RankedList>& runs, const QrelSet& qrels,
                           const std::vector<int>& cutoffs,
                           const std::map<std::string, std::set<std::string>>& subsets) {
    if (cutoffs.empty()) fail("config", "evaluation needs at least one cutoff");

    std::map<std::string, const RankedList*> by_query;
    for (const RankedList& run : runs) by_query[run.query_id] = &run;

    std::set<std::string> universe;
    for (const auto& [query_id, run] : by_query) universe.insert(query_id);
    for (const auto& [query_id, docs] : qrels.judgments()) universe.insert(query_id);

    struct PerQuery {
        std::map<int, double> recall, mrr, ndcg;  // cutoff -> value
    };
    std::map<std::string, PerQuery> scored;
    std::size_t skipped = 0;
    static const RankedList kEmpty;
    for (const std::string& query_id : universe) {
        std::set<std::string> relevant = qrels.relevant_docs(query_id);
        if (relevant.empty()) {
            ++skipped;
            continue;
        }
        const RankedList& run = by_query.count(query_id) ? *by_query.at(query_id) : kEmpty;
        const std::map<std::string, int>& grades = *qrels.for_query(query_id);
        PerQuery& pq = scored[query_id];
        for (int k : cutoffs) {
            pq.recall[k] = recall_at_k(run, relevant, k);
            pq.mrr[k] = mrr_at_k(run, relevant, k);
            pq.ndcg[k] = ndcg_at_k(run, grades, k);
        }
    }

    std::vector<std::pair<std::string, const std::set<std::string>*>> subset_order;
    subset_order.push_back({"all", nullptr});
    for (const auto& [name, ids] : subsets) {
        if (name == "all") fail("config", "subset name 'all' is reserved");
        subset_order.push_back({name, &ids});
    }

    std::vector<int> sorted_cutoffs = cutoffs;
    std::sort(sorted_cutoffs.begin(), sorted_cutoffs.end());
    sorted_cutoffs.erase(std::unique(sorted_cutoffs.begin(), sorted_cutoffs.end()), sorted_cutoffs.end());

    MetricReport report;
    report.evaluated_queries = scored.size();
    report.skipped_queries = skipped;
    for (const char* metric : {"recall", "mrr", "ndcg"}) {
        for (int k : sorted_cutoffs) {
            for (const auto& [subset_name, ids] : subset_order) {
                double sum = 0.0;
                std::size_t count = 0;
                for (const auto& [query_id, pq] : scored) {
                    if (ids && !ids->count(query_id)) continue;
                    const auto& values = std::string(metric) == "recall" ? pq.recall
                                       : std::string(metric) == "mrr"    ? pq.mrr
                                                                         : pq.ndcg;
                    sum += values.at(k);
                    ++count;
                }
                report.rows.push_back({metric, k, subset_name, count ? sum / static_cast<double>(count) : 0.0, count});
            }
        }
    }
    return report;
}

void write_metric_report(const MetricReport& report, const std::string& path) {
    std::ostringstream buf;
    buf << "metric,cutoff,subset,value,query_count\n";
    for (const MetricRow& row : report.rows) {
        buf << row.metric << ',' << row.cutoff << ',' << row.subset << ',' << fmt_g17(row.value) << ','
            << row.query_count << '\n';
    }
    atomic_write_file(path, buf.str());
}

std::string format_metric_table(const MetricReport& report) {
    std::ostringstream out;
    out << "metric      cutoff  subset      value       queries\n";
    char line[128];
    for (const MetricRow& row : report.rows) {
        std::snprintf(line, sizeof(line), "%-10s  %6d  %-10s  %.6f  %7zu\n", row.metric.c_str(), row.cutoff,
                      row.subset.c_str(), row.value, row.query_count);
        out << line;
    }
    out << "evaluated queries: " << report.evaluated_queries
        << ", skipped (no positive judgments): " << report.skipped_queries << '\n';
    return out.str();
}

}  // namespace glen
