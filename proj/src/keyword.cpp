#include "glen/keyword.hpp"

#include <algorithm>
#include <cmath>

#include "glen/error.hpp"

namespace glen {

TermStats compute_stats(const Corpus& corpus, const Vocabulary& vocab, const Bm25Params& params) {
    if (corpus.docs.empty()) fail("state", "cannot compute term statistics for an empty corpus");
    TermStats stats;
    stats.doc_count = corpus.docs.size();
    stats.params = params;
    stats.doc_freq.assign(static_cast<std::size_t>(vocab.content_size()), 0);
    long long total_len = 0;
    std::vector<char> seen(static_cast<std::size_t>(vocab.content_size()), 0);
    for (const auto& doc : corpus.docs) {
        total_len += static_cast<long long>(doc.tokens.size());
        std::fill(seen.begin(), seen.end(), 0);
        for (int t : doc.tokens) {
            if (!seen[static_cast<std::size_t>(t)]) {
                seen[static_cast<std::size_t>(t)] = 1;
                stats.doc_freq[static_cast<std::size_t>(t)] += 1;
            }
        }
    }
    stats.avg_doc_len = static_cast<double>(total_len) / static_cast<double>(stats.doc_count);
    return stats;
}

namespace {

double score_token(const TermStats& stats, int tf, int doc_len, int df) {
    double n = static_cast<double>(stats.doc_count);
    double idf = std::log((n - df + 0.5) / (df + 0.5) + 1.0);
    double k1 = stats.params.k1;
    double b = stats.params.b;
    double denom = tf + k1 * (1.0 - b + b * doc_len / stats.avg_doc_len);
    return idf * (tf * (k1 + 1.0)) / denom;
}

}  // namespace

double term_score(const TermStats& stats, const Document& doc, int token) {
    int tf = 0;
    for (int t : doc.tokens) {
        if (t == token) ++tf;
    }
    if (tf == 0) fail("state", "term_score: token " + std::to_string(token) + " absent from document " + doc.doc_id);
    return score_token(stats, tf, static_cast<int>(doc.tokens.size()), stats.doc_freq[static_cast<std::size_t>(token)]);
}

KeywordIdentifier extract_keyword_id(const TermStats& stats, const Vocabulary& vocab,
                                     const Document& doc, int length,
                                     const std::set<std::string>& stopwords) {
    if (length <= 0) fail("config", "keyword identifier length must be positive");

    // tf per distinct token, in first-occurrence order; sorted afterwards.
    std::vector<std::pair<int, int>> tf;  // (token, count)
    for (int t : doc.tokens) {
        bool found = false;
        for (auto& [tok, count] : tf) {
            if (tok == t) {
                ++count;
                found = true;
                break;
            }
        }
        if (!found) tf.emplace_back(t, 1);
    }

    std::vector<std::pair<int, double>> scored;  // (token, score)
    int doc_len = static_cast<int>(doc.tokens.size());
    for (const auto& [token, count] : tf) {
        if (!stopwords.empty() && stopwords.count(vocab.token_of(token))) continue;
        scored.emplace_back(token, score_token(stats, count, doc_len, stats.doc_freq[static_cast<std::size_t>(token)]));
    }
    if (scored.empty()) fail("state", "document " + doc.doc_id + " has no scoreable tokens");

    std::stable_sort(scored.begin(), scored.end(), [](const auto& a, const auto& b) {
        if (a.second != b.second) return a.second > b.second;
        return a.first < b.first;
    });

    KeywordIdentifier id;
    for (int i = 0; i < length && i < static_cast<int>(scored.size()); ++i) {
        id.tokens.push_back(scored[static_cast<std::size_t>(i)].first);
        id.scores.push_back(scored[static_cast<std::size_t>(i)].second);
    }
    while (static_cast<int>(id.tokens.size()) < length) {
        id.tokens.push_back(vocab.pad_id());
        id.scores.push_back(0.0);
        id.degenerate = true;
    }
    return id;
}

std::vector<KeywordIdentifier> extract_all_keyword_ids(const TermStats& stats, const Vocabulary& vocab,
                                                       const Corpus& corpus, int length,
                                                       const std::set<std::string>& stopwords,
                                                       ExecutionPolicy policy) {
    std::vector<KeywordIdentifier> out(corpus.docs.size());
    parallel_for(policy, corpus.docs.size(), [&](std::size_t i) {
        out[i] = extract_keyword_id(stats, vocab, corpus.docs[i], length, stopwords);
    });
    return out;
}

}  // namespace glen
