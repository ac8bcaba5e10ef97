#include "glen/inference.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <sstream>

#include "glen/error.hpp"
#include "glen/io_util.hpp"

namespace glen {

IdentifierScorer parse_scorer(const std::string& name) {
    if (name == "log_softmax") return IdentifierScorer::log_softmax;
    if (name == "ratio") return IdentifierScorer::ratio;
    fail("config", "unknown identifier scorer '" + name + "' (expected log_softmax or ratio)");
}

std::string scorer_name(IdentifierScorer scorer) {
    return scorer == IdentifierScorer::ratio ? "ratio" : "log_softmax";
}

QueryDecode query_distributions(const ModelParams& params, const std::vector<int>& query_tokens,
                                const DecodeOptions& options) {
    ForwardResult fwd = run_model(params, query_tokens, options);
    int n = params.config.id_length;
    int v = params.config.vocab_size;
    QueryDecode out;
    out.raw_dots = Tensor(n, v);
    out.log_probs = Tensor(n, v);
    for (int t = 0; t < n; ++t) {
        std::copy(fwd.logits[static_cast<std::size_t>(t)].begin(), fwd.logits[static_cast<std::size_t>(t)].end(),
                  out.raw_dots.row_ptr(t));
        std::copy(fwd.log_probs[static_cast<std::size_t>(t)].begin(),
                  fwd.log_probs[static_cast<std::size_t>(t)].end(), out.log_probs.row_ptr(t));
    }
    return out;
}

QueryDecode decode_from_dots(Tensor raw_dots) {
    QueryDecode out;
    out.log_probs = Tensor(raw_dots.rows, raw_dots.cols);
    for (int t = 0; t < raw_dots.rows; ++t) {
        const double* x = raw_dots.row_ptr(t);
        double hi = x[0];
        for (int j = 1; j < raw_dots.cols; ++j) hi = std::max(hi, x[j]);
        double sum = 0.0;
        for (int j = 0; j < raw_dots.cols; ++j) sum += std::exp(x[j] - hi);
        double lse = hi + std::log(sum);
        double* y = out.log_probs.row_ptr(t);
        for (int j = 0; j < raw_dots.cols; ++j) y[j] = x[j] - lse;
    }
    out.raw_dots = std::move(raw_dots);
    return out;
}

namespace {

struct StepRow {
    const double* raw;
    const double* logp;
    double raw_sum;
};

// Supplies the step-t distribution for a candidate prefix of length t. The
// hidden-feedback model ignores the prefix; the token-feedback ablation
// re-decodes per prefix and memoizes.
class DistributionSource {
public:
    virtual ~DistributionSource() = default;
    virtual StepRow rows(const std::vector<int>& prefix) = 0;
};

class PrecomputedSource : public DistributionSource {
public:
    explicit PrecomputedSource(const QueryDecode& d) : d_(d), sums_(static_cast<std::size_t>(d.raw_dots.rows)) {
        for (int t = 0; t < d.raw_dots.rows; ++t) {
            const double* x = d.raw_dots.row_ptr(t);
            double s = 0.0;
            for (int j = 0; j < d.raw_dots.cols; ++j) s += x[j];
            sums_[static_cast<std::size_t>(t)] = s;
        }
    }

    StepRow rows(const std::vector<int>& prefix) override {
        int t = static_cast<int>(prefix.size());
        if (t >= d_.raw_dots.rows) fail("state", "constrained search walked past the decoder depth");
        return {d_.raw_dots.row_ptr(t), d_.log_probs.row_ptr(t), sums_[static_cast<std::size_t>(t)]};
    }

private:
    const QueryDecode& d_;
    std::vector<double> sums_;
};

class TokenModeSource : public DistributionSource {
public:
    TokenModeSource(const ModelParams& params, const std::vector<int>& query_tokens, const DecodeOptions& base)
        : params_(params), tokens_(query_tokens), base_(base) {}

    StepRow rows(const std::vector<int>& prefix) override {
        auto it = memo_.find(prefix);
        if (it == memo_.end()) {
            DecodeOptions opts = base_;
            opts.token_input = true;
            opts.forced_tokens.assign(static_cast<std::size_t>(params_.config.id_length), -1);
            for (std::size_t i = 0; i < prefix.size(); ++i) opts.forced_tokens[i] = prefix[i];
            ForwardResult fwd = run_model(params_, tokens_, opts);
            std::size_t t = prefix.size();
            Entry e{fwd.logits[t], fwd.log_probs[t], 0.0};
            for (double x : e.raw) e.raw_sum += x;
            it = memo_.emplace(prefix, std::move(e)).first;
        }
        return {it->second.raw.data(), it->second.logp.data(), it->second.raw_sum};
    }

private:
    struct Entry {
        std::vector<double> raw, logp;
        double raw_sum;
    };
    const ModelParams& params_;
    const std::vector<int>& tokens_;
    DecodeOptions base_;
    std::map<std::vector<int>, Entry> memo_;
};

struct Candidate {
    int node;
    std::vector<int> tokens;
    double score;
};

bool candidate_better(const Candidate& a, const Candidate& b) {
    if (a.score != b.score) return a.score > b.score;
    return a.tokens < b.tokens;
}

std::vector<ScoredIdentifier> search_core(DistributionSource& source, const IdentifierTrie& trie, int k, int beam,
                                          IdentifierScorer scorer) {
    if (k <= 0) fail("config", "constrained search needs k >= 1");
    if (beam < k) fail("config", "beam width " + std::to_string(beam) + " is below k " + std::to_string(k));

    std::vector<Candidate> frontier{{trie.root(), {}, scorer == IdentifierScorer::ratio ? 1.0 : 0.0}};
    for (int depth = 0; depth < trie.id_length(); ++depth) {
        std::vector<Candidate> next;
        for (const Candidate& cand : frontier) {
            StepRow row = source.rows(cand.tokens);
            for (const auto& [token, child] : trie.children_of(cand.node)) {
                double score;
                if (scorer == IdentifierScorer::ratio) {
                    if (row.raw_sum == 0.0) {
                        fail("numeric", "ratio scorer: step " + std::to_string(depth) + " dot products sum to zero");
                    }
                    score = cand.score * (row.raw[token] / row.raw_sum);
                } else {
                    score = cand.score + row.logp[token];
                }
                Candidate nc{child, cand.tokens, score};
                nc.tokens.push_back(token);
                next.push_back(std::move(nc));
            }
        }
        std::sort(next.begin(), next.end(), candidate_better);
        if (static_cast<int>(next.size()) > beam) next.resize(static_cast<std::size_t>(beam));
        frontier = std::move(next);
    }

    std::vector<ScoredIdentifier> out;
    for (const Candidate& cand : frontier) {
        if (static_cast<int>(out.size()) == k) break;
        out.push_back({cand.tokens, cand.score});
    }
    return out;
}

RankedList rank_core(DistributionSource& source, const IdentifierTrie& trie, const std::string& query_id, int k,
                     int beam, IdentifierScorer scorer, Rng* shuffle_rng) {
    if (k <= 0) fail("config", "retrieval needs k >= 1");
    int want = static_cast<int>(std::min<std::size_t>(static_cast<std::size_t>(k), trie.leaf_count()));
    std::vector<ScoredIdentifier> identifiers = search_core(source, trie, want, beam, scorer);

    RankedList out;
    out.query_id = query_id;
    out.k = k;
    int n = trie.id_length();
    for (const ScoredIdentifier& sid : identifiers) {
        if (static_cast<int>(out.entries.size()) >= k) break;
        std::vector<std::size_t> bucket = trie.bucket(sid.tokens);
        if (bucket.empty()) fail("state", "constrained search emitted an identifier absent from the trie");
        if (shuffle_rng) {
            shuffle_rng->shuffle(bucket);
        } else if (bucket.size() > 1) {
            std::vector<double> w_query(static_cast<std::size_t>(n));
            std::vector<int> prefix;
            for (int t = 0; t < n; ++t) {
                w_query[static_cast<std::size_t>(t)] = source.rows(prefix).raw[sid.tokens[static_cast<std::size_t>(t)]];
                prefix.push_back(sid.tokens[static_cast<std::size_t>(t)]);
            }
            std::vector<std::pair<double, std::size_t>> scored;
            for (std::size_t idx : bucket) {
                scored.push_back({rel_id(w_query, trie.assignments()[idx].weights), idx});
            }
            std::stable_sort(scored.begin(), scored.end(),
                             [](const auto& a, const auto& b) { return a.first > b.first; });
            bucket.clear();
            for (const auto& [rel, idx] : scored) bucket.push_back(idx);
        }
        for (std::size_t idx : bucket) {
            if (static_cast<int>(out.entries.size()) >= k) break;
            out.entries.push_back({trie.assignments()[idx].doc_id, sid.score});
        }
    }
    return out;
}

}  // namespace

std::vector<ScoredIdentifier> constrained_search(const QueryDecode& decode, const IdentifierTrie& trie, int k,
                                                 int beam, IdentifierScorer scorer) {
    PrecomputedSource source(decode);
    return search_core(source, trie, k, beam, scorer);
}

double rel_id(const std::vector<double>& w_query, const std::vector<double>& w_doc) {
    if (w_query.size() != w_doc.size()) fail("numeric", "rel_id: weight vectors differ in length");
    double qq = 0.0, dd = 0.0, qd = 0.0;
    for (std::size_t i = 0; i < w_query.size(); ++i) {
        qq += w_query[i] * w_query[i];
        dd += w_doc[i] * w_doc[i];
        qd += w_query[i] * w_doc[i];
    }
    if (qq == 0.0 || dd == 0.0) {
        warn("rel_id on a zero-norm weight vector; scoring 0");
        return 0.0;
    }
    return qd / (std::sqrt(qq) * std::sqrt(dd));
}

RankedList rank_documents(const QueryDecode& decode, const IdentifierTrie& trie, const std::string& query_id,
                          int k, int beam, IdentifierScorer scorer) {
    PrecomputedSource source(decode);
    return rank_core(source, trie, query_id, k, beam, scorer, nullptr);
}

RankedList retrieve(const ModelParams& params, const Query& query, const IdentifierTrie& trie, int k, int beam,
                    const DecodeOptions& options, IdentifierScorer scorer) {
    if (trie.id_length() != params.config.id_length) {
        fail("state", "identifier trie depth does not match the model id_length");
    }
    if (options.token_input) {
        TokenModeSource source(params, query.tokens, options);
        return rank_core(source, trie, query.query_id, k, beam, scorer, nullptr);
    }
    QueryDecode decode = query_distributions(params, query.tokens, options);
    return rank_documents(decode, trie, query.query_id, k, beam, scorer);
}

RankedList random_collision_rank(const QueryDecode& decode, const IdentifierTrie& trie,
                                 const std::string& query_id, int k, int beam, IdentifierScorer scorer, Rng& rng) {
    PrecomputedSource source(decode);
    return rank_core(source, trie, query_id, k, beam, scorer, &rng);
}

std::vector<RankedList> retrieve_batch(const ModelParams& params, const std::vector<Query>& queries,
                                       const IdentifierTrie& trie, int k, int beam, const DecodeOptions& options,
                                       IdentifierScorer scorer, ExecutionPolicy policy) {
    std::vector<RankedList> out(queries.size());
    parallel_for(policy, queries.size(), [&](std::size_t i) {
        try {
            out[i] = retrieve(params, queries[i], trie, k, beam, options, scorer);
        } catch (const Error& e) {
            fail(e.category(), "query '" + queries[i].query_id + "': " + e.what());
        }
    });
    return out;
}

void write_trec_run(const std::vector<RankedList>& runs, const std::string& path, const std::string& tag) {
    std::ostringstream buf;
    for (const RankedList& run : runs) {
        int rank = 1;
        for (const RankedEntry& entry : run.entries) {
            buf << run.query_id << " Q0 " << entry.doc_id << ' ' << rank++ << ' ' << fmt_g17(entry.score) << ' '
                << tag << '\n';
        }
    }
    atomic_write_file(path, buf.str());
}

std::vector<RankedList> read_trec_run(const std::string& path) {
    std::istringstream in(read_file(path));
    std::vector<RankedList> runs;
    std::map<std::string, std::size_t> index;
    std::string line;
    long line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        if (line.empty()) continue;
        std::istringstream fields(line);
        std::string query_id, q0, doc_id, tag;
        long rank = 0;
        double score = 0.0;
        if (!(fields >> query_id >> q0 >> doc_id >> rank >> score >> tag)) {
            fail("format", "malformed run line " + std::to_string(line_no) + " in " + path);
        }
        auto [it, added] = index.try_emplace(query_id, runs.size());
        if (added) runs.push_back({query_id, {}, 0});
        RankedList& run = runs[it->second];
        run.entries.push_back({doc_id, score});
        run.k = static_cast<int>(run.entries.size());
    }
    return runs;
}

}  // namespace glen
