// Times the batch kernels under the serial reference policy and the OpenMP
// policy, and verifies that both produce bit-identical results. `--smoke`
// shrinks the workload so the comparison can run inside the test suite.
#include <chrono>
#include <cstdio>
#include <functional>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "glen/corpus.hpp"
#include "glen/id_index.hpp"
#include "glen/inference.hpp"
#include "glen/keyword.hpp"
#include "glen/model.hpp"
#include "glen/objectives.hpp"
#include "glen/parallel.hpp"
#include "glen/synth.hpp"

using namespace glen;

namespace {

struct Workload {
    Corpus corpus;
    Vocabulary vocab;
    TermStats stats;
    std::vector<Query> queries;
    QrelSet qrels;
    std::vector<KeywordIdentifier> keyword_ids;
    ModelParams params;
    IdentifierTrie trie;
    TrainingConfig training;
};

Workload build_workload(int docs, int embed_dim) {
    SynthSpec spec;
    spec.doc_count = docs;
    spec.seed = 404;
    SynthDataset data = make_synth_dataset(spec);

    Workload w;
    std::vector<std::vector<std::string>> words;
    for (const RawDocument& doc : data.docs) words.push_back(split_words(doc.text));
    w.vocab = Vocabulary::build(words, 1, 1 << 16);
    w.corpus = make_corpus(data.docs, w.vocab, 64);
    w.stats = compute_stats(w.corpus, w.vocab, Bm25Params{});
    for (const auto& [qid, text] : data.train_queries) {
        Query q;
        q.query_id = qid;
        q.raw = text;
        q.tokens = w.vocab.tokenize(text);
        w.queries.push_back(q);
    }
    for (const SynthQrel& row : data.train_qrels) w.qrels.add(row.query_id, row.doc_id, row.grade);
    w.keyword_ids = extract_all_keyword_ids(w.stats, w.vocab, w.corpus, 3, {}, ExecutionPolicy::serial);

    ModelConfig mc;
    mc.embed_dim = embed_dim;
    mc.vocab_size = w.vocab.size();
    mc.id_length = 3;
    mc.enc_layers = 1;
    mc.dec_layers = 1;
    mc.seed = 11;
    w.params = init_params(mc);
    w.trie = refresh_assignments(w.params, w.corpus, ExecutionPolicy::serial);

    w.training.batch_size = 8;
    w.training.keyword_epochs = 1;
    w.training.keyword_step_cap = 4;
    w.training.refine_epochs = 1;
    w.training.refine_step_cap = 2;
    w.training.negatives_per_example = 4;
    return w;
}

double run_ms(const std::function<void()>& fn) {
    auto start = std::chrono::steady_clock::now();
    fn();
    auto end = std::chrono::steady_clock::now();
    return std::chrono::duration<double, std::milli>(end - start).count();
}

bool same_ids(const std::vector<KeywordIdentifier>& a, const std::vector<KeywordIdentifier>& b) {
    if (a.size() != b.size()) return false;
    for (std::size_t i = 0; i < a.size(); ++i) {
        if (a[i].tokens != b[i].tokens || a[i].scores != b[i].scores) return false;
    }
    return true;
}

bool same_assignments(const std::vector<IdAssignment>& a, const std::vector<IdAssignment>& b) {
    if (a.size() != b.size()) return false;
    for (std::size_t i = 0; i < a.size(); ++i) {
        if (a[i].doc_id != b[i].doc_id || a[i].identifier != b[i].identifier || a[i].weights != b[i].weights) {
            return false;
        }
    }
    return true;
}

bool same_runs(const std::vector<RankedList>& a, const std::vector<RankedList>& b) {
    if (a.size() != b.size()) return false;
    for (std::size_t i = 0; i < a.size(); ++i) {
        if (a[i].query_id != b[i].query_id || a[i].entries.size() != b[i].entries.size()) return false;
        for (std::size_t j = 0; j < a[i].entries.size(); ++j) {
            if (a[i].entries[j].doc_id != b[i].entries[j].doc_id ||
                a[i].entries[j].score != b[i].entries[j].score) {
                return false;
            }
        }
    }
    return true;
}

bool same_params(const ModelParams& a, const ModelParams& b) {
    bool same = true;
    std::vector<const Tensor*> ta, tb;
    for_each_param(const_cast<ModelParams&>(a), [&](const std::string&, Tensor& t) { ta.push_back(&t); });
    for_each_param(const_cast<ModelParams&>(b), [&](const std::string&, Tensor& t) { tb.push_back(&t); });
    for (std::size_t i = 0; i < ta.size(); ++i) {
        if (ta[i]->v != tb[i]->v) same = false;
    }
    return same;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"glen-bench: serial reference vs OpenMP kernels"};
    bool smoke = false;
    int docs = 400;
    int embed_dim = 16;
    app.add_flag("--smoke", smoke, "tiny workload, equality verdict only");
    app.add_option("--docs", docs, "synthetic corpus size");
    app.add_option("--embed-dim", embed_dim, "model width");
    CLI11_PARSE(app, argc, argv);

    if (smoke) {
        docs = 40;
        embed_dim = 8;
    }

    std::printf("workers: %d (serial reference always single-threaded)\n", worker_count());
    std::printf("workload: %d docs, embed_dim %d\n\n", docs, embed_dim);
    Workload w = build_workload(docs, embed_dim);

    bool all_equal = true;
    std::printf("%-22s %12s %12s %9s  %s\n", "kernel", "serial ms", "openmp ms", "speedup", "bitwise");
    auto report = [&](const char* name, double serial_ms, double parallel_ms, bool equal) {
        std::printf("%-22s %12.1f %12.1f %8.2fx  %s\n", name, serial_ms, parallel_ms,
                    parallel_ms > 0.0 ? serial_ms / parallel_ms : 0.0, equal ? "equal" : "DIFFER");
        if (!equal) all_equal = false;
    };

    {
        std::vector<KeywordIdentifier> s, p;
        double ts = run_ms([&] { s = extract_all_keyword_ids(w.stats, w.vocab, w.corpus, 3, {}, ExecutionPolicy::serial); });
        double tp = run_ms([&] { p = extract_all_keyword_ids(w.stats, w.vocab, w.corpus, 3, {}, ExecutionPolicy::parallel); });
        report("keyword extraction", ts, tp, same_ids(s, p));
    }
    {
        std::vector<IdAssignment> s, p;
        double ts = run_ms([&] { s = assign_ids(w.params, w.corpus, ExecutionPolicy::serial); });
        double tp = run_ms([&] { p = assign_ids(w.params, w.corpus, ExecutionPolicy::parallel); });
        report("identifier assignment", ts, tp, same_assignments(s, p));
    }
    {
        std::vector<RankedList> s, p;
        double ts = run_ms([&] {
            s = retrieve_batch(w.params, w.queries, w.trie, 10, 100, {}, IdentifierScorer::log_softmax,
                               ExecutionPolicy::serial);
        });
        double tp = run_ms([&] {
            p = retrieve_batch(w.params, w.queries, w.trie, 10, 100, {}, IdentifierScorer::log_softmax,
                               ExecutionPolicy::parallel);
        });
        report("batch retrieval", ts, tp, same_runs(s, p));
    }
    {
        TrainingData data;
        data.corpus = &w.corpus;
        data.keyword_ids = &w.keyword_ids;
        TrainResult s, p;
        double ts = run_ms([&] { s = train_keyword_phase(w.params, data, w.training, ExecutionPolicy::serial); });
        double tp = run_ms([&] { p = train_keyword_phase(w.params, data, w.training, ExecutionPolicy::parallel); });
        report("keyword train steps", ts, tp, same_params(s.params, p.params));
    }
    {
        TrainingData data;
        data.corpus = &w.corpus;
        data.queries = &w.queries;
        data.qrels = &w.qrels;
        TrainResult s, p;
        double ts = run_ms([&] { s = train_refine_phase(w.params, data, w.training, ExecutionPolicy::serial); });
        double tp = run_ms([&] { p = train_refine_phase(w.params, data, w.training, ExecutionPolicy::parallel); });
        report("refine train steps", ts, tp, same_params(s.params, p.params));
    }

    std::printf("\n%s\n", all_equal ? "all kernels bitwise-equal across policies"
                                    : "POLICY MISMATCH: parallel kernels diverged from the serial reference");
    return all_equal ? 0 : 1;
}
