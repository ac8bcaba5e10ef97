// Evaluation metrics, the synthetic dataset generator, run configuration
// parsing, and the end-to-end CLI commands.
#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <map>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "glen/error.hpp"
#include "glen/eval.hpp"
#include "glen/pipeline.hpp"
#include "glen/synth.hpp"
#include "test_util.hpp"

using namespace glen;
using testutil::TempDir;
using testutil::read_text;
using testutil::write_text;

namespace {

RankedList ranked(std::string query_id, std::vector<std::string> docs) {
    RankedList out;
    out.query_id = std::move(query_id);
    double score = 1.0;
    for (std::string& d : docs) {
        out.entries.push_back({std::move(d), score});
        score -= 0.125;
    }
    return out;
}

const MetricRow* find_row(const MetricReport& report, const std::string& metric, int cutoff,
                          const std::string& subset) {
    for (const MetricRow& row : report.rows) {
        if (row.metric == metric && row.cutoff == cutoff && row.subset == subset) return &row;
    }
    return nullptr;
}

int count_lines(const std::string& text) {
    int n = 0;
    for (char c : text) {
        if (c == '\n') ++n;
    }
    return n;
}

}  // namespace

TEST_CASE("recall counts top-k hits against the relevant set") {
    RankedList run = ranked("q", {"a", "b", "c"});
    std::set<std::string> relevant = {"a", "c"};
    CHECK(recall_at_k(run, relevant, 1) == 0.5);
    CHECK(recall_at_k(run, relevant, 2) == 0.5);
    CHECK(recall_at_k(run, relevant, 3) == 1.0);
    CHECK(recall_at_k(run, relevant, 100) == 1.0);
    CHECK(recall_at_k(ranked("q", {}), relevant, 5) == 0.0);
    CHECK_THROWS_AS(recall_at_k(run, {}, 1), Error);
    CHECK_THROWS_AS(recall_at_k(run, relevant, 0), Error);
}

TEST_CASE("mrr is the reciprocal rank of the first relevant hit") {
    std::set<std::string> relevant = {"b"};
    RankedList run = ranked("q", {"a", "b", "c"});
    CHECK(mrr_at_k(run, relevant, 1) == 0.0);
    CHECK(mrr_at_k(run, relevant, 2) == 0.5);
    CHECK(mrr_at_k(run, relevant, 3) == 0.5);
    CHECK(mrr_at_k(ranked("q", {"b"}), relevant, 1) == 1.0);
    CHECK(mrr_at_k(ranked("q", {"x", "y", "z", "b"}), relevant, 4) == 0.25);
    CHECK(mrr_at_k(ranked("q", {"x", "y"}), relevant, 2) == 0.0);
}

TEST_CASE("ndcg discounts by rank and normalizes by the ideal ordering") {
    // Single relevant doc at rank 2: 1/log2(3).
    std::map<std::string, int> single = {{"b", 1}};
    double rank2 = 1.0 / std::log2(3.0);
    CHECK(ndcg_at_k(ranked("q", {"a", "b"}), single, 2) == doctest::Approx(rank2).epsilon(1e-9));
    CHECK(ndcg_at_k(ranked("q", {"a", "b"}), single, 2) == doctest::Approx(0.6309).epsilon(2e-4));
    // Ideal ordering scores exactly 1.
    CHECK(ndcg_at_k(ranked("q", {"b", "a"}), single, 2) == doctest::Approx(1.0).epsilon(1e-12));

    // Graded case with the high grade misplaced.
    std::map<std::string, int> graded = {{"hi", 3}, {"lo", 1}};
    double dcg = 1.0 / std::log2(2.0) + 7.0 / std::log2(3.0);
    double idcg = 7.0 / std::log2(2.0) + 1.0 / std::log2(3.0);
    CHECK(ndcg_at_k(ranked("q", {"lo", "hi"}), graded, 2) == doctest::Approx(dcg / idcg).epsilon(1e-9));
    CHECK(ndcg_at_k(ranked("q", {"hi", "lo"}), graded, 2) == doctest::Approx(1.0).epsilon(1e-12));
    // Cutoff 1 sees only the misplaced low grade.
    CHECK(ndcg_at_k(ranked("q", {"lo", "hi"}), graded, 1) == doctest::Approx((1.0 / 1.0) / 7.0).epsilon(1e-9));

    std::map<std::string, int> zeroes = {{"a", 0}};
    CHECK_THROWS_AS(ndcg_at_k(ranked("q", {"a"}), zeroes, 1), Error);
}

TEST_CASE("seen/unseen split keys on judged-document overlap with training") {
    QrelSet train;
    train.add("tr1", "dA", 1);
    train.add("tr2", "dB", 0);  // grade 0 still marks the doc as judged
    QrelSet test;
    test.add("t1", "dA", 1);
    test.add("t2", "dC", 1);
    test.add("t3", "dB", 1);
    test.add("t4", "dD", 1);
    auto [seen, unseen] = split_seen_unseen(train, test);
    CHECK(seen == std::set<std::string>{"t1", "t3"});
    CHECK(unseen == std::set<std::string>{"t2", "t4"});
}

TEST_CASE("collision subset names queries whose positives share an identifier") {
    IdentifierTrie trie = IdentifierTrie::build({
        IdAssignment{"d1", {0, 1}, {1, 1}},
        IdAssignment{"d2", {0, 1}, {1, 1}},
        IdAssignment{"d3", {2, 3}, {1, 1}},
    });
    QrelSet qrels;
    qrels.add("q_hit", "d1", 1);
    qrels.add("q_single", "d3", 1);
    qrels.add("q_zero", "d2", 0);     // not a positive judgment
    qrels.add("q_ghost", "dX", 1);    // doc absent from the trie
    std::set<std::string> subset = collision_subset(qrels, trie);
    CHECK(subset == std::set<std::string>{"q_hit"});
}

TEST_CASE("run evaluation macro-averages and accounts for every query") {
    QrelSet qrels;
    qrels.add("q1", "a", 1);
    qrels.add("q1", "c", 1);
    qrels.add("q2", "b", 1);
    qrels.add("q3", "x", 0);  // no positive judgment: skipped
    qrels.add("q4", "d", 1);  // judged but missing from the runs: scores zero
    std::vector<RankedList> runs = {
        ranked("q1", {"a", "b", "c"}),
        ranked("q2", {"c", "a"}),
        ranked("q9", {"z"}),  // run without judgments: skipped
    };
    MetricReport report = evaluate_runs(runs, qrels, {1, 3});
    CHECK(report.evaluated_queries == 3);
    CHECK(report.skipped_queries == 2);
    // 3 metrics x 2 cutoffs x 1 subset.
    CHECK(report.rows.size() == 6);

    const MetricRow* r1 = find_row(report, "recall", 1, "all");
    REQUIRE(r1 != nullptr);
    CHECK(r1->value == doctest::Approx((0.5 + 0.0 + 0.0) / 3.0).epsilon(1e-12));
    CHECK(r1->query_count == 3);
    const MetricRow* r3 = find_row(report, "recall", 3, "all");
    CHECK(r3->value == doctest::Approx(1.0 / 3.0).epsilon(1e-12));
    const MetricRow* m3 = find_row(report, "mrr", 3, "all");
    CHECK(m3->value == doctest::Approx(1.0 / 3.0).epsilon(1e-12));
    const MetricRow* n3 = find_row(report, "ndcg", 3, "all");
    double q1_ndcg = (1.0 + 1.0 / std::log2(4.0)) / (1.0 + 1.0 / std::log2(3.0));
    CHECK(n3->value == doctest::Approx(q1_ndcg / 3.0).epsilon(1e-9));

    // Subsets restrict the average; "all" stays present.
    MetricReport split = evaluate_runs(runs, qrels, {3}, {{"pair", {"q2"}}, {"rest", {"q1", "q4"}}});
    CHECK(split.rows.size() == 9);
    const MetricRow* pair_recall = find_row(split, "recall", 3, "pair");
    REQUIRE(pair_recall != nullptr);
    CHECK(pair_recall->value == 0.0);
    CHECK(pair_recall->query_count == 1);
    const MetricRow* rest_recall = find_row(split, "recall", 3, "rest");
    CHECK(rest_recall->value == doctest::Approx(0.5).epsilon(1e-12));
    CHECK(rest_recall->query_count == 2);

    CHECK_THROWS_AS(evaluate_runs(runs, qrels, {1}, {{"all", {"q1"}}}), Error);
    CHECK_THROWS_AS(evaluate_runs(runs, qrels, {}), Error);

    // Duplicate cutoffs collapse; order on disk is ascending.
    MetricReport dup = evaluate_runs(runs, qrels, {3, 1, 3});
    CHECK(dup.rows.size() == 6);
    CHECK(dup.rows[0].cutoff == 1);
}

TEST_CASE("metric report writes CSV and a readable table") {
    TempDir dir;
    MetricReport report;
    report.rows = {{"recall", 10, "all", 0.5, 4}, {"mrr", 10, "seen", 0.25, 2}};
    report.evaluated_queries = 4;
    report.skipped_queries = 1;
    std::string path = dir.file("metrics.csv");
    write_metric_report(report, path);
    std::string text = read_text(path);
    CHECK(text.rfind("metric,cutoff,subset,value,query_count\n", 0) == 0);
    CHECK(text.find("recall,10,all,0.5,4\n") != std::string::npos);
    CHECK(text.find("mrr,10,seen,0.25,2\n") != std::string::npos);

    std::string table = format_metric_table(report);
    CHECK(table.find("recall") != std::string::npos);
    CHECK(table.find("0.500000") != std::string::npos);
    CHECK(table.find("evaluated queries: 4, skipped (no positive judgments): 1") != std::string::npos);
}

TEST_CASE("synthetic corpus plants unique signatures with filler noise") {
    SynthSpec spec;
    spec.doc_count = 12;
    spec.seed = 21;
    SynthDataset data = make_synth_dataset(spec);
    REQUIRE(data.docs.size() == 12);
    CHECK(data.docs[0].doc_id == "d000");
    CHECK(data.docs[11].doc_id == "d011");
    REQUIRE(data.train_queries.size() == 12);
    REQUIRE(data.test_queries.size() == 12);
    CHECK(data.train_queries[3].first == "qtr003");
    CHECK(data.test_queries[3].first == "qte003");
    REQUIRE(data.train_qrels.size() == 12);
    CHECK(data.train_qrels[5].query_id == "qtr005");
    CHECK(data.train_qrels[5].doc_id == "d005");
    CHECK(data.train_qrels[5].grade == 1);

    // Each signature word occurs signature_repeats times in its own document
    // and nowhere else; queries carry their document's signatures.
    for (int d = 0; d < 12; ++d) {
        std::istringstream words(data.docs[static_cast<std::size_t>(d)].text);
        std::map<std::string, int> counts;
        std::string w;
        int total = 0;
        while (words >> w) {
            ++counts[w];
            ++total;
        }
        CHECK(total == spec.signature_size * spec.signature_repeats + spec.fillers_per_doc);
        char tag[16];
        std::snprintf(tag, sizeof(tag), "sig%03d", d);
        for (char suffix : {'a', 'b', 'c'}) {
            CHECK(counts[std::string(tag) + suffix] == spec.signature_repeats);
        }
        for (const auto& [word, n] : counts) {
            if (word.rfind("sig", 0) == 0) {
                CHECK(word.substr(0, 6) == tag);
            } else {
                CHECK(word.rfind("common", 0) == 0);
            }
        }
        const std::string& query = data.test_queries[static_cast<std::size_t>(d)].second;
        CHECK(query.rfind("find ", 0) == 0);
        CHECK(query.find(std::string(tag) + "a") != std::string::npos);
    }

    // Same spec, same bytes; different seed, different fillers somewhere.
    SynthDataset again = make_synth_dataset(spec);
    CHECK(again.docs.size() == data.docs.size());
    bool identical = true;
    for (std::size_t i = 0; i < data.docs.size(); ++i) {
        if (again.docs[i].text != data.docs[i].text) identical = false;
    }
    CHECK(identical);
    SynthSpec other = spec;
    other.seed = 22;
    SynthDataset moved = make_synth_dataset(other);
    bool differs = false;
    for (std::size_t i = 0; i < data.docs.size(); ++i) {
        if (moved.docs[i].text != data.docs[i].text) differs = true;
    }
    CHECK(differs);
}

TEST_CASE("synthetic unseen fraction holds out trailing documents") {
    SynthSpec spec;
    spec.doc_count = 10;
    spec.unseen_fraction = 0.3;
    SynthDataset data = make_synth_dataset(spec);
    CHECK(data.train_queries.size() == 7);
    CHECK(data.test_queries.size() == 10);
    for (const auto& [qid, text] : data.train_queries) CHECK(qid != "qtr007");
    CHECK(data.train_qrels.back().doc_id == "d006");

    SynthSpec bad = spec;
    bad.unseen_fraction = 1.0;
    CHECK_THROWS_AS(make_synth_dataset(bad), Error);
    bad = spec;
    bad.doc_count = 0;
    CHECK_THROWS_AS(make_synth_dataset(bad), Error);
}

TEST_CASE("synthetic dataset files are byte-stable across writes") {
    TempDir dir;
    SynthSpec spec;
    spec.doc_count = 6;
    SynthDataset data = make_synth_dataset(spec);
    write_synth_dataset(data, dir.path.string());
    std::string corpus1 = read_text(dir.file("corpus.jsonl"));
    std::string queries1 = read_text(dir.file("queries_train.tsv"));
    std::string qrels1 = read_text(dir.file("qrels_test.tsv"));
    CHECK(count_lines(corpus1) == 6);
    CHECK(count_lines(queries1) == 6);
    CHECK(count_lines(qrels1) == 6);
    CHECK(corpus1.find("\"doc_id\":\"d000\"") != std::string::npos);
    CHECK(qrels1.find("qte002\td002\t1\n") != std::string::npos);

    write_synth_dataset(make_synth_dataset(spec), dir.path.string());
    CHECK(read_text(dir.file("corpus.jsonl")) == corpus1);
    CHECK(read_text(dir.file("queries_train.tsv")) == queries1);
    CHECK(read_text(dir.file("queries_test.tsv")).size() > 0);
    CHECK(read_text(dir.file("qrels_train.tsv")).size() > 0);
    CHECK(read_text(dir.file("qrels_test.tsv")) == qrels1);
}

TEST_CASE("config lines parse key=value with comments and validation") {
    RunConfig cfg;
    CHECK(cfg.embed_dim == 32);
    CHECK(cfg.beam == 100);
    CHECK(cfg.cutoffs == std::vector<int>{1, 10, 100});
    CHECK(cfg.training.lambda_point == 0.5);
    CHECK(cfg.training.negatives_per_example == 8);

    apply_config_line(cfg, "embed_dim = 16", "test");
    CHECK(cfg.embed_dim == 16);
    apply_config_line(cfg, "  # just a comment", "test");
    apply_config_line(cfg, "", "test");
    apply_config_line(cfg, "lr_refine=0.125  # trailing comment", "test");
    CHECK(cfg.training.lr_refine == 0.125);
    apply_config_line(cfg, "no_annealing=true", "test");
    CHECK(cfg.training.flags.no_annealing);
    apply_config_line(cfg, "no_annealing=0", "test");
    CHECK_FALSE(cfg.training.flags.no_annealing);
    apply_config_line(cfg, "cutoffs=1, 5,20", "test");
    CHECK(cfg.cutoffs == std::vector<int>{1, 5, 20});
    apply_config_line(cfg, "seed=123", "test");
    CHECK(cfg.seed == 123);
    apply_config_line(cfg, "optimizer=adam", "test");
    CHECK(cfg.training.optimizer == "adam");
    apply_config_line(cfg, "scorer=ratio", "test");
    CHECK(cfg.scorer == "ratio");
    apply_config_line(cfg, "corpus=/tmp/c.jsonl", "test");
    CHECK(cfg.corpus == "/tmp/c.jsonl");

    try {
        apply_config_line(cfg, "no_such_key=5", "somewhere line 3");
        FAIL("expected an unknown-key error");
    } catch (const Error& e) {
        CHECK(std::string(e.what()).find("no_such_key") != std::string::npos);
        CHECK(std::string(e.what()).find("somewhere line 3") != std::string::npos);
    }
    CHECK_THROWS_AS(apply_config_line(cfg, "embed_dim=abc", "test"), Error);
    CHECK_THROWS_AS(apply_config_line(cfg, "embed_dim", "test"), Error);
    CHECK_THROWS_AS(apply_config_line(cfg, "no_annealing=maybe", "test"), Error);
    CHECK_THROWS_AS(apply_config_line(cfg, "cutoffs=", "test"), Error);
    CHECK_THROWS_AS(apply_config_line(cfg, "seed=-4", "test"), Error);
}

TEST_CASE("config file, overrides, and the seed flag apply in that order") {
    TempDir dir;
    write_text(dir.file("run.cfg"),
               "# run settings\n"
               "embed_dim=12\n"
               "seed=5\n"
               "top_k = 7\n");
    RunConfig cfg = load_run_config(dir.file("run.cfg"), {"embed_dim=16", "beam=20"}, "99");
    CHECK(cfg.embed_dim == 16);  // --set beats the file
    CHECK(cfg.top_k == 7);       // file value survives
    CHECK(cfg.beam == 20);
    CHECK(cfg.seed == 99);       // --seed beats everything

    RunConfig no_seed = load_run_config(dir.file("run.cfg"), {"seed=50"}, "");
    CHECK(no_seed.seed == 50);
    RunConfig file_only = load_run_config(dir.file("run.cfg"), {}, "");
    CHECK(file_only.seed == 5);
    RunConfig bare = load_run_config("", {}, "");
    CHECK(bare.embed_dim == 32);

    CHECK_THROWS_AS(load_run_config(dir.file("missing.cfg"), {}, ""), Error);
    CHECK_THROWS_AS(load_run_config(dir.file("run.cfg"), {}, "abc"), Error);
    write_text(dir.file("broken.cfg"), "embed_dim=12\nwhat is this\n");
    try {
        load_run_config(dir.file("broken.cfg"), {}, "");
        FAIL("expected a parse error");
    } catch (const Error& e) {
        CHECK(std::string(e.what()).find("line 2") != std::string::npos);
    }
}

namespace {

// A complete miniature workspace: synthetic corpus on disk plus a RunConfig
// whose artifact paths all live inside the temp dir.
struct MiniRun {
    TempDir dir;
    RunConfig cfg;

    MiniRun() {
        SynthSpec spec;
        spec.doc_count = 10;
        spec.fillers_per_doc = 4;
        spec.seed = 33;
        write_synth_dataset(make_synth_dataset(spec), dir.path.string());

        cfg.corpus = dir.file("corpus.jsonl");
        cfg.queries = dir.file("queries_train.tsv");
        cfg.qrels = dir.file("qrels_train.tsv");
        cfg.keyword_table = dir.file("keyword_ids.tsv");
        cfg.term_stats = dir.file("term_stats.tsv");
        cfg.checkpoint_out = dir.file("model.ckpt");
        cfg.id_table = dir.file("id_table.tsv");
        cfg.run_output = dir.file("run.trec");
        cfg.report = dir.file("metrics.csv");
        cfg.keyword_trace = dir.file("trace_keyword.csv");
        cfg.refine_trace = dir.file("trace_refine.csv");
        cfg.embed_dim = 8;
        cfg.id_length = 2;
        cfg.enc_layers = 1;
        cfg.dec_layers = 1;
        cfg.top_k = 3;
        cfg.cutoffs = {1, 3};
        cfg.training.batch_size = 4;
        cfg.training.keyword_epochs = 1;
        cfg.training.keyword_step_cap = 2;
        cfg.training.refine_epochs = 1;
        cfg.training.refine_step_cap = 2;
        cfg.training.negatives_per_example = 3;
    }
};

}  // namespace

TEST_CASE("build-index writes sorted keyword identifiers from the signatures") {
    MiniRun run;
    cmd_build_index(run.cfg);

    std::string table = read_text(run.cfg.keyword_table);
    REQUIRE(count_lines(table) == 10);
    std::istringstream lines(table);
    std::string line;
    int d = 0;
    while (std::getline(lines, line)) {
        char want[16];
        std::snprintf(want, sizeof(want), "d%03d\t", d);
        CHECK(line.rfind(want, 0) == 0);
        // Both keywords come from this document's unique signature words.
        char sig[16];
        std::snprintf(sig, sizeof(sig), "sig%03d", d);
        std::istringstream tokens(line.substr(5));
        std::string token;
        int count = 0;
        while (std::getline(tokens, token, ',')) {
            CHECK(token.substr(0, 6) == sig);
            ++count;
        }
        CHECK(count == 2);
        ++d;
    }

    std::string stats = read_text(run.cfg.term_stats);
    CHECK(stats.rfind("doc_count\t10\n", 0) == 0);
    CHECK(stats.find("avg_doc_len\t") != std::string::npos);

    // Rebuilding produces identical bytes.
    cmd_build_index(run.cfg);
    CHECK(read_text(run.cfg.keyword_table) == table);
    CHECK(read_text(run.cfg.term_stats) == stats);

    RunConfig missing = run.cfg;
    missing.corpus = run.dir.file("nope.jsonl");
    CHECK_THROWS_AS(cmd_build_index(missing), Error);
    missing.corpus.clear();
    CHECK_THROWS_AS(cmd_build_index(missing), Error);
}

TEST_CASE("training, assignment, retrieval, and evaluation chain together") {
    MiniRun run;
    cmd_build_index(run.cfg);

    cmd_train(run.cfg, "keyword");
    std::string ktrace = read_text(run.cfg.keyword_trace);
    CHECK(ktrace.rfind("step,L_key\n", 0) == 0);
    CHECK(count_lines(ktrace) == 3);  // header + step cap of 2

    // Refine from the keyword checkpoint.
    RunConfig refine = run.cfg;
    refine.checkpoint_in = run.cfg.checkpoint_out;
    refine.checkpoint_out = run.dir.file("model_refined.ckpt");
    cmd_train(refine, "refine");
    std::string rtrace = read_text(run.cfg.refine_trace);
    CHECK(rtrace.rfind("step,epoch,tau,L_pair,L_point,L_total\n", 0) == 0);
    CHECK(count_lines(rtrace) == 3);

    RunConfig assign = run.cfg;
    assign.checkpoint_in = refine.checkpoint_out;
    cmd_assign(assign);
    std::string table = read_text(run.cfg.id_table);
    CHECK(count_lines(table) == 10);
    CHECK(table.rfind("d000\t", 0) == 0);

    RunConfig retrieve_cfg = assign;
    retrieve_cfg.queries = run.dir.file("queries_test.tsv");
    cmd_retrieve(retrieve_cfg);
    std::string trec = read_text(run.cfg.run_output);
    std::istringstream lines(trec);
    std::string line;
    std::map<std::string, int> per_query;
    while (std::getline(lines, line)) {
        std::istringstream fields(line);
        std::string qid, q0, doc, rank, score, tag;
        REQUIRE((fields >> qid >> q0 >> doc >> rank >> score >> tag));
        CHECK(q0 == "Q0");
        CHECK(tag == "glen");
        ++per_query[qid];
    }
    CHECK(per_query.size() == 10);
    for (const auto& [qid, n] : per_query) {
        CHECK(n >= 1);
        CHECK(n <= 3);
    }

    // Retrieval is deterministic at the file level.
    cmd_retrieve(retrieve_cfg);
    CHECK(read_text(run.cfg.run_output) == trec);

    RunConfig eval_cfg = retrieve_cfg;
    eval_cfg.qrels = run.dir.file("qrels_test.tsv");
    eval_cfg.train_qrels = run.dir.file("qrels_train.tsv");
    cmd_evaluate(eval_cfg);
    std::string report = read_text(run.cfg.report);
    CHECK(report.rfind("metric,cutoff,subset,value,query_count\n", 0) == 0);
    // 3 metrics x 2 cutoffs x (all, seen, unseen, collision).
    CHECK(count_lines(report) == 1 + 3 * 2 * 4);
    CHECK(report.find("recall,1,all,") != std::string::npos);
    CHECK(report.find(",seen,") != std::string::npos);
    CHECK(report.find(",collision,") != std::string::npos);
}

TEST_CASE("training command validates phases and checkpoint compatibility") {
    MiniRun run;
    cmd_build_index(run.cfg);
    CHECK_THROWS_AS(cmd_train(run.cfg, "bogus"), Error);

    RunConfig no_kw = run.cfg;
    no_kw.training.flags.no_keyword_phase = true;
    CHECK_THROWS_AS(cmd_train(no_kw, "keyword"), Error);

    // refine without a checkpoint and without the skip flag is refused.
    RunConfig refine = run.cfg;
    CHECK_THROWS_AS(cmd_train(refine, "refine"), Error);

    // With the skip flag refine starts from fresh parameters.
    no_kw.training.refine_step_cap = 1;
    no_kw.checkpoint_out = run.dir.file("scratch.ckpt");
    cmd_train(no_kw, "refine");
    CHECK(read_text(no_kw.checkpoint_out).substr(0, 8) == "GLENCKP1");

    // A checkpoint built against a different vocabulary is rejected.
    cmd_train(run.cfg, "keyword");
    RunConfig mismatched = run.cfg;
    mismatched.checkpoint_in = run.cfg.checkpoint_out;
    mismatched.min_df = 2;  // shrinks the vocabulary
    try {
        cmd_train(mismatched, "refine");
        FAIL("expected a vocabulary mismatch error");
    } catch (const Error& e) {
        CHECK(std::string(e.what()).find("vocab") != std::string::npos);
    }

    RunConfig wrong_depth = run.cfg;
    wrong_depth.checkpoint_in = run.cfg.checkpoint_out;
    wrong_depth.id_length = 3;
    CHECK_THROWS_AS(cmd_train(wrong_depth, "refine"), Error);

    // assign/retrieve insist on their inputs.
    RunConfig no_ckpt = run.cfg;
    CHECK_THROWS_AS(cmd_assign(no_ckpt), Error);
    CHECK_THROWS_AS(cmd_retrieve(no_ckpt), Error);
    RunConfig no_queries = run.cfg;
    no_queries.checkpoint_in = run.cfg.checkpoint_out;
    no_queries.queries.clear();
    CHECK_THROWS_AS(cmd_retrieve(no_queries), Error);
}
