#include "glen/synth.hpp"

#include <cstdio>
#include <sstream>

#include <nlohmann/json.hpp>

#include "glen/error.hpp"
#include "glen/io_util.hpp"
#include "glen/rng.hpp"

namespace glen {

namespace {

constexpr std::uint64_t kStreamDocs = 0x53594e44;     // doc shuffling
constexpr std::uint64_t kStreamQueries = 0x53594e51;  // query composition

std::string zero_pad(int value, int width) {
    char buf[32];
    std::snprintf(buf, sizeof(buf), "%0*d", width, value);
    return buf;
}

std::string join(const std::vector<std::string>& words) {
    std::string out;
    for (std::size_t i = 0; i < words.size(); ++i) {
        if (i) out += ' ';
        out += words[i];
    }
    return out;
}

}  // namespace

SynthDataset make_synth_dataset(const SynthSpec& spec) {
    if (spec.doc_count < 1 || spec.signature_size < 1 || spec.signature_repeats < 1 || spec.filler_vocab < 1) {
        fail("config", "synthetic dataset sizes must be positive");
    }
    if (spec.unseen_fraction < 0.0 || spec.unseen_fraction >= 1.0) {
        fail("config", "unseen_fraction must lie in [0, 1)");
    }

    std::vector<std::string> fillers;
    for (int i = 0; i < spec.filler_vocab; ++i) fillers.push_back("common" + zero_pad(i, 2));

    SynthDataset data;
    Rng doc_rng(mix_seed({spec.seed, kStreamDocs}));
    Rng query_rng(mix_seed({spec.seed, kStreamQueries}));

    std::vector<std::vector<std::string>> signatures(static_cast<std::size_t>(spec.doc_count));
    for (int d = 0; d < spec.doc_count; ++d) {
        auto& sig = signatures[static_cast<std::size_t>(d)];
        for (int j = 0; j < spec.signature_size; ++j) {
            sig.push_back("sig" + zero_pad(d, 3) + static_cast<char>('a' + j % 26));
        }
        std::vector<std::string> bag;
        for (const std::string& word : sig) {
            for (int r = 0; r < spec.signature_repeats; ++r) bag.push_back(word);
        }
        for (int f = 0; f < spec.fillers_per_doc; ++f) {
            bag.push_back(fillers[doc_rng.below(fillers.size())]);
        }
        doc_rng.shuffle(bag);
        data.docs.push_back({"d" + zero_pad(d, 3), join(bag)});
    }

    int unseen_from = spec.doc_count - static_cast<int>(spec.unseen_fraction * spec.doc_count);
    auto compose_query = [&](int d) {
        std::vector<std::string> words = signatures[static_cast<std::size_t>(d)];
        query_rng.shuffle(words);
        for (int f = 0; f < spec.query_fillers; ++f) {
            words.push_back(fillers[query_rng.below(fillers.size())]);
        }
        if (spec.distractor_rate > 0.0 && query_rng.uniform01() < spec.distractor_rate) {
            std::size_t other = query_rng.below(static_cast<std::size_t>(spec.doc_count));
            const auto& foreign = signatures[other];
            words.push_back(foreign[query_rng.below(foreign.size())]);
        }
        return "find " + join(words);
    };

    for (int d = 0; d < spec.doc_count; ++d) {
        std::string doc_id = data.docs[static_cast<std::size_t>(d)].doc_id;
        if (d < unseen_from) {
            std::string qid = "qtr" + zero_pad(d, 3);
            data.train_queries.push_back({qid, compose_query(d)});
            data.train_qrels.push_back({qid, doc_id, 1});
        }
        std::string qid = "qte" + zero_pad(d, 3);
        data.test_queries.push_back({qid, compose_query(d)});
        data.test_qrels.push_back({qid, doc_id, 1});
    }
    return data;
}

void write_synth_dataset(const SynthDataset& data, const std::string& dir) {
    std::ostringstream corpus;
    for (const RawDocument& doc : data.docs) {
        nlohmann::json line{{"doc_id", doc.doc_id}, {"text", doc.text}};
        corpus << line.dump() << '\n';
    }
    atomic_write_file(dir + "/corpus.jsonl", corpus.str());

    auto write_queries = [&](const std::vector<std::pair<std::string, std::string>>& queries,
                             const std::string& name) {
        std::ostringstream out;
        for (const auto& [qid, text] : queries) out << qid << '\t' << text << '\n';
        atomic_write_file(dir + "/" + name, out.str());
    };
    write_queries(data.train_queries, "queries_train.tsv");
    write_queries(data.test_queries, "queries_test.tsv");

    auto write_qrels = [&](const std::vector<SynthQrel>& qrels, const std::string& name) {
        std::ostringstream out;
        for (const SynthQrel& row : qrels) out << row.query_id << '\t' << row.doc_id << '\t' << row.grade << '\n';
        atomic_write_file(dir + "/" + name, out.str());
    };
    write_qrels(data.train_qrels, "qrels_train.tsv");
    write_qrels(data.test_qrels, "qrels_test.tsv");
}

}  // namespace glen
