#include <cstdio>
#include <exception>
#include <string>

#include <CLI11.hpp>

#include "glen/error.hpp"
#include "glen/synth.hpp"

int main(int argc, char** argv) {
    CLI::App app{"seeded synthetic retrieval dataset generator"};

    std::string out_dir = "data";
    glen::SynthSpec spec;
    app.add_option("--out", out_dir, "output directory");
    app.add_option("--docs", spec.doc_count, "number of documents");
    app.add_option("--signature-size", spec.signature_size, "unique words per document");
    app.add_option("--signature-repeats", spec.signature_repeats, "occurrences of each signature word");
    app.add_option("--filler-vocab", spec.filler_vocab, "size of the shared filler vocabulary");
    app.add_option("--fillers-per-doc", spec.fillers_per_doc, "filler words per document");
    app.add_option("--query-fillers", spec.query_fillers, "filler words per query");
    app.add_option("--distractor-rate", spec.distractor_rate, "chance a query borrows a foreign signature word");
    app.add_option("--unseen-fraction", spec.unseen_fraction, "fraction of docs without train queries");
    app.add_option("--seed", spec.seed, "generator seed");

    CLI11_PARSE(app, argc, argv);

    try {
        glen::SynthDataset data = glen::make_synth_dataset(spec);
        glen::write_synth_dataset(data, out_dir);
        std::printf("wrote %zu docs, %zu train queries, %zu test queries under %s\n", data.docs.size(),
                    data.train_queries.size(), data.test_queries.size(), out_dir.c_str());
    } catch (const glen::Error& e) {
        std::fprintf(stderr, "error: %s: %s\n", e.category().c_str(), e.what());
        return 1;
    } catch (const std::exception& e) {
        std::fprintf(stderr, "error: internal: %s\n", e.what());
        return 1;
    }
    return 0;
}
