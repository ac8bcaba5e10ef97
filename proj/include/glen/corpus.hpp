#pragma once

#include <map>
#include <set>
#include <string>
#include <unordered_map>
#include <vector>

namespace glen {

// Lowercases ASCII, removes punctuation characters, splits on whitespace.
// Applied before any vocabulary lookup, so stored vocabulary entries are
// already in normal form and re-tokenizing one yields itself.
std::vector<std::string> split_words(const std::string& text);

// Token inventory. Content tokens occupy ids [0, vocab_size - 2); the two
// reserved ids at the top are padding and the decoder start marker, in that
// order, so models can locate them from the vocabulary size alone.
class Vocabulary {
public:
    static constexpr const char* kPadToken = "<pad>";
    static constexpr const char* kStartToken = "<start>";

    // Keeps tokens with document frequency >= min_df, truncates to max_size
    // by descending df (ties: lexicographic ascending), then appends the two
    // reserved tokens. Ids are assigned in selection order.
    static Vocabulary build(const std::vector<std::vector<std::string>>& doc_words,
                            int min_df, int max_size);

    int size() const { return static_cast<int>(id_to_token_.size()); }
    int content_size() const { return size() - 2; }
    int pad_id() const { return size() - 2; }
    int start_id() const { return size() - 1; }

    int id_of(const std::string& token) const;  // -1 when out of vocabulary
    const std::string& token_of(int id) const;

    // Maps words to ids, dropping out-of-vocabulary words.
    std::vector<int> encode(const std::vector<std::string>& words) const;
    std::vector<int> tokenize(const std::string& text) const;

private:
    std::vector<std::string> id_to_token_;
    std::unordered_map<std::string, int> token_to_id_;
};

struct Document {
    std::string doc_id;
    std::string raw;
    std::vector<int> tokens;
};

struct Query {
    std::string query_id;
    std::string raw;
    std::vector<int> tokens;
};

struct Corpus {
    std::vector<Document> docs;                          // file order
    std::unordered_map<std::string, std::size_t> index;  // doc_id -> position

    const Document* find(const std::string& doc_id) const {
        auto it = index.find(doc_id);
        return it == index.end() ? nullptr : &docs[it->second];
    }
};

// Relevance judgments. Iteration order is sorted (query, then doc) so every
// consumer sees a deterministic sequence.
class QrelSet {
public:
    void add(const std::string& query_id, const std::string& doc_id, int grade);

    const std::map<std::string, std::map<std::string, int>>& judgments() const { return judgments_; }
    const std::map<std::string, int>* for_query(const std::string& query_id) const;
    std::set<std::string> relevant_docs(const std::string& query_id) const;  // grade > 0
    bool empty() const { return judgments_.empty(); }

private:
    std::map<std::string, std::map<std::string, int>> judgments_;
};

struct RawDocument {
    std::string doc_id;
    std::string text;
};

// JSONL, one {"doc_id", "text"} object per line. Rejects duplicate ids and
// malformed lines (error names the line number).
std::vector<RawDocument> load_raw_corpus(const std::string& path);

Corpus make_corpus(const std::vector<RawDocument>& raw, const Vocabulary& vocab, int max_doc_len);

// TSV: query_id <TAB> text.
std::vector<Query> load_queries(const std::string& path, const Vocabulary& vocab, int max_query_len);

// TSV: query_id <TAB> doc_id <TAB> grade. Doc ids must resolve against the
// corpus; query ids against the query set when one is supplied (an empty
// query list skips that check, for qrels loaded without their queries).
QrelSet load_qrels(const std::string& path, const Corpus& corpus, const std::vector<Query>& queries);

// One token per line; '#' starts a comment.
std::set<std::string> load_stopwords(const std::string& path);

}  // namespace glen
