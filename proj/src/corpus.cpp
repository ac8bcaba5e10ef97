#include "glen/corpus.hpp"

#include <algorithm>
#include <cctype>
#include <fstream>

#include <json.hpp>

#include "glen/error.hpp"

namespace glen {

std::vector<std::string> split_words(const std::string& text) {
    std::vector<std::string> words;
    std::string current;
    for (char ch : text) {
        unsigned char c = static_cast<unsigned char>(ch);
        if (std::isspace(c)) {
            if (!current.empty()) {
                words.push_back(current);
                current.clear();
            }
            continue;
        }
        if (std::ispunct(c)) continue;
        current.push_back(static_cast<char>(std::tolower(c)));
    }
    if (!current.empty()) words.push_back(current);
    return words;
}

Vocabulary Vocabulary::build(const std::vector<std::vector<std::string>>& doc_words,
                             int min_df, int max_size) {
    std::map<std::string, int> df;  // sorted keys give a stable tie-break base
    for (const auto& words : doc_words) {
        std::set<std::string> seen(words.begin(), words.end());
        for (const auto& w : seen) df[w] += 1;
    }
    std::vector<std::pair<std::string, int>> kept;
    for (const auto& [token, count] : df) {
        if (count >= min_df) kept.emplace_back(token, count);
    }
    if (kept.empty()) fail("state", "vocabulary is empty after document-frequency filtering");
    std::stable_sort(kept.begin(), kept.end(), [](const auto& a, const auto& b) {
        if (a.second != b.second) return a.second > b.second;
        return a.first < b.first;
    });
    if (max_size > 0 && static_cast<int>(kept.size()) > max_size) kept.resize(static_cast<std::size_t>(max_size));

    Vocabulary vocab;
    vocab.id_to_token_.reserve(kept.size() + 2);
    for (const auto& [token, count] : kept) {
        vocab.token_to_id_[token] = static_cast<int>(vocab.id_to_token_.size());
        vocab.id_to_token_.push_back(token);
    }
    for (const char* special : {kPadToken, kStartToken}) {
        vocab.token_to_id_[special] = static_cast<int>(vocab.id_to_token_.size());
        vocab.id_to_token_.push_back(special);
    }
    return vocab;
}

int Vocabulary::id_of(const std::string& token) const {
    auto it = token_to_id_.find(token);
    return it == token_to_id_.end() ? -1 : it->second;
}

const std::string& Vocabulary::token_of(int id) const {
    if (id < 0 || id >= size()) fail("state", "token id out of range: " + std::to_string(id));
    return id_to_token_[static_cast<std::size_t>(id)];
}

std::vector<int> Vocabulary::encode(const std::vector<std::string>& words) const {
    std::vector<int> ids;
    ids.reserve(words.size());
    for (const auto& w : words) {
        int id = id_of(w);
        if (id >= 0 && id < content_size()) ids.push_back(id);
    }
    return ids;
}

std::vector<int> Vocabulary::tokenize(const std::string& text) const {
    return encode(split_words(text));
}

void QrelSet::add(const std::string& query_id, const std::string& doc_id, int grade) {
    judgments_[query_id][doc_id] = grade;
}

const std::map<std::string, int>* QrelSet::for_query(const std::string& query_id) const {
    auto it = judgments_.find(query_id);
    return it == judgments_.end() ? nullptr : &it->second;
}

std::set<std::string> QrelSet::relevant_docs(const std::string& query_id) const {
    std::set<std::string> out;
    if (const auto* j = for_query(query_id)) {
        for (const auto& [doc, grade] : *j) {
            if (grade > 0) out.insert(doc);
        }
    }
    return out;
}

std::vector<RawDocument> load_raw_corpus(const std::string& path) {
    std::ifstream in(path);
    if (!in) fail("io", "cannot open corpus file: " + path);
    std::vector<RawDocument> docs;
    std::set<std::string> seen;
    std::string line;
    std::size_t line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        if (line.empty()) continue;
        nlohmann::json obj = nlohmann::json::parse(line, nullptr, false);
        if (obj.is_discarded() || !obj.is_object() || !obj.contains("doc_id") || !obj.contains("text") ||
            !obj["doc_id"].is_string() || !obj["text"].is_string()) {
            fail("format", "malformed corpus line " + std::to_string(line_no) + " in " + path);
        }
        RawDocument doc{obj["doc_id"].get<std::string>(), obj["text"].get<std::string>()};
        if (!seen.insert(doc.doc_id).second) {
            fail("format", "duplicate doc_id '" + doc.doc_id + "' at corpus line " + std::to_string(line_no));
        }
        docs.push_back(std::move(doc));
    }
    if (docs.empty()) fail("format", "corpus file has no documents: " + path);
    return docs;
}

Corpus make_corpus(const std::vector<RawDocument>& raw, const Vocabulary& vocab, int max_doc_len) {
    Corpus corpus;
    corpus.docs.reserve(raw.size());
    for (const auto& r : raw) {
        Document doc;
        doc.doc_id = r.doc_id;
        doc.raw = r.text;
        doc.tokens = vocab.tokenize(r.text);
        if (max_doc_len > 0 && static_cast<int>(doc.tokens.size()) > max_doc_len) {
            doc.tokens.resize(static_cast<std::size_t>(max_doc_len));
        }
        corpus.index[doc.doc_id] = corpus.docs.size();
        corpus.docs.push_back(std::move(doc));
    }
    return corpus;
}

namespace {

std::vector<std::string> split_tabs(const std::string& line) {
    std::vector<std::string> fields;
    std::size_t start = 0;
    while (true) {
        std::size_t tab = line.find('\t', start);
        if (tab == std::string::npos) {
            fields.push_back(line.substr(start));
            break;
        }
        fields.push_back(line.substr(start, tab - start));
        start = tab + 1;
    }
    return fields;
}

}  // namespace

std::vector<Query> load_queries(const std::string& path, const Vocabulary& vocab, int max_query_len) {
    std::ifstream in(path);
    if (!in) fail("io", "cannot open query file: " + path);
    std::vector<Query> queries;
    std::set<std::string> seen;
    std::string line;
    std::size_t line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        if (line.empty()) continue;
        std::size_t tab = line.find('\t');
        if (tab == std::string::npos || tab == 0) {
            fail("format", "malformed query line " + std::to_string(line_no) + " in " + path);
        }
        Query q;
        q.query_id = line.substr(0, tab);
        q.raw = line.substr(tab + 1);
        if (!seen.insert(q.query_id).second) {
            fail("format", "duplicate query_id '" + q.query_id + "' at line " + std::to_string(line_no));
        }
        q.tokens = vocab.tokenize(q.raw);
        if (max_query_len > 0 && static_cast<int>(q.tokens.size()) > max_query_len) {
            q.tokens.resize(static_cast<std::size_t>(max_query_len));
        }
        queries.push_back(std::move(q));
    }
    return queries;
}

QrelSet load_qrels(const std::string& path, const Corpus& corpus, const std::vector<Query>& queries) {
    std::ifstream in(path);
    if (!in) fail("io", "cannot open qrels file: " + path);
    std::set<std::string> query_ids;
    for (const auto& q : queries) query_ids.insert(q.query_id);
    QrelSet qrels;
    std::string line;
    std::size_t line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        if (line.empty()) continue;
        auto fields = split_tabs(line);
        if (fields.size() != 3) {
            fail("format", "malformed qrels line " + std::to_string(line_no) + " in " + path);
        }
        int grade = 0;
        try {
            std::size_t used = 0;
            grade = std::stoi(fields[2], &used);
            if (used != fields[2].size()) throw std::invalid_argument("trailing");
        } catch (const std::exception&) {
            fail("format", "non-integer grade at qrels line " + std::to_string(line_no));
        }
        if (grade < 0) fail("format", "negative grade at qrels line " + std::to_string(line_no));
        if (!query_ids.empty() && !query_ids.count(fields[0])) {
            fail("format", "qrels references unknown query_id '" + fields[0] + "'");
        }
        if (!corpus.find(fields[1])) {
            fail("format", "qrels references unknown doc_id '" + fields[1] + "'");
        }
        qrels.add(fields[0], fields[1], grade);
    }
    return qrels;
}

std::set<std::string> load_stopwords(const std::string& path) {
    std::ifstream in(path);
    if (!in) fail("io", "cannot open stopword file: " + path);
    std::set<std::string> words;
    std::string line;
    while (std::getline(in, line)) {
        auto hash = line.find('#');
        if (hash != std::string::npos) line.resize(hash);
        for (const auto& w : split_words(line)) words.insert(w);
    }
    return words;
}

}  // namespace glen
