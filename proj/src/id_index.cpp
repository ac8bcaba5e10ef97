#include "glen/id_index.hpp"

#include <algorithm>
#include <sstream>

#include "glen/error.hpp"
#include "glen/io_util.hpp"

namespace glen {

IdentifierTrie IdentifierTrie::build(std::vector<IdAssignment> assignments) {
    if (assignments.empty()) fail("state", "cannot build an identifier trie from zero assignments");
    std::sort(assignments.begin(), assignments.end(),
              [](const IdAssignment& a, const IdAssignment& b) { return a.doc_id < b.doc_id; });

    IdentifierTrie trie;
    trie.id_length_ = static_cast<int>(assignments[0].identifier.size());
    if (trie.id_length_ == 0) fail("state", "identifier length must be positive");
    trie.nodes_.emplace_back();
    for (std::size_t i = 0; i < assignments.size(); ++i) {
        const IdAssignment& a = assignments[i];
        if (static_cast<int>(a.identifier.size()) != trie.id_length_) {
            fail("state", "identifier length mismatch for doc '" + a.doc_id + "'");
        }
        if (a.weights.size() != a.identifier.size()) {
            fail("state", "identifier/weight length mismatch for doc '" + a.doc_id + "'");
        }
        if (i > 0 && assignments[i - 1].doc_id == a.doc_id) {
            fail("state", "duplicate doc_id in identifier assignments: '" + a.doc_id + "'");
        }
        int node = 0;
        for (int depth = 0; depth < trie.id_length_; ++depth) {
            int token = a.identifier[static_cast<std::size_t>(depth)];
            auto it = trie.nodes_[static_cast<std::size_t>(node)].children.find(token);
            if (it == trie.nodes_[static_cast<std::size_t>(node)].children.end()) {
                int next = static_cast<int>(trie.nodes_.size());
                trie.nodes_[static_cast<std::size_t>(node)].children.emplace(token, next);
                trie.nodes_.emplace_back();
                node = next;
            } else {
                node = it->second;
            }
        }
        if (trie.nodes_[static_cast<std::size_t>(node)].bucket.empty()) ++trie.leaf_count_;
        trie.nodes_[static_cast<std::size_t>(node)].bucket.push_back(i);
    }
    for (std::size_t i = 0; i < assignments.size(); ++i) trie.doc_index_[assignments[i].doc_id] = i;
    trie.assignments_ = std::move(assignments);
    return trie;
}

const IdAssignment* IdentifierTrie::find(const std::string& doc_id) const {
    auto it = doc_index_.find(doc_id);
    return it == doc_index_.end() ? nullptr : &assignments_[it->second];
}

int IdentifierTrie::child(int node, int token) const {
    const auto& children = nodes_[static_cast<std::size_t>(node)].children;
    auto it = children.find(token);
    return it == children.end() ? -1 : it->second;
}

std::vector<int> IdentifierTrie::valid_children(const std::vector<int>& prefix) const {
    int node = 0;
    for (int token : prefix) {
        node = child(node, token);
        if (node < 0) return {};
    }
    std::vector<int> out;
    for (const auto& [token, next] : nodes_[static_cast<std::size_t>(node)].children) out.push_back(token);
    return out;
}

std::vector<std::size_t> IdentifierTrie::bucket(const std::vector<int>& identifier) const {
    if (static_cast<int>(identifier.size()) != id_length_) return {};
    int node = 0;
    for (int token : identifier) {
        node = child(node, token);
        if (node < 0) return {};
    }
    return nodes_[static_cast<std::size_t>(node)].bucket;
}

namespace {

void collect_assignment_indices(const IdentifierTrie& trie, int node, std::vector<std::size_t>& out) {
    const auto& bucket = trie.bucket_of(node);
    out.insert(out.end(), bucket.begin(), bucket.end());
    for (const auto& [token, next] : trie.children_of(node)) collect_assignment_indices(trie, next, out);
}

}  // namespace

std::vector<std::string> IdentifierTrie::prefix_negatives(const std::string& target_doc_id, int count, Rng& rng) const {
    auto target_it = doc_index_.find(target_doc_id);
    if (target_it == doc_index_.end()) fail("state", "prefix_negatives: unknown doc_id '" + target_doc_id + "'");
    if (count <= 0) return {};
    std::size_t target = target_it->second;
    const std::vector<int>& identifier = assignments_[target].identifier;

    // Walk the target's path once; subtree(d) = docs sharing the first d tokens.
    std::vector<int> path_nodes{0};
    int node = 0;
    for (int depth = 0; depth < id_length_; ++depth) {
        node = child(node, identifier[static_cast<std::size_t>(depth)]);
        path_nodes.push_back(node);  // always present, the target is stored here
    }

    std::vector<char> in_deeper(assignments_.size(), 0);
    in_deeper[target] = 1;
    std::vector<std::string> result;
    std::size_t want = static_cast<std::size_t>(count);
    for (int depth = id_length_; depth >= 0; --depth) {
        std::vector<std::size_t> subtree;
        collect_assignment_indices(*this, path_nodes[static_cast<std::size_t>(depth)], subtree);
        std::vector<std::size_t> tier;  // exactly-this-depth docs, ascending doc_id
        for (std::size_t idx : subtree) {
            if (!in_deeper[idx]) tier.push_back(idx);
        }
        std::sort(tier.begin(), tier.end());
        for (std::size_t idx : tier) in_deeper[idx] = 1;

        std::size_t room = want - result.size();
        if (tier.size() <= room) {
            for (std::size_t idx : tier) result.push_back(assignments_[idx].doc_id);
        } else {
            for (std::size_t idx : rng.sample_without_replacement(tier, room)) {
                result.push_back(assignments_[idx].doc_id);
            }
        }
        if (result.size() == want) break;
    }
    std::sort(result.begin(), result.end());
    return result;
}

std::vector<std::string> IdentifierTrie::random_negatives(const std::string& target_doc_id, int count, Rng& rng) const {
    if (doc_index_.find(target_doc_id) == doc_index_.end()) {
        fail("state", "random_negatives: unknown doc_id '" + target_doc_id + "'");
    }
    if (count <= 0) return {};
    std::vector<std::size_t> pool;
    for (std::size_t i = 0; i < assignments_.size(); ++i) {
        if (assignments_[i].doc_id != target_doc_id) pool.push_back(i);
    }
    std::vector<std::string> result;
    for (std::size_t idx : rng.sample_without_replacement(pool, static_cast<std::size_t>(count))) {
        result.push_back(assignments_[idx].doc_id);
    }
    std::sort(result.begin(), result.end());
    return result;
}

std::vector<IdAssignment> assign_ids(const ModelParams& params, const Corpus& corpus,
                                     ExecutionPolicy policy, const DecodeOptions& options) {
    if (corpus.docs.empty()) fail("state", "cannot assign identifiers for an empty corpus");
    std::vector<IdAssignment> out(corpus.docs.size());
    parallel_for(policy, corpus.docs.size(), [&](std::size_t i) {
        ForwardResult fwd = run_model(params, corpus.docs[i].tokens, options);
        out[i] = IdAssignment{corpus.docs[i].doc_id, fwd.identifier, fwd.weights};
    });
    return out;
}

IdentifierTrie refresh_assignments(const ModelParams& params, const Corpus& corpus,
                                   ExecutionPolicy policy, const DecodeOptions& options) {
    return IdentifierTrie::build(assign_ids(params, corpus, policy, options));
}

void write_id_table(const std::vector<IdAssignment>& assignments, const std::string& path) {
    std::vector<const IdAssignment*> sorted;
    sorted.reserve(assignments.size());
    for (const auto& a : assignments) sorted.push_back(&a);
    std::sort(sorted.begin(), sorted.end(),
              [](const IdAssignment* a, const IdAssignment* b) { return a->doc_id < b->doc_id; });
    std::ostringstream buf;
    for (const IdAssignment* a : sorted) {
        buf << a->doc_id << '\t';
        for (std::size_t i = 0; i < a->identifier.size(); ++i) {
            if (i) buf << ',';
            buf << a->identifier[i];
        }
        buf << '\t';
        for (std::size_t i = 0; i < a->weights.size(); ++i) {
            if (i) buf << ',';
            buf << fmt_g17(a->weights[i]);
        }
        buf << '\n';
    }
    atomic_write_file(path, buf.str());
}

namespace {

std::vector<std::string> split_on(const std::string& s, char sep) {
    std::vector<std::string> parts;
    std::size_t start = 0;
    while (true) {
        std::size_t pos = s.find(sep, start);
        if (pos == std::string::npos) {
            parts.push_back(s.substr(start));
            break;
        }
        parts.push_back(s.substr(start, pos - start));
        start = pos + 1;
    }
    return parts;
}

}  // namespace

std::vector<IdAssignment> read_id_table(const std::string& path) {
    std::istringstream in(read_file(path));
    std::vector<IdAssignment> out;
    std::string line;
    std::size_t line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        if (line.empty()) continue;
        auto fields = split_on(line, '\t');
        if (fields.size() != 3) fail("format", "malformed identifier table line " + std::to_string(line_no) + " in " + path);
        IdAssignment a;
        a.doc_id = fields[0];
        try {
            for (const auto& tok : split_on(fields[1], ',')) a.identifier.push_back(std::stoi(tok));
            for (const auto& w : split_on(fields[2], ',')) a.weights.push_back(std::stod(w));
        } catch (const std::exception&) {
            fail("format", "unparseable identifier table line " + std::to_string(line_no) + " in " + path);
        }
        if (a.identifier.size() != a.weights.size()) {
            fail("format", "token/weight count mismatch at identifier table line " + std::to_string(line_no));
        }
        out.push_back(std::move(a));
    }
    if (out.empty()) fail("format", "identifier table is empty: " + path);
    return out;
}

}  // namespace glen
