#include "glen/objectives.hpp"

#include <algorithm>
#include <atomic>
#include <set>
#include <sstream>

#include "glen/error.hpp"
#include "glen/io_util.hpp"
#include "glen/rng.hpp"

namespace glen {

namespace {
std::atomic<bool> g_warned_empty_negatives{false};
std::atomic<bool> g_warned_empty_queries{false};

// Seed-stream tags so each consumer of randomness gets an independent stream.
constexpr std::uint64_t kStreamKeywordDocs = 0x4b44;
constexpr std::uint64_t kStreamKeywordQueries = 0x4b51;
constexpr std::uint64_t kStreamRefineOrder = 0x5246;
constexpr std::uint64_t kStreamNegatives = 0x4e45;
}  // namespace

Tape::Id repr_on_tape(Tape& tape, Tape::Id embedding, Tape::Id logits_row, double tau) {
    Tape::Id probs = tape.softmax_rows(tape.scale(logits_row, 1.0 / tau));
    return tape.matmul(probs, embedding);
}

Tape::Id cosine_distance_node(Tape& tape, Tape::Id a_row, Tape::Id b_row) {
    const Tensor& a = tape.val(a_row);
    const Tensor& b = tape.val(b_row);
    double aa = 0.0, bb = 0.0;
    for (double x : a.v) aa += x * x;
    for (double x : b.v) bb += x * x;
    if (aa == 0.0 || bb == 0.0) {
        warn("cosine distance on zero-norm vector; using maximal distance");
        Tensor one(1, 1);
        one.v[0] = 1.0;
        return tape.constant(std::move(one));
    }
    Tape::Id cos = tape.s_div(tape.dot(a_row, b_row),
                              tape.s_mul(tape.s_sqrt(tape.dot(a_row, a_row)), tape.s_sqrt(tape.dot(b_row, b_row))));
    return tape.s_affine(cos, -1.0, 1.0);
}

Tape::Id keyword_loss_on_tape(Tape& tape, TapeModel& model, const DecodeTrace& decode,
                              const KeywordIdentifier& target) {
    const ModelConfig& cfg = model.params->config;
    if (static_cast<int>(target.tokens.size()) != cfg.id_length) {
        fail("state", "keyword identifier length does not match the model id_length");
    }
    std::vector<Tape::Id> terms;
    for (int t = 0; t < cfg.id_length; ++t) {
        int token = target.tokens[static_cast<std::size_t>(t)];
        if (token == cfg.pad_id()) continue;
        terms.push_back(tape.cross_entropy(decode.logits[static_cast<std::size_t>(t)], 0, token));
    }
    if (terms.empty()) fail("state", "keyword loss: every target position is padding");
    return tape.sum(terms);
}

RefineLossNodes refine_losses_on_tape(Tape& tape, TapeModel& model, const RefineExample& example,
                                      double tau, const TrainingConfig& cfg) {
    if (cfg.flags.no_pairwise && cfg.flags.no_pointwise) {
        fail("config", "no_pairwise and no_pointwise together leave no training objective");
    }
    DecodeOptions dopts = cfg.decode_options();
    const ModelConfig& mcfg = model.params->config;

    Tape::Id q_mem = encode_on_tape(model, *example.query);
    DecodeTrace q_dec = decode_on_tape(model, q_mem, dopts);
    Tape::Id p_mem = encode_on_tape(model, *example.positive);
    DecodeTrace p_dec = decode_on_tape(model, p_mem, dopts);

    RefineLossNodes nodes;

    if (!cfg.flags.no_pairwise) {
        auto rel_of = [&](const DecodeTrace& d_dec) {
            std::vector<Tape::Id> terms;
            for (int t = 0; t < mcfg.id_length; ++t) {
                Tape::Id r = repr_on_tape(tape, model.embedding, d_dec.logits[static_cast<std::size_t>(t)], tau);
                terms.push_back(tape.dot(q_dec.hidden[static_cast<std::size_t>(t)], r));
            }
            return tape.sum(terms);
        };
        std::vector<Tape::Id> scores{rel_of(p_dec)};
        for (const std::vector<int>* neg : example.negatives) {
            Tape::Id n_mem = encode_on_tape(model, *neg);
            DecodeTrace n_dec = decode_on_tape(model, n_mem, dopts);
            scores.push_back(rel_of(n_dec));
        }
        if (example.negatives.empty() && cfg.negatives_per_example > 0 &&
            !g_warned_empty_negatives.exchange(true)) {
            warn("pairwise loss with an empty negative set; loss degenerates to 0");
        }
        nodes.pair = tape.cross_entropy(tape.stack_scalars(scores), 0, 0);
    }

    if (!cfg.flags.no_pointwise) {
        std::vector<Tape::Id> ces, wq_parts, wd_parts;
        for (int t = 0; t < mcfg.id_length; ++t) {
            int z = p_dec.emitted[static_cast<std::size_t>(t)];
            ces.push_back(tape.cross_entropy(q_dec.logits[static_cast<std::size_t>(t)], 0, z));
            Tape::Id e_z = tape.row(model.embedding, z);
            wq_parts.push_back(tape.dot(q_dec.hidden[static_cast<std::size_t>(t)], e_z));
            wd_parts.push_back(tape.dot(p_dec.hidden[static_cast<std::size_t>(t)], e_z));
        }
        Tape::Id dist = cosine_distance_node(tape, tape.stack_scalars(wq_parts), tape.stack_scalars(wd_parts));
        nodes.point = tape.s_add(tape.sum(ces), tape.s_affine(dist, cfg.lambda_dist, 0.0));
    }

    if (nodes.pair >= 0 && nodes.point >= 0) {
        nodes.total = tape.s_add(nodes.pair, tape.s_affine(nodes.point, cfg.lambda_point, 0.0));
    } else if (nodes.pair >= 0) {
        nodes.total = nodes.pair;
    } else {
        nodes.total = tape.s_affine(nodes.point, cfg.lambda_point, 0.0);
    }
    return nodes;
}

double loss_keyword(const ModelParams& params, const std::vector<int>& input_tokens,
                    const KeywordIdentifier& target, const DecodeOptions& options) {
    Tape tape;
    TapeModel model = TapeModel::bind(tape, params);
    DecodeTrace dec = decode_on_tape(model, encode_on_tape(model, input_tokens), options);
    return tape.scalar(keyword_loss_on_tape(tape, model, dec, target));
}

double loss_pair(const ModelParams& params, const RefineExample& example, double tau, const TrainingConfig& cfg) {
    TrainingConfig local = cfg;
    local.flags.no_pairwise = false;
    local.flags.no_pointwise = true;
    Tape tape;
    TapeModel model = TapeModel::bind(tape, params);
    return tape.scalar(refine_losses_on_tape(tape, model, example, tau, local).pair);
}

double loss_point(const ModelParams& params, const RefineExample& example, const TrainingConfig& cfg) {
    TrainingConfig local = cfg;
    local.flags.no_pairwise = true;
    local.flags.no_pointwise = false;
    Tape tape;
    TapeModel model = TapeModel::bind(tape, params);
    return tape.scalar(refine_losses_on_tape(tape, model, example, 1.0, local).point);
}

double loss_total(const ModelParams& params, const RefineExample& example, double tau, const TrainingConfig& cfg) {
    Tape tape;
    TapeModel model = TapeModel::bind(tape, params);
    return tape.scalar(refine_losses_on_tape(tape, model, example, tau, cfg).total);
}

double pairwise_loss_from_scores(const std::vector<double>& scores) {
    if (scores.empty()) fail("numeric", "pairwise loss needs at least the positive score");
    Tape tape;
    Tensor row(1, static_cast<int>(scores.size()));
    row.v = scores;
    return tape.scalar(tape.cross_entropy(tape.constant(std::move(row)), 0, 0));
}

std::vector<double> identifier_repr(const ModelParams& params, const std::vector<double>& hidden, double tau) {
    if (static_cast<int>(hidden.size()) != params.config.embed_dim) {
        fail("numeric", "identifier_repr: hidden size does not match embed_dim");
    }
    Tape tape;
    Tape::Id emb = tape.leaf(&params.embedding);
    Tensor h(1, params.config.embed_dim);
    h.v = hidden;
    Tape::Id logits = tape.matmul_nt(tape.constant(std::move(h)), emb);
    return tape.val(repr_on_tape(tape, emb, logits, tau)).v;
}

void accumulate_gradients(const Tape& tape, const TapeModel& model, ModelParams& grads, double scale) {
    std::size_t i = 0;
    for_each_param(grads, [&](const std::string&, Tensor& g) {
        const Tensor& tg = tape.grad(model.leaves[i++]);
        if (tg.v.empty()) return;
        for (std::size_t j = 0; j < g.v.size(); ++j) g.v[j] += scale * tg.v[j];
    });
}

void check_finite_gradients(const ModelParams& grads, long step) {
    for_each_param(const_cast<ModelParams&>(grads), [&](const std::string& name, Tensor& t) {
        if (!all_finite(t)) {
            fail("numeric", "non-finite gradient in parameter block '" + name + "' at step " + std::to_string(step));
        }
    });
}

// ---------------------------------------------------------------------------
// optimizer
// ---------------------------------------------------------------------------

namespace {

std::vector<Tensor*> tensor_list(ModelParams& p) {
    std::vector<Tensor*> out;
    for_each_param(p, [&](const std::string&, Tensor& t) { out.push_back(&t); });
    return out;
}

class Optimizer {
public:
    Optimizer(const TrainingConfig& cfg, const ModelParams& shape) : cfg_(cfg) {
        if (cfg.optimizer == "adam") {
            moment1_ = zeros_like(shape);
            moment2_ = zeros_like(shape);
        } else if (cfg.optimizer != "sgd") {
            fail("config", "unknown optimizer '" + cfg.optimizer + "'");
        }
    }

    void step(ModelParams& params, ModelParams& grads, double lr) {
        auto ps = tensor_list(params);
        auto gs = tensor_list(grads);
        if (cfg_.optimizer == "sgd") {
            for (std::size_t i = 0; i < ps.size(); ++i) {
                for (std::size_t j = 0; j < ps[i]->v.size(); ++j) ps[i]->v[j] -= lr * gs[i]->v[j];
            }
            return;
        }
        ++t_;
        auto ms = tensor_list(moment1_);
        auto vs = tensor_list(moment2_);
        double b1 = cfg_.adam_beta1, b2 = cfg_.adam_beta2;
        double c1 = 1.0 - std::pow(b1, static_cast<double>(t_));
        double c2 = 1.0 - std::pow(b2, static_cast<double>(t_));
        for (std::size_t i = 0; i < ps.size(); ++i) {
            for (std::size_t j = 0; j < ps[i]->v.size(); ++j) {
                double g = gs[i]->v[j];
                double& m = ms[i]->v[j];
                double& v = vs[i]->v[j];
                m = b1 * m + (1.0 - b1) * g;
                v = b2 * v + (1.0 - b2) * g * g;
                ps[i]->v[j] -= lr * (m / c1) / (std::sqrt(v / c2) + cfg_.adam_eps);
            }
        }
    }

private:
    TrainingConfig cfg_;
    ModelParams moment1_, moment2_;
    long t_ = 0;
};

struct GradWorkspace {
    std::vector<ModelParams> per_example;
    ModelParams reduced;

    GradWorkspace(const ModelParams& shape, int batch_size) : reduced(zeros_like(shape)) {
        for (int i = 0; i < batch_size; ++i) per_example.push_back(zeros_like(shape));
    }

    void zero_examples(std::size_t count) {
        for (std::size_t i = 0; i < count; ++i) {
            for_each_param(per_example[i], [](const std::string&, Tensor& t) { t.zero(); });
        }
    }

    // Ascending example order keeps the reduction bit-reproducible under any
    // execution policy.
    void reduce(std::size_t count) {
        for_each_param(reduced, [](const std::string&, Tensor& t) { t.zero(); });
        auto total = tensor_list(reduced);
        for (std::size_t i = 0; i < count; ++i) {
            auto part = tensor_list(per_example[i]);
            for (std::size_t b = 0; b < total.size(); ++b) {
                for (std::size_t j = 0; j < total[b]->v.size(); ++j) total[b]->v[j] += part[b]->v[j];
            }
        }
        double inv = count ? 1.0 / static_cast<double>(count) : 0.0;
        for (auto* t : total) {
            for (double& x : t->v) x *= inv;
        }
    }
};

}  // namespace

// ---------------------------------------------------------------------------
// keyword phase
// ---------------------------------------------------------------------------

namespace {

struct KeywordExample {
    const std::vector<int>* input;
    const KeywordIdentifier* target;
};

std::vector<std::size_t> shuffled_indices(std::size_t count, Rng& rng) {
    std::vector<std::size_t> idx(count);
    for (std::size_t i = 0; i < count; ++i) idx[i] = i;
    rng.shuffle(idx);
    return idx;
}

}  // namespace

TrainResult train_keyword_phase(ModelParams start, const TrainingData& data,
                                const TrainingConfig& cfg, ExecutionPolicy policy) {
    if (!data.corpus || !data.keyword_ids) fail("state", "keyword phase needs a corpus and keyword identifiers");
    if (data.keyword_ids->size() != data.corpus->docs.size()) {
        fail("state", "keyword identifiers are not aligned with the corpus");
    }
    if (cfg.keyword_mix_docs < 0 || cfg.keyword_mix_queries < 0 ||
        (cfg.keyword_mix_docs == 0 && cfg.keyword_mix_queries == 0)) {
        fail("config", "keyword_mix must keep at least one of the two example streams");
    }

    std::vector<KeywordExample> doc_examples;
    for (std::size_t i = 0; i < data.corpus->docs.size(); ++i) {
        doc_examples.push_back({&data.corpus->docs[i].tokens, &(*data.keyword_ids)[i]});
    }
    std::vector<KeywordExample> query_examples;
    if (data.queries && data.qrels) {
        for (const Query& q : *data.queries) {
            const auto* judgments = data.qrels->for_query(q.query_id);
            if (!judgments) continue;
            if (q.tokens.empty()) {
                if (!g_warned_empty_queries.exchange(true)) {
                    warn("skipping queries with no in-vocabulary tokens");
                }
                continue;
            }
            for (const auto& [doc_id, grade] : *judgments) {
                if (grade <= 0) continue;
                std::size_t doc_idx = data.corpus->index.at(doc_id);
                query_examples.push_back({&q.tokens, &(*data.keyword_ids)[doc_idx]});
            }
        }
    }
    if (cfg.keyword_mix_docs == 0) doc_examples.clear();
    if (cfg.keyword_mix_queries == 0) query_examples.clear();
    if (doc_examples.empty() && query_examples.empty()) {
        fail("state", "keyword phase has no training examples");
    }

    TrainResult result{std::move(start), {}, {}};
    std::uint64_t seed = result.params.config.seed;
    Optimizer optimizer(cfg, result.params);
    GradWorkspace work(result.params, cfg.batch_size);
    std::vector<double> example_loss(static_cast<std::size_t>(cfg.batch_size), 0.0);
    long step = 0;

    for (int epoch = 0; epoch < cfg.keyword_epochs; ++epoch) {
        if (cfg.keyword_step_cap > 0 && step >= cfg.keyword_step_cap) break;
        Rng doc_rng(mix_seed({seed, kStreamKeywordDocs, static_cast<std::uint64_t>(epoch)}));
        Rng query_rng(mix_seed({seed, kStreamKeywordQueries, static_cast<std::uint64_t>(epoch)}));
        auto doc_order = shuffled_indices(doc_examples.size(), doc_rng);
        auto query_order = shuffled_indices(query_examples.size(), query_rng);

        // a from the document stream, then b from the query stream, repeating;
        // whichever stream runs dry first is simply skipped afterwards.
        std::vector<const KeywordExample*> schedule;
        std::size_t di = 0, qi = 0;
        while (di < doc_order.size() || qi < query_order.size()) {
            for (int a = 0; a < cfg.keyword_mix_docs && di < doc_order.size(); ++a, ++di) {
                schedule.push_back(&doc_examples[doc_order[di]]);
            }
            for (int b = 0; b < cfg.keyword_mix_queries && qi < query_order.size(); ++b, ++qi) {
                schedule.push_back(&query_examples[query_order[qi]]);
            }
        }

        for (std::size_t batch_start = 0; batch_start < schedule.size(); batch_start += static_cast<std::size_t>(cfg.batch_size)) {
            if (cfg.keyword_step_cap > 0 && step >= cfg.keyword_step_cap) break;
            std::size_t batch_n = std::min(static_cast<std::size_t>(cfg.batch_size), schedule.size() - batch_start);
            work.zero_examples(batch_n);
            parallel_for(policy, batch_n, [&](std::size_t i) {
                const KeywordExample& ex = *schedule[batch_start + i];
                Tape tape;
                TapeModel model = TapeModel::bind(tape, result.params);
                DecodeTrace dec = decode_on_tape(model, encode_on_tape(model, *ex.input), cfg.decode_options());
                Tape::Id loss = keyword_loss_on_tape(tape, model, dec, *ex.target);
                example_loss[i] = tape.scalar(loss);
                tape.backward(loss);
                accumulate_gradients(tape, model, work.per_example[i], 1.0);
            });
            work.reduce(batch_n);
            check_finite_gradients(work.reduced, step);
            double mean_loss = 0.0;
            for (std::size_t i = 0; i < batch_n; ++i) mean_loss += example_loss[i];
            mean_loss /= static_cast<double>(batch_n);
            if (!std::isfinite(mean_loss)) fail("numeric", "non-finite loss in batch " + std::to_string(step));
            optimizer.step(result.params, work.reduced, cfg.lr_keyword);
            result.keyword_trace.push_back({step, mean_loss});
            ++step;
        }
    }
    return result;
}

// ---------------------------------------------------------------------------
// refine phase
// ---------------------------------------------------------------------------

TrainResult train_refine_phase(ModelParams start, const TrainingData& data,
                               const TrainingConfig& cfg, ExecutionPolicy policy) {
    if (cfg.flags.no_refinement) return TrainResult{std::move(start), {}, {}};
    if (!data.corpus || !data.queries || !data.qrels) {
        fail("state", "refine phase needs corpus, queries, and qrels");
    }

    struct Pair {
        std::size_t query_idx;
        std::size_t doc_idx;
    };
    std::vector<Pair> pairs;
    for (std::size_t qi = 0; qi < data.queries->size(); ++qi) {
        const Query& q = (*data.queries)[qi];
        const auto* judgments = data.qrels->for_query(q.query_id);
        if (!judgments) continue;
        if (q.tokens.empty()) {
            if (!g_warned_empty_queries.exchange(true)) {
                warn("skipping queries with no in-vocabulary tokens");
            }
            continue;
        }
        for (const auto& [doc_id, grade] : *judgments) {
            if (grade <= 0) continue;
            pairs.push_back({qi, data.corpus->index.at(doc_id)});
        }
    }
    if (pairs.empty()) fail("state", "refine phase has no (query, positive document) pairs");

    TrainResult result{std::move(start), {}, {}};
    std::uint64_t seed = result.params.config.seed;
    Optimizer optimizer(cfg, result.params);
    GradWorkspace work(result.params, cfg.batch_size);
    std::size_t bsz = static_cast<std::size_t>(cfg.batch_size);
    std::vector<double> pair_loss(bsz, 0.0), point_loss(bsz, 0.0), total_loss(bsz, 0.0);
    long step = 0;

    for (int epoch = 0; epoch < cfg.refine_epochs; ++epoch) {
        if (cfg.refine_step_cap > 0 && step >= cfg.refine_step_cap) break;
        double tau = cfg.flags.no_annealing ? cfg.anneal.floor : cfg.anneal.tau(epoch);
        IdentifierTrie trie = refresh_assignments(result.params, *data.corpus, policy, cfg.decode_options());

        Rng order_rng(mix_seed({seed, kStreamRefineOrder, static_cast<std::uint64_t>(epoch)}));
        auto order = shuffled_indices(pairs.size(), order_rng);

        for (std::size_t batch_start = 0; batch_start < order.size(); batch_start += bsz) {
            if (cfg.refine_step_cap > 0 && step >= cfg.refine_step_cap) break;
            std::size_t batch_n = std::min(bsz, order.size() - batch_start);

            std::vector<RefineExample> examples(batch_n);
            for (std::size_t i = 0; i < batch_n; ++i) {
                const Pair& p = pairs[order[batch_start + i]];
                const std::string& pos_id = data.corpus->docs[p.doc_idx].doc_id;
                Rng neg_rng(mix_seed({seed, kStreamNegatives, static_cast<std::uint64_t>(epoch),
                                      static_cast<std::uint64_t>(step), static_cast<std::uint64_t>(i)}));
                std::vector<std::string> neg_ids =
                    cfg.flags.random_negatives
                        ? trie.random_negatives(pos_id, cfg.negatives_per_example, neg_rng)
                        : trie.prefix_negatives(pos_id, cfg.negatives_per_example, neg_rng);
                std::set<std::size_t> neg_idx;
                for (const auto& id : neg_ids) neg_idx.insert(data.corpus->index.at(id));
                for (std::size_t j = 0; j < batch_n; ++j) {
                    if (j == i) continue;
                    neg_idx.insert(pairs[order[batch_start + j]].doc_idx);
                }
                neg_idx.erase(p.doc_idx);

                examples[i].query = &(*data.queries)[p.query_idx].tokens;
                examples[i].positive = &data.corpus->docs[p.doc_idx].tokens;
                for (std::size_t idx : neg_idx) examples[i].negatives.push_back(&data.corpus->docs[idx].tokens);
            }

            work.zero_examples(batch_n);
            parallel_for(policy, batch_n, [&](std::size_t i) {
                Tape tape;
                TapeModel model = TapeModel::bind(tape, result.params);
                RefineLossNodes nodes = refine_losses_on_tape(tape, model, examples[i], tau, cfg);
                pair_loss[i] = nodes.pair >= 0 ? tape.scalar(nodes.pair) : 0.0;
                point_loss[i] = nodes.point >= 0 ? tape.scalar(nodes.point) : 0.0;
                total_loss[i] = tape.scalar(nodes.total);
                tape.backward(nodes.total);
                accumulate_gradients(tape, model, work.per_example[i], 1.0);
            });
            work.reduce(batch_n);
            check_finite_gradients(work.reduced, step);
            double mp = 0.0, mq = 0.0, mt = 0.0;
            for (std::size_t i = 0; i < batch_n; ++i) {
                mp += pair_loss[i];
                mq += point_loss[i];
                mt += total_loss[i];
            }
            mp /= static_cast<double>(batch_n);
            mq /= static_cast<double>(batch_n);
            mt /= static_cast<double>(batch_n);
            if (!std::isfinite(mt)) fail("numeric", "non-finite loss in batch " + std::to_string(step));
            optimizer.step(result.params, work.reduced, cfg.lr_refine);
            result.refine_trace.push_back({step, epoch, tau, mp, mq, mt});
            ++step;
        }
    }
    return result;
}

void write_keyword_trace(const std::vector<KeywordTraceRow>& trace, const std::string& path) {
    std::ostringstream buf;
    buf << "step,L_key\n";
    for (const auto& row : trace) buf << row.step << ',' << fmt_g17(row.keyword_loss) << '\n';
    atomic_write_file(path, buf.str());
}

void write_refine_trace(const std::vector<RefineTraceRow>& trace, const std::string& path) {
    std::ostringstream buf;
    buf << "step,epoch,tau,L_pair,L_point,L_total\n";
    for (const auto& row : trace) {
        buf << row.step << ',' << row.epoch << ',' << fmt_g17(row.tau) << ',' << fmt_g17(row.pair_loss) << ','
            << fmt_g17(row.point_loss) << ',' << fmt_g17(row.total_loss) << '\n';
    }
    atomic_write_file(path, buf.str());
}

}  // namespace glen
