#pragma once

#include <cmath>
#include <string>
#include <vector>

#include "glen/autograd.hpp"
#include "glen/corpus.hpp"
#include "glen/id_index.hpp"
#include "glen/keyword.hpp"
#include "glen/model.hpp"
#include "glen/parallel.hpp"

namespace glen {

// tau(epoch) = max(floor, exp(-epoch)); the floor makes late-epoch softmax
// ranking representations effectively one-hot.
struct AnnealSchedule {
    double floor = 1e-5;
    double tau(int epoch) const { return std::max(floor, std::exp(-static_cast<double>(epoch))); }
};

struct AblationFlags {
    bool no_keyword_phase = false;
    bool no_annealing = false;      // tau pinned to the floor for all epochs
    bool token_decoder_input = false;
    bool no_pairwise = false;
    bool no_pointwise = false;
    bool random_negatives = false;
    bool no_refinement = false;
};

struct TrainingConfig {
    double lambda_point = 0.5;
    double lambda_dist = 0.5;
    int negatives_per_example = 8;
    int batch_size = 8;
    double lr_keyword = 0.05;
    double lr_refine = 0.02;
    int keyword_epochs = 10;
    int refine_epochs = 10;
    long keyword_step_cap = 0;  // 0 = no cap
    long refine_step_cap = 0;
    int keyword_mix_docs = 1;     // interleave pattern: a document examples,
    int keyword_mix_queries = 1;  // then b query examples, repeating
    std::string optimizer = "sgd";  // or "adam"
    double adam_beta1 = 0.9;
    double adam_beta2 = 0.999;
    double adam_eps = 1e-8;
    AnnealSchedule anneal;
    AblationFlags flags;

    DecodeOptions decode_options() const { return DecodeOptions{flags.token_decoder_input, {}}; }
};

// ---------------------------------------------------------------------------
// tape-level loss construction (shared by training and the value wrappers)
// ---------------------------------------------------------------------------

// Softmax-at-temperature mix of embedding rows for one decoder hidden state.
Tape::Id repr_on_tape(Tape& tape, Tape::Id embedding, Tape::Id logits_row, double tau);

// 1 - cosine(a, b); zero-norm inputs yield a constant 1 (no gradient).
Tape::Id cosine_distance_node(Tape& tape, Tape::Id a_row, Tape::Id b_row);

// Sum of per-step cross-entropies against the keyword identifier; pad
// positions are masked out. Errors if every position is masked.
Tape::Id keyword_loss_on_tape(Tape& tape, TapeModel& model, const DecodeTrace& decode,
                              const KeywordIdentifier& target);

struct RefineExample {
    const std::vector<int>* query = nullptr;
    const std::vector<int>* positive = nullptr;
    std::vector<const std::vector<int>*> negatives;
};

struct RefineLossNodes {
    Tape::Id pair = -1;
    Tape::Id point = -1;
    Tape::Id total = -1;
};

RefineLossNodes refine_losses_on_tape(Tape& tape, TapeModel& model, const RefineExample& example,
                                      double tau, const TrainingConfig& cfg);

// ---------------------------------------------------------------------------
// value-level entry points (tests, diagnostics)
// ---------------------------------------------------------------------------

double loss_keyword(const ModelParams& params, const std::vector<int>& input_tokens,
                    const KeywordIdentifier& target, const DecodeOptions& options = {});
double loss_pair(const ModelParams& params, const RefineExample& example, double tau,
                 const TrainingConfig& cfg = {});
double loss_point(const ModelParams& params, const RefineExample& example,
                  const TrainingConfig& cfg = {});
double loss_total(const ModelParams& params, const RefineExample& example, double tau,
                  const TrainingConfig& cfg = {});

// Listwise softmax cross-entropy over raw scores, index 0 treated as the
// positive. Matches the tape computation bit for bit.
double pairwise_loss_from_scores(const std::vector<double>& scores);

std::vector<double> identifier_repr(const ModelParams& params, const std::vector<double>& hidden, double tau);

// ---------------------------------------------------------------------------
// gradients
// ---------------------------------------------------------------------------

// Adds tape gradients of the bound leaves into `grads` (same shape as the
// parameters), scaled. Untouched leaves contribute nothing.
void accumulate_gradients(const Tape& tape, const TapeModel& model, ModelParams& grads, double scale);

// Fails with the offending parameter block name when a gradient is NaN/inf.
void check_finite_gradients(const ModelParams& grads, long step);

// ---------------------------------------------------------------------------
// training
// ---------------------------------------------------------------------------

struct TrainingData {
    const Corpus* corpus = nullptr;
    const std::vector<Query>* queries = nullptr;
    const QrelSet* qrels = nullptr;
    const std::vector<KeywordIdentifier>* keyword_ids = nullptr;  // keyword phase only
};

struct RefineTraceRow {
    long step;
    int epoch;
    double tau;
    double pair_loss;
    double point_loss;
    double total_loss;
};

struct KeywordTraceRow {
    long step;
    double keyword_loss;
};

struct TrainResult {
    ModelParams params;
    std::vector<KeywordTraceRow> keyword_trace;
    std::vector<RefineTraceRow> refine_trace;
};

TrainResult train_keyword_phase(ModelParams start, const TrainingData& data,
                                const TrainingConfig& cfg, ExecutionPolicy policy);

// Refreshes the identifier trie at every epoch boundary and anneals tau per
// epoch. With flags.no_refinement the parameters pass through unchanged.
TrainResult train_refine_phase(ModelParams start, const TrainingData& data,
                               const TrainingConfig& cfg, ExecutionPolicy policy);

void write_keyword_trace(const std::vector<KeywordTraceRow>& trace, const std::string& path);
void write_refine_trace(const std::vector<RefineTraceRow>& trace, const std::string& path);

}  // namespace glen
