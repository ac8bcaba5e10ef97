#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "glen/autograd.hpp"
#include "glen/tensor.hpp"

namespace glen {

// The two reserved token ids sit at the top of the vocabulary: padding at
// vocab_size - 2, decoder start at vocab_size - 1. Content tokens are below.
struct ModelConfig {
    int embed_dim = 32;
    int vocab_size = 0;
    int id_length = 3;
    int enc_layers = 2;
    int dec_layers = 2;
    std::uint64_t seed = 42;

    int ffn_dim() const { return 4 * embed_dim; }
    int pad_id() const { return vocab_size - 2; }
    int start_id() const { return vocab_size - 1; }
    int content_tokens() const { return vocab_size - 2; }
    void validate() const;
    bool operator==(const ModelConfig&) const = default;
};

struct AttentionParams {
    Tensor wq, wk, wv, wo;  // embed_dim x embed_dim
};

struct FfnParams {
    Tensor w1;  // embed_dim x ffn_dim
    Tensor b1;  // 1 x ffn_dim
    Tensor w2;  // ffn_dim x embed_dim
    Tensor b2;  // 1 x embed_dim
};

struct EncoderLayerParams {
    Tensor ln_attn;  // 1 x embed_dim rmsnorm gain
    AttentionParams attn;
    Tensor ln_ffn;
    FfnParams ffn;
};

struct DecoderLayerParams {
    Tensor ln_self;
    AttentionParams self_attn;
    Tensor ln_cross;
    AttentionParams cross_attn;
    Tensor ln_ffn;
    FfnParams ffn;
};

// One parameter set serves both roles: documents are encoded/decoded with it
// during identifier assignment and queries during retrieval. The embedding
// matrix is stored once and used for input lookup and output projection.
struct ModelParams {
    ModelConfig config;
    Tensor embedding;  // vocab_size x embed_dim
    std::vector<EncoderLayerParams> encoder;
    Tensor enc_final_ln;
    std::vector<DecoderLayerParams> decoder;
    Tensor dec_final_ln;
};

// Weights uniform in [-1/sqrt(embed_dim), 1/sqrt(embed_dim)] drawn in
// enumeration order; norm gains start at 1, biases at 0.
ModelParams init_params(const ModelConfig& config);
ModelParams zeros_like(const ModelParams& params);

// Fixed enumeration order; defines the checkpoint layout and the gradient
// block naming. Fn: void(const std::string& name, Tensor&).
template <typename Params, typename Fn>
void for_each_param(Params& p, Fn&& fn) {
    fn("embedding", p.embedding);
    for (std::size_t l = 0; l < p.encoder.size(); ++l) {
        auto& layer = p.encoder[l];
        std::string prefix = "enc" + std::to_string(l) + ".";
        fn(prefix + "ln_attn", layer.ln_attn);
        fn(prefix + "attn.wq", layer.attn.wq);
        fn(prefix + "attn.wk", layer.attn.wk);
        fn(prefix + "attn.wv", layer.attn.wv);
        fn(prefix + "attn.wo", layer.attn.wo);
        fn(prefix + "ln_ffn", layer.ln_ffn);
        fn(prefix + "ffn.w1", layer.ffn.w1);
        fn(prefix + "ffn.b1", layer.ffn.b1);
        fn(prefix + "ffn.w2", layer.ffn.w2);
        fn(prefix + "ffn.b2", layer.ffn.b2);
    }
    fn("enc_final_ln", p.enc_final_ln);
    for (std::size_t l = 0; l < p.decoder.size(); ++l) {
        auto& layer = p.decoder[l];
        std::string prefix = "dec" + std::to_string(l) + ".";
        fn(prefix + "ln_self", layer.ln_self);
        fn(prefix + "self.wq", layer.self_attn.wq);
        fn(prefix + "self.wk", layer.self_attn.wk);
        fn(prefix + "self.wv", layer.self_attn.wv);
        fn(prefix + "self.wo", layer.self_attn.wo);
        fn(prefix + "ln_cross", layer.ln_cross);
        fn(prefix + "cross.wq", layer.cross_attn.wq);
        fn(prefix + "cross.wk", layer.cross_attn.wk);
        fn(prefix + "cross.wv", layer.cross_attn.wv);
        fn(prefix + "cross.wo", layer.cross_attn.wo);
        fn(prefix + "ln_ffn", layer.ln_ffn);
        fn(prefix + "ffn.w1", layer.ffn.w1);
        fn(prefix + "ffn.b1", layer.ffn.b1);
        fn(prefix + "ffn.w2", layer.ffn.w2);
        fn(prefix + "ffn.b2", layer.ffn.b2);
    }
    fn("dec_final_ln", p.dec_final_ln);
}

// Parameters bound to tape leaves. `leaves` follows for_each_param order (for
// gradient readback); the structured ids mirror the parameter structs.
struct AttentionIds {
    Tape::Id wq, wk, wv, wo;
};
struct FfnIds {
    Tape::Id w1, b1, w2, b2;
};
struct EncLayerIds {
    Tape::Id ln_attn;
    AttentionIds attn;
    Tape::Id ln_ffn;
    FfnIds ffn;
};
struct DecLayerIds {
    Tape::Id ln_self;
    AttentionIds self_attn;
    Tape::Id ln_cross;
    AttentionIds cross_attn;
    Tape::Id ln_ffn;
    FfnIds ffn;
};

struct TapeModel {
    Tape* tape = nullptr;
    const ModelParams* params = nullptr;
    std::vector<Tape::Id> leaves;
    Tape::Id embedding = -1;
    std::vector<EncLayerIds> enc;
    Tape::Id enc_final_ln = -1;
    std::vector<DecLayerIds> dec;
    Tape::Id dec_final_ln = -1;

    static TapeModel bind(Tape& tape, const ModelParams& params);
};

struct DecodeOptions {
    // Default: the raw hidden state of the previous step is fed back as the
    // next decoder input. When token_input is set, the embedding of the
    // emitted (or forced) previous token is fed instead.
    bool token_input = false;
    std::vector<int> forced_tokens;
};

struct DecodeTrace {
    std::vector<Tape::Id> hidden;  // id_length rows, 1 x embed_dim each
    std::vector<Tape::Id> logits;  // id_length rows, 1 x vocab_size each
    std::vector<int> emitted;      // content-token argmax per step
};

// Embeds tokens (scaled by sqrt(embed_dim)) plus sinusoidal positions,
// applies the encoder stack, returns the memory node. Errors on empty input.
Tape::Id encode_on_tape(TapeModel& model, const std::vector<int>& tokens);

DecodeTrace decode_on_tape(TapeModel& model, Tape::Id memory, const DecodeOptions& options = {});

// Ties from equal logits resolve to the lowest token id.
int argmax_content(const Tensor& logits_row, int content_tokens);

// Value-level forward (no gradient use): encode + decode + per-step softmax.
struct ForwardResult {
    std::vector<std::vector<double>> hidden;     // id_length x embed_dim
    std::vector<std::vector<double>> logits;     // id_length x vocab_size
    std::vector<std::vector<double>> log_probs;  // id_length x vocab_size, rows logsumexp to 0
    std::vector<int> identifier;                 // emitted content tokens
    std::vector<double> weights;                 // w_t = hidden_t . embedding[z_t]
};

ForwardResult run_model(const ModelParams& params, const std::vector<int>& tokens,
                        const DecodeOptions& options = {});

Tensor sinusoidal_positions(int count, int dim);

// Binary checkpoint: 8-byte magic, one UTF-8 header line with the config,
// then parameter blocks as little-endian float64 in enumeration order.
// Writes are atomic (temp file + rename).
void save_checkpoint(const ModelParams& params, const std::string& path);
ModelParams load_checkpoint(const std::string& path);

}  // namespace glen
