#include "glen/model.hpp"

#include <bit>
#include <cmath>
#include <cstring>
#include <sstream>

#include "glen/error.hpp"
#include "glen/io_util.hpp"
#include "glen/rng.hpp"

static_assert(std::endian::native == std::endian::little,
              "checkpoint format assumes a little-endian host");

namespace glen {

namespace {
constexpr char kCheckpointMagic[9] = "GLENCKP1";
constexpr double kRmsEps = 1e-6;
}  // namespace

void ModelConfig::validate() const {
    if (embed_dim < 2) fail("config", "embed_dim must be at least 2");
    if (vocab_size < 3) fail("config", "vocab_size must cover content tokens plus the two reserved ids");
    if (id_length < 1) fail("config", "id_length must be positive");
    if (enc_layers < 1 || dec_layers < 1) fail("config", "encoder and decoder need at least one layer");
}

namespace {

ModelParams allocate(const ModelConfig& config) {
    config.validate();
    int m = config.embed_dim;
    int f = config.ffn_dim();
    ModelParams p;
    p.config = config;
    p.embedding = Tensor(config.vocab_size, m);
    auto make_attn = [&]() { return AttentionParams{Tensor(m, m), Tensor(m, m), Tensor(m, m), Tensor(m, m)}; };
    auto make_ffn = [&]() { return FfnParams{Tensor(m, f), Tensor(1, f), Tensor(f, m), Tensor(1, m)}; };
    for (int l = 0; l < config.enc_layers; ++l) {
        p.encoder.push_back(EncoderLayerParams{Tensor(1, m), make_attn(), Tensor(1, m), make_ffn()});
    }
    p.enc_final_ln = Tensor(1, m);
    for (int l = 0; l < config.dec_layers; ++l) {
        p.decoder.push_back(DecoderLayerParams{Tensor(1, m), make_attn(), Tensor(1, m), make_attn(), Tensor(1, m), make_ffn()});
    }
    p.dec_final_ln = Tensor(1, m);
    return p;
}

bool is_norm_gain(const std::string& name) {
    return name.find("ln_") != std::string::npos || name == "enc_final_ln" || name == "dec_final_ln";
}

bool is_bias(const std::string& name) {
    return name.size() >= 3 && (name.compare(name.size() - 3, 3, ".b1") == 0 || name.compare(name.size() - 3, 3, ".b2") == 0);
}

}  // namespace

ModelParams init_params(const ModelConfig& config) {
    ModelParams p = allocate(config);
    Rng rng(mix_seed({config.seed, 0x494e4954ULL}));  // "INIT" stream
    double bound = 1.0 / std::sqrt(static_cast<double>(config.embed_dim));
    for_each_param(p, [&](const std::string& name, Tensor& t) {
        if (is_norm_gain(name)) {
            std::fill(t.v.begin(), t.v.end(), 1.0);
        } else if (is_bias(name)) {
            t.zero();
        } else {
            for (double& x : t.v) x = rng.uniform(-bound, bound);
        }
    });
    return p;
}

ModelParams zeros_like(const ModelParams& params) {
    ModelParams p = allocate(params.config);
    return p;
}

TapeModel TapeModel::bind(Tape& tape, const ModelParams& params) {
    TapeModel m;
    m.tape = &tape;
    m.params = &params;
    for_each_param(const_cast<ModelParams&>(params), [&](const std::string&, Tensor& t) {
        m.leaves.push_back(tape.leaf(&t));
    });
    std::size_t cur = 0;
    auto next = [&]() { return m.leaves[cur++]; };
    m.embedding = next();
    for (std::size_t l = 0; l < params.encoder.size(); ++l) {
        EncLayerIds ids;
        ids.ln_attn = next();
        ids.attn = {next(), next(), next(), next()};
        ids.ln_ffn = next();
        ids.ffn = {next(), next(), next(), next()};
        m.enc.push_back(ids);
    }
    m.enc_final_ln = next();
    for (std::size_t l = 0; l < params.decoder.size(); ++l) {
        DecLayerIds ids;
        ids.ln_self = next();
        ids.self_attn = {next(), next(), next(), next()};
        ids.ln_cross = next();
        ids.cross_attn = {next(), next(), next(), next()};
        ids.ln_ffn = next();
        ids.ffn = {next(), next(), next(), next()};
        m.dec.push_back(ids);
    }
    m.dec_final_ln = next();
    if (cur != m.leaves.size()) fail("state", "parameter binding mismatch");
    return m;
}

Tensor sinusoidal_positions(int count, int dim) {
    Tensor pos(count, dim);
    for (int p = 0; p < count; ++p) {
        double* row = pos.row_ptr(p);
        for (int j = 0; j < dim; j += 2) {
            double freq = std::pow(10000.0, -static_cast<double>(j) / dim);
            row[j] = std::sin(p * freq);
            if (j + 1 < dim) row[j + 1] = std::cos(p * freq);
        }
    }
    return pos;
}

namespace {

Tensor row_of(const Tensor& t, int r) {
    Tensor out(1, t.cols);
    const double* src = t.row_ptr(r);
    for (int j = 0; j < t.cols; ++j) out.v[j] = src[j];
    return out;
}

Tape::Id attention_block(Tape& t, Tape::Id x_normed, Tape::Id keys_src, const AttentionIds& w, double scale) {
    Tape::Id q = t.matmul(x_normed, w.wq);
    Tape::Id k = t.matmul(keys_src, w.wk);
    Tape::Id v = t.matmul(keys_src, w.wv);
    Tape::Id scores = t.scale(t.matmul_nt(q, k), scale);
    Tape::Id weights = t.softmax_rows(scores);
    return t.matmul(t.matmul(weights, v), w.wo);
}

// Cross-attention with pre-projected keys/values (hoisted out of the step loop).
Tape::Id cross_block(Tape& t, Tape::Id x_normed, Tape::Id keys, Tape::Id values, const AttentionIds& w, double scale) {
    Tape::Id q = t.matmul(x_normed, w.wq);
    Tape::Id scores = t.scale(t.matmul_nt(q, keys), scale);
    Tape::Id weights = t.softmax_rows(scores);
    return t.matmul(t.matmul(weights, values), w.wo);
}

Tape::Id ffn_block(Tape& t, Tape::Id x_normed, const FfnIds& w) {
    Tape::Id h = t.gelu(t.add_rowvec(t.matmul(x_normed, w.w1), w.b1));
    return t.add_rowvec(t.matmul(h, w.w2), w.b2);
}

}  // namespace

Tape::Id encode_on_tape(TapeModel& model, const std::vector<int>& tokens) {
    if (tokens.empty()) fail("state", "encode: empty token sequence");
    Tape& t = *model.tape;
    const ModelConfig& cfg = model.params->config;
    for (int tok : tokens) {
        if (tok < 0 || tok >= cfg.vocab_size) fail("state", "encode: token id out of range");
    }
    double m_sqrt = std::sqrt(static_cast<double>(cfg.embed_dim));
    double att_scale = 1.0 / m_sqrt;

    Tape::Id x = t.add_const(t.scale(t.rows(model.embedding, tokens), m_sqrt),
                             sinusoidal_positions(static_cast<int>(tokens.size()), cfg.embed_dim));
    for (const auto& layer : model.enc) {
        Tape::Id normed = t.rmsnorm(x, layer.ln_attn, kRmsEps);
        x = t.add(x, attention_block(t, normed, normed, layer.attn, att_scale));
        Tape::Id f = ffn_block(t, t.rmsnorm(x, layer.ln_ffn, kRmsEps), layer.ffn);
        x = t.add(x, f);
    }
    return t.rmsnorm(x, model.enc_final_ln, kRmsEps);
}

int argmax_content(const Tensor& logits_row, int content_tokens) {
    int best = 0;
    double best_v = logits_row.v[0];
    for (int j = 1; j < content_tokens; ++j) {
        if (logits_row.v[static_cast<std::size_t>(j)] > best_v) {
            best_v = logits_row.v[static_cast<std::size_t>(j)];
            best = j;
        }
    }
    return best;
}

DecodeTrace decode_on_tape(TapeModel& model, Tape::Id memory, const DecodeOptions& options) {
    Tape& t = *model.tape;
    const ModelConfig& cfg = model.params->config;
    int n = cfg.id_length;
    int m = cfg.embed_dim;
    double m_sqrt = std::sqrt(static_cast<double>(m));
    double att_scale = 1.0 / m_sqrt;
    Tensor pos = sinusoidal_positions(n, m);

    // Cross-attention keys/values depend only on the memory; compute once.
    std::vector<std::pair<Tape::Id, Tape::Id>> cross_kv;
    for (const auto& layer : model.dec) {
        cross_kv.emplace_back(t.matmul(memory, layer.cross_attn.wk), t.matmul(memory, layer.cross_attn.wv));
    }

    DecodeTrace trace;
    std::vector<Tape::Id> fed;  // decoder input rows, one per emitted step
    for (int step = 0; step < n; ++step) {
        Tape::Id base;
        if (step == 0) {
            base = t.scale(t.row(model.embedding, cfg.start_id()), m_sqrt);
        } else if (options.token_input) {
            int tok = trace.emitted[static_cast<std::size_t>(step - 1)];
            if (static_cast<std::size_t>(step - 1) < options.forced_tokens.size() &&
                options.forced_tokens[static_cast<std::size_t>(step - 1)] >= 0) {
                tok = options.forced_tokens[static_cast<std::size_t>(step - 1)];
            }
            base = t.scale(t.row(model.embedding, tok), m_sqrt);
        } else {
            base = trace.hidden[static_cast<std::size_t>(step - 1)];
        }
        fed.push_back(t.add_const(base, row_of(pos, step)));

        Tape::Id x = fed.size() == 1 ? fed[0] : t.concat_rows(fed);
        for (std::size_t l = 0; l < model.dec.size(); ++l) {
            const auto& layer = model.dec[l];
            Tape::Id normed = t.rmsnorm(x, layer.ln_self, kRmsEps);
            x = t.add(x, attention_block(t, normed, normed, layer.self_attn, att_scale));
            x = t.add(x, cross_block(t, t.rmsnorm(x, layer.ln_cross, kRmsEps), cross_kv[l].first, cross_kv[l].second,
                                     layer.cross_attn, att_scale));
            x = t.add(x, ffn_block(t, t.rmsnorm(x, layer.ln_ffn, kRmsEps), layer.ffn));
        }
        Tape::Id hidden = t.row(t.rmsnorm(x, model.dec_final_ln, kRmsEps), step);
        Tape::Id logits = t.matmul_nt(hidden, model.embedding);
        trace.hidden.push_back(hidden);
        trace.logits.push_back(logits);
        trace.emitted.push_back(argmax_content(t.val(logits), cfg.content_tokens()));
    }
    return trace;
}

ForwardResult run_model(const ModelParams& params, const std::vector<int>& tokens, const DecodeOptions& options) {
    Tape tape;
    TapeModel model = TapeModel::bind(tape, params);
    Tape::Id memory = encode_on_tape(model, tokens);
    DecodeTrace trace = decode_on_tape(model, memory, options);

    const ModelConfig& cfg = params.config;
    ForwardResult out;
    for (int step = 0; step < cfg.id_length; ++step) {
        const Tensor& h = tape.val(trace.hidden[static_cast<std::size_t>(step)]);
        const Tensor& l = tape.val(trace.logits[static_cast<std::size_t>(step)]);
        out.hidden.push_back(h.v);
        out.logits.push_back(l.v);

        double mx = l.v[0];
        for (double x : l.v) mx = std::max(mx, x);
        double sum = 0.0;
        for (double x : l.v) sum += std::exp(x - mx);
        double lse = mx + std::log(sum);
        std::vector<double> lp(l.v.size());
        for (std::size_t j = 0; j < l.v.size(); ++j) lp[j] = l.v[j] - lse;
        out.log_probs.push_back(std::move(lp));

        int z = trace.emitted[static_cast<std::size_t>(step)];
        out.identifier.push_back(z);
        const double* erow = params.embedding.row_ptr(z);
        double w = 0.0;
        for (int j = 0; j < cfg.embed_dim; ++j) w += h.v[static_cast<std::size_t>(j)] * erow[j];
        out.weights.push_back(w);
    }
    return out;
}

// ---------------------------------------------------------------------------
// checkpoint io
// ---------------------------------------------------------------------------

void save_checkpoint(const ModelParams& params, const std::string& path) {
    std::ostringstream buf;
    buf.write(kCheckpointMagic, 8);
    buf << "embed_dim=" << params.config.embed_dim << " vocab_size=" << params.config.vocab_size
        << " id_length=" << params.config.id_length << " enc_layers=" << params.config.enc_layers
        << " dec_layers=" << params.config.dec_layers << " seed=" << params.config.seed << "\n";
    for_each_param(const_cast<ModelParams&>(params), [&](const std::string&, Tensor& t) {
        buf.write(reinterpret_cast<const char*>(t.v.data()), static_cast<std::streamsize>(t.v.size() * sizeof(double)));
    });
    atomic_write_file(path, buf.str());
}

ModelParams load_checkpoint(const std::string& path) {
    std::string bytes = read_file(path);
    if (bytes.size() < 9 || std::memcmp(bytes.data(), kCheckpointMagic, 8) != 0) {
        fail("format", "not a model checkpoint (bad magic): " + path);
    }
    std::size_t nl = bytes.find('\n', 8);
    if (nl == std::string::npos) fail("format", "checkpoint header line missing: " + path);
    std::istringstream header(bytes.substr(8, nl - 8));
    ModelConfig config;
    std::string field;
    int seen = 0;
    while (header >> field) {
        auto eq = field.find('=');
        if (eq == std::string::npos) fail("format", "malformed checkpoint header: " + path);
        std::string key = field.substr(0, eq);
        std::string value = field.substr(eq + 1);
        try {
            if (key == "embed_dim") config.embed_dim = std::stoi(value);
            else if (key == "vocab_size") config.vocab_size = std::stoi(value);
            else if (key == "id_length") config.id_length = std::stoi(value);
            else if (key == "enc_layers") config.enc_layers = std::stoi(value);
            else if (key == "dec_layers") config.dec_layers = std::stoi(value);
            else if (key == "seed") config.seed = std::stoull(value);
            else fail("format", "unknown checkpoint header field '" + key + "'");
        } catch (const Error&) {
            throw;
        } catch (const std::exception&) {
            fail("format", "bad checkpoint header value for '" + key + "'");
        }
        ++seen;
    }
    if (seen != 6) fail("format", "incomplete checkpoint header: " + path);

    ModelParams params = allocate(config);
    std::size_t offset = nl + 1;
    bool short_file = false;
    for_each_param(params, [&](const std::string&, Tensor& t) {
        std::size_t want = t.v.size() * sizeof(double);
        if (offset + want > bytes.size()) {
            short_file = true;
            return;
        }
        std::memcpy(t.v.data(), bytes.data() + offset, want);
        offset += want;
    });
    if (short_file) fail("format", "checkpoint truncated: " + path);
    if (offset != bytes.size()) fail("format", "checkpoint has trailing bytes: " + path);
    return params;
}

}  // namespace glen
