#pragma once

// The four toy-scale networks: encoder-decoder generator, encoder classifier,
// class-conditional LM, and the word-unit predictor. All share one vocabulary
// and the transformer blocks below (pre-norm, learned positions, per-head
// projection matrices so no reshape primitive is needed).

#include <functional>
#include <iostream>
#include <string>
#include <variant>
#include <vector>

#include "stylectrl/corpus.hpp"
#include "stylectrl/rng.hpp"
#include "stylectrl/tensor.hpp"

namespace stylectrl {

struct ModelConfig {
    int vocab_size = 0;
    int d_model = 64;
    int n_heads = 2;
    int n_layers_enc = 2;
    int n_layers_dec = 2;
    int max_len = 64;
    int style_count = 2;

    int head_dim() const { return d_model / n_heads; }
    int d_ff() const { return 2 * d_model; }

    void validate() const {
        if (d_model % n_heads != 0) throw ContractError("d_model must be divisible by n_heads");
        // BOS and EOS must be addressable; style tokens are checked where
        // they are actually embedded (CC-LM, label-controlled decoding)
        if (vocab_size <= kEos) throw ContractError("vocab_size too small for reserved ids");
        if (max_len < 2) throw ContractError("max_len must be at least 2");
    }
    void validate_with_style_tokens() const {
        validate();
        if (vocab_size < reserved_count(style_count))
            throw ContractError("vocab_size too small for style tokens");
    }

    nlohmann::json to_json() const {
        return {{"vocab_size", vocab_size}, {"d_model", d_model},
                {"n_heads", n_heads},       {"n_layers_enc", n_layers_enc},
                {"n_layers_dec", n_layers_dec}, {"max_len", max_len},
                {"style_count", style_count}};
    }
    static ModelConfig from_json(const nlohmann::json& j) {
        ModelConfig c;
        c.vocab_size = j.at("vocab_size");
        c.d_model = j.at("d_model");
        c.n_heads = j.at("n_heads");
        c.n_layers_enc = j.at("n_layers_enc");
        c.n_layers_dec = j.at("n_layers_dec");
        c.max_len = j.at("max_len");
        c.style_count = j.at("style_count");
        return c;
    }
};

using ParamVisitor = std::function<void(const std::string&, Tensor&)>;

namespace nn {

inline Tensor init_normal(Rng& rng, int rows, int cols, double std_dev = 0.02) {
    Tensor t = Tensor::zeros(rows, cols);
    for (std::size_t i = 0; i < t.size(); ++i)
        t.data()[i] = static_cast<float>(rng.gauss(0.0, std_dev));
    return t;
}

struct LayerNormParams {
    Tensor gain, bias;

    void init(int d) {
        gain = Tensor::zeros(1, d);
        for (std::size_t i = 0; i < gain.size(); ++i) gain.data()[i] = 1.0f;
        bias = Tensor::zeros(1, d);
    }
    Tensor forward(const Tensor& x) const { return layer_norm(x, gain, bias); }
    void visit(const std::string& prefix, const ParamVisitor& fn) {
        fn(prefix + ".gain", gain);
        fn(prefix + ".bias", bias);
    }
};

// Multi-head attention with one [d×dh] projection triple per head and a
// [dh×d] output projection per head summed into the residual width.
struct MultiHeadAttention {
    std::vector<Tensor> wq, wk, wv, wo;
    int head_dim = 0;

    void init(Rng& rng, int d_model, int n_heads) {
        head_dim = d_model / n_heads;
        for (int h = 0; h < n_heads; ++h) {
            wq.push_back(init_normal(rng, d_model, head_dim));
            wk.push_back(init_normal(rng, d_model, head_dim));
            wv.push_back(init_normal(rng, d_model, head_dim));
            wo.push_back(init_normal(rng, head_dim, d_model));
        }
    }

    // additive_mask, when defined, is a constant [len_q×len_k] of 0 / -1e9.
    Tensor forward(const Tensor& x_q, const Tensor& x_kv, const Tensor& additive_mask) const {
        Tensor out;
        const float inv_sqrt = 1.0f / std::sqrt(static_cast<float>(head_dim));
        for (std::size_t h = 0; h < wq.size(); ++h) {
            Tensor q = matmul(x_q, wq[h]);
            Tensor k = matmul(x_kv, wk[h]);
            Tensor v = matmul(x_kv, wv[h]);
            Tensor scores = scale(matmul_nt(q, k), inv_sqrt);
            if (additive_mask.defined()) scores = add(scores, additive_mask);
            Tensor mixed = matmul(softmax(scores), v);
            Tensor proj = matmul(mixed, wo[h]);
            out = out.defined() ? add(out, proj) : proj;
        }
        return out;
    }

    void visit(const std::string& prefix, const ParamVisitor& fn) {
        for (std::size_t h = 0; h < wq.size(); ++h) {
            const std::string hp = prefix + ".h" + std::to_string(h);
            fn(hp + ".wq", wq[h]);
            fn(hp + ".wk", wk[h]);
            fn(hp + ".wv", wv[h]);
            fn(hp + ".wo", wo[h]);
        }
    }
};

struct FeedForward {
    Tensor w1, b1, w2, b2;

    void init(Rng& rng, int d_model, int d_ff) {
        w1 = init_normal(rng, d_model, d_ff);
        b1 = Tensor::zeros(1, d_ff);
        w2 = init_normal(rng, d_ff, d_model);
        b2 = Tensor::zeros(1, d_model);
    }
    Tensor forward(const Tensor& x) const {
        return add_rowvec(matmul(relu(add_rowvec(matmul(x, w1), b1)), w2), b2);
    }
    void visit(const std::string& prefix, const ParamVisitor& fn) {
        fn(prefix + ".w1", w1);
        fn(prefix + ".b1", b1);
        fn(prefix + ".w2", w2);
        fn(prefix + ".b2", b2);
    }
};

struct EncoderLayer {
    MultiHeadAttention attn;
    FeedForward ff;
    LayerNormParams ln1, ln2;

    void init(Rng& rng, const ModelConfig& cfg) {
        attn.init(rng, cfg.d_model, cfg.n_heads);
        ff.init(rng, cfg.d_model, cfg.d_ff());
        ln1.init(cfg.d_model);
        ln2.init(cfg.d_model);
    }
    Tensor forward(const Tensor& x, const Tensor& mask = Tensor()) const {
        Tensor a = ln1.forward(x);
        Tensor h = add(x, attn.forward(a, a, mask));
        return add(h, ff.forward(ln2.forward(h)));
    }
    void visit(const std::string& prefix, const ParamVisitor& fn) {
        attn.visit(prefix + ".attn", fn);
        ff.visit(prefix + ".ff", fn);
        ln1.visit(prefix + ".ln1", fn);
        ln2.visit(prefix + ".ln2", fn);
    }
};

struct DecoderLayer {
    MultiHeadAttention self_attn, cross_attn;
    FeedForward ff;
    LayerNormParams ln1, ln2, ln3;

    void init(Rng& rng, const ModelConfig& cfg) {
        self_attn.init(rng, cfg.d_model, cfg.n_heads);
        cross_attn.init(rng, cfg.d_model, cfg.n_heads);
        ff.init(rng, cfg.d_model, cfg.d_ff());
        ln1.init(cfg.d_model);
        ln2.init(cfg.d_model);
        ln3.init(cfg.d_model);
    }
    Tensor forward(const Tensor& x, const Tensor& enc, const Tensor& causal) const {
        Tensor a = ln1.forward(x);
        Tensor h = add(x, self_attn.forward(a, a, causal));
        h = add(h, cross_attn.forward(ln2.forward(h), enc, Tensor()));
        return add(h, ff.forward(ln3.forward(h)));
    }
    void visit(const std::string& prefix, const ParamVisitor& fn) {
        self_attn.visit(prefix + ".self", fn);
        cross_attn.visit(prefix + ".cross", fn);
        ff.visit(prefix + ".ff", fn);
        ln1.visit(prefix + ".ln1", fn);
        ln2.visit(prefix + ".ln2", fn);
        ln3.visit(prefix + ".ln3", fn);
    }
};

inline Tensor causal_mask(int len) {
    Tensor m = Tensor::zeros(len, len);
    for (int i = 0; i < len; ++i)
        for (int j = i + 1; j < len; ++j) m.at(i, j) = -1e9f;
    return m;
}

inline Tensor positions(const Tensor& pos_table, int len) {
    return row_slice(pos_table, 0, len);
}

}  // namespace nn

// Either a hard token id or a soft [1×V] distribution per position.
using MixedToken = std::variant<int, Tensor>;
using MixedSequence = std::vector<MixedToken>;

namespace nn {

// Embeds a mixed sequence: gathers hard ids, matmuls soft distributions.
inline Tensor embed_mixed(const MixedSequence& seq, const Tensor& table) {
    std::vector<Tensor> rows;
    std::vector<int> pending;  // contiguous run of hard ids
    auto flush = [&]() {
        if (!pending.empty()) {
            rows.push_back(embedding(pending, table));
            pending.clear();
        }
    };
    for (const MixedToken& mt : seq) {
        if (std::holds_alternative<int>(mt)) {
            pending.push_back(std::get<int>(mt));
        } else {
            flush();
            rows.push_back(soft_embedding(std::get<Tensor>(mt), table));
        }
    }
    flush();
    if (rows.size() == 1) return rows[0];
    return concat_rows(rows);
}

}  // namespace nn

// Truncates a sequence that exceeds the positional table, warning once per
// call site rather than failing; decode-time prefixes still error.
inline std::vector<int> clamp_len(std::vector<int> ids, int max_len, const char* what) {
    if (static_cast<int>(ids.size()) > max_len) {
        std::cerr << "[stylectrl] warning: " << what << " length " << ids.size()
                  << " exceeds max_len " << max_len << ", truncating\n";
        ids.resize(static_cast<std::size_t>(max_len));
    }
    return ids;
}

inline std::vector<int> frame_source(const std::vector<int>& src, int max_len) {
    std::vector<int> framed;
    framed.reserve(src.size() + 2);
    framed.push_back(kBos);
    framed.insert(framed.end(), src.begin(), src.end());
    framed.push_back(kEos);
    return clamp_len(std::move(framed), max_len, "source");
}

// Final decoder-layer state at one step plus its induced distribution. o_t
// stays exposed for in-place adjustment; the distribution is recomputable.
struct DecoderStepState {
    Tensor o_t;   // [1×d]
    Tensor dist;  // [1×V], softmax(W_e o_t)
};

struct Seq2SeqModel {
    ModelConfig cfg;
    Tensor embed;  // [V×d]; also the output projection (weight tying)
    Tensor pos_enc, pos_dec;
    std::vector<nn::EncoderLayer> enc_layers;
    std::vector<nn::DecoderLayer> dec_layers;
    nn::LayerNormParams enc_ln, dec_ln;

    static Seq2SeqModel init(const ModelConfig& cfg, Rng& rng) {
        cfg.validate();
        Seq2SeqModel m;
        m.cfg = cfg;
        m.embed = nn::init_normal(rng, cfg.vocab_size, cfg.d_model);
        m.pos_enc = nn::init_normal(rng, cfg.max_len, cfg.d_model);
        m.pos_dec = nn::init_normal(rng, cfg.max_len, cfg.d_model);
        m.enc_layers.resize(static_cast<std::size_t>(cfg.n_layers_enc));
        for (auto& l : m.enc_layers) l.init(rng, cfg);
        m.dec_layers.resize(static_cast<std::size_t>(cfg.n_layers_dec));
        for (auto& l : m.dec_layers) l.init(rng, cfg);
        m.enc_ln.init(cfg.d_model);
        m.dec_ln.init(cfg.d_model);
        return m;
    }

    Tensor encode(const std::vector<int>& framed_src) const {
        std::vector<int> ids = clamp_len(framed_src, cfg.max_len, "source");
        Tensor x = add(embedding(ids, embed), nn::positions(pos_enc, static_cast<int>(ids.size())));
        for (const auto& l : enc_layers) x = l.forward(x);
        return enc_ln.forward(x);
    }

    // All final decoder-layer states for a prefix (used by teacher forcing).
    Tensor decoder_states(const std::vector<int>& prefix, const Tensor& enc) const {
        if (prefix.empty() || prefix[0] != kBos)
            throw ContractError("decoder prefix must start with BOS");
        if (static_cast<int>(prefix.size()) > cfg.max_len)
            throw ContractError("decoder prefix exceeds max_len");
        const int len = static_cast<int>(prefix.size());
        Tensor x = add(embedding(prefix, embed), nn::positions(pos_dec, len));
        Tensor causal = nn::causal_mask(len);
        for (const auto& l : dec_layers) x = l.forward(x, enc, causal);
        return dec_ln.forward(x);
    }

    Tensor logits_from_state(const Tensor& o) const { return matmul_nt(o, embed); }

    DecoderStepState decode_step(const std::vector<int>& prefix, const Tensor& enc) const {
        Tensor states = decoder_states(prefix, enc);
        DecoderStepState s;
        s.o_t = row_slice(states, states.rows() - 1, 1);
        s.dist = softmax(logits_from_state(s.o_t));
        return s;
    }

    void visit_params(const ParamVisitor& fn) {
        fn("embed", embed);
        fn("pos_enc", pos_enc);
        fn("pos_dec", pos_dec);
        for (std::size_t i = 0; i < enc_layers.size(); ++i)
            enc_layers[i].visit("enc.l" + std::to_string(i), fn);
        enc_ln.visit("enc.ln", fn);
        for (std::size_t i = 0; i < dec_layers.size(); ++i)
            dec_layers[i].visit("dec.l" + std::to_string(i), fn);
        dec_ln.visit("dec.ln", fn);
    }
};

struct ClassifierModel {
    ModelConfig cfg;
    Tensor embed, pos;
    std::vector<nn::EncoderLayer> layers;
    nn::LayerNormParams final_ln;
    Tensor w_s;  // [styles×d]

    static ClassifierModel init(const ModelConfig& cfg, Rng& rng) {
        cfg.validate();
        ClassifierModel m;
        m.cfg = cfg;
        m.embed = nn::init_normal(rng, cfg.vocab_size, cfg.d_model);
        m.pos = nn::init_normal(rng, cfg.max_len, cfg.d_model);
        m.layers.resize(static_cast<std::size_t>(cfg.n_layers_enc));
        for (auto& l : m.layers) l.init(rng, cfg);
        m.final_ln.init(cfg.d_model);
        m.w_s = nn::init_normal(rng, cfg.style_count, cfg.d_model);
        return m;
    }

    // softmax(W_s h_0) over the BOS-pooled state; differentiable through any
    // soft positions in the input.
    Tensor class_logits(const MixedSequence& input) const {
        if (input.empty() || !std::holds_alternative<int>(input[0]) ||
            std::get<int>(input[0]) != kBos)
            throw ContractError("classifier input must start with hard BOS");
        MixedSequence seq = input;
        if (static_cast<int>(seq.size()) > cfg.max_len) {
            std::cerr << "[stylectrl] warning: classifier input length " << seq.size()
                      << " exceeds max_len " << cfg.max_len << ", truncating\n";
            seq.resize(static_cast<std::size_t>(cfg.max_len));
        }
        Tensor x = add(nn::embed_mixed(seq, embed),
                       nn::positions(pos, static_cast<int>(seq.size())));
        for (const auto& l : layers) x = l.forward(x);
        Tensor h0 = row_slice(final_ln.forward(x), 0, 1);
        return matmul_nt(h0, w_s);
    }

    Tensor classify(const MixedSequence& input) const { return softmax(class_logits(input)); }

    std::vector<double> class_probs(const std::vector<int>& tokens) const {
        MixedSequence seq;
        for (int t : tokens) seq.emplace_back(t);
        Tensor p = classify(seq);
        std::vector<double> out;
        for (int j = 0; j < p.cols(); ++j) out.push_back(p.at(0, j));
        return out;
    }

    void visit_params(const ParamVisitor& fn) {
        fn("embed", embed);
        fn("pos", pos);
        for (std::size_t i = 0; i < layers.size(); ++i)
            layers[i].visit("enc.l" + std::to_string(i), fn);
        final_ln.visit("enc.ln", fn);
        fn("w_s", w_s);
    }
};

struct CcLmModel {
    ModelConfig cfg;
    Tensor embed, pos;  // output projection tied to embed
    std::vector<nn::EncoderLayer> layers;  // causal self-attention only
    nn::LayerNormParams final_ln;

    static CcLmModel init(const ModelConfig& cfg, Rng& rng) {
        cfg.validate_with_style_tokens();
        CcLmModel m;
        m.cfg = cfg;
        m.embed = nn::init_normal(rng, cfg.vocab_size, cfg.d_model);
        m.pos = nn::init_normal(rng, cfg.max_len, cfg.d_model);
        m.layers.resize(static_cast<std::size_t>(cfg.n_layers_dec));
        for (auto& l : m.layers) l.init(rng, cfg);
        m.final_ln.init(cfg.d_model);
        return m;
    }

    // Final states over [STYLE_z] + text, causal.
    Tensor states(const std::vector<int>& full) const {
        std::vector<int> ids = clamp_len(full, cfg.max_len, "cclm input");
        const int len = static_cast<int>(ids.size());
        Tensor x = add(embedding(ids, embed), nn::positions(pos, len));
        Tensor causal = nn::causal_mask(len);
        for (const auto& l : layers) x = l.forward(x, causal);
        return final_ln.forward(x);
    }

    Tensor logits(const Tensor& states_) const { return matmul_nt(states_, embed); }

    // Probability assigned to each realized token of text after its leading
    // BOS, conditioned on the prepended style token.
    std::vector<double> token_probs(const std::vector<int>& text, int z) const {
        if (text.empty() || text[0] != kBos) throw ContractError("cclm text must start with BOS");
        if (z < 0 || z >= cfg.style_count) throw ContractError("cclm style out of range");
        std::vector<int> full;
        full.push_back(style_token(z));
        full.insert(full.end(), text.begin(), text.end());
        Tensor lp = softmax(logits(states(full)), true);
        // row j of `full`'s states predicts full[j+1] = text[j]
        std::vector<double> out;
        const std::size_t usable = std::min(text.size(), static_cast<std::size_t>(lp.rows()));
        for (std::size_t j = 1; j < usable; ++j)
            out.push_back(std::exp(static_cast<double>(lp.at(static_cast<int>(j), text[j]))));
        return out;
    }

    // Next-token distribution given [STYLE_z] + prefix.
    Tensor next_token_dist(const std::vector<int>& prefix, int z) const {
        std::vector<int> full;
        full.push_back(style_token(z));
        full.insert(full.end(), prefix.begin(), prefix.end());
        Tensor s = states(full);
        return softmax(logits(row_slice(s, s.rows() - 1, 1)));
    }

    void visit_params(const ParamVisitor& fn) {
        fn("embed", embed);
        fn("pos", pos);
        for (std::size_t i = 0; i < layers.size(); ++i)
            layers[i].visit("lm.l" + std::to_string(i), fn);
        final_ln.visit("lm.ln", fn);
    }
};

struct WordUnitPredictorModel {
    ModelConfig cfg;
    Tensor embed, pos;
    std::vector<nn::EncoderLayer> layers;
    nn::LayerNormParams final_ln;
    nn::LayerNormParams res_ln;
    Tensor w_b1, w_b2;  // residual block
    Tensor w_r;         // [V×d]

    static WordUnitPredictorModel init(const ModelConfig& cfg, Rng& rng) {
        cfg.validate();
        WordUnitPredictorModel m;
        m.cfg = cfg;
        m.embed = nn::init_normal(rng, cfg.vocab_size, cfg.d_model);
        m.pos = nn::init_normal(rng, cfg.max_len, cfg.d_model);
        m.layers.resize(static_cast<std::size_t>(cfg.n_layers_enc));
        for (auto& l : m.layers) l.init(rng, cfg);
        m.final_ln.init(cfg.d_model);
        m.res_ln.init(cfg.d_model);
        m.w_b1 = nn::init_normal(rng, cfg.d_model, cfg.d_model);
        m.w_b2 = nn::init_normal(rng, cfg.d_model, cfg.d_model);
        m.w_r = nn::init_normal(rng, cfg.vocab_size, cfg.d_model);
        return m;
    }

    std::vector<int> build_input(const std::vector<int>& source,
                                 const std::vector<int>* prefix) const {
        std::vector<int> ids;
        ids.push_back(kBos);
        ids.insert(ids.end(), source.begin(), source.end());
        if (prefix) {
            ids.push_back(kSep);
            ids.insert(ids.end(), prefix->begin(), prefix->end());
        }
        ids.push_back(kEos);
        return clamp_len(std::move(ids), cfg.max_len, "predictor input");
    }

    // sigmoid(W_r R~) where R~ = R + W_b2 relu(W_b1 layer_norm(R)) and R is
    // the mean of all token states.
    Tensor unit_logits(const std::vector<int>& ids) const {
        Tensor x = add(embedding(ids, embed), nn::positions(pos, static_cast<int>(ids.size())));
        for (const auto& l : layers) x = l.forward(x);
        Tensor r = mean_rows(final_ln.forward(x));
        Tensor r_tilde = add(r, matmul(relu(matmul(res_ln.forward(r), w_b1)), w_b2));
        return matmul_nt(r_tilde, w_r);
    }

    Tensor predict(const std::vector<int>& source, const std::vector<int>* prefix = nullptr) const {
        return sigmoid(unit_logits(build_input(source, prefix)));
    }

    void visit_params(const ParamVisitor& fn) {
        fn("embed", embed);
        fn("pos", pos);
        for (std::size_t i = 0; i < layers.size(); ++i)
            layers[i].visit("enc.l" + std::to_string(i), fn);
        final_ln.visit("enc.ln", fn);
        res_ln.visit("res.ln", fn);
        fn("w_b1", w_b1);
        fn("w_b2", w_b2);
        fn("w_r", w_r);
    }
};

// ---------------------------------------------------------------------------
// shared parameter plumbing
// ---------------------------------------------------------------------------

template <class Model>
void set_requires_grad(Model& m, bool b) {
    m.visit_params([b](const std::string&, Tensor& t) { t.set_requires_grad(b); });
}

template <class Model>
void zero_grads(Model& m) {
    m.visit_params([](const std::string&, Tensor& t) { t.zero_grad(); });
}

template <class Model>
std::vector<Tensor> parameters(Model& m) {
    std::vector<Tensor> out;
    m.visit_params([&out](const std::string&, Tensor& t) { out.push_back(t); });
    return out;
}

}  // namespace stylectrl
