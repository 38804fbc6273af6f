#include "tsf/model.hpp"

#include <cmath>

namespace tsf {

void ModelConfig::validate() const {
    if (d_model < 2 || d_model % 2 != 0)
        throw ConfigError("d_model must be even and >= 2, got " + std::to_string(d_model));
    if (window < 4) throw ConfigError("window must be >= 4, got " + std::to_string(window));
    if (d_input < 1) throw ConfigError("d_input must be >= 1");
    if (heads < 1) throw ConfigError("heads must be >= 1");
    if (d_model % heads != 0)
        throw ConfigError("heads must divide d_model (" + std::to_string(heads) + " vs " +
                          std::to_string(d_model) + ")");
    if (target_columns.empty()) throw ConfigError("target_columns must be non-empty");
    for (int c : target_columns)
        if (c < 0 || c >= d_input)
            throw ConfigError("target column " + std::to_string(c) + " outside d_input " +
                              std::to_string(d_input));
    if (dropout < 0.0 || dropout >= 1.0)
        throw ConfigError("dropout must be in [0, 1), got " + std::to_string(dropout));
    if (encoder_layers < 1 || decoder_layers < 1)
        throw ConfigError("encoder/decoder layer counts must be >= 1");
}

void ModelState::zero_grads() {
    for (auto& [name, t] : params) t.zero_grad();
}

const Tensor* ModelState::find_param(const std::string& name) const {
    for (const auto& [n, t] : params)
        if (n == name) return &t;
    return nullptr;
}

namespace {

constexpr int kConvKernels = 16;
constexpr int kLstm1Hidden = 32;

struct Builder {
    ModelState& s;
    std::mt19937_64& rng;

    Tensor glorot(const std::string& name, int rows, int cols) {
        Tensor t(rows, cols, true);
        double limit = std::sqrt(6.0 / (rows + cols));
        std::uniform_real_distribution<double> u(-limit, limit);
        for (auto& x : t.data()) x = u(rng);
        s.params.emplace_back(name, t);
        return t;
    }

    Tensor constant(const std::string& name, int rows, int cols, double value) {
        Tensor t = Tensor::full(rows, cols, value);
        t.set_requires_grad(true);
        s.params.emplace_back(name, t);
        return t;
    }

    NeighborAttentionParams neighbor_attention(const std::string& prefix, int d_model, int d_attn,
                                               int heads) {
        NeighborAttentionParams p;
        p.heads = heads;
        p.d_attn = d_attn;
        for (int h = 0; h < heads; ++h) {
            std::string hp = prefix + ".h" + std::to_string(h);
            p.Wq.push_back(glorot(hp + ".Wq", d_model, d_attn));
            p.Wk.push_back(glorot(hp + ".Wk", d_model, d_attn));
            p.Wv.push_back(glorot(hp + ".Wv", d_model, d_model));
        }
        p.Wo = glorot(prefix + ".Wo", heads * d_model, d_model);
        return p;
    }

    SlidingFusionParams fusion(const std::string& prefix, int k, int n, bool per_timestep) {
        SlidingFusionParams p;
        p.stack_height = k;
        p.per_timestep = per_timestep;
        int count = per_timestep ? n : 1;
        for (int i = 0; i < count; ++i) {
            std::string name = per_timestep ? prefix + ".W" + std::to_string(i) : prefix + ".W";
            p.W.push_back(glorot(name, k, 1));
        }
        return p;
    }

    LstmParams lstm(const std::string& prefix, int d_in, int d_hidden) {
        LstmParams p;
        p.d_in = d_in;
        p.d_hidden = d_hidden;
        p.Wxi = glorot(prefix + ".Wxi", d_in, d_hidden);
        p.Whi = glorot(prefix + ".Whi", d_hidden, d_hidden);
        p.bi = constant(prefix + ".bi", 1, d_hidden, 0.0);
        p.Wxf = glorot(prefix + ".Wxf", d_in, d_hidden);
        p.Whf = glorot(prefix + ".Whf", d_hidden, d_hidden);
        p.bf = constant(prefix + ".bf", 1, d_hidden, 1.0); // forget gate open at init
        p.Wxg = glorot(prefix + ".Wxg", d_in, d_hidden);
        p.Whg = glorot(prefix + ".Whg", d_hidden, d_hidden);
        p.bg = constant(prefix + ".bg", 1, d_hidden, 0.0);
        p.Wxo = glorot(prefix + ".Wxo", d_in, d_hidden);
        p.Who = glorot(prefix + ".Who", d_hidden, d_hidden);
        p.bo = constant(prefix + ".bo", 1, d_hidden, 0.0);
        return p;
    }

    ResidualBlockParams residual(const std::string& prefix, int stride, int d_model, double dropout) {
        ResidualBlockParams p;
        p.stride = stride;
        p.dropout_rate = dropout;
        for (int j = 0; j < kConvKernels; ++j)
            p.kernels.push_back(glorot(prefix + ".conv.k" + std::to_string(j), stride, d_model));
        p.conv_bias = constant(prefix + ".conv.bias", 1, kConvKernels, 0.0);
        p.lstm1 = lstm(prefix + ".lstm1", kConvKernels, kLstm1Hidden);
        p.lstm2 = lstm(prefix + ".lstm2", kLstm1Hidden, d_model);
        return p;
    }

    MhaParams mha(const std::string& prefix, int d_model, int heads) {
        MhaParams p;
        p.heads = heads;
        p.head_dim = d_model / heads;
        for (int h = 0; h < heads; ++h) {
            std::string hp = prefix + ".h" + std::to_string(h);
            p.Wq.push_back(glorot(hp + ".Wq", d_model, p.head_dim));
            p.Wk.push_back(glorot(hp + ".Wk", d_model, p.head_dim));
            p.Wv.push_back(glorot(hp + ".Wv", d_model, p.head_dim));
        }
        p.Wo = glorot(prefix + ".Wo", d_model, d_model);
        return p;
    }

    FeedForwardParams ffn(const std::string& prefix, int d_model, int width) {
        FeedForwardParams p;
        p.W1 = glorot(prefix + ".W1", d_model, width);
        p.b1 = constant(prefix + ".b1", 1, width, 0.0);
        p.W2 = glorot(prefix + ".W2", width, d_model);
        p.b2 = constant(prefix + ".b2", 1, d_model, 0.0);
        return p;
    }

    LayerNormParams layer_norm(const std::string& prefix, int d_model) {
        LayerNormParams p;
        p.gain = constant(prefix + ".gain", 1, d_model, 1.0);
        p.bias = constant(prefix + ".bias", 1, d_model, 0.0);
        return p;
    }
};

Tensor mha_forward(Graph& g, const Tensor& xq, const Tensor& xkv, const MhaParams& p, bool causal) {
    std::vector<Tensor> heads;
    heads.reserve(p.heads);
    Tensor mask;
    if (causal) {
        mask = Tensor::zeros(xq.rows(), xkv.rows());
        for (int r = 0; r < mask.rows(); ++r)
            for (int c = r + 1; c < mask.cols(); ++c)
                mask.at(r, c) = -1e30;
    }
    for (int h = 0; h < p.heads; ++h) {
        Tensor q = matmul(g, xq, p.Wq[h]);
        Tensor k = matmul(g, xkv, p.Wk[h]);
        Tensor v = matmul(g, xkv, p.Wv[h]);
        Tensor logits = scale(g, matmul(g, q, transpose(g, k)), 1.0 / std::sqrt(double(p.head_dim)));
        if (causal) logits = add(g, logits, mask);
        heads.push_back(matmul(g, softmax_rows(g, logits), v));
    }
    Tensor joined = heads.size() == 1 ? heads[0] : concat_cols(g, heads);
    return matmul(g, joined, p.Wo);
}

Tensor ffn_forward(Graph& g, const Tensor& x, const FeedForwardParams& p) {
    Tensor h = relu(g, add_rowvec(g, matmul(g, x, p.W1), p.b1));
    return add_rowvec(g, matmul(g, h, p.W2), p.b2);
}

Tensor sublayer_norm(Graph& g, const Tensor& x, const Tensor& sub, const LayerNormParams& ln) {
    return layer_norm(g, add(g, x, sub), ln.gain, ln.bias);
}

/// Stacks each row of x `times` consecutive copies: n x d -> (times*n) x d.
Tensor replicate_rows_blockwise(Graph& g, const Tensor& x, int times) {
    std::vector<Tensor> blocks;
    blocks.reserve(x.rows());
    for (int t = 0; t < x.rows(); ++t) {
        Tensor row = slice_rows(g, x, t, 1);
        std::vector<Tensor> copies(times, row);
        blocks.push_back(concat_rows(g, copies));
    }
    return concat_rows(g, blocks);
}

/// Interleaves rows of a and b per time step: two n x d -> (2n) x d.
Tensor interleave_rows(Graph& g, const Tensor& a, const Tensor& b) {
    std::vector<Tensor> blocks;
    blocks.reserve(a.rows());
    for (int t = 0; t < a.rows(); ++t)
        blocks.push_back(concat_rows(g, {slice_rows(g, a, t, 1), slice_rows(g, b, t, 1)}));
    return concat_rows(g, blocks);
}

} // namespace

ModelState build_model(const ModelConfig& config, std::mt19937_64& rng) {
    config.validate();
    ModelState s;
    s.config = config;
    Builder b{s, rng};

    int d_in = config.d_input;
    int dm = config.d_model;
    int da = config.resolved_d_attn();
    int n = config.n();

    // ablation flags drop the parameter groups they disable
    s.embed_center = b.glorot("embed.center", d_in, dm);
    if (!config.ablate_diff_attention) {
        s.embed_forward = b.glorot("embed.forward", d_in, dm);
        s.embed_backward = b.glorot("embed.backward", d_in, dm);
        s.embed_diff_forward = b.glorot("embed.diff_forward", d_in, dm);
        s.embed_diff_backward = b.glorot("embed.diff_backward", d_in, dm);
        s.attn_forward = b.neighbor_attention("attn_f", dm, da, config.heads);
        s.attn_backward = b.neighbor_attention("attn_b", dm, da, config.heads);
        s.fusion_forward = b.fusion("fusion_f", 3, n, config.per_timestep_fusion_weights);
        s.fusion_backward = b.fusion("fusion_b", 3, n, config.per_timestep_fusion_weights);
        s.fusion_junction = b.fusion("fusion_j", 2, n, config.per_timestep_fusion_weights);
    }
    s.embed_decoder = b.glorot("embed.decoder", d_in, dm);
    if (!config.ablate_residual_layer) {
        s.residual_forward = b.residual("res_f", 3, dm, config.dropout);
        s.residual_backward = b.residual("res_b", 3, dm, config.dropout);
        s.residual_junction = b.residual("res_j", 2, dm, config.dropout);
    }

    int width = config.resolved_ffn_width();
    for (int i = 0; i < config.encoder_layers; ++i) {
        std::string prefix = "enc" + std::to_string(i);
        EncoderBlockParams e;
        e.self_attn = b.mha(prefix + ".self", dm, config.heads);
        e.ffn = b.ffn(prefix + ".ffn", dm, width);
        e.ln1 = b.layer_norm(prefix + ".ln1", dm);
        e.ln2 = b.layer_norm(prefix + ".ln2", dm);
        s.encoder.push_back(std::move(e));
    }
    for (int i = 0; i < config.decoder_layers; ++i) {
        std::string prefix = "dec" + std::to_string(i);
        DecoderBlockParams d;
        d.self_attn = b.mha(prefix + ".self", dm, config.heads);
        d.cross_attn = b.mha(prefix + ".cross", dm, config.heads);
        d.ffn = b.ffn(prefix + ".ffn", dm, width);
        d.ln1 = b.layer_norm(prefix + ".ln1", dm);
        d.ln2 = b.layer_norm(prefix + ".ln2", dm);
        d.ln3 = b.layer_norm(prefix + ".ln3", dm);
        s.decoder.push_back(std::move(d));
    }

    s.head_W = b.glorot("head.W", dm, config.targets());
    s.head_b = b.constant("head.b", 1, config.targets(), 0.0);

    s.pe = positional_encoding(n, dm);
    return s;
}

Tensor encoder_block(Graph& g, const Tensor& x, const EncoderBlockParams& p) {
    Tensor a = sublayer_norm(g, x, mha_forward(g, x, x, p.self_attn, false), p.ln1);
    return sublayer_norm(g, a, ffn_forward(g, a, p.ffn), p.ln2);
}

Tensor decoder_block(Graph& g, const Tensor& x, const Tensor& memory, const DecoderBlockParams& p) {
    Tensor a = sublayer_norm(g, x, mha_forward(g, x, x, p.self_attn, true), p.ln1);
    Tensor c = sublayer_norm(g, a, mha_forward(g, a, memory, p.cross_attn, false), p.ln2);
    return sublayer_norm(g, c, ffn_forward(g, c, p.ffn), p.ln3);
}

Tensor model_forward(Graph& g, const ModelState& s, const Tensor& window, bool training,
                     std::mt19937_64& rng) {
    const ModelConfig& cfg = s.config;
    if (window.rows() != cfg.window || window.cols() != cfg.d_input)
        throw DimensionError("model_forward: window " + window.shape_str() + ", want " +
                             std::to_string(cfg.window) + "x" + std::to_string(cfg.d_input));

    WindowTriple split = differential_split(g, window);

    Tensor enc_in_f, enc_in_b;
    if (cfg.ablate_diff_attention) {
        Tensor h_c = embed_with_pe(g, split.center, s.embed_center, s.pe);
        if (cfg.ablate_residual_layer) {
            enc_in_f = h_c;
            enc_in_b = h_c;
        } else {
            Tensor replicated = replicate_rows_blockwise(g, h_c, 3);
            enc_in_f = residual_block(g, h_c, replicated, s.residual_forward, training, rng);
            enc_in_b = residual_block(g, h_c, replicated, s.residual_backward, training, rng);
        }
    } else {
        Tensor h_f = embed_with_pe(g, split.forward, s.embed_forward, s.pe);
        Tensor h_c = embed_with_pe(g, split.center, s.embed_center, s.pe);
        Tensor h_b = embed_with_pe(g, split.backward, s.embed_backward, s.pe);
        Tensor d_f = embed_with_pe(g, split.diff_forward, s.embed_diff_forward, s.pe);
        Tensor d_b = embed_with_pe(g, split.diff_backward, s.embed_diff_backward, s.pe);

        Tensor a_f = neighbor_attention(g, h_c, h_f, s.attn_forward);
        Tensor a_b = neighbor_attention(g, h_c, h_b, s.attn_backward);

        SlidingFusionOut fus_f = sliding_fusion(g, {d_f, h_c, a_f}, s.fusion_forward);
        SlidingFusionOut fus_b = sliding_fusion(g, {d_b, h_c, a_b}, s.fusion_backward);

        if (cfg.ablate_residual_layer) {
            enc_in_f = fus_f.e;
            enc_in_b = fus_b.e;
        } else {
            enc_in_f = residual_block(g, fus_f.e, fus_f.c_blocks, s.residual_forward, training, rng);
            enc_in_b = residual_block(g, fus_b.e, fus_b.c_blocks, s.residual_backward, training, rng);
        }
    }

    // one weight-shared encoder, applied to each branch
    Tensor o_f = enc_in_f, o_b = enc_in_b;
    for (const auto& blk : s.encoder) {
        o_f = encoder_block(g, o_f, blk);
        o_b = encoder_block(g, o_b, blk);
    }

    Tensor memory;
    if (cfg.ablate_diff_attention) {
        Tensor e_j = scale(g, add(g, o_f, o_b), 0.5);
        if (cfg.ablate_residual_layer) {
            memory = e_j;
        } else {
            Tensor c_j = interleave_rows(g, o_f, o_b);
            memory = residual_block(g, e_j, c_j, s.residual_junction, training, rng);
        }
    } else {
        SlidingFusionOut fus_j = sliding_fusion(g, {o_f, o_b}, s.fusion_junction);
        memory = cfg.ablate_residual_layer
                     ? fus_j.e
                     : residual_block(g, fus_j.e, fus_j.c_blocks, s.residual_junction, training, rng);
    }

    Tensor dec = embed_with_pe(g, split.center, s.embed_decoder, s.pe);
    for (const auto& blk : s.decoder) dec = decoder_block(g, dec, memory, blk);

    return add_rowvec(g, matmul(g, dec, s.head_W), s.head_b);
}

} // namespace tsf
