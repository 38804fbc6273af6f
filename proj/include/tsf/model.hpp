#pragma once

#include <random>
#include <string>
#include <vector>

#include "tsf/layers.hpp"

namespace tsf {

struct ModelConfig {
    int d_input = 1;
    int d_model = 64;
    int d_attn = 0; // 0 = use d_model
    int heads = 4;
    int encoder_layers = 2;
    int decoder_layers = 2;
    int ffn_width = 0; // 0 = 4 * d_model
    int window = 0;    // N
    std::vector<int> target_columns;
    double dropout = 0.5;
    bool ablate_diff_attention = false;
    bool ablate_residual_layer = false;
    bool per_timestep_fusion_weights = false;

    int resolved_d_attn() const { return d_attn > 0 ? d_attn : d_model; }
    int resolved_ffn_width() const { return ffn_width > 0 ? ffn_width : 4 * d_model; }
    int n() const { return window - 2; }
    int targets() const { return static_cast<int>(target_columns.size()); }
    void validate() const;
};

/// Classical multi-head attention parameters (head width = d_model / heads).
struct MhaParams {
    std::vector<Tensor> Wq, Wk, Wv; // d_model x head_dim each
    Tensor Wo;                      // d_model x d_model
    int heads = 1;
    int head_dim = 0;
};

struct FeedForwardParams {
    Tensor W1, b1; // d_model x ffn_width, 1 x ffn_width
    Tensor W2, b2; // ffn_width x d_model, 1 x d_model
};

struct LayerNormParams {
    Tensor gain, bias; // 1 x d_model
};

struct EncoderBlockParams {
    MhaParams self_attn;
    FeedForwardParams ffn;
    LayerNormParams ln1, ln2;
};

struct DecoderBlockParams {
    MhaParams self_attn;  // causal
    MhaParams cross_attn; // keys/values from the encoder-side memory
    FeedForwardParams ffn;
    LayerNormParams ln1, ln2, ln3;
};

/// All trainable tensors of the model, plus a stable name registry used by
/// the optimizer, the gradient checker, and checkpointing.
struct ModelState {
    ModelConfig config;

    Tensor embed_forward, embed_center, embed_backward; // W_1..W_3
    Tensor embed_diff_forward, embed_diff_backward;     // W_F, W_B
    Tensor embed_decoder;

    NeighborAttentionParams attn_forward, attn_backward;
    SlidingFusionParams fusion_forward, fusion_backward; // k = 3
    ResidualBlockParams residual_forward, residual_backward; // stride 3
    SlidingFusionParams fusion_junction;                 // k = 2
    ResidualBlockParams residual_junction;               // stride 2

    std::vector<EncoderBlockParams> encoder; // shared between branches
    std::vector<DecoderBlockParams> decoder;

    Tensor head_W, head_b; // d_model -> |targets|

    Tensor pe; // position table, constant

    std::vector<std::pair<std::string, Tensor>> params; // name registry

    void zero_grads();
    const Tensor* find_param(const std::string& name) const;
};

/// Builds and initializes a model (uniform +-sqrt(6/(fan_in+fan_out)) for
/// projections, forget-gate bias 1).
ModelState build_model(const ModelConfig& config, std::mt19937_64& rng);

Tensor encoder_block(Graph& g, const Tensor& x, const EncoderBlockParams& p);
Tensor decoder_block(Graph& g, const Tensor& x, const Tensor& memory, const DecoderBlockParams& p);

/// Full forward pass on one window (N x d_input) -> n x |targets|.
/// Honors the ablation flags in the config.
Tensor model_forward(Graph& g, const ModelState& state, const Tensor& window, bool training,
                     std::mt19937_64& rng);

} // namespace tsf
