#pragma once

#include <optional>
#include <random>
#include <vector>

#include "tsf/autodiff.hpp"

namespace tsf {

/// Sinusoidal position table: table[p][2i] = sin(p / 10000^(2i/d_model)),
/// table[p][2i+1] = cos(p / 10000^(2i/d_model)). Positions are 0-based.
Tensor positional_encoding(int n, int d_model);

/// One training window split into overlapping forward/center/backward parts
/// plus the two difference matrices. All parts have n = N - 2 rows.
struct WindowTriple {
    Tensor forward;       // x rows 0 .. N-3
    Tensor center;        // x rows 1 .. N-2
    Tensor backward;      // x rows 2 .. N-1
    Tensor diff_forward;  // center - forward
    Tensor diff_backward; // center - backward
};

WindowTriple differential_split(Graph& g, const Tensor& window);

/// x*W plus the first n rows of the position table.
Tensor embed_with_pe(Graph& g, const Tensor& x, const Tensor& W, const Tensor& pe);

struct NeighborAttentionParams {
    std::vector<Tensor> Wq; // per head, d_model x d_attn
    std::vector<Tensor> Wk; // per head, d_model x d_attn
    std::vector<Tensor> Wv; // per head, d_model x d_model
    Tensor Wo;              // (heads * d_model) x d_model
    int heads = 1;
    int d_attn = 0;
};

/// Queries and values from the center encoding, keys from the neighbor.
/// Heads are concatenated column-wise and projected by Wo.
Tensor neighbor_attention(Graph& g, const Tensor& h_center, const Tensor& h_side,
                          const NeighborAttentionParams& params);

/// Raw attention weight matrix of one head (softmax(QK^T / sqrt(d_attn)));
/// exposed for the row-stochasticity checks.
Tensor neighbor_attention_weights(Graph& g, const Tensor& h_center, const Tensor& h_side,
                                  const NeighborAttentionParams& params, int head);

struct SlidingFusionParams {
    std::vector<Tensor> W; // k x 1 each; one entry when shared, n entries when per-timestep
    int stack_height = 0;  // k
    bool per_timestep = false;
};

struct SlidingFusionOut {
    Tensor e;        // n x d_model, row t = f(t) transposed
    Tensor c_blocks; // (k*n) x d_model, time-ordered stack of the c(t) blocks
};

/// Per time step t: c(t) stacks the k input rows at t; w(t) = c(t)^T W;
/// f(t) = w(t) ⊙ sigmoid(w(t-1)) with an all-ones carry at t = 1.
SlidingFusionOut sliding_fusion(Graph& g, const std::vector<Tensor>& stack,
                                const SlidingFusionParams& params);

struct LstmParams {
    Tensor Wxi, Whi, bi;
    Tensor Wxf, Whf, bf;
    Tensor Wxg, Whg, bg;
    Tensor Wxo, Who, bo;
    int d_in = 0;
    int d_hidden = 0;
};

/// Standard LSTM recurrence over the rows of x; returns the full hidden
/// sequence. Initial states default to zeros.
Tensor lstm_forward(Graph& g, const Tensor& x, const LstmParams& params,
                    std::optional<Tensor> h0 = std::nullopt,
                    std::optional<Tensor> c0 = std::nullopt);

struct ResidualBlockParams {
    std::vector<Tensor> kernels; // each stride x d_model
    Tensor conv_bias;            // 1 x kernel_count
    int stride = 3;
    LstmParams lstm1;
    LstmParams lstm2;
    double dropout_rate = 0.5;
};

/// conv1d over the c-blocks, two LSTMs with dropout, plus e as the residual.
Tensor residual_block(Graph& g, const Tensor& e, const Tensor& c_blocks,
                      const ResidualBlockParams& params, bool training, std::mt19937_64& rng);

} // namespace tsf
