#include "tsf/layers.hpp"

#include <cmath>

namespace tsf {

Tensor positional_encoding(int n, int d_model) {
    if (d_model % 2 != 0)
        throw ConfigError("positional encoding requires even d_model, got " + std::to_string(d_model));
    if (n < 1) throw ConfigError("positional encoding length must be >= 1");
    Tensor table(n, d_model);
    for (int p = 0; p < n; ++p) {
        for (int i = 0; 2 * i < d_model; ++i) {
            double angle = p / std::pow(10000.0, (2.0 * i) / d_model);
            table.at(p, 2 * i) = std::sin(angle);
            table.at(p, 2 * i + 1) = std::cos(angle);
        }
    }
    return table;
}

WindowTriple differential_split(Graph& g, const Tensor& window) {
    int N = window.rows();
    if (N < 4)
        throw InputError("window too short for differential split: need N >= 4, got " + std::to_string(N));
    int n = N - 2;
    WindowTriple t;
    t.forward = slice_rows(g, window, 0, n);
    t.center = slice_rows(g, window, 1, n);
    t.backward = slice_rows(g, window, 2, n);
    t.diff_forward = sub(g, t.center, t.forward);
    t.diff_backward = sub(g, t.center, t.backward);
    return t;
}

Tensor embed_with_pe(Graph& g, const Tensor& x, const Tensor& W, const Tensor& pe) {
    if (pe.rows() < x.rows())
        throw DimensionError("positional table too short: " + pe.shape_str() + " for " +
                             std::to_string(x.rows()) + " rows");
    Tensor xw = matmul(g, x, W);
    Tensor pe_rows = pe.rows() == x.rows() ? pe : slice_rows(g, pe, 0, x.rows());
    return add(g, xw, pe_rows);
}

namespace {

Tensor attention_weights_one_head(Graph& g, const Tensor& h_center, const Tensor& h_side,
                                  const NeighborAttentionParams& params, int head) {
    Tensor q = matmul(g, h_center, params.Wq[head]);
    Tensor k = matmul(g, h_side, params.Wk[head]);
    Tensor logits = scale(g, matmul(g, q, transpose(g, k)), 1.0 / std::sqrt(double(params.d_attn)));
    return softmax_rows(g, logits);
}

} // namespace

Tensor neighbor_attention(Graph& g, const Tensor& h_center, const Tensor& h_side,
                          const NeighborAttentionParams& params) {
    if (!h_center.same_shape(h_side))
        throw DimensionError("neighbor_attention: center " + h_center.shape_str() + " vs side " +
                             h_side.shape_str());
    std::vector<Tensor> heads;
    heads.reserve(params.heads);
    for (int h = 0; h < params.heads; ++h) {
        Tensor weights = attention_weights_one_head(g, h_center, h_side, params, h);
        Tensor v = matmul(g, h_center, params.Wv[h]);
        heads.push_back(matmul(g, weights, v));
    }
    Tensor joined = heads.size() == 1 ? heads[0] : concat_cols(g, heads);
    return matmul(g, joined, params.Wo);
}

Tensor neighbor_attention_weights(Graph& g, const Tensor& h_center, const Tensor& h_side,
                                  const NeighborAttentionParams& params, int head) {
    return attention_weights_one_head(g, h_center, h_side, params, head);
}

SlidingFusionOut sliding_fusion(Graph& g, const std::vector<Tensor>& stack,
                                const SlidingFusionParams& params) {
    int k = params.stack_height;
    if (static_cast<int>(stack.size()) != k)
        throw DimensionError("sliding_fusion: expected " + std::to_string(k) + " stacked matrices, got " +
                             std::to_string(stack.size()));
    for (const auto& m : stack)
        if (!m.same_shape(stack[0]))
            throw DimensionError("sliding_fusion: heterogeneous stack shapes " + stack[0].shape_str() +
                                 " vs " + m.shape_str());
    int n = stack[0].rows();
    int d = stack[0].cols();

    auto weight_at = [&](int t) -> const Tensor& {
        return params.per_timestep ? params.W[t] : params.W[0];
    };

    std::vector<Tensor> blocks;
    std::vector<Tensor> e_rows;
    blocks.reserve(n);
    e_rows.reserve(n);
    Tensor prev_w; // w(t-1), undefined at t = 0
    for (int t = 0; t < n; ++t) {
        std::vector<Tensor> rows;
        rows.reserve(k);
        for (int j = 0; j < k; ++j) rows.push_back(slice_rows(g, stack[j], t, 1));
        Tensor c_t = concat_rows(g, rows); // k x d
        blocks.push_back(c_t);
        Tensor w_t = matmul(g, transpose(g, c_t), weight_at(t)); // d x 1
        Tensor carry = t == 0 ? Tensor::ones(d, 1) : sigmoid(g, prev_w);
        Tensor f_t = mul(g, w_t, carry);
        e_rows.push_back(transpose(g, f_t));
        prev_w = w_t;
    }
    SlidingFusionOut out;
    out.e = concat_rows(g, e_rows);
    out.c_blocks = concat_rows(g, blocks);
    return out;
}

Tensor lstm_forward(Graph& g, const Tensor& x, const LstmParams& p,
                    std::optional<Tensor> h0, std::optional<Tensor> c0) {
    if (x.cols() != p.d_in)
        throw DimensionError("lstm_forward: input width " + std::to_string(x.cols()) + ", want " +
                             std::to_string(p.d_in));
    Tensor h = h0 ? *h0 : Tensor::zeros(1, p.d_hidden);
    Tensor c = c0 ? *c0 : Tensor::zeros(1, p.d_hidden);
    if (h.rows() != 1 || h.cols() != p.d_hidden || c.rows() != 1 || c.cols() != p.d_hidden)
        throw DimensionError("lstm_forward: initial state must be 1x" + std::to_string(p.d_hidden));

    std::vector<Tensor> outputs;
    outputs.reserve(x.rows());
    for (int t = 0; t < x.rows(); ++t) {
        Tensor xt = slice_rows(g, x, t, 1);
        Tensor i = sigmoid(g, add(g, add(g, matmul(g, xt, p.Wxi), matmul(g, h, p.Whi)), p.bi));
        Tensor f = sigmoid(g, add(g, add(g, matmul(g, xt, p.Wxf), matmul(g, h, p.Whf)), p.bf));
        Tensor cand = tanh_act(g, add(g, add(g, matmul(g, xt, p.Wxg), matmul(g, h, p.Whg)), p.bg));
        Tensor o = sigmoid(g, add(g, add(g, matmul(g, xt, p.Wxo), matmul(g, h, p.Who)), p.bo));
        c = add(g, mul(g, f, c), mul(g, i, cand));
        h = mul(g, o, tanh_act(g, c));
        outputs.push_back(h);
    }
    return concat_rows(g, outputs);
}

Tensor residual_block(Graph& g, const Tensor& e, const Tensor& c_blocks,
                      const ResidualBlockParams& p, bool training, std::mt19937_64& rng) {
    if (c_blocks.rows() != p.stride * e.rows())
        throw DimensionError("residual_block: c_blocks has " + std::to_string(c_blocks.rows()) +
                             " rows, want stride*n = " + std::to_string(p.stride * e.rows()));
    Tensor conv = conv1d_time(g, c_blocks, p.kernels, p.conv_bias, p.stride);
    Tensor l1 = lstm_forward(g, conv, p.lstm1);
    l1 = dropout(g, l1, p.dropout_rate, training, rng);
    Tensor l2 = lstm_forward(g, l1, p.lstm2);
    l2 = dropout(g, l2, p.dropout_rate, training, rng);
    return add(g, l2, e);
}

} // namespace tsf
