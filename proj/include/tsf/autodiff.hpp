#pragma once

#include <cstddef>
#include <functional>
#include <memory>
#include <random>
#include <string>
#include <vector>

#include "tsf/errors.hpp"

namespace tsf {

/// Backing storage for one dense 2-D double tensor plus its gradient.
struct TensorData {
    int rows = 0;
    int cols = 0;
    std::vector<double> v;
    std::vector<double> g; // same length as v once touched by backward()
    bool requires_grad = false;

    void ensure_grad() {
        if (g.size() != v.size()) g.assign(v.size(), 0.0);
    }
};

/// Value-semantic handle to a tensor node. Copies share storage, so a
/// parameter held by a model and captured by the tape is the same object.
class Tensor {
public:
    Tensor() = default;
    Tensor(int rows, int cols, bool requires_grad = false);

    static Tensor zeros(int rows, int cols);
    static Tensor ones(int rows, int cols);
    static Tensor full(int rows, int cols, double value);
    static Tensor from_rows(std::initializer_list<std::initializer_list<double>> rows);

    int rows() const { return d_->rows; }
    int cols() const { return d_->cols; }
    int size() const { return d_->rows * d_->cols; }
    bool defined() const { return d_ != nullptr; }
    bool requires_grad() const { return d_->requires_grad; }
    void set_requires_grad(bool flag) { d_->requires_grad = flag; }

    double& at(int r, int c) { return d_->v[static_cast<size_t>(r) * d_->cols + c]; }
    double at(int r, int c) const { return d_->v[static_cast<size_t>(r) * d_->cols + c]; }
    std::vector<double>& data() { return d_->v; }
    const std::vector<double>& data() const { return d_->v; }
    std::vector<double>& grad() { d_->ensure_grad(); return d_->g; }
    const std::vector<double>& grad() const { d_->ensure_grad(); return d_->g; }
    double grad_at(int r, int c) const { d_->ensure_grad(); return d_->g[static_cast<size_t>(r) * d_->cols + c]; }

    void zero_grad() { d_->g.assign(d_->v.size(), 0.0); }
    bool same_shape(const Tensor& o) const { return rows() == o.rows() && cols() == o.cols(); }
    std::string shape_str() const;

    /// Identity of the underlying storage (for weight-sharing checks).
    const TensorData* node() const { return d_.get(); }
    std::shared_ptr<TensorData> storage() const { return d_; }

private:
    std::shared_ptr<TensorData> d_;
};

/// Tape of recorded operations, replayed in reverse by backward().
/// Built fresh for every forward pass. A disabled graph records nothing,
/// which turns forwards into plain evaluation (used by finite differences).
class Graph {
public:
    explicit Graph(bool recording = true) : recording_(recording) {}

    bool recording() const { return recording_; }
    void record(std::function<void()> back_fn) {
        if (recording_) tape_.push_back(std::move(back_fn));
    }
    size_t size() const { return tape_.size(); }

    /// Seeds d(loss)/d(loss) = 1 and runs the tape in reverse recording
    /// order, accumulating gradients into every reachable tensor.
    void backward(Tensor& loss);

private:
    bool recording_;
    std::vector<std::function<void()>> tape_;
};

// --- primitive operations -------------------------------------------------

Tensor matmul(Graph& g, const Tensor& a, const Tensor& b);

Tensor add(Graph& g, const Tensor& a, const Tensor& b);
Tensor sub(Graph& g, const Tensor& a, const Tensor& b);
Tensor mul(Graph& g, const Tensor& a, const Tensor& b); // Hadamard

/// Adds a 1 x cols row vector to every row of a.
Tensor add_rowvec(Graph& g, const Tensor& a, const Tensor& row);

Tensor scale(Graph& g, const Tensor& a, double factor);

Tensor sigmoid(Graph& g, const Tensor& a);
Tensor tanh_act(Graph& g, const Tensor& a);
Tensor relu(Graph& g, const Tensor& a);

/// Row-wise softmax with row-max subtraction.
Tensor softmax_rows(Graph& g, const Tensor& a);

Tensor concat_rows(Graph& g, const std::vector<Tensor>& parts);
Tensor concat_cols(Graph& g, const std::vector<Tensor>& parts);
Tensor slice_rows(Graph& g, const Tensor& a, int start, int count);
Tensor transpose(Graph& g, const Tensor& a);

/// Non-overlapping block convolution along time: input is (stride*n) x d,
/// each kernel stride x d, output n x kernel_count (plus per-kernel bias).
Tensor conv1d_time(Graph& g, const Tensor& input, const std::vector<Tensor>& kernels,
                   const Tensor& bias, int stride);

/// Inverted dropout: train mode zeroes entries with probability rate and
/// scales survivors by 1/(1-rate); eval mode is the identity.
Tensor dropout(Graph& g, const Tensor& a, double rate, bool training, std::mt19937_64& rng);

/// Sum of all entries as a 1x1 tensor.
Tensor sum_all(Graph& g, const Tensor& a);

/// Per-row layer normalization with learned gain/bias (both 1 x cols).
Tensor layer_norm(Graph& g, const Tensor& a, const Tensor& gain, const Tensor& bias,
                  double eps = 1e-5);

// --- gradient checking ----------------------------------------------------

struct GradCheckEntry {
    std::string name;
    double max_rel_error = 0.0;
};

struct GradCheckReport {
    std::vector<GradCheckEntry> entries;
    double max_rel_error = 0.0;
    bool passed(double tol) const { return max_rel_error < tol; }
};

/// Compares the analytic gradient of `loss_fn` (a deterministic scalar
/// function of the named parameters) against central finite differences.
/// Relative error per entry: |ga - gn| / max(1, |ga|, |gn|).
GradCheckReport grad_check(const std::function<Tensor(Graph&)>& loss_fn,
                           const std::vector<std::pair<std::string, Tensor>>& params,
                           double h = 1e-5);

} // namespace tsf
