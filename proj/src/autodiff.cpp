#include "tsf/autodiff.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

namespace tsf {

Tensor::Tensor(int rows, int cols, bool requires_grad) : d_(std::make_shared<TensorData>()) {
    if (rows < 0 || cols < 0)
        throw DimensionError("negative tensor shape " + std::to_string(rows) + "x" + std::to_string(cols));
    d_->rows = rows;
    d_->cols = cols;
    d_->v.assign(static_cast<size_t>(rows) * cols, 0.0);
    d_->requires_grad = requires_grad;
}

Tensor Tensor::zeros(int rows, int cols) { return Tensor(rows, cols); }

Tensor Tensor::ones(int rows, int cols) { return full(rows, cols, 1.0); }

Tensor Tensor::full(int rows, int cols, double value) {
    Tensor t(rows, cols);
    std::fill(t.data().begin(), t.data().end(), value);
    return t;
}

Tensor Tensor::from_rows(std::initializer_list<std::initializer_list<double>> rows) {
    int r = static_cast<int>(rows.size());
    int c = r > 0 ? static_cast<int>(rows.begin()->size()) : 0;
    Tensor t(r, c);
    int i = 0;
    for (const auto& row : rows) {
        if (static_cast<int>(row.size()) != c)
            throw DimensionError("ragged initializer rows");
        for (double x : row) t.data()[i++] = x;
    }
    return t;
}

std::string Tensor::shape_str() const {
    std::ostringstream os;
    os << rows() << "x" << cols();
    return os.str();
}

void Graph::backward(Tensor& loss) {
    if (loss.rows() != 1 || loss.cols() != 1)
        throw DimensionError("backward() requires a 1x1 loss, got " + loss.shape_str());
    loss.grad()[0] = 1.0;
    for (auto it = tape_.rbegin(); it != tape_.rend(); ++it) (*it)();
}

namespace {

void check_same_shape(const Tensor& a, const Tensor& b, const char* op) {
    if (!a.same_shape(b))
        throw DimensionError(std::string(op) + ": shape mismatch " + a.shape_str() + " vs " + b.shape_str());
}

// C += A * B, all row-major, ikj order.
void gemm_acc(const double* a, const double* b, double* c, int m, int k, int n) {
    for (int i = 0; i < m; ++i) {
        const double* ai = a + static_cast<size_t>(i) * k;
        double* ci = c + static_cast<size_t>(i) * n;
        for (int p = 0; p < k; ++p) {
            double av = ai[p];
            if (av == 0.0) continue;
            const double* bp = b + static_cast<size_t>(p) * n;
            for (int j = 0; j < n; ++j) ci[j] += av * bp[j];
        }
    }
}

// C += A^T * B where A is k x m (so A^T is m x k), B is k x n.
void gemm_at_b_acc(const double* a, const double* b, double* c, int k, int m, int n) {
    for (int p = 0; p < k; ++p) {
        const double* ap = a + static_cast<size_t>(p) * m;
        const double* bp = b + static_cast<size_t>(p) * n;
        for (int i = 0; i < m; ++i) {
            double av = ap[i];
            if (av == 0.0) continue;
            double* ci = c + static_cast<size_t>(i) * n;
            for (int j = 0; j < n; ++j) ci[j] += av * bp[j];
        }
    }
}

// C += A * B^T where A is m x k, B is n x k.
void gemm_a_bt_acc(const double* a, const double* b, double* c, int m, int k, int n) {
    for (int i = 0; i < m; ++i) {
        const double* ai = a + static_cast<size_t>(i) * k;
        double* ci = c + static_cast<size_t>(i) * n;
        for (int j = 0; j < n; ++j) {
            const double* bj = b + static_cast<size_t>(j) * k;
            double acc = 0.0;
            for (int p = 0; p < k; ++p) acc += ai[p] * bj[p];
            ci[j] += acc;
        }
    }
}

} // namespace

Tensor matmul(Graph& g, const Tensor& a, const Tensor& b) {
    if (a.cols() != b.rows())
        throw DimensionError("matmul: inner dimensions disagree, " + a.shape_str() + " * " + b.shape_str());
    int m = a.rows(), k = a.cols(), n = b.cols();
    Tensor out(m, n);
    gemm_acc(a.data().data(), b.data().data(), out.data().data(), m, k, n);
    g.record([an = a.storage(), bn = b.storage(), on = out.storage(), m, k, n] {
        on->ensure_grad();
        an->ensure_grad();
        bn->ensure_grad();
        // dA = dC * B^T, dB = A^T * dC
        gemm_a_bt_acc(on->g.data(), bn->v.data(), an->g.data(), m, n, k);
        gemm_at_b_acc(an->v.data(), on->g.data(), bn->g.data(), m, k, n);
    });
    return out;
}

namespace {

enum class EwKind { Add, Sub, Mul };

Tensor elementwise(Graph& g, const Tensor& a, const Tensor& b, EwKind kind, const char* name) {
    check_same_shape(a, b, name);
    Tensor out(a.rows(), a.cols());
    size_t sz = a.data().size();
    const auto& av = a.data();
    const auto& bv = b.data();
    auto& ov = out.data();
    switch (kind) {
        case EwKind::Add: for (size_t i = 0; i < sz; ++i) ov[i] = av[i] + bv[i]; break;
        case EwKind::Sub: for (size_t i = 0; i < sz; ++i) ov[i] = av[i] - bv[i]; break;
        case EwKind::Mul: for (size_t i = 0; i < sz; ++i) ov[i] = av[i] * bv[i]; break;
    }
    g.record([an = a.storage(), bn = b.storage(), on = out.storage(), kind, sz] {
        on->ensure_grad();
        an->ensure_grad();
        bn->ensure_grad();
        switch (kind) {
            case EwKind::Add:
                for (size_t i = 0; i < sz; ++i) { an->g[i] += on->g[i]; bn->g[i] += on->g[i]; }
                break;
            case EwKind::Sub:
                for (size_t i = 0; i < sz; ++i) { an->g[i] += on->g[i]; bn->g[i] -= on->g[i]; }
                break;
            case EwKind::Mul:
                for (size_t i = 0; i < sz; ++i) {
                    an->g[i] += on->g[i] * bn->v[i];
                    bn->g[i] += on->g[i] * an->v[i];
                }
                break;
        }
    });
    return out;
}

} // namespace

Tensor add(Graph& g, const Tensor& a, const Tensor& b) { return elementwise(g, a, b, EwKind::Add, "add"); }
Tensor sub(Graph& g, const Tensor& a, const Tensor& b) { return elementwise(g, a, b, EwKind::Sub, "sub"); }
Tensor mul(Graph& g, const Tensor& a, const Tensor& b) { return elementwise(g, a, b, EwKind::Mul, "mul"); }

Tensor add_rowvec(Graph& g, const Tensor& a, const Tensor& row) {
    if (row.rows() != 1 || row.cols() != a.cols())
        throw DimensionError("add_rowvec: want 1x" + std::to_string(a.cols()) + ", got " + row.shape_str());
    Tensor out(a.rows(), a.cols());
    int n = a.cols();
    for (int r = 0; r < a.rows(); ++r)
        for (int c = 0; c < n; ++c)
            out.at(r, c) = a.at(r, c) + row.at(0, c);
    g.record([an = a.storage(), rn = row.storage(), on = out.storage(), n] {
        on->ensure_grad();
        an->ensure_grad();
        rn->ensure_grad();
        for (int r = 0; r < an->rows; ++r)
            for (int c = 0; c < n; ++c) {
                double go = on->g[static_cast<size_t>(r) * n + c];
                an->g[static_cast<size_t>(r) * n + c] += go;
                rn->g[c] += go;
            }
    });
    return out;
}

Tensor scale(Graph& g, const Tensor& a, double factor) {
    Tensor out(a.rows(), a.cols());
    size_t sz = a.data().size();
    for (size_t i = 0; i < sz; ++i) out.data()[i] = a.data()[i] * factor;
    g.record([an = a.storage(), on = out.storage(), factor, sz] {
        on->ensure_grad();
        an->ensure_grad();
        for (size_t i = 0; i < sz; ++i) an->g[i] += on->g[i] * factor;
    });
    return out;
}

namespace {

enum class ActKind { Sigmoid, Tanh, Relu };

Tensor activation(Graph& g, const Tensor& a, ActKind kind) {
    Tensor out(a.rows(), a.cols());
    size_t sz = a.data().size();
    for (size_t i = 0; i < sz; ++i) {
        double x = a.data()[i];
        switch (kind) {
            case ActKind::Sigmoid: out.data()[i] = 1.0 / (1.0 + std::exp(-x)); break;
            case ActKind::Tanh: out.data()[i] = std::tanh(x); break;
            case ActKind::Relu: out.data()[i] = x > 0.0 ? x : 0.0; break;
        }
    }
    g.record([an = a.storage(), on = out.storage(), kind, sz] {
        on->ensure_grad();
        an->ensure_grad();
        for (size_t i = 0; i < sz; ++i) {
            double y = on->v[i];
            double d = 0.0;
            switch (kind) {
                case ActKind::Sigmoid: d = y * (1.0 - y); break;
                case ActKind::Tanh: d = 1.0 - y * y; break;
                case ActKind::Relu: d = y > 0.0 ? 1.0 : 0.0; break;
            }
            an->g[i] += on->g[i] * d;
        }
    });
    return out;
}

} // namespace

Tensor sigmoid(Graph& g, const Tensor& a) { return activation(g, a, ActKind::Sigmoid); }
Tensor tanh_act(Graph& g, const Tensor& a) { return activation(g, a, ActKind::Tanh); }
Tensor relu(Graph& g, const Tensor& a) { return activation(g, a, ActKind::Relu); }

Tensor softmax_rows(Graph& g, const Tensor& a) {
    Tensor out(a.rows(), a.cols());
    int n = a.cols();
    for (int r = 0; r < a.rows(); ++r) {
        double mx = a.at(r, 0);
        for (int c = 1; c < n; ++c) mx = std::max(mx, a.at(r, c));
        double sum = 0.0;
        for (int c = 0; c < n; ++c) {
            double e = std::exp(a.at(r, c) - mx);
            out.at(r, c) = e;
            sum += e;
        }
        for (int c = 0; c < n; ++c) out.at(r, c) /= sum;
    }
    g.record([an = a.storage(), on = out.storage(), n] {
        on->ensure_grad();
        an->ensure_grad();
        for (int r = 0; r < an->rows; ++r) {
            const double* y = on->v.data() + static_cast<size_t>(r) * n;
            const double* gy = on->g.data() + static_cast<size_t>(r) * n;
            double* gx = an->g.data() + static_cast<size_t>(r) * n;
            double dot = 0.0;
            for (int c = 0; c < n; ++c) dot += gy[c] * y[c];
            for (int c = 0; c < n; ++c) gx[c] += y[c] * (gy[c] - dot);
        }
    });
    return out;
}

Tensor concat_rows(Graph& g, const std::vector<Tensor>& parts) {
    if (parts.empty()) throw DimensionError("concat_rows: empty input");
    int cols = parts[0].cols();
    int rows = 0;
    for (const auto& p : parts) {
        if (p.cols() != cols)
            throw DimensionError("concat_rows: column mismatch " + parts[0].shape_str() + " vs " + p.shape_str());
        rows += p.rows();
    }
    Tensor out(rows, cols);
    int at = 0;
    for (const auto& p : parts) {
        std::copy(p.data().begin(), p.data().end(), out.data().begin() + static_cast<size_t>(at) * cols);
        at += p.rows();
    }
    std::vector<std::shared_ptr<TensorData>> nodes;
    nodes.reserve(parts.size());
    for (const auto& p : parts) nodes.push_back(p.storage());
    g.record([nodes = std::move(nodes), on = out.storage(), cols] {
        on->ensure_grad();
        size_t off = 0;
        for (auto& n : nodes) {
            n->ensure_grad();
            size_t cnt = n->v.size();
            for (size_t i = 0; i < cnt; ++i) n->g[i] += on->g[off + i];
            off += cnt;
        }
        (void)cols;
    });
    return out;
}

Tensor concat_cols(Graph& g, const std::vector<Tensor>& parts) {
    if (parts.empty()) throw DimensionError("concat_cols: empty input");
    int rows = parts[0].rows();
    int cols = 0;
    for (const auto& p : parts) {
        if (p.rows() != rows)
            throw DimensionError("concat_cols: row mismatch " + parts[0].shape_str() + " vs " + p.shape_str());
        cols += p.cols();
    }
    Tensor out(rows, cols);
    int at = 0;
    for (const auto& p : parts) {
        for (int r = 0; r < rows; ++r)
            for (int c = 0; c < p.cols(); ++c)
                out.at(r, at + c) = p.at(r, c);
        at += p.cols();
    }
    std::vector<std::shared_ptr<TensorData>> nodes;
    nodes.reserve(parts.size());
    for (const auto& p : parts) nodes.push_back(p.storage());
    g.record([nodes = std::move(nodes), on = out.storage(), rows, cols] {
        on->ensure_grad();
        int at = 0;
        for (auto& n : nodes) {
            n->ensure_grad();
            int pc = n->cols;
            for (int r = 0; r < rows; ++r)
                for (int c = 0; c < pc; ++c)
                    n->g[static_cast<size_t>(r) * pc + c] += on->g[static_cast<size_t>(r) * cols + at + c];
            at += pc;
        }
    });
    return out;
}

Tensor slice_rows(Graph& g, const Tensor& a, int start, int count) {
    if (start < 0 || count < 0 || start + count > a.rows())
        throw DimensionError("slice_rows: range [" + std::to_string(start) + ", " + std::to_string(start + count) +
                             ") out of bounds for " + a.shape_str());
    int cols = a.cols();
    Tensor out(count, cols);
    std::copy(a.data().begin() + static_cast<size_t>(start) * cols,
              a.data().begin() + static_cast<size_t>(start + count) * cols, out.data().begin());
    g.record([an = a.storage(), on = out.storage(), start, cols] {
        on->ensure_grad();
        an->ensure_grad();
        size_t off = static_cast<size_t>(start) * cols;
        for (size_t i = 0; i < on->v.size(); ++i) an->g[off + i] += on->g[i];
    });
    return out;
}

Tensor transpose(Graph& g, const Tensor& a) {
    Tensor out(a.cols(), a.rows());
    for (int r = 0; r < a.rows(); ++r)
        for (int c = 0; c < a.cols(); ++c)
            out.at(c, r) = a.at(r, c);
    g.record([an = a.storage(), on = out.storage()] {
        on->ensure_grad();
        an->ensure_grad();
        int rows = an->rows, cols = an->cols;
        for (int r = 0; r < rows; ++r)
            for (int c = 0; c < cols; ++c)
                an->g[static_cast<size_t>(r) * cols + c] += on->g[static_cast<size_t>(c) * rows + r];
    });
    return out;
}

Tensor conv1d_time(Graph& g, const Tensor& input, const std::vector<Tensor>& kernels,
                   const Tensor& bias, int stride) {
    if (stride < 1) throw DimensionError("conv1d_time: stride must be >= 1");
    if (input.rows() % stride != 0)
        throw DimensionError("conv1d_time: input rows " + std::to_string(input.rows()) +
                             " not divisible by stride " + std::to_string(stride));
    int k = static_cast<int>(kernels.size());
    int d = input.cols();
    int n = input.rows() / stride;
    for (const auto& ker : kernels)
        if (ker.rows() != stride || ker.cols() != d)
            throw DimensionError("conv1d_time: kernel shape " + ker.shape_str() + ", want " +
                                 std::to_string(stride) + "x" + std::to_string(d));
    if (bias.rows() != 1 || bias.cols() != k)
        throw DimensionError("conv1d_time: bias shape " + bias.shape_str() + ", want 1x" + std::to_string(k));
    Tensor out(n, k);
    size_t block = static_cast<size_t>(stride) * d;
    for (int t = 0; t < n; ++t) {
        const double* in = input.data().data() + t * block;
        for (int j = 0; j < k; ++j) {
            const double* ker = kernels[j].data().data();
            double acc = bias.at(0, j);
            for (size_t i = 0; i < block; ++i) acc += in[i] * ker[i];
            out.at(t, j) = acc;
        }
    }
    std::vector<std::shared_ptr<TensorData>> knodes;
    knodes.reserve(kernels.size());
    for (const auto& ker : kernels) knodes.push_back(ker.storage());
    g.record([in = input.storage(), knodes = std::move(knodes), bn = bias.storage(),
              on = out.storage(), n, k, block] {
        on->ensure_grad();
        in->ensure_grad();
        bn->ensure_grad();
        for (auto& kn : knodes) kn->ensure_grad();
        for (int t = 0; t < n; ++t) {
            const double* blk = in->v.data() + t * block;
            double* gblk = in->g.data() + t * block;
            for (int j = 0; j < k; ++j) {
                double go = on->g[static_cast<size_t>(t) * k + j];
                if (go == 0.0) continue;
                const double* ker = knodes[j]->v.data();
                double* gker = knodes[j]->g.data();
                for (size_t i = 0; i < block; ++i) {
                    gblk[i] += go * ker[i];
                    gker[i] += go * blk[i];
                }
                bn->g[j] += go;
            }
        }
    });
    return out;
}

Tensor dropout(Graph& g, const Tensor& a, double rate, bool training, std::mt19937_64& rng) {
    if (rate < 0.0 || rate >= 1.0)
        throw ConfigError("dropout rate must be in [0, 1), got " + std::to_string(rate));
    if (!training || rate == 0.0) return a;
    Tensor out(a.rows(), a.cols());
    size_t sz = a.data().size();
    auto mask = std::make_shared<std::vector<double>>(sz);
    std::uniform_real_distribution<double> u(0.0, 1.0);
    double keep_scale = 1.0 / (1.0 - rate);
    for (size_t i = 0; i < sz; ++i) {
        (*mask)[i] = u(rng) < rate ? 0.0 : keep_scale;
        out.data()[i] = a.data()[i] * (*mask)[i];
    }
    g.record([an = a.storage(), on = out.storage(), mask, sz] {
        on->ensure_grad();
        an->ensure_grad();
        for (size_t i = 0; i < sz; ++i) an->g[i] += on->g[i] * (*mask)[i];
    });
    return out;
}

Tensor sum_all(Graph& g, const Tensor& a) {
    Tensor out(1, 1);
    double acc = 0.0;
    for (double x : a.data()) acc += x;
    out.data()[0] = acc;
    g.record([an = a.storage(), on = out.storage()] {
        on->ensure_grad();
        an->ensure_grad();
        double go = on->g[0];
        for (auto& gx : an->g) gx += go;
    });
    return out;
}

Tensor layer_norm(Graph& g, const Tensor& a, const Tensor& gain, const Tensor& bias, double eps) {
    int n = a.cols();
    if (gain.rows() != 1 || gain.cols() != n || bias.rows() != 1 || bias.cols() != n)
        throw DimensionError("layer_norm: gain/bias must be 1x" + std::to_string(n));
    Tensor out(a.rows(), n);
    auto xhat = std::make_shared<std::vector<double>>(a.data().size());
    auto inv_std = std::make_shared<std::vector<double>>(a.rows());
    for (int r = 0; r < a.rows(); ++r) {
        double mean = 0.0;
        for (int c = 0; c < n; ++c) mean += a.at(r, c);
        mean /= n;
        double var = 0.0;
        for (int c = 0; c < n; ++c) {
            double d = a.at(r, c) - mean;
            var += d * d;
        }
        var /= n;
        double is = 1.0 / std::sqrt(var + eps);
        (*inv_std)[r] = is;
        for (int c = 0; c < n; ++c) {
            double xh = (a.at(r, c) - mean) * is;
            (*xhat)[static_cast<size_t>(r) * n + c] = xh;
            out.at(r, c) = xh * gain.at(0, c) + bias.at(0, c);
        }
    }
    g.record([an = a.storage(), gn = gain.storage(), bn = bias.storage(), on = out.storage(),
              xhat, inv_std, n] {
        on->ensure_grad();
        an->ensure_grad();
        gn->ensure_grad();
        bn->ensure_grad();
        for (int r = 0; r < an->rows; ++r) {
            const double* xh = xhat->data() + static_cast<size_t>(r) * n;
            const double* gy = on->g.data() + static_cast<size_t>(r) * n;
            double* gx = an->g.data() + static_cast<size_t>(r) * n;
            double sum_dxhat = 0.0, sum_dxhat_xhat = 0.0;
            for (int c = 0; c < n; ++c) {
                double dxh = gy[c] * gn->v[c];
                sum_dxhat += dxh;
                sum_dxhat_xhat += dxh * xh[c];
                gn->g[c] += gy[c] * xh[c];
                bn->g[c] += gy[c];
            }
            double is = (*inv_std)[r];
            for (int c = 0; c < n; ++c) {
                double dxh = gy[c] * gn->v[c];
                gx[c] += is * (dxh - sum_dxhat / n - xh[c] * sum_dxhat_xhat / n);
            }
        }
    });
    return out;
}

GradCheckReport grad_check(const std::function<Tensor(Graph&)>& loss_fn,
                           const std::vector<std::pair<std::string, Tensor>>& params,
                           double h) {
    GradCheckReport report;

    for (const auto& [name, p] : params) {
        Tensor t = p;
        t.zero_grad();
    }
    Graph g(true);
    Tensor loss = loss_fn(g);
    g.backward(loss);

    auto eval = [&] {
        Graph ng(false);
        return loss_fn(ng).data()[0];
    };

    for (const auto& [name, p] : params) {
        GradCheckEntry entry;
        entry.name = name;
        Tensor param = p;
        for (size_t i = 0; i < param.data().size(); ++i) {
            double saved = param.data()[i];
            param.data()[i] = saved + h;
            double up = eval();
            param.data()[i] = saved - h;
            double dn = eval();
            param.data()[i] = saved;
            double gn = (up - dn) / (2.0 * h);
            double ga = param.grad()[i];
            double rel = std::abs(ga - gn) / std::max({1.0, std::abs(ga), std::abs(gn)});
            entry.max_rel_error = std::max(entry.max_rel_error, rel);
        }
        report.max_rel_error = std::max(report.max_rel_error, entry.max_rel_error);
        report.entries.push_back(std::move(entry));
    }
    return report;
}

} // namespace tsf
