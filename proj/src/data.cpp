#include "tsf/data.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <cstdlib>
#include <fstream>
#include <sstream>

namespace tsf {

namespace {

bool parse_cell(const std::string& cell, double& out) {
    const char* begin = cell.c_str();
    char* end = nullptr;
    double v = std::strtod(begin, &end);
    if (end == begin) return false;
    while (*end == ' ' || *end == '\t' || *end == '\r') ++end;
    if (*end != '\0') return false;
    out = v;
    return true;
}

std::vector<std::string> split_line(const std::string& line) {
    std::vector<std::string> cells;
    std::string cur;
    std::stringstream ss(line);
    while (std::getline(ss, cur, ',')) {
        while (!cur.empty() && (cur.back() == '\r' || cur.back() == ' ')) cur.pop_back();
        while (!cur.empty() && cur.front() == ' ') cur.erase(cur.begin());
        cells.push_back(cur);
    }
    if (!line.empty() && line.back() == ',') cells.emplace_back();
    return cells;
}

} // namespace

TimeSeriesTable load_csv(const std::string& path, bool skip_first_column,
                         std::vector<std::string>* warnings) {
    std::ifstream in(path);
    if (!in) throw InputError("cannot open data file: " + path);
    std::string line;
    if (!std::getline(in, line)) throw InputError("empty data file: " + path);
    std::vector<std::string> header = split_line(line);
    if (header.empty()) throw InputError("empty header row in " + path);

    std::vector<std::vector<std::string>> cells;
    int lineno = 1;
    while (std::getline(in, line)) {
        ++lineno;
        if (line.empty()) continue;
        auto row = split_line(line);
        if (row.size() != header.size())
            throw InputError(path + ":" + std::to_string(lineno) + ": expected " +
                             std::to_string(header.size()) + " cells, got " + std::to_string(row.size()));
        cells.push_back(std::move(row));
    }
    if (cells.empty()) throw InputError("no data rows in " + path);

    int T = static_cast<int>(cells.size());
    int ncols = static_cast<int>(header.size());
    int first = skip_first_column ? 1 : 0;

    std::vector<int> kept;
    std::vector<std::vector<double>> parsed(ncols);
    for (int c = first; c < ncols; ++c) {
        int ok = 0;
        int first_bad = -1;
        parsed[c].resize(T);
        for (int r = 0; r < T; ++r) {
            double v;
            if (parse_cell(cells[r][c], v) && std::isfinite(v)) {
                parsed[c][r] = v;
                ++ok;
            } else if (first_bad < 0) {
                first_bad = r;
            }
        }
        if (ok == 0) {
            if (warnings)
                warnings->push_back("skipping non-numeric column '" + header[c] + "'");
            continue;
        }
        if (ok < T)
            throw InputError(path + ": non-finite or unparseable value at row " +
                             std::to_string(first_bad + 2) + ", column '" + header[c] + "'");
        kept.push_back(c);
    }
    if (kept.empty()) throw InputError("no numeric columns in " + path);

    TimeSeriesTable table;
    table.values = Tensor(T, static_cast<int>(kept.size()));
    for (size_t j = 0; j < kept.size(); ++j) {
        table.columns.push_back(header[kept[j]]);
        for (int r = 0; r < T; ++r) table.values.at(r, static_cast<int>(j)) = parsed[kept[j]][r];
    }
    return table;
}

void write_csv(const TimeSeriesTable& table, const std::string& path) {
    std::ofstream out(path);
    if (!out) throw InputError("cannot write file: " + path);
    for (size_t j = 0; j < table.columns.size(); ++j)
        out << (j ? "," : "") << table.columns[j];
    out << "\n";
    char buf[32];
    for (int r = 0; r < table.values.rows(); ++r) {
        for (int c = 0; c < table.values.cols(); ++c) {
            auto res = std::to_chars(buf, buf + sizeof buf, table.values.at(r, c));
            out << (c ? "," : "") << std::string_view(buf, res.ptr - buf);
        }
        out << "\n";
    }
}

NormalizationState fit_normalization(const Tensor& values) {
    NormalizationState s;
    int d = values.cols();
    s.min.assign(d, 0.0);
    s.max.assign(d, 0.0);
    for (int c = 0; c < d; ++c) {
        double lo = values.at(0, c), hi = values.at(0, c);
        for (int r = 1; r < values.rows(); ++r) {
            lo = std::min(lo, values.at(r, c));
            hi = std::max(hi, values.at(r, c));
        }
        s.min[c] = lo;
        s.max[c] = hi;
    }
    return s;
}

Tensor apply_normalization(const Tensor& values, const NormalizationState& state) {
    if (!state.fitted()) throw InputError("normalization state not fitted");
    if (static_cast<int>(state.min.size()) != values.cols())
        throw DimensionError("normalization state covers " + std::to_string(state.min.size()) +
                             " columns, data has " + std::to_string(values.cols()));
    Tensor out(values.rows(), values.cols());
    for (int c = 0; c < values.cols(); ++c) {
        double range = state.max[c] - state.min[c];
        for (int r = 0; r < values.rows(); ++r)
            out.at(r, c) = range == 0.0 ? 0.0 : (values.at(r, c) - state.min[c]) / range;
    }
    return out;
}

Tensor invert_normalization(const Tensor& values, const NormalizationState& state) {
    if (!state.fitted()) throw InputError("normalization state not fitted");
    Tensor out(values.rows(), values.cols());
    for (int c = 0; c < values.cols(); ++c)
        for (int r = 0; r < values.rows(); ++r)
            out.at(r, c) = denormalize_value(values.at(r, c), state, c);
    return out;
}

double denormalize_value(double x, const NormalizationState& state, int column) {
    if (!state.fitted()) throw InputError("normalization state not fitted");
    double range = state.max[column] - state.min[column];
    return range == 0.0 ? state.min[column] : x * range + state.min[column];
}

WindowedDataset make_windows(const Tensor& values, int N, const std::vector<int>& target_columns,
                             bool pad) {
    if (N < 4) throw InputError("window length must be >= 4, got " + std::to_string(N));
    int T = values.rows();
    int d = values.cols();
    for (int c : target_columns)
        if (c < 0 || c >= d) throw InputError("target column " + std::to_string(c) + " out of range");

    // padded series: first and last rows replicated once
    int Tp = pad ? T + 2 : T;
    if (Tp < N)
        throw InputError("series of length " + std::to_string(T) + " shorter than window " +
                         std::to_string(N));
    auto padded_row = [&](int i) -> int {
        if (!pad) return i;
        return std::clamp(i - 1, 0, T - 1);
    };
    int pad_front = pad ? 1 : 0;
    int n = N - 2;
    int m = static_cast<int>(target_columns.size());

    WindowedDataset ds;
    ds.window_len = N;
    ds.padded = pad;
    ds.target_columns = target_columns;
    for (int start = 0; start + N <= Tp; ++start) {
        WindowedDataset::Item item;
        item.window = Tensor(N, d);
        for (int r = 0; r < N; ++r) {
            int src = padded_row(start + r);
            for (int c = 0; c < d; ++c) item.window.at(r, c) = values.at(src, c);
        }
        item.targets = Tensor(n, m);
        for (int j = 0; j < n; ++j) {
            int src = padded_row(start + 2 + j); // one step after center row j
            for (int c = 0; c < m; ++c) item.targets.at(j, c) = values.at(src, target_columns[c]);
        }
        item.first_center = start + 1 - pad_front;
        ds.items.push_back(std::move(item));
    }
    return ds;
}

AssembledSeries assemble_predictions(const std::vector<Tensor>& outputs, const WindowedDataset& ds) {
    if (outputs.size() != ds.items.size())
        throw InputError("assemble_predictions: " + std::to_string(outputs.size()) + " outputs for " +
                         std::to_string(ds.items.size()) + " windows");
    if (outputs.empty()) throw InputError("assemble_predictions: no windows");
    int n = ds.window_len - 2;
    int m = static_cast<int>(ds.target_columns.size());
    int w = static_cast<int>(outputs.size());
    int start = ds.items.front().first_center;
    int covered = (w - 1) + n;

    AssembledSeries out;
    out.start = start;
    out.values = Tensor(covered, m);
    std::vector<int> writes(covered, 0);
    for (int i = 0; i < w; ++i) {
        const Tensor& pred = outputs[i];
        if (pred.rows() != n || pred.cols() != m)
            throw DimensionError("window output " + pred.shape_str() + ", want " + std::to_string(n) +
                                 "x" + std::to_string(m));
        int fc = ds.items[i].first_center;
        if (fc != start + i)
            throw InputError("windows not in stride-1 start order");
        int keep = (i == w - 1) ? n : 1; // last window keeps its whole center
        for (int j = 0; j < keep; ++j) {
            int idx = fc + j - start;
            ++writes[idx];
            for (int c = 0; c < m; ++c) out.values.at(idx, c) = pred.at(j, c);
        }
    }
    for (int i = 0; i < covered; ++i)
        if (writes[i] != 1)
            throw InputError("overlap-cover violation at index " + std::to_string(start + i) + ": " +
                             std::to_string(writes[i]) + " writes");
    return out;
}

Tensor assembly_truth(const Tensor& values, const std::vector<int>& target_columns,
                      const AssembledSeries& assembled) {
    int covered = assembled.values.rows();
    int m = static_cast<int>(target_columns.size());
    Tensor truth(covered, m);
    for (int i = 0; i < covered; ++i) {
        int src = std::clamp(assembled.start + i + 1, 0, values.rows() - 1);
        for (int c = 0; c < m; ++c) truth.at(i, c) = values.at(src, target_columns[c]);
    }
    return truth;
}

MetricsReport metrics(const Tensor& pred, const Tensor& truth) {
    if (!pred.same_shape(truth))
        throw InputError("metrics: prediction " + pred.shape_str() + " vs truth " + truth.shape_str());
    int n = pred.rows(), m = pred.cols();
    MetricsReport r;
    for (int c = 0; c < m; ++c) {
        double abs_sum = 0.0, sq_sum = 0.0;
        for (int i = 0; i < n; ++i) {
            double e = pred.at(i, c) - truth.at(i, c);
            abs_sum += std::abs(e);
            sq_sum += e * e;
        }
        r.mae.push_back(abs_sum / n);
        r.rmse.push_back(std::sqrt(sq_sum / n));
    }
    return r;
}

MetricsReport metrics_original_units(const Tensor& pred, const Tensor& truth,
                                     const NormalizationState& state,
                                     const std::vector<int>& target_columns) {
    Tensor p(pred.rows(), pred.cols());
    Tensor t(truth.rows(), truth.cols());
    for (int c = 0; c < pred.cols(); ++c) {
        int col = target_columns[c];
        for (int i = 0; i < pred.rows(); ++i) {
            p.at(i, c) = denormalize_value(pred.at(i, c), state, col);
            t.at(i, c) = denormalize_value(truth.at(i, c), state, col);
        }
    }
    MetricsReport r = metrics(p, t);
    r.original_units = true;
    return r;
}

SynthKind parse_synth_kind(const std::string& name) {
    if (name == "trend") return SynthKind::Trend;
    if (name == "sine") return SynthKind::Sine;
    if (name == "trend+sine" || name == "trend_sine") return SynthKind::TrendSine;
    if (name == "mutation") return SynthKind::Mutation;
    throw ConfigError("unknown synthetic kind: " + name);
}

std::vector<int> mutation_jump_schedule(int T, unsigned long long seed) {
    std::mt19937_64 rng(seed ^ 0x9e3779b97f4a7c15ULL);
    std::uniform_real_distribution<double> u(0.0, 1.0);
    std::vector<int> jumps;
    for (int t = 1; t < T; ++t)
        if (u(rng) < 0.05) jumps.push_back(t);
    return jumps;
}

TimeSeriesTable synth_series(SynthKind kind, int T, double noise_sigma, unsigned long long seed,
                             int aux_columns) {
    if (T < 8) throw InputError("synthetic series needs T >= 8, got " + std::to_string(T));
    std::vector<double> signal(T);
    std::mt19937_64 rng(seed);
    switch (kind) {
        case SynthKind::Trend:
            for (int t = 0; t < T; ++t) signal[t] = 0.01 * t;
            break;
        case SynthKind::Sine:
            for (int t = 0; t < T; ++t) signal[t] = std::sin(2.0 * M_PI * t / 24.0);
            break;
        case SynthKind::TrendSine:
            for (int t = 0; t < T; ++t) signal[t] = 0.005 * t + std::sin(2.0 * M_PI * t / 24.0);
            break;
        case SynthKind::Mutation: {
            std::vector<int> jumps = mutation_jump_schedule(T, seed);
            std::mt19937_64 level_rng(seed ^ 0xc2b2ae3d27d4eb4fULL);
            std::uniform_real_distribution<double> lvl(-1.0, 1.0);
            double level = lvl(level_rng);
            size_t next = 0;
            for (int t = 0; t < T; ++t) {
                if (next < jumps.size() && jumps[next] == t) {
                    level = lvl(level_rng);
                    ++next;
                }
                signal[t] = level;
            }
            break;
        }
    }

    TimeSeriesTable table;
    table.columns.push_back("y");
    for (int j = 0; j < aux_columns; ++j) table.columns.push_back("aux" + std::to_string(j + 1));
    table.values = Tensor(T, 1 + aux_columns);
    std::normal_distribution<double> noise(0.0, 1.0);
    for (int t = 0; t < T; ++t) {
        double eps = noise_sigma > 0.0 ? noise_sigma * noise(rng) : 0.0;
        table.values.at(t, 0) = signal[t] + eps;
    }
    for (int j = 0; j < aux_columns; ++j) {
        // lagged, scaled copy of the target with its own noise
        double scale = 0.5 + 0.25 * j;
        for (int t = 0; t < T; ++t) {
            int lag = std::max(0, t - (j + 1));
            double eps = noise_sigma > 0.0 ? noise_sigma * noise(rng) : 0.0;
            table.values.at(t, 1 + j) = scale * signal[lag] + eps;
        }
    }
    return table;
}

Tensor persistence_baseline(const Tensor& values, const std::vector<int>& target_columns) {
    if (values.rows() < 2) throw InputError("persistence baseline needs at least 2 rows");
    int m = static_cast<int>(target_columns.size());
    Tensor pred(values.rows(), m);
    for (int c = 0; c < m; ++c) {
        pred.at(0, c) = values.at(0, target_columns[c]);
        for (int t = 1; t < values.rows(); ++t)
            pred.at(t, c) = values.at(t - 1, target_columns[c]);
    }
    return pred;
}

} // namespace tsf
