#pragma once

#include <string>
#include <vector>

#include "tsf/autodiff.hpp"

namespace tsf {

struct TimeSeriesTable {
    std::vector<std::string> columns;
    Tensor values; // T x d, original units
};

/// Reads a comma-separated file with a header row. Columns where no cell
/// parses as a finite number are skipped with a warning; a non-finite cell
/// inside an otherwise numeric column is a hard error.
TimeSeriesTable load_csv(const std::string& path, bool skip_first_column = false,
                         std::vector<std::string>* warnings = nullptr);

void write_csv(const TimeSeriesTable& table, const std::string& path);

struct NormalizationState {
    std::vector<double> min;
    std::vector<double> max;
    bool fitted() const { return !min.empty(); }
};

/// Per-column min/max over the given rows (the training split).
NormalizationState fit_normalization(const Tensor& values);

/// x' = (x - min) / (max - min); constant columns map to 0.
Tensor apply_normalization(const Tensor& values, const NormalizationState& state);
Tensor invert_normalization(const Tensor& values, const NormalizationState& state);
double denormalize_value(double x, const NormalizationState& state, int column);

struct WindowedDataset {
    struct Item {
        Tensor window;    // N x d
        Tensor targets;   // n x |targets|, one-step-ahead values for the center rows
        int first_center; // global index (original coordinates) of the first center row
    };
    std::vector<Item> items;
    int window_len = 0;
    bool padded = false;
    std::vector<int> target_columns;
};

/// Stride-1 windows over the series. With pad set, the first and last rows
/// are replicated once so every original index appears as a first center.
WindowedDataset make_windows(const Tensor& values, int N, const std::vector<int>& target_columns,
                             bool pad);

/// One contiguous predicted series assembled from per-window outputs:
/// each window contributes its first-center prediction; the last window
/// contributes its whole center. values[i][j] estimates target j one step
/// after covered index start+i.
struct AssembledSeries {
    int start = 0;
    Tensor values; // covered x |targets|
};

AssembledSeries assemble_predictions(const std::vector<Tensor>& outputs, const WindowedDataset& ds);

/// Ground truth aligned with an assembly: row i holds the one-step-ahead
/// target values for covered index start+i (replicating the final row when
/// the horizon runs past the series end).
Tensor assembly_truth(const Tensor& values, const std::vector<int>& target_columns,
                      const AssembledSeries& assembled);

struct MetricsReport {
    std::vector<double> mae;  // per target
    std::vector<double> rmse; // per target
    bool original_units = false;
};

MetricsReport metrics(const Tensor& pred, const Tensor& truth);

/// Same series pair mapped back to original units before scoring.
MetricsReport metrics_original_units(const Tensor& pred, const Tensor& truth,
                                     const NormalizationState& state,
                                     const std::vector<int>& target_columns);

enum class SynthKind { Trend, Sine, TrendSine, Mutation };

SynthKind parse_synth_kind(const std::string& name);

/// Deterministic synthetic generator. Column 0 is the target; aux columns
/// are correlated copies to exercise multivariate input.
TimeSeriesTable synth_series(SynthKind kind, int T, double noise_sigma, unsigned long long seed,
                             int aux_columns = 0);

/// Jump positions the mutation generator uses for a given (T, seed);
/// recomputable independently of the generated table.
std::vector<int> mutation_jump_schedule(int T, unsigned long long seed);

/// prediction at t = observation at t-1, per target column.
Tensor persistence_baseline(const Tensor& values, const std::vector<int>& target_columns);

} // namespace tsf
