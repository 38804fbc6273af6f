#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <cstdio>
#include <fstream>
#include <random>

#include "tsf/data.hpp"

using namespace tsf;

namespace {

struct TempCsv {
    std::string path;
    TempCsv(const std::string& name, const std::string& content) : path(name) {
        std::ofstream out(path);
        out << content;
    }
    ~TempCsv() { std::remove(path.c_str()); }
};

Tensor ramp(int T, int d = 1) {
    Tensor v(T, d);
    for (int r = 0; r < T; ++r)
        for (int c = 0; c < d; ++c) v.at(r, c) = r + 10.0 * c;
    return v;
}

} // namespace

TEST_CASE("csv load basic table") {
    TempCsv f("td_basic.csv", "a,b\n1,2\n3,4\n5,6\n");
    TimeSeriesTable t = load_csv(f.path);
    REQUIRE(t.columns == std::vector<std::string>{"a", "b"});
    REQUIRE(t.values.rows() == 3);
    CHECK(t.values.at(0, 0) == 1.0);
    CHECK(t.values.at(2, 1) == 6.0);
}

TEST_CASE("csv load skips all-text columns with a warning") {
    TempCsv f("td_text.csv", "date,y\n2020-01-01,1.5\n2020-01-02,2.5\n");
    std::vector<std::string> warnings;
    TimeSeriesTable t = load_csv(f.path, false, &warnings);
    CHECK(t.columns == std::vector<std::string>{"y"});
    REQUIRE(warnings.size() == 1);
    CHECK(warnings[0].find("date") != std::string::npos);
}

TEST_CASE("csv load error cases") {
    TempCsv bad_cell("td_nan.csv", "a,b\n1,2\n1,nan\n3,4\n");
    CHECK_THROWS_AS(load_csv(bad_cell.path), InputError);

    TempCsv ragged("td_ragged.csv", "a,b\n1,2\n3\n");
    CHECK_THROWS_AS(load_csv(ragged.path), InputError);

    TempCsv empty("td_empty.csv", "");
    CHECK_THROWS_AS(load_csv(empty.path), InputError);

    TempCsv header_only("td_header.csv", "a,b\n");
    CHECK_THROWS_AS(load_csv(header_only.path), InputError);

    CHECK_THROWS_AS(load_csv("td_missing_file.csv"), InputError);
}

TEST_CASE("csv write/load round trip") {
    TimeSeriesTable t;
    t.columns = {"y", "aux"};
    t.values = Tensor::from_rows({{0.1, -2.5}, {1.0 / 3.0, 1e-17}});
    write_csv(t, "td_rt.csv");
    TimeSeriesTable back = load_csv("td_rt.csv");
    std::remove("td_rt.csv");
    CHECK(back.columns == t.columns);
    CHECK(back.values.data() == t.values.data()); // shortest round-trip formatting
}

TEST_CASE("min-max normalization") {
    Tensor v = Tensor::from_rows({{2.0, 5.0}, {4.0, 5.0}, {6.0, 5.0}});
    NormalizationState s = fit_normalization(v);
    Tensor n = apply_normalization(v, s);
    CHECK(n.at(0, 0) == 0.0);
    CHECK(n.at(1, 0) == 0.5);
    CHECK(n.at(2, 0) == 1.0);
    // constant column maps to zero
    CHECK(n.at(0, 1) == 0.0);
    CHECK(n.at(2, 1) == 0.0);

    Tensor back = invert_normalization(n, s);
    for (int r = 0; r < 3; ++r)
        for (int c = 0; c < 2; ++c) CHECK(back.at(r, c) == doctest::Approx(v.at(r, c)).epsilon(1e-9));

    // monotone per column
    std::mt19937_64 rng(1);
    std::uniform_real_distribution<double> u(-5.0, 5.0);
    Tensor rv(20, 1);
    for (auto& x : rv.data()) x = u(rng);
    NormalizationState rs = fit_normalization(rv);
    Tensor rn = apply_normalization(rv, rs);
    for (int i = 0; i < 20; ++i)
        for (int j = 0; j < 20; ++j)
            if (rv.at(i, 0) < rv.at(j, 0)) CHECK(rn.at(i, 0) <= rn.at(j, 0));
}

TEST_CASE("make_windows without padding") {
    Tensor v = ramp(10);
    WindowedDataset ds = make_windows(v, 5, {0}, false);
    REQUIRE(ds.items.size() == 6);
    for (int i = 0; i < 6; ++i) CHECK(ds.items[i].first_center == i + 1);
    const auto& w0 = ds.items[0];
    CHECK(w0.window.at(0, 0) == 0.0);
    CHECK(w0.window.at(4, 0) == 4.0);
    // targets are one step after each center row
    CHECK(w0.targets.at(0, 0) == 2.0);
    CHECK(w0.targets.at(2, 0) == 4.0);

    CHECK_THROWS_AS(make_windows(ramp(4), 5, {0}, false), InputError);
    CHECK_THROWS_AS(make_windows(v, 3, {0}, false), InputError);
    CHECK_THROWS_AS(make_windows(v, 5, {2}, false), InputError);
}

TEST_CASE("make_windows with padding covers every index") {
    Tensor v = ramp(10);
    WindowedDataset ds = make_windows(v, 5, {0}, true);
    REQUIRE(ds.items.size() == 8);
    CHECK(ds.items.front().first_center == 0);
    // first padded window replicates row 0 once
    CHECK(ds.items[0].window.at(0, 0) == 0.0);
    CHECK(ds.items[0].window.at(1, 0) == 0.0);
    CHECK(ds.items[0].window.at(2, 0) == 1.0);
    // last padded window replicates the final row
    const auto& last = ds.items.back().window;
    CHECK(last.at(4, 0) == 9.0);
    CHECK(last.at(3, 0) == 9.0);
}

TEST_CASE("assembly of perfect predictions reproduces the shifted series") {
    Tensor v = ramp(10);
    for (bool pad : {false, true}) {
        CAPTURE(pad);
        WindowedDataset ds = make_windows(v, 5, {0}, pad);
        std::vector<Tensor> outputs;
        for (const auto& item : ds.items) outputs.push_back(item.targets);
        AssembledSeries a = assemble_predictions(outputs, ds);
        Tensor truth = assembly_truth(v, {0}, a);
        REQUIRE(a.values.rows() == truth.rows());
        MetricsReport r = metrics(a.values, truth);
        CHECK(r.mae[0] == 0.0);
        CHECK(a.start == (pad ? 0 : 1));
        CHECK(a.values.rows() == (pad ? 10 : 8));
    }
}

TEST_CASE("assembly with one window keeps its whole center") {
    Tensor v = ramp(5);
    WindowedDataset ds = make_windows(v, 5, {0}, false);
    REQUIRE(ds.items.size() == 1);
    AssembledSeries a = assemble_predictions({ds.items[0].targets}, ds);
    CHECK(a.values.rows() == 3);
    CHECK(a.values.at(0, 0) == 2.0);
    CHECK(a.values.at(2, 0) == 4.0);
}

TEST_CASE("assembly overlap-cover bijection over random instances") {
    std::mt19937_64 rng(3);
    for (int trial = 0; trial < 120; ++trial) {
        int T = std::uniform_int_distribution<int>(8, 40)(rng);
        int N = std::uniform_int_distribution<int>(4, std::min(T, 12))(rng);
        bool pad = std::uniform_int_distribution<int>(0, 1)(rng) == 1;
        WindowedDataset ds = make_windows(ramp(T), N, {0}, pad);
        std::vector<Tensor> outputs;
        for (const auto& item : ds.items) outputs.push_back(Tensor::zeros(N - 2, 1));
        AssembledSeries a = assemble_predictions(outputs, ds); // throws on any double write or gap
        int w = static_cast<int>(ds.items.size());
        CHECK(a.values.rows() == (w - 1) + (N - 2));
        if (pad) CHECK(a.values.rows() == T);
    }
}

TEST_CASE("assembly rejects mismatched outputs") {
    WindowedDataset ds = make_windows(ramp(10), 5, {0}, false);
    std::vector<Tensor> outputs(ds.items.size(), Tensor::zeros(3, 1));
    outputs[2] = Tensor::zeros(2, 1);
    CHECK_THROWS_AS(assemble_predictions(outputs, ds), DimensionError);
    outputs.pop_back();
    CHECK_THROWS_AS(assemble_predictions(outputs, ds), InputError);
}

TEST_CASE("metrics hand values and ordering") {
    Tensor pred = Tensor::from_rows({{0.0}, {2.0}, {0.0}, {2.0}});
    Tensor truth = Tensor::zeros(4, 1);
    MetricsReport r = metrics(pred, truth);
    CHECK(r.mae[0] == doctest::Approx(1.0).epsilon(1e-15));
    CHECK(r.rmse[0] == doctest::Approx(std::sqrt(2.0)).epsilon(1e-15));

    std::mt19937_64 rng(5);
    std::uniform_real_distribution<double> u(-1.0, 1.0);
    for (int trial = 0; trial < 30; ++trial) {
        Tensor p(8, 2), t(8, 2);
        for (auto& x : p.data()) x = u(rng);
        for (auto& x : t.data()) x = u(rng);
        MetricsReport m = metrics(p, t);
        for (int c = 0; c < 2; ++c) CHECK(m.rmse[c] >= m.mae[c]);
    }

    CHECK_THROWS_AS(metrics(pred, Tensor::zeros(3, 1)), InputError);
}

TEST_CASE("metrics in original units undo the scaling") {
    NormalizationState s;
    s.min = {10.0};
    s.max = {20.0};
    Tensor pred = Tensor::from_rows({{0.0}, {0.5}});
    Tensor truth = Tensor::from_rows({{0.1}, {0.5}});
    MetricsReport r = metrics_original_units(pred, truth, s, {0});
    CHECK(r.original_units);
    CHECK(r.mae[0] == doctest::Approx(0.5).epsilon(1e-12)); // 0.1 * range 10 / 2
}

TEST_CASE("synthetic generators are deterministic") {
    for (auto kind : {SynthKind::Trend, SynthKind::Sine, SynthKind::TrendSine, SynthKind::Mutation}) {
        TimeSeriesTable a = synth_series(kind, 64, 0.05, 42, 2);
        TimeSeriesTable b = synth_series(kind, 64, 0.05, 42, 2);
        CHECK(a.values.data() == b.values.data());
        CHECK(a.values.cols() == 3);
    }
    TimeSeriesTable c = synth_series(SynthKind::Sine, 64, 0.05, 43);
    TimeSeriesTable d = synth_series(SynthKind::Sine, 64, 0.05, 42);
    CHECK(c.values.data() != d.values.data());

    CHECK(parse_synth_kind("trend+sine") == SynthKind::TrendSine);
    CHECK_THROWS_AS(parse_synth_kind("nope"), ConfigError);
    CHECK_THROWS_AS(synth_series(SynthKind::Trend, 4, 0.0, 1), InputError);
}

TEST_CASE("synthetic signal shapes") {
    TimeSeriesTable trend = synth_series(SynthKind::Trend, 50, 0.0, 1);
    for (int t = 0; t < 50; ++t) CHECK(trend.values.at(t, 0) == doctest::Approx(0.01 * t));

    TimeSeriesTable sine = synth_series(SynthKind::Sine, 48, 0.0, 1);
    CHECK(sine.values.at(0, 0) == doctest::Approx(0.0).epsilon(1e-12));
    CHECK(sine.values.at(6, 0) == doctest::Approx(1.0).epsilon(1e-12));
    CHECK(sine.values.at(24, 0) == doctest::Approx(0.0).scale(1.0).epsilon(1e-9));
}

TEST_CASE("mutation series jumps exactly at the published schedule") {
    const int T = 300;
    const unsigned long long seed = 9;
    TimeSeriesTable t = synth_series(SynthKind::Mutation, T, 0.0, seed);
    std::vector<int> jumps = mutation_jump_schedule(T, seed);
    CHECK(!jumps.empty());
    size_t next = 0;
    for (int i = 1; i < T; ++i) {
        bool scheduled = next < jumps.size() && jumps[next] == i;
        bool changed = t.values.at(i, 0) != t.values.at(i - 1, 0);
        CHECK(changed == scheduled);
        if (scheduled) ++next;
    }
    CHECK(next == jumps.size());
}

TEST_CASE("persistence baseline") {
    Tensor v = ramp(6);
    Tensor p = persistence_baseline(v, {0});
    CHECK(p.at(0, 0) == 0.0);
    for (int t = 1; t < 6; ++t) CHECK(p.at(t, 0) == v.at(t - 1, 0));

    // constant series: zero error everywhere
    Tensor c = Tensor::full(5, 1, 3.0);
    Tensor pc = persistence_baseline(c, {0});
    CHECK(metrics(pc, c).mae[0] == 0.0);

    CHECK_THROWS_AS(persistence_baseline(Tensor::zeros(1, 1), {0}), InputError);
}
