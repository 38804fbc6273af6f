#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>

#include <CLI11.hpp>
#include <json.hpp>

#include "tsf/data.hpp"
#include "tsf/model.hpp"
#include "tsf/train.hpp"

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

constexpr int kExitInput = 2;
constexpr int kExitConfig = 3;
constexpr int kExitNumeric = 4;

struct RunConfig {
    tsf::ModelConfig model;
    tsf::TrainConfig train;
    std::string data_path;
    std::string out_dir = "out";
    bool skip_first_column = false;
    int train_count = 0; // 0 = 80% of rows
    int test_count = 0;  // 0 = remainder
    std::vector<std::string> target_names;
    bool pad_windows = true;
};

void apply_config_file(RunConfig& rc, const std::string& path) {
    std::ifstream in(path);
    if (!in) throw tsf::InputError("cannot open config file: " + path);
    json j;
    try {
        in >> j;
    } catch (const std::exception& e) {
        throw tsf::ConfigError("malformed config " + path + ": " + e.what());
    }
    if (j.contains("model")) {
        const json& m = j["model"];
        auto& c = rc.model;
        c.d_model = m.value("d_model", c.d_model);
        c.d_attn = m.value("d_attn", c.d_attn);
        c.heads = m.value("heads", c.heads);
        c.encoder_layers = m.value("encoder_layers", c.encoder_layers);
        c.decoder_layers = m.value("decoder_layers", c.decoder_layers);
        c.ffn_width = m.value("ffn_width", c.ffn_width);
        c.window = m.value("window", c.window);
        c.dropout = m.value("dropout", c.dropout);
        c.ablate_diff_attention = m.value("ablate_diff_attention", c.ablate_diff_attention);
        c.ablate_residual_layer = m.value("ablate_residual_layer", c.ablate_residual_layer);
        c.per_timestep_fusion_weights =
            m.value("per_timestep_fusion_weights", c.per_timestep_fusion_weights);
    }
    if (j.contains("train")) {
        const json& t = j["train"];
        auto& c = rc.train;
        c.initial_lr = t.value("initial_lr", c.initial_lr);
        c.lr_decay_base = t.value("lr_decay_base", c.lr_decay_base);
        c.batch_size = t.value("batch_size", c.batch_size);
        c.epochs = t.value("epochs", c.epochs);
        c.seed = t.value("seed", c.seed);
        c.conventional_decay = t.value("conventional_decay", c.conventional_decay);
        c.grad_clip = t.value("grad_clip", c.grad_clip);
    }
    if (j.contains("data")) {
        const json& d = j["data"];
        rc.data_path = d.value("path", rc.data_path);
        rc.skip_first_column = d.value("skip_first_column", rc.skip_first_column);
        rc.train_count = d.value("train_count", rc.train_count);
        rc.test_count = d.value("test_count", rc.test_count);
        rc.pad_windows = d.value("pad_windows", rc.pad_windows);
        if (d.contains("targets")) rc.target_names = d["targets"].get<std::vector<std::string>>();
    }
    rc.out_dir = j.value("out_dir", rc.out_dir);
}

json resolved_config_json(const RunConfig& rc) {
    return json{
        {"model",
         {{"d_input", rc.model.d_input},
          {"d_model", rc.model.d_model},
          {"d_attn", rc.model.d_attn},
          {"heads", rc.model.heads},
          {"encoder_layers", rc.model.encoder_layers},
          {"decoder_layers", rc.model.decoder_layers},
          {"ffn_width", rc.model.ffn_width},
          {"window", rc.model.window},
          {"target_columns", rc.model.target_columns},
          {"dropout", rc.model.dropout},
          {"ablate_diff_attention", rc.model.ablate_diff_attention},
          {"ablate_residual_layer", rc.model.ablate_residual_layer},
          {"per_timestep_fusion_weights", rc.model.per_timestep_fusion_weights}}},
        {"train",
         {{"initial_lr", rc.train.initial_lr},
          {"lr_decay_base", rc.train.lr_decay_base},
          {"batch_size", rc.train.batch_size},
          {"epochs", rc.train.epochs},
          {"seed", rc.train.seed},
          {"conventional_decay", rc.train.conventional_decay},
          {"grad_clip", rc.train.grad_clip}}},
        {"data",
         {{"path", rc.data_path},
          {"skip_first_column", rc.skip_first_column},
          {"train_count", rc.train_count},
          {"test_count", rc.test_count},
          {"pad_windows", rc.pad_windows},
          {"targets", rc.target_names}}},
        {"out_dir", rc.out_dir}};
}

std::vector<int> resolve_targets(const tsf::TimeSeriesTable& table,
                                 const std::vector<std::string>& names) {
    std::vector<int> cols;
    if (names.empty()) {
        cols.push_back(0); // default: first numeric column
        return cols;
    }
    for (const auto& name : names) {
        auto it = std::find(table.columns.begin(), table.columns.end(), name);
        if (it == table.columns.end())
            throw tsf::ConfigError("target column '" + name + "' not found in data");
        cols.push_back(static_cast<int>(it - table.columns.begin()));
    }
    return cols;
}

tsf::Tensor slice_table_rows(const tsf::Tensor& values, int start, int count) {
    tsf::Tensor out(count, values.cols());
    for (int r = 0; r < count; ++r)
        for (int c = 0; c < values.cols(); ++c) out.at(r, c) = values.at(start + r, c);
    return out;
}

struct SplitTable {
    tsf::Tensor train_rows;
    tsf::Tensor test_rows;
};

SplitTable chronological_split(const tsf::Tensor& values, int train_count, int test_count) {
    int T = values.rows();
    if (train_count <= 0) train_count = (T * 4) / 5;
    if (train_count >= T) throw tsf::ConfigError("train_count >= series length");
    int remaining = T - train_count;
    if (test_count <= 0 || test_count > remaining) test_count = remaining;
    SplitTable s;
    s.train_rows = slice_table_rows(values, 0, train_count);
    s.test_rows = slice_table_rows(values, train_count, test_count);
    return s;
}

void write_metrics(const tsf::MetricsReport& norm_m, const tsf::MetricsReport& orig_m,
                   const std::vector<std::string>& target_names, const std::string& path) {
    json j;
    for (size_t c = 0; c < norm_m.mae.size(); ++c) {
        std::string name = c < target_names.size() ? target_names[c] : "target" + std::to_string(c);
        j[name] = {{"mae_normalized", norm_m.mae[c]},
                   {"rmse_normalized", norm_m.rmse[c]},
                   {"mae_original", orig_m.mae[c]},
                   {"rmse_original", orig_m.rmse[c]}};
    }
    std::ofstream out(path);
    if (!out) throw tsf::InputError("cannot write metrics: " + path);
    out << j.dump(1) << "\n";
}

int cmd_train(RunConfig rc) {
    if (rc.data_path.empty()) throw tsf::ConfigError("no data path given");
    std::vector<std::string> warnings;
    tsf::TimeSeriesTable table = tsf::load_csv(rc.data_path, rc.skip_first_column, &warnings);
    for (const auto& w : warnings) std::cerr << "warning: " << w << "\n";

    rc.model.d_input = table.values.cols();
    rc.model.target_columns = resolve_targets(table, rc.target_names);
    if (rc.target_names.empty())
        rc.target_names.push_back(table.columns[rc.model.target_columns[0]]);
    rc.model.validate();
    rc.train.validate();

    SplitTable split = chronological_split(table.values, rc.train_count, rc.test_count);
    tsf::NormalizationState norm = tsf::fit_normalization(split.train_rows);
    tsf::Tensor train_norm = tsf::apply_normalization(split.train_rows, norm);
    tsf::WindowedDataset data =
        tsf::make_windows(train_norm, rc.model.window, rc.model.target_columns, rc.pad_windows);

    fs::create_directories(rc.out_dir);
    {
        std::ofstream out(fs::path(rc.out_dir) / "config.json");
        out << resolved_config_json(rc).dump(1) << "\n";
    }

    tsf::Trainer trainer = tsf::make_trainer(rc.model, rc.train);
    trainer.norm = norm;
    tsf::train_epochs(trainer, data, rc.train.epochs);

    tsf::save_checkpoint(trainer, (fs::path(rc.out_dir) / "checkpoint.json").string());
    tsf::write_loss_history(trainer.loss_history,
                            (fs::path(rc.out_dir) / "loss_history.csv").string());
    std::cout << "trained " << trainer.epoch << " epochs, final loss "
              << (trainer.loss_history.empty() ? 0.0 : trainer.loss_history.back()) << "\n";
    return 0;
}

int cmd_eval(const std::string& checkpoint_path, RunConfig rc, const std::string& split_name,
             bool with_metrics) {
    tsf::Trainer trainer = tsf::load_checkpoint(checkpoint_path);
    if (rc.data_path.empty()) throw tsf::ConfigError("no data path given");
    std::vector<std::string> warnings;
    tsf::TimeSeriesTable table = tsf::load_csv(rc.data_path, rc.skip_first_column, &warnings);
    if (table.values.cols() != trainer.model.config.d_input)
        throw tsf::ConfigError("data has " + std::to_string(table.values.cols()) +
                               " columns, checkpoint expects " +
                               std::to_string(trainer.model.config.d_input));
    if (!trainer.norm.fitted()) throw tsf::ConfigError("checkpoint carries no normalization state");

    SplitTable split = chronological_split(table.values, rc.train_count, rc.test_count);
    const tsf::Tensor& rows = split_name == "train" ? split.train_rows : split.test_rows;
    tsf::Tensor norm_rows = tsf::apply_normalization(rows, trainer.norm);

    const auto& targets = trainer.model.config.target_columns;
    tsf::WindowedDataset data =
        tsf::make_windows(norm_rows, trainer.model.config.window, targets, rc.pad_windows);

    std::vector<tsf::Tensor> outputs;
    outputs.reserve(data.items.size());
    std::mt19937_64 rng(0); // unused in eval mode
    for (const auto& item : data.items) {
        tsf::Graph g(false);
        outputs.push_back(tsf::model_forward(g, trainer.model, item.window, false, rng));
    }
    tsf::AssembledSeries assembled = tsf::assemble_predictions(outputs, data);
    tsf::Tensor truth = tsf::assembly_truth(norm_rows, targets, assembled);

    fs::create_directories(rc.out_dir);
    {
        std::ofstream out(fs::path(rc.out_dir) / "predictions.csv");
        out << "index";
        for (size_t c = 0; c < targets.size(); ++c) out << ",truth" << c << ",prediction" << c;
        out << "\n";
        out.precision(17);
        for (int i = 0; i < assembled.values.rows(); ++i) {
            out << assembled.start + i + 1; // forecast time index within the split
            for (int c = 0; c < assembled.values.cols(); ++c) {
                out << "," << tsf::denormalize_value(truth.at(i, c), trainer.norm, targets[c]) << ","
                    << tsf::denormalize_value(assembled.values.at(i, c), trainer.norm, targets[c]);
            }
            out << "\n";
        }
    }

    if (with_metrics) {
        tsf::MetricsReport norm_m = tsf::metrics(assembled.values, truth);
        tsf::MetricsReport orig_m =
            tsf::metrics_original_units(assembled.values, truth, trainer.norm, targets);
        std::vector<std::string> names;
        for (int c : targets) names.push_back(table.columns[c]);
        write_metrics(norm_m, orig_m, names, (fs::path(rc.out_dir) / "metrics.json").string());
        for (size_t c = 0; c < norm_m.mae.size(); ++c)
            std::cout << names[c] << ": mae=" << norm_m.mae[c] << " rmse=" << norm_m.rmse[c]
                      << " (normalized)\n";
    }
    return 0;
}

int cmd_gradcheck(RunConfig rc, double tol) {
    // micro model: small widths, dropout off, deterministic input
    tsf::ModelConfig mc = rc.model;
    if (mc.d_model == 64) mc.d_model = 8; // shrink unless explicitly configured
    if (mc.window == 0) mc.window = 6;
    mc.heads = 1;
    mc.d_attn = 0;
    mc.dropout = 0.0;
    mc.d_input = 2;
    mc.target_columns = {0};
    mc.validate();

    std::mt19937_64 rng(rc.train.seed);
    tsf::ModelState model = tsf::build_model(mc, rng);
    tsf::Tensor window(mc.window, mc.d_input);
    tsf::Tensor target(mc.n(), 1);
    std::uniform_real_distribution<double> u(0.0, 1.0);
    for (auto& x : window.data()) x = u(rng);
    for (auto& x : target.data()) x = u(rng);

    std::mt19937_64 unused(0);
    auto loss_fn = [&](tsf::Graph& g) {
        tsf::Tensor pred = tsf::model_forward(g, model, window, false, unused);
        return tsf::mse_loss(g, pred, target);
    };
    tsf::GradCheckReport report = tsf::grad_check(loss_fn, model.params, 1e-5);

    fs::create_directories(rc.out_dir);
    std::ofstream out(fs::path(rc.out_dir) / "gradcheck.txt");
    bool ok = true;
    for (const auto& e : report.entries) {
        bool pass = e.max_rel_error < tol;
        ok = ok && pass;
        out << (pass ? "pass " : "FAIL ") << e.name << " " << e.max_rel_error << "\n";
        if (!pass) std::cerr << "gradcheck FAIL " << e.name << " " << e.max_rel_error << "\n";
    }
    out << "max_rel_error " << report.max_rel_error << "\n";
    std::cout << "gradcheck max relative error " << report.max_rel_error << " over "
              << report.entries.size() << " parameter groups\n";
    return ok ? 0 : kExitNumeric;
}

int cmd_synth(const std::string& kind, int T, double noise, unsigned long long seed, int aux,
              const std::string& out_path) {
    tsf::TimeSeriesTable table = tsf::synth_series(tsf::parse_synth_kind(kind), T, noise, seed, aux);
    tsf::write_csv(table, out_path);
    std::cout << "wrote " << table.values.rows() << " rows to " << out_path << "\n";
    return 0;
}

} // namespace

int main(int argc, char** argv) {
    CLI::App app{"Transformer time-series forecaster with differential attention fusion"};
    app.require_subcommand(1);

    std::string config_path, data_path, out_dir, checkpoint_path, split_name = "test";
    std::string synth_kind = "trend", synth_out = "synth.csv";
    std::vector<std::string> target_names;
    int epochs = -1, window = 0, synth_T = 100, synth_aux = 0;
    long long seed = -1;
    double synth_noise = 0.0, gradcheck_tol = 1e-4;
    bool ablate_attn = false, ablate_res = false, per_t_fusion = false;

    auto add_shared = [&](CLI::App* cmd) {
        cmd->add_option("--config", config_path, "JSON config file");
        cmd->add_option("--data", data_path, "input CSV");
        cmd->add_option("--out", out_dir, "output directory");
        cmd->add_option("--seed", seed, "root seed");
        cmd->add_option("--epochs", epochs, "training epochs");
        cmd->add_option("--window", window, "window length N");
        cmd->add_option("--targets", target_names, "target column names")->delimiter(',');
        cmd->add_flag("--ablate-diff-attention", ablate_attn);
        cmd->add_flag("--ablate-residual-layer", ablate_res);
        cmd->add_flag("--per-timestep-fusion-weights", per_t_fusion);
    };

    CLI::App* train = app.add_subcommand("train", "train a model");
    add_shared(train);

    CLI::App* predict = app.add_subcommand("predict", "run a checkpoint over a split");
    add_shared(predict);
    predict->add_option("--checkpoint", checkpoint_path, "checkpoint file")->required();
    predict->add_option("--split", split_name, "train|test");

    CLI::App* eval = app.add_subcommand("eval", "predict and report MAE/RMSE");
    add_shared(eval);
    eval->add_option("--checkpoint", checkpoint_path, "checkpoint file")->required();
    eval->add_option("--split", split_name, "train|test");

    CLI::App* gradcheck = app.add_subcommand("gradcheck", "finite-difference check of all gradients");
    add_shared(gradcheck);
    gradcheck->add_option("--tol", gradcheck_tol, "relative tolerance");

    CLI::App* synth = app.add_subcommand("synth", "generate a synthetic CSV");
    synth->add_option("--kind", synth_kind, "trend|sine|trend+sine|mutation");
    synth->add_option("--length", synth_T, "number of rows");
    synth->add_option("--noise", synth_noise, "noise sigma");
    synth->add_option("--seed", seed, "generator seed");
    synth->add_option("--aux", synth_aux, "auxiliary columns");
    synth->add_option("--out-file", synth_out, "output CSV path");

    CLI11_PARSE(app, argc, argv);

    try {
        RunConfig rc;
        if (!config_path.empty()) apply_config_file(rc, config_path);
        // precedence: flag > file > default
        if (!data_path.empty()) rc.data_path = data_path;
        if (!out_dir.empty()) rc.out_dir = out_dir;
        if (seed >= 0) rc.train.seed = static_cast<unsigned long long>(seed);
        if (epochs >= 0) rc.train.epochs = epochs;
        if (window > 0) rc.model.window = window;
        if (!target_names.empty()) rc.target_names = target_names;
        if (ablate_attn) rc.model.ablate_diff_attention = true;
        if (ablate_res) rc.model.ablate_residual_layer = true;
        if (per_t_fusion) rc.model.per_timestep_fusion_weights = true;

        if (app.got_subcommand(train)) return cmd_train(std::move(rc));
        if (app.got_subcommand(predict))
            return cmd_eval(checkpoint_path, std::move(rc), split_name, false);
        if (app.got_subcommand(eval))
            return cmd_eval(checkpoint_path, std::move(rc), split_name, true);
        if (app.got_subcommand(gradcheck)) return cmd_gradcheck(std::move(rc), gradcheck_tol);
        if (app.got_subcommand(synth))
            return cmd_synth(synth_kind, synth_T, synth_noise,
                             seed >= 0 ? static_cast<unsigned long long>(seed) : 1, synth_aux,
                             synth_out);
    } catch (const tsf::InputError& e) {
        std::cerr << "error: input: " << e.what() << "\n";
        return kExitInput;
    } catch (const tsf::ConfigError& e) {
        std::cerr << "error: config: " << e.what() << "\n";
        return kExitConfig;
    } catch (const tsf::DimensionError& e) {
        std::cerr << "error: config: " << e.what() << "\n";
        return kExitConfig;
    } catch (const tsf::NumericError& e) {
        std::cerr << "error: numeric: " << e.what() << "\n";
        return kExitNumeric;
    }
    return 0;
}
