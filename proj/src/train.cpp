#include "tsf/train.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numeric>
#include <sstream>

#include <json.hpp>

namespace tsf {

void TrainConfig::validate() const {
    if (initial_lr <= 0.0) throw ConfigError("initial_lr must be > 0");
    if (batch_size < 1) throw ConfigError("batch_size must be >= 1");
    if (epochs < 0) throw ConfigError("epochs must be >= 0");
    if (lr_decay_base <= 0.0 || lr_decay_base > 1.0)
        throw ConfigError("lr_decay_base must be in (0, 1]");
}

double lr_schedule(int epoch, double lr0, double base, bool conventional) {
    if (conventional) return lr0 * std::pow(base, epoch);
    double exponent = static_cast<double>(epoch) * (epoch + 1) / 2.0;
    return lr0 * std::pow(base, exponent);
}

Tensor mse_loss(Graph& g, const Tensor& pred, const Tensor& target) {
    if (!pred.same_shape(target))
        throw DimensionError("mse_loss: " + pred.shape_str() + " vs " + target.shape_str());
    Tensor diff = sub(g, pred, target);
    Tensor sq = mul(g, diff, diff);
    return scale(g, sum_all(g, sq), 1.0 / pred.size());
}

AdamState make_adam_state(const ModelState& model) {
    AdamState s;
    for (const auto& [name, t] : model.params) {
        s.m.emplace_back(t.data().size(), 0.0);
        s.v.emplace_back(t.data().size(), 0.0);
    }
    return s;
}

void adam_step(ModelState& model, AdamState& adam, const TrainConfig& cfg, double lr) {
    ++adam.step;
    double bc1 = 1.0 - std::pow(cfg.beta1, static_cast<double>(adam.step));
    double bc2 = 1.0 - std::pow(cfg.beta2, static_cast<double>(adam.step));
    for (size_t p = 0; p < model.params.size(); ++p) {
        Tensor t = model.params[p].second;
        auto& g = t.grad();
        auto& m = adam.m[p];
        auto& v = adam.v[p];
        auto& val = t.data();
        for (size_t i = 0; i < val.size(); ++i) {
            m[i] = cfg.beta1 * m[i] + (1.0 - cfg.beta1) * g[i];
            v[i] = cfg.beta2 * v[i] + (1.0 - cfg.beta2) * g[i] * g[i];
            double mhat = m[i] / bc1;
            double vhat = v[i] / bc2;
            val[i] -= lr * mhat / (std::sqrt(vhat) + cfg.adam_eps);
        }
    }
}

Trainer make_trainer(const ModelConfig& model_cfg, const TrainConfig& train_cfg) {
    train_cfg.validate();
    Trainer t;
    t.cfg = train_cfg;
    t.rng.seed(train_cfg.seed);
    t.model = build_model(model_cfg, t.rng);
    t.adam = make_adam_state(t.model);
    return t;
}

namespace {

void clip_gradients(ModelState& model, double max_norm) {
    double sq = 0.0;
    for (auto& [name, t] : model.params)
        for (double g : t.grad()) sq += g * g;
    double norm = std::sqrt(sq);
    if (norm <= max_norm || norm == 0.0) return;
    double s = max_norm / norm;
    for (auto& [name, t] : model.params)
        for (double& g : t.grad()) g *= s;
}

[[noreturn]] void abort_non_finite(const ModelState& model, int epoch) {
    for (const auto& [name, t] : model.params)
        for (double x : t.data())
            if (!std::isfinite(x))
                throw NumericError("non-finite value in parameter '" + name + "' at epoch " +
                                   std::to_string(epoch));
    throw NumericError("non-finite loss at epoch " + std::to_string(epoch));
}

} // namespace

void train_epochs(Trainer& trainer, const WindowedDataset& data, int epochs) {
    if (data.items.empty()) throw InputError("training dataset is empty");
    int count = static_cast<int>(data.items.size());
    for (int e = 0; e < epochs; ++e) {
        double lr = lr_schedule(trainer.epoch, trainer.cfg.initial_lr, trainer.cfg.lr_decay_base,
                                trainer.cfg.conventional_decay);
        std::vector<int> order(count);
        std::iota(order.begin(), order.end(), 0);
        std::shuffle(order.begin(), order.end(), trainer.rng);

        double epoch_loss_sum = 0.0;
        for (int at = 0; at < count; at += trainer.cfg.batch_size) {
            int batch_n = std::min(trainer.cfg.batch_size, count - at);
            Graph g(true);
            trainer.model.zero_grads();
            Tensor total;
            for (int b = 0; b < batch_n; ++b) {
                const auto& item = data.items[order[at + b]];
                Tensor pred = model_forward(g, trainer.model, item.window, true, trainer.rng);
                Tensor li = mse_loss(g, pred, item.targets);
                total = b == 0 ? li : add(g, total, li);
            }
            Tensor batch_loss = scale(g, total, 1.0 / batch_n);
            double loss_value = batch_loss.data()[0];
            if (!std::isfinite(loss_value)) abort_non_finite(trainer.model, trainer.epoch);
            g.backward(batch_loss);
            if (trainer.cfg.grad_clip > 0.0) clip_gradients(trainer.model, trainer.cfg.grad_clip);
            adam_step(trainer.model, trainer.adam, trainer.cfg, lr);
            epoch_loss_sum += loss_value * batch_n;
        }
        trainer.loss_history.push_back(epoch_loss_sum / count);
        ++trainer.epoch;
    }
}

void write_loss_history(const std::vector<double>& losses, const std::string& path) {
    std::ofstream out(path);
    if (!out) throw InputError("cannot write loss history: " + path);
    out << "epoch,mean_loss\n";
    out.precision(17);
    for (size_t e = 0; e < losses.size(); ++e) out << e << "," << losses[e] << "\n";
}

// --- checkpointing --------------------------------------------------------

namespace {

using nlohmann::json;

json model_config_to_json(const ModelConfig& c) {
    return json{{"d_input", c.d_input},
                {"d_model", c.d_model},
                {"d_attn", c.d_attn},
                {"heads", c.heads},
                {"encoder_layers", c.encoder_layers},
                {"decoder_layers", c.decoder_layers},
                {"ffn_width", c.ffn_width},
                {"window", c.window},
                {"target_columns", c.target_columns},
                {"dropout", c.dropout},
                {"ablate_diff_attention", c.ablate_diff_attention},
                {"ablate_residual_layer", c.ablate_residual_layer},
                {"per_timestep_fusion_weights", c.per_timestep_fusion_weights}};
}

ModelConfig model_config_from_json(const json& j) {
    ModelConfig c;
    c.d_input = j.at("d_input");
    c.d_model = j.at("d_model");
    c.d_attn = j.at("d_attn");
    c.heads = j.at("heads");
    c.encoder_layers = j.at("encoder_layers");
    c.decoder_layers = j.at("decoder_layers");
    c.ffn_width = j.at("ffn_width");
    c.window = j.at("window");
    c.target_columns = j.at("target_columns").get<std::vector<int>>();
    c.dropout = j.at("dropout");
    c.ablate_diff_attention = j.at("ablate_diff_attention");
    c.ablate_residual_layer = j.at("ablate_residual_layer");
    c.per_timestep_fusion_weights = j.at("per_timestep_fusion_weights");
    return c;
}

json train_config_to_json(const TrainConfig& c) {
    return json{{"initial_lr", c.initial_lr},
                {"lr_decay_base", c.lr_decay_base},
                {"batch_size", c.batch_size},
                {"epochs", c.epochs},
                {"seed", c.seed},
                {"beta1", c.beta1},
                {"beta2", c.beta2},
                {"adam_eps", c.adam_eps},
                {"conventional_decay", c.conventional_decay},
                {"grad_clip", c.grad_clip}};
}

TrainConfig train_config_from_json(const json& j) {
    TrainConfig c;
    c.initial_lr = j.at("initial_lr");
    c.lr_decay_base = j.at("lr_decay_base");
    c.batch_size = j.at("batch_size");
    c.epochs = j.at("epochs");
    c.seed = j.at("seed");
    c.beta1 = j.at("beta1");
    c.beta2 = j.at("beta2");
    c.adam_eps = j.at("adam_eps");
    c.conventional_decay = j.at("conventional_decay");
    c.grad_clip = j.at("grad_clip");
    return c;
}

} // namespace

void save_checkpoint(const Trainer& trainer, const std::string& path) {
    json j;
    j["format"] = "tsf-checkpoint-v1";
    j["model_config"] = model_config_to_json(trainer.model.config);
    j["train_config"] = train_config_to_json(trainer.cfg);
    j["epoch"] = trainer.epoch;
    std::ostringstream rng_state;
    rng_state << trainer.rng;
    j["rng_state"] = rng_state.str();
    j["loss_history"] = trainer.loss_history;
    if (trainer.norm.fitted()) {
        j["normalization"] = {{"min", trainer.norm.min}, {"max", trainer.norm.max}};
    }
    json params = json::array();
    for (const auto& [name, t] : trainer.model.params) {
        params.push_back(
            {{"name", name}, {"rows", t.rows()}, {"cols", t.cols()}, {"data", t.data()}});
    }
    j["params"] = params;
    j["adam"] = {{"step", trainer.adam.step}, {"m", trainer.adam.m}, {"v", trainer.adam.v}};

    std::ofstream out(path);
    if (!out) throw InputError("cannot write checkpoint: " + path);
    out << j.dump(1);
}

Trainer load_checkpoint(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw InputError("cannot open checkpoint: " + path);
    json j;
    try {
        in >> j;
    } catch (const std::exception& e) {
        throw InputError("malformed checkpoint " + path + ": " + e.what());
    }
    if (j.value("format", "") != "tsf-checkpoint-v1")
        throw InputError("unrecognized checkpoint format in " + path);

    Trainer t;
    t.cfg = train_config_from_json(j.at("train_config"));
    ModelConfig mc = model_config_from_json(j.at("model_config"));
    t.rng.seed(t.cfg.seed);
    t.model = build_model(mc, t.rng);
    t.epoch = j.at("epoch");
    t.loss_history = j.at("loss_history").get<std::vector<double>>();
    if (j.contains("normalization")) {
        t.norm.min = j["normalization"].at("min").get<std::vector<double>>();
        t.norm.max = j["normalization"].at("max").get<std::vector<double>>();
    }

    const json& params = j.at("params");
    if (params.size() != t.model.params.size())
        throw InputError("checkpoint parameter count mismatch");
    for (size_t i = 0; i < params.size(); ++i) {
        const json& p = params[i];
        auto& [name, tensor] = t.model.params[i];
        if (p.at("name") != name)
            throw InputError("checkpoint parameter order mismatch at '" + name + "'");
        auto data = p.at("data").get<std::vector<double>>();
        if (data.size() != tensor.data().size())
            throw InputError("checkpoint parameter size mismatch at '" + name + "'");
        Tensor handle = tensor;
        handle.data() = std::move(data);
    }

    t.adam = make_adam_state(t.model);
    t.adam.step = j.at("adam").at("step");
    auto m = j.at("adam").at("m").get<std::vector<std::vector<double>>>();
    auto v = j.at("adam").at("v").get<std::vector<std::vector<double>>>();
    if (m.size() != t.adam.m.size() || v.size() != t.adam.v.size())
        throw InputError("checkpoint optimizer state mismatch");
    t.adam.m = std::move(m);
    t.adam.v = std::move(v);

    std::istringstream rng_state(j.at("rng_state").get<std::string>());
    rng_state >> t.rng;
    if (!rng_state) throw InputError("bad rng state in checkpoint");
    return t;
}

} // namespace tsf
