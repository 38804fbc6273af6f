#pragma once

#include <random>
#include <string>
#include <vector>

#include "tsf/data.hpp"
#include "tsf/model.hpp"

namespace tsf {

struct TrainConfig {
    double initial_lr = 0.0005;
    double lr_decay_base = 0.95;
    int batch_size = 20;
    int epochs = 50;
    unsigned long long seed = 1;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double adam_eps = 1e-8;
    bool conventional_decay = false; // base^epoch instead of the compounding schedule
    double grad_clip = 0.0;          // max global norm; 0 disables

    void validate() const;
};

/// Learning rate at a given epoch (epoch 0 = initial). The compounding
/// schedule is lrate(e) = lrate(e-1) * base^e, i.e. lr0 * base^(e(e+1)/2).
double lr_schedule(int epoch, double lr0, double base, bool conventional = false);

/// Mean over all entries of the squared error, as a differentiable scalar.
Tensor mse_loss(Graph& g, const Tensor& pred, const Tensor& target);

struct AdamState {
    std::vector<std::vector<double>> m;
    std::vector<std::vector<double>> v;
    long long step = 0;
};

AdamState make_adam_state(const ModelState& model);

/// One bias-corrected Adam update over every registered parameter, consuming
/// the currently accumulated gradients.
void adam_step(ModelState& model, AdamState& adam, const TrainConfig& cfg, double lr);

/// Everything needed to stop and resume training bitwise.
struct Trainer {
    ModelState model;
    AdamState adam;
    TrainConfig cfg;
    std::mt19937_64 rng;
    int epoch = 0; // completed epochs
    NormalizationState norm;
    std::vector<double> loss_history; // mean window MSE per epoch
};

Trainer make_trainer(const ModelConfig& model_cfg, const TrainConfig& train_cfg);

/// Runs `epochs` further epochs. Per epoch: seeded shuffle, batches of
/// cfg.batch_size (final partial batch included), average batch MSE,
/// backward, Adam with the scheduled rate. Aborts on non-finite loss.
void train_epochs(Trainer& trainer, const WindowedDataset& data, int epochs);

void write_loss_history(const std::vector<double>& losses, const std::string& path);

// --- checkpointing --------------------------------------------------------

/// Single JSON document: configs, epoch, rng state, normalization state,
/// optimizer moments, and every named parameter with full round-trip
/// double formatting.
void save_checkpoint(const Trainer& trainer, const std::string& path);
Trainer load_checkpoint(const std::string& path);

} // namespace tsf
