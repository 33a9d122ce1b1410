#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "stshn/autodiff.hpp"
#include "stshn/datapipe.hpp"
#include "stshn/model.hpp"

namespace stshn {

struct TrainConfig {
    OutputMode mode = OutputMode::classification;
    std::size_t epochs = 10;
    double learning_rate = 0.001;
    double decay = 0.96;        // per-epoch learning-rate decay
    double weight_decay = 0.0;  // lambda on the squared parameter norm
    std::uint64_t seed = 1;

    void validate() const;
};

// Binary cross-entropy over occurrence indicators plus lambda * sum ||theta||^2.
// Predictions are clamped to [1e-7, 1-1e-7] before the logs.
Var loss_classification(Tape& tape, Var probabilities, const std::vector<std::uint32_t>& target_counts,
                        const std::vector<Var>& params, double lambda);

// Squared error against z-scored counts plus the same regularizer.
Var loss_regression(Tape& tape, Var predictions, const std::vector<double>& target_normalized,
                    const std::vector<Var>& params, double lambda);

struct AdamState {
    std::vector<Tensor> m, v;
    std::size_t step = 0;

    static AdamState init(const ModelParams& params);
};

// Standard Adam: beta1 0.9, beta2 0.999, eps 1e-8, bias-corrected moments.
void adam_step(ModelParams& params, const std::vector<Tensor>& grads, AdamState& state, double lr);

struct EpochRecord {
    double train_loss = 0.0;
    double val_metric = 0.0;  // macro-F1 (classification) or MAE (regression); NaN without validation windows
};

struct TrainResult {
    ModelParams params;  // best validation epoch (last epoch without validation data)
    std::vector<EpochRecord> history;
    std::size_t best_epoch = 0;
};

// One optimizer step per window, windows shuffled per epoch from the seed.
// Deterministic: identical config and data give an identical history.
TrainResult train(const CrimeTensor& data, const WindowSplit& windows, const Hyperparams& hp,
                  const TrainConfig& cfg, std::size_t window_len);

// Versioned text checkpoint: architecture meta lines, then one record per
// parameter with 17 significant digits.
void save_checkpoint(const std::string& path, const ModelParams& params);
ModelParams load_checkpoint(const std::string& path);

// Input slots [target - wlen, target) of a [R,T,C] array as [R,wlen,C].
Tensor window_slice(const Tensor& xn, std::size_t wlen, std::size_t target);

}  // namespace stshn
