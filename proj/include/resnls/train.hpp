#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "resnls/data.hpp"
#include "resnls/model.hpp"
#include "resnls/tensor.hpp"

namespace resnls {

struct TrainConfig {
    double learning_rate = 1e-3;
    std::size_t batch_size = 64;
    std::size_t epochs = 50;
    double weight_decay = 1e-5;  // conv kernels only, decoupled
    double adam_beta1 = 0.9;
    double adam_beta2 = 0.999;
    double adam_eps = 1e-8;
    std::uint64_t shuffle_seed = 1;

    // learning_rate 0 is allowed: it is the documented way to run the loop
    // without moving the parameters.
    void validate() const;
};

// First/second moment buffers, one slot per model parameter (untrainable
// slots stay empty). Shapes always match the parameter.
struct AdamState {
    struct Slot {
        std::vector<double> m, v;
    };
    std::vector<Slot> slots;
    std::uint64_t t = 0;

    static AdamState init(const std::vector<Param>& params);
};

// Decoupled weight decay on the flagged parameters, then one bias-corrected
// Adam update per trainable parameter. Gradients must already be populated.
void adam_step(AdamState& state, const std::vector<Param>& params,
               const TrainConfig& config);

// Mean of squared differences; differentiable. Shapes must match exactly.
TensorPtr mse_loss(Tape& tape, const TensorPtr& pred, const TensorPtr& target);

struct LossCurve {
    // Eval-mode losses of the freshly initialized model, before any update.
    double initial_train_mse = 0.0;
    double initial_test_mse = 0.0;
    // One entry per completed epoch, eval mode, normalized scale.
    std::vector<double> train_mse;
    std::vector<double> test_mse;

    // `epoch,train_mse,test_mse` with an epoch-0 row for the initial losses.
    void write_csv(const std::string& path) const;
};

// Eval-mode MSE of the model over a whole dataset, normalized scale.
double eval_mse(Model& model, const WindowedDataset& ds);

// Mini-batch training: per epoch, shuffle, batches of batch_size (the last
// partial batch is kept), train-mode forward, MSE loss, backward, Adam.
// Fully deterministic given the model's init seed and config.shuffle_seed.
// Also stamps the model's training fingerprint.
LossCurve train(Model& model, const WindowedDataset& train_set,
                const WindowedDataset& test_set, const TrainConfig& config);

}  // namespace resnls
