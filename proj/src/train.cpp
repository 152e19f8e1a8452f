#include "resnls/train.hpp"

#include <cmath>
#include <cstdio>
#include <numeric>
#include <string>

#include "resnls/errors.hpp"
#include "resnls/rng.hpp"

namespace resnls {

void TrainConfig::validate() const {
    if (learning_rate < 0.0 || !std::isfinite(learning_rate)) {
        throw ConfigError("learning_rate must be finite and non-negative");
    }
    if (batch_size < 1) {
        throw ConfigError("batch_size must be at least 1");
    }
    if (epochs < 1) {
        throw ConfigError("epochs must be at least 1");
    }
    if (weight_decay < 0.0) {
        throw ConfigError("weight_decay must be non-negative");
    }
    if (adam_beta1 < 0.0 || adam_beta1 >= 1.0) {
        throw ConfigError("adam_beta1 must be in [0, 1)");
    }
    if (adam_beta2 < 0.0 || adam_beta2 >= 1.0) {
        throw ConfigError("adam_beta2 must be in [0, 1)");
    }
    if (adam_eps <= 0.0) {
        throw ConfigError("adam_eps must be positive");
    }
}

AdamState AdamState::init(const std::vector<Param>& params) {
    AdamState state;
    state.slots.resize(params.size());
    for (std::size_t i = 0; i < params.size(); ++i) {
        if (!params[i].trainable) continue;
        state.slots[i].m.assign(params[i].tensor->size(), 0.0);
        state.slots[i].v.assign(params[i].tensor->size(), 0.0);
    }
    return state;
}

void adam_step(AdamState& state, const std::vector<Param>& params,
               const TrainConfig& config) {
    if (state.slots.size() != params.size()) {
        throw ContractError("adam_step: state was initialized for " +
                            std::to_string(state.slots.size()) +
                            " parameters, got " +
                            std::to_string(params.size()));
    }
    state.t += 1;
    const double b1 = config.adam_beta1;
    const double b2 = config.adam_beta2;
    const double corr1 = 1.0 - std::pow(b1, static_cast<double>(state.t));
    const double corr2 = 1.0 - std::pow(b2, static_cast<double>(state.t));
    for (std::size_t i = 0; i < params.size(); ++i) {
        const Param& p = params[i];
        if (!p.trainable) continue;
        if (!p.tensor->has_grad()) {
            throw ContractError("adam_step: parameter '" + p.name +
                                "' has no gradient");
        }
        std::vector<double>& w = p.tensor->data();
        const std::vector<double>& g = p.tensor->grad();
        AdamState::Slot& slot = state.slots[i];
        const double decay = p.weight_decay ? config.weight_decay : 0.0;
        for (std::size_t j = 0; j < w.size(); ++j) {
            if (decay != 0.0) {
                w[j] *= 1.0 - config.learning_rate * decay;
            }
            slot.m[j] = b1 * slot.m[j] + (1.0 - b1) * g[j];
            slot.v[j] = b2 * slot.v[j] + (1.0 - b2) * g[j] * g[j];
            const double m_hat = slot.m[j] / corr1;
            const double v_hat = slot.v[j] / corr2;
            w[j] -= config.learning_rate * m_hat /
                    (std::sqrt(v_hat) + config.adam_eps);
        }
    }
}

TensorPtr mse_loss(Tape& tape, const TensorPtr& pred, const TensorPtr& target) {
    if (pred->shape() != target->shape()) {
        throw DimensionError("mse_loss: prediction " + shape_str(pred->shape()) +
                             " vs target " + shape_str(target->shape()));
    }
    auto diff = tape.sub(pred, target);
    return tape.scale(tape.sum(tape.mul(diff, diff)),
                      1.0 / static_cast<double>(pred->size()));
}

void LossCurve::write_csv(const std::string& path) const {
    std::FILE* f = std::fopen(path.c_str(), "w");
    if (!f) {
        throw DataError("cannot write loss curve to '" + path + "'");
    }
    std::fprintf(f, "epoch,train_mse,test_mse\n");
    std::fprintf(f, "0,%.17g,%.17g\n", initial_train_mse, initial_test_mse);
    for (std::size_t i = 0; i < train_mse.size(); ++i) {
        std::fprintf(f, "%zu,%.17g,%.17g\n", i + 1, train_mse[i], test_mse[i]);
    }
    std::fclose(f);
}

double eval_mse(Model& model, const WindowedDataset& ds) {
    if (ds.size() == 0) {
        throw DataError("cannot evaluate on an empty dataset");
    }
    auto pred = model.predict(ds.inputs);
    double acc = 0.0;
    for (std::size_t i = 0; i < ds.size(); ++i) {
        const double d = pred->at(i, 0) - ds.targets->at(i, 0);
        acc += d * d;
    }
    return acc / static_cast<double>(ds.size());
}

LossCurve train(Model& model, const WindowedDataset& train_set,
                const WindowedDataset& test_set, const TrainConfig& config) {
    config.validate();
    if (train_set.size() == 0) {
        throw DataError("training dataset is empty");
    }
    if (test_set.size() == 0) {
        throw DataError("test dataset is empty");
    }
    const std::size_t n = model.spec().window_n;
    if (train_set.window_n != n || test_set.window_n != n) {
        throw DimensionError(
            "dataset windows (train " + std::to_string(train_set.window_n) +
            ", test " + std::to_string(test_set.window_n) +
            ") do not match the model's window_n " + std::to_string(n));
    }

    AdamState state = AdamState::init(model.params());
    DetRng shuffle_rng(config.shuffle_seed);
    LossCurve curve;
    curve.initial_train_mse = eval_mse(model, train_set);
    curve.initial_test_mse = eval_mse(model, test_set);

    const std::size_t rows = train_set.size();
    std::vector<std::size_t> order(rows);
    std::iota(order.begin(), order.end(), std::size_t{0});

    for (std::size_t epoch = 0; epoch < config.epochs; ++epoch) {
        shuffle_rng.shuffle(order);
        std::size_t batch_idx = 0;
        for (std::size_t start = 0; start < rows;
             start += config.batch_size, ++batch_idx) {
            const std::size_t count = std::min(config.batch_size, rows - start);
            auto x = tensor({count, n});
            auto y = tensor({count, 1});
            for (std::size_t i = 0; i < count; ++i) {
                const std::size_t row = order[start + i];
                for (std::size_t j = 0; j < n; ++j) {
                    x->at(i, j) = train_set.inputs->at(row, j);
                }
                y->at(i, 0) = train_set.targets->at(row, 0);
            }
            Tape tape;
            auto loss = mse_loss(tape, model.forward(tape, x, Mode::kTrain), y);
            if (!std::isfinite(loss->at(0))) {
                throw DivergenceError("training diverged: non-finite loss at "
                                      "epoch " +
                                      std::to_string(epoch + 1) + ", batch " +
                                      std::to_string(batch_idx + 1));
            }
            tape.backward(loss);
            adam_step(state, model.params(), config);
            for (const Param& p : model.params()) {
                if (p.trainable) p.tensor->zero_grad();
            }
        }
        curve.train_mse.push_back(eval_mse(model, train_set));
        curve.test_mse.push_back(eval_mse(model, test_set));
    }

    model.fingerprint.shuffle_seed = config.shuffle_seed;
    model.fingerprint.epochs = config.epochs;
    model.fingerprint.final_train_mse = curve.train_mse.back();
    model.fingerprint.final_test_mse = curve.test_mse.back();
    return curve;
}

}  // namespace resnls
