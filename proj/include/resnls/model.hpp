#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "resnls/data.hpp"
#include "resnls/layers.hpp"
#include "resnls/tensor.hpp"

namespace resnls {

enum class Architecture { kResnls, kCnn, kRnn, kLstm, kBilstm };

Architecture architecture_from_name(const std::string& name);
std::string architecture_name(Architecture arch);

struct ModelSpec {
    Architecture architecture = Architecture::kResnls;
    std::size_t window_n = 5;
    std::size_t conv_filters = 64;
    std::size_t kernel_size = 3;
    std::size_t lstm_hidden = 32;
    double dropout_keep = 0.8;
    bool bn_after_each_conv = false;
    std::uint64_t init_seed = 1;

    void validate() const;  // throws ConfigError naming the bad field
};

struct TrainingFingerprint {
    std::uint64_t shuffle_seed = 0;
    std::uint64_t epochs = 0;
    double final_train_mse = 0.0;
    double final_test_mse = 0.0;
};

// One registered parameter tensor. The registry's order is the schema order:
// it fixes initialization draws and the serialized blob layout.
struct Param {
    std::string name;
    TensorPtr tensor;
    bool trainable = true;      // false for batch-norm running buffers
    bool weight_decay = false;  // true only for conv kernels
};

class Model {
  public:
    static Model build(const ModelSpec& spec);

    Model(Model&&) = default;
    Model& operator=(Model&&) = default;
    Model(const Model&) = delete;
    Model& operator=(const Model&) = delete;

    const ModelSpec& spec() const { return spec_; }
    const std::vector<Param>& params() const { return params_; }
    const Param& param(const std::string& name) const;

    // x is [batch x window_n]; result is [batch x 1], normalized scale.
    TensorPtr forward(Tape& tape, const TensorPtr& x, Mode mode);

    // Eval-mode forward over [N x window_n] in fixed-size chunks; chunking
    // cannot change the math since every row is computed independently.
    TensorPtr predict(const TensorPtr& inputs, std::size_t chunk = 512);

    // FNV-1a over all parameter bytes in schema order.
    std::uint64_t parameter_checksum() const;

    void save(const std::string& path) const;
    static Model load(const std::string& path);

    Normalizer normalizer;
    TrainingFingerprint fingerprint;

  private:
    Model() = default;

    TensorPtr conv_branch(Tape& tape, const TensorPtr& x, Mode mode);

    ModelSpec spec_;
    std::vector<Param> params_;

    Conv1DLayer conv1_, conv2_;
    BatchNorm1DLayer bn1_, bn2_;  // bn2 only with bn_after_each_conv
    DropoutLayer dropout_;
    LinearLayer proj_;  // conv features back to window length
    LstmCell lstm_;     // also the forward direction of bilstm
    LstmCell lstm_bwd_;
    RnnCell rnn_;
    LinearLayer head_;
};

}  // namespace resnls
