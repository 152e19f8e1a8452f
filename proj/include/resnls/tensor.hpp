#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <memory>
#include <string>
#include <unordered_set>
#include <vector>

#include "resnls/errors.hpp"
#include "resnls/rng.hpp"

namespace resnls {

std::string shape_str(const std::vector<std::size_t>& shape);

// Dense row-major tensor of doubles with an optional gradient buffer.
// Everything is 64-bit: the models here are tiny and gradient checks at
// tight tolerances need the precision.
class Tensor {
  public:
    Tensor() : shape_{1}, data_(1, 0.0) {}
    explicit Tensor(std::vector<std::size_t> shape);
    Tensor(std::vector<std::size_t> shape, std::vector<double> data);
    static Tensor scalar(double v);

    const std::vector<std::size_t>& shape() const { return shape_; }
    std::size_t rank() const { return shape_.size(); }
    std::size_t dim(std::size_t i) const { return shape_[i]; }
    std::size_t size() const { return data_.size(); }

    std::vector<double>& data() { return data_; }
    const std::vector<double>& data() const { return data_; }

    double& at(std::size_t i) { return data_[i]; }
    double at(std::size_t i) const { return data_[i]; }
    double& at(std::size_t i, std::size_t j) { return data_[i * shape_[1] + j]; }
    double at(std::size_t i, std::size_t j) const { return data_[i * shape_[1] + j]; }
    double& at(std::size_t i, std::size_t j, std::size_t k) {
        return data_[(i * shape_[1] + j) * shape_[2] + k];
    }
    double at(std::size_t i, std::size_t j, std::size_t k) const {
        return data_[(i * shape_[1] + j) * shape_[2] + k];
    }

    bool requires_grad = false;

    bool has_grad() const { return !grad_.empty(); }
    // Allocates a zeroed buffer on first access.
    std::vector<double>& grad();
    void zero_grad();
    void fill(double v);

  private:
    std::vector<std::size_t> shape_;
    std::vector<double> data_;
    std::vector<double> grad_;
};

using TensorPtr = std::shared_ptr<Tensor>;

TensorPtr tensor(std::vector<std::size_t> shape);
TensorPtr tensor(std::vector<std::size_t> shape, std::vector<double> data);
// Zeroed tensor with requires_grad set; the usual way to make a trainable leaf.
TensorPtr param(std::vector<std::size_t> shape);

// Reverse-mode tape. Operations record themselves in execution order, which
// is a topological order by construction; backward() walks the list once in
// reverse. One tape per forward pass, single-threaded.
//
// backward() computes adjoints in per-call scratch buffers and then ADDS
// them into the .grad of every requires_grad tensor, so gradients
// accumulate across calls until explicitly zeroed and a second backward on
// the same tape contributes exactly one more unit of gradient.
class Tape {
  public:
    explicit Tape(bool recording = true) : recording_(recording) {}
    Tape(const Tape&) = delete;
    Tape& operator=(const Tape&) = delete;

    bool recording() const { return recording_; }
    std::size_t node_count() const { return nodes_.size(); }

    // --- primitive operations -------------------------------------------
    TensorPtr matmul(const TensorPtr& a, const TensorPtr& b);
    // y = x * w^T (+ b); x is [n x in], w is [out x in], b is [out].
    TensorPtr linear(const TensorPtr& x, const TensorPtr& w, const TensorPtr& b);
    TensorPtr linear(const TensorPtr& x, const TensorPtr& w);

    // Equal shapes, or b a vector broadcast over the trailing axis of a.
    TensorPtr add(const TensorPtr& a, const TensorPtr& b);
    TensorPtr sub(const TensorPtr& a, const TensorPtr& b);
    TensorPtr mul(const TensorPtr& a, const TensorPtr& b);

    TensorPtr relu(const TensorPtr& x);
    TensorPtr sigmoid(const TensorPtr& x);
    TensorPtr tanh(const TensorPtr& x);
    TensorPtr scale(const TensorPtr& x, double c);
    TensorPtr sum(const TensorPtr& x);  // -> scalar, shape [1]
    TensorPtr reshape(const TensorPtr& x, std::vector<std::size_t> shape);

    // [batch x steps x features] -> [batch x features] at step t.
    TensorPtr select_step(const TensorPtr& x, std::size_t t);
    // list of [batch x features] -> [batch x steps x features].
    TensorPtr stack_steps(const std::vector<TensorPtr>& steps);
    // Concatenate two rank-2 tensors along the last axis.
    TensorPtr concat(const TensorPtr& a, const TensorPtr& b);

    // Cross-correlation (no kernel flip) with zero padding, stride 1.
    // x is [batch x in_ch x len], kernels [out_ch x in_ch x k], bias [out_ch].
    TensorPtr conv1d(const TensorPtr& x, const TensorPtr& kernels,
                     const TensorPtr& bias, std::size_t padding);

    // Per-channel normalization of [batch x ch x len] over (batch, len) with
    // biased variance. Train mode also updates the running buffers in place:
    // running <- (1 - momentum) * running + momentum * batch_stat.
    TensorPtr batchnorm(const TensorPtr& x, const TensorPtr& gamma,
                        const TensorPtr& beta, const TensorPtr& running_mean,
                        const TensorPtr& running_var, double momentum,
                        double eps, bool training);

    // Inverted dropout: survivors scaled by 1/keep_prob so the expected
    // output equals the input. Identity when not training or keep_prob == 1.
    TensorPtr dropout(const TensorPtr& x, double keep_prob, DetRng& rng,
                      bool training);

    void backward(const TensorPtr& loss);

  private:
    struct Node {
        std::vector<TensorPtr> inputs;
        TensorPtr output;
        // out_adj is the adjoint of output; in_adj[i] points at input i's
        // adjoint buffer, or is null when that input needs no gradient.
        std::function<void(const std::vector<double>& out_adj,
                           const std::vector<std::vector<double>*>& in_adj)>
            pull;
    };

    TensorPtr make_output(std::vector<std::size_t> shape, bool needs_grad);
    void record(Node node);
    static bool any_requires_grad(const std::vector<TensorPtr>& ts);

    bool recording_;
    std::vector<Node> nodes_;
    std::unordered_set<const Tensor*> produced_;
};

}  // namespace resnls
