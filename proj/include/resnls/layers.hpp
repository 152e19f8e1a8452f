#pragma once

#include <cstdint>
#include <utility>

#include "resnls/rng.hpp"
#include "resnls/tensor.hpp"

namespace resnls {

enum class Mode { kTrain, kEval };

// Layers are value objects over shared parameter tensors. Weight matrices
// and conv kernels initialize uniformly in [-1/sqrt(fan_in), +1/sqrt(fan_in)];
// biases start at zero except the LSTM forget gate (1.0, helps gradient flow
// early in training).

struct Conv1DLayer {
    TensorPtr kernels;  // [out_ch x in_ch x kernel]
    TensorPtr bias;     // [out_ch]
    std::size_t padding = 0;

    // kernel must be odd so "same" padding can preserve length
    static Conv1DLayer create(std::size_t out_ch, std::size_t in_ch,
                              std::size_t kernel, std::size_t padding,
                              DetRng& rng);
    TensorPtr forward(Tape& tape, const TensorPtr& x) const;
};

struct BatchNorm1DLayer {
    TensorPtr gamma, beta;                  // trainable affine
    TensorPtr running_mean, running_var;    // buffers, updated in train mode
    double momentum = 0.1;
    double eps = 1e-5;

    static BatchNorm1DLayer create(std::size_t channels);
    TensorPtr forward(Tape& tape, const TensorPtr& x, Mode mode) const;
};

struct DropoutLayer {
    double keep_prob = 1.0;
    DetRng rng{0};  // layer-owned stream so training runs are replayable

    static DropoutLayer create(double keep_prob, std::uint64_t seed);
    TensorPtr forward(Tape& tape, const TensorPtr& x, Mode mode);
};

struct LinearLayer {
    TensorPtr weight;  // [out x in]
    TensorPtr bias;    // [out]

    static LinearLayer create(std::size_t out, std::size_t in, DetRng& rng);
    TensorPtr forward(Tape& tape, const TensorPtr& x) const;
};

struct LstmCell {
    // input-to-gate [hidden x input], hidden-to-gate [hidden x hidden],
    // biases [hidden]; gates: i input, f forget, g candidate, o output
    TensorPtr w_ii, w_if, w_ig, w_io;
    TensorPtr w_hi, w_hf, w_hg, w_ho;
    TensorPtr b_i, b_f, b_g, b_o;

    static LstmCell create(std::size_t hidden, std::size_t input, DetRng& rng);
    std::size_t hidden_size() const { return w_hi->dim(0); }

    // i = sig(x W_ii^T + h W_hi^T + b_i), f, o likewise; g = tanh(...);
    // c_t = f*c_prev + i*g; h_t = o*tanh(c_t)
    std::pair<TensorPtr, TensorPtr> step(Tape& tape, const TensorPtr& x_t,
                                         const TensorPtr& h_prev,
                                         const TensorPtr& c_prev) const;

    struct SequenceOut {
        TensorPtr all_h;  // [batch x steps x hidden], in processing order
        TensorPtr last_h;
        TensorPtr last_c;
    };
    // Folds step over xs [batch x steps x input] from zero states.
    // reverse=true processes the steps back-to-front.
    SequenceOut sequence(Tape& tape, const TensorPtr& xs,
                         bool reverse = false) const;
};

struct RnnCell {
    TensorPtr w_ih;  // [hidden x input]
    TensorPtr w_hh;  // [hidden x hidden]
    TensorPtr b;     // [hidden]

    static RnnCell create(std::size_t hidden, std::size_t input, DetRng& rng);
    std::size_t hidden_size() const { return w_hh->dim(0); }

    // h_t = tanh(x W_ih^T + h W_hh^T + b)
    TensorPtr step(Tape& tape, const TensorPtr& x_t,
                   const TensorPtr& h_prev) const;
    TensorPtr last_hidden(Tape& tape, const TensorPtr& xs) const;
};

// Fills a tensor uniformly from [-1/sqrt(fan_in), +1/sqrt(fan_in)].
void init_uniform(const TensorPtr& t, std::size_t fan_in, DetRng& rng);

}  // namespace resnls
