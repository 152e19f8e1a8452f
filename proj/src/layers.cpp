#include "resnls/layers.hpp"

#include <cmath>
#include <string>

#include "resnls/errors.hpp"

namespace resnls {

void init_uniform(const TensorPtr& t, std::size_t fan_in, DetRng& rng) {
    const double bound = 1.0 / std::sqrt(static_cast<double>(fan_in));
    for (double& v : t->data()) v = rng.uniform(-bound, bound);
}

Conv1DLayer Conv1DLayer::create(std::size_t out_ch, std::size_t in_ch,
                                std::size_t kernel, std::size_t padding,
                                DetRng& rng) {
    if (kernel % 2 == 0) {
        throw ConfigError("conv kernel size must be odd, got " +
                          std::to_string(kernel));
    }
    Conv1DLayer layer;
    layer.kernels = param({out_ch, in_ch, kernel});
    layer.bias = param({out_ch});
    layer.padding = padding;
    init_uniform(layer.kernels, in_ch * kernel, rng);
    return layer;
}

TensorPtr Conv1DLayer::forward(Tape& tape, const TensorPtr& x) const {
    return tape.conv1d(x, kernels, bias, padding);
}

BatchNorm1DLayer BatchNorm1DLayer::create(std::size_t channels) {
    BatchNorm1DLayer layer;
    layer.gamma = param({channels});
    layer.gamma->fill(1.0);
    layer.beta = param({channels});
    layer.running_mean = tensor({channels});
    layer.running_var = tensor({channels});
    layer.running_var->fill(1.0);
    return layer;
}

TensorPtr BatchNorm1DLayer::forward(Tape& tape, const TensorPtr& x,
                                    Mode mode) const {
    return tape.batchnorm(x, gamma, beta, running_mean, running_var, momentum,
                          eps, mode == Mode::kTrain);
}

DropoutLayer DropoutLayer::create(double keep_prob, std::uint64_t seed) {
    if (keep_prob <= 0.0 || keep_prob > 1.0) {
        throw ConfigError("dropout keep probability must be in (0, 1], got " +
                          std::to_string(keep_prob));
    }
    DropoutLayer layer;
    layer.keep_prob = keep_prob;
    layer.rng = DetRng(seed);
    return layer;
}

TensorPtr DropoutLayer::forward(Tape& tape, const TensorPtr& x, Mode mode) {
    return tape.dropout(x, keep_prob, rng, mode == Mode::kTrain);
}

LinearLayer LinearLayer::create(std::size_t out, std::size_t in, DetRng& rng) {
    LinearLayer layer;
    layer.weight = param({out, in});
    layer.bias = param({out});
    init_uniform(layer.weight, in, rng);
    return layer;
}

TensorPtr LinearLayer::forward(Tape& tape, const TensorPtr& x) const {
    return tape.linear(x, weight, bias);
}

LstmCell LstmCell::create(std::size_t hidden, std::size_t input, DetRng& rng) {
    LstmCell cell;
    cell.w_ii = param({hidden, input});
    cell.w_if = param({hidden, input});
    cell.w_ig = param({hidden, input});
    cell.w_io = param({hidden, input});
    cell.w_hi = param({hidden, hidden});
    cell.w_hf = param({hidden, hidden});
    cell.w_hg = param({hidden, hidden});
    cell.w_ho = param({hidden, hidden});
    cell.b_i = param({hidden});
    cell.b_f = param({hidden});
    cell.b_g = param({hidden});
    cell.b_o = param({hidden});
    for (const TensorPtr& w : {cell.w_ii, cell.w_if, cell.w_ig, cell.w_io}) {
        init_uniform(w, input, rng);
    }
    for (const TensorPtr& w : {cell.w_hi, cell.w_hf, cell.w_hg, cell.w_ho}) {
        init_uniform(w, hidden, rng);
    }
    cell.b_f->fill(1.0);
    return cell;
}

std::pair<TensorPtr, TensorPtr> LstmCell::step(Tape& tape,
                                               const TensorPtr& x_t,
                                               const TensorPtr& h_prev,
                                               const TensorPtr& c_prev) const {
    auto gate = [&](const TensorPtr& wi, const TensorPtr& wh,
                    const TensorPtr& bias) {
        return tape.add(tape.linear(x_t, wi, bias), tape.linear(h_prev, wh));
    };
    auto i = tape.sigmoid(gate(w_ii, w_hi, b_i));
    auto f = tape.sigmoid(gate(w_if, w_hf, b_f));
    auto g = tape.tanh(gate(w_ig, w_hg, b_g));
    auto o = tape.sigmoid(gate(w_io, w_ho, b_o));
    auto c_t = tape.add(tape.mul(f, c_prev), tape.mul(i, g));
    auto h_t = tape.mul(o, tape.tanh(c_t));
    return {h_t, c_t};
}

LstmCell::SequenceOut LstmCell::sequence(Tape& tape, const TensorPtr& xs,
                                         bool reverse) const {
    if (xs->rank() != 3) {
        throw DimensionError("lstm sequence: expected rank-3 input, got " +
                             shape_str(xs->shape()));
    }
    const std::size_t batch = xs->dim(0), steps = xs->dim(1);
    TensorPtr h = tensor({batch, hidden_size()});
    TensorPtr c = tensor({batch, hidden_size()});
    std::vector<TensorPtr> hs;
    hs.reserve(steps);
    for (std::size_t s = 0; s < steps; ++s) {
        const std::size_t t = reverse ? steps - 1 - s : s;
        auto [h_t, c_t] = step(tape, tape.select_step(xs, t), h, c);
        h = h_t;
        c = c_t;
        hs.push_back(h);
    }
    return {tape.stack_steps(hs), h, c};
}

RnnCell RnnCell::create(std::size_t hidden, std::size_t input, DetRng& rng) {
    RnnCell cell;
    cell.w_ih = param({hidden, input});
    cell.w_hh = param({hidden, hidden});
    cell.b = param({hidden});
    init_uniform(cell.w_ih, input, rng);
    init_uniform(cell.w_hh, hidden, rng);
    return cell;
}

TensorPtr RnnCell::step(Tape& tape, const TensorPtr& x_t,
                        const TensorPtr& h_prev) const {
    return tape.tanh(
        tape.add(tape.linear(x_t, w_ih, b), tape.linear(h_prev, w_hh)));
}

TensorPtr RnnCell::last_hidden(Tape& tape, const TensorPtr& xs) const {
    if (xs->rank() != 3) {
        throw DimensionError("rnn sequence: expected rank-3 input, got " +
                             shape_str(xs->shape()));
    }
    const std::size_t batch = xs->dim(0), steps = xs->dim(1);
    TensorPtr h = tensor({batch, hidden_size()});
    for (std::size_t t = 0; t < steps; ++t) {
        h = step(tape, tape.select_step(xs, t), h);
    }
    return h;
}

}  // namespace resnls
