#include "resnls/tensor.hpp"

#include <algorithm>
#include <cmath>
#include <unordered_map>
#include <utility>

namespace resnls {

std::string shape_str(const std::vector<std::size_t>& shape) {
    std::string s = "[";
    for (std::size_t i = 0; i < shape.size(); ++i) {
        if (i) s += " x ";
        s += std::to_string(shape[i]);
    }
    return s + "]";
}

namespace {

std::size_t checked_size(const std::vector<std::size_t>& shape) {
    if (shape.empty()) {
        throw DimensionError("tensor shape must have at least one dimension");
    }
    std::size_t n = 1;
    for (std::size_t d : shape) {
        if (d == 0) {
            throw DimensionError("tensor shape " + shape_str(shape) +
                                 " has a zero dimension");
        }
        n *= d;
    }
    return n;
}

}  // namespace

Tensor::Tensor(std::vector<std::size_t> shape)
    : shape_(std::move(shape)), data_(checked_size(shape_), 0.0) {}

Tensor::Tensor(std::vector<std::size_t> shape, std::vector<double> data)
    : shape_(std::move(shape)), data_(std::move(data)) {
    if (checked_size(shape_) != data_.size()) {
        throw DimensionError("tensor data has " + std::to_string(data_.size()) +
                             " values but shape " + shape_str(shape_) +
                             " expects " + std::to_string(checked_size(shape_)));
    }
}

Tensor Tensor::scalar(double v) { return Tensor({1}, {v}); }

std::vector<double>& Tensor::grad() {
    if (grad_.empty()) grad_.assign(data_.size(), 0.0);
    return grad_;
}

void Tensor::zero_grad() {
    if (!grad_.empty()) std::fill(grad_.begin(), grad_.end(), 0.0);
}

void Tensor::fill(double v) { std::fill(data_.begin(), data_.end(), v); }

TensorPtr tensor(std::vector<std::size_t> shape) {
    return std::make_shared<Tensor>(std::move(shape));
}

TensorPtr tensor(std::vector<std::size_t> shape, std::vector<double> data) {
    return std::make_shared<Tensor>(std::move(shape), std::move(data));
}

TensorPtr param(std::vector<std::size_t> shape) {
    auto t = std::make_shared<Tensor>(std::move(shape));
    t->requires_grad = true;
    return t;
}

bool Tape::any_requires_grad(const std::vector<TensorPtr>& ts) {
    for (const auto& t : ts) {
        if (t->requires_grad) return true;
    }
    return false;
}

TensorPtr Tape::make_output(std::vector<std::size_t> shape, bool needs_grad) {
    auto out = tensor(std::move(shape));
    out->requires_grad = needs_grad && recording_;
    return out;
}

void Tape::record(Node node) {
    if (!node.output->requires_grad) return;  // nothing downstream to pull
    produced_.insert(node.output.get());
    nodes_.push_back(std::move(node));
}

TensorPtr Tape::matmul(const TensorPtr& a, const TensorPtr& b) {
    if (a->rank() != 2 || b->rank() != 2 || a->dim(1) != b->dim(0)) {
        throw DimensionError("matmul: incompatible shapes " +
                             shape_str(a->shape()) + " and " +
                             shape_str(b->shape()));
    }
    const std::size_t m = a->dim(0), k = a->dim(1), n = b->dim(1);
    auto out = make_output({m, n}, any_requires_grad({a, b}));
    const double* ad = a->data().data();
    const double* bd = b->data().data();
    double* od = out->data().data();
    for (std::size_t i = 0; i < m; ++i) {
        for (std::size_t p = 0; p < k; ++p) {
            const double aip = ad[i * k + p];
            const double* brow = bd + p * n;
            double* orow = od + i * n;
            for (std::size_t j = 0; j < n; ++j) orow[j] += aip * brow[j];
        }
    }
    record({{a, b},
            out,
            [a, b, m, k, n](const std::vector<double>& dy,
                            const std::vector<std::vector<double>*>& din) {
                if (din[0]) {  // dA += dY * B^T
                    double* da = din[0]->data();
                    const double* bd = b->data().data();
                    for (std::size_t i = 0; i < m; ++i) {
                        for (std::size_t j = 0; j < n; ++j) {
                            const double d = dy[i * n + j];
                            const double* brow = bd + j;
                            for (std::size_t p = 0; p < k; ++p) {
                                da[i * k + p] += d * brow[p * n];
                            }
                        }
                    }
                }
                if (din[1]) {  // dB += A^T * dY
                    double* db = din[1]->data();
                    const double* ad = a->data().data();
                    for (std::size_t i = 0; i < m; ++i) {
                        for (std::size_t p = 0; p < k; ++p) {
                            const double aip = ad[i * k + p];
                            const double* dyrow = dy.data() + i * n;
                            double* dbrow = db + p * n;
                            for (std::size_t j = 0; j < n; ++j) {
                                dbrow[j] += aip * dyrow[j];
                            }
                        }
                    }
                }
            }});
    return out;
}

TensorPtr Tape::linear(const TensorPtr& x, const TensorPtr& w,
                       const TensorPtr& b) {
    if (x->rank() != 2 || w->rank() != 2 || x->dim(1) != w->dim(1)) {
        throw DimensionError("linear: input " + shape_str(x->shape()) +
                             " does not match weight " + shape_str(w->shape()));
    }
    if (b && (b->rank() != 1 || b->dim(0) != w->dim(0))) {
        throw DimensionError("linear: bias " + shape_str(b->shape()) +
                             " does not match weight " + shape_str(w->shape()));
    }
    const std::size_t n = x->dim(0), in = x->dim(1), out_f = w->dim(0);
    std::vector<TensorPtr> ins{x, w};
    if (b) ins.push_back(b);
    auto out = make_output({n, out_f}, any_requires_grad(ins));
    const double* xd = x->data().data();
    const double* wd = w->data().data();
    double* od = out->data().data();
    // four rows at a time: the dot products over one weight row become four
    // independent accumulator chains instead of one
    std::size_t i = 0;
    for (; i + 3 < n; i += 4) {
        const double* x0 = xd + i * in;
        const double* x1 = x0 + in;
        const double* x2 = x1 + in;
        const double* x3 = x2 + in;
        for (std::size_t o = 0; o < out_f; ++o) {
            const double* wrow = wd + o * in;
            const double b0 = b ? b->at(o) : 0.0;
            double a0 = b0, a1 = b0, a2 = b0, a3 = b0;
            for (std::size_t f = 0; f < in; ++f) {
                const double wf = wrow[f];
                a0 += x0[f] * wf;
                a1 += x1[f] * wf;
                a2 += x2[f] * wf;
                a3 += x3[f] * wf;
            }
            od[i * out_f + o] = a0;
            od[(i + 1) * out_f + o] = a1;
            od[(i + 2) * out_f + o] = a2;
            od[(i + 3) * out_f + o] = a3;
        }
    }
    for (; i < n; ++i) {
        const double* xrow = xd + i * in;
        for (std::size_t o = 0; o < out_f; ++o) {
            const double* wrow = wd + o * in;
            double acc = b ? b->at(o) : 0.0;
            for (std::size_t f = 0; f < in; ++f) acc += xrow[f] * wrow[f];
            od[i * out_f + o] = acc;
        }
    }
    const bool has_bias = static_cast<bool>(b);
    record({std::move(ins),
            out,
            [x, w, n, in, out_f, has_bias](
                const std::vector<double>& dy,
                const std::vector<std::vector<double>*>& din) {
                if (din[0]) {  // dx += dy * w
                    double* dx = din[0]->data();
                    const double* wd = w->data().data();
                    for (std::size_t i = 0; i < n; ++i) {
                        double* dxrow = dx + i * in;
                        std::size_t o = 0;
                        for (; o + 1 < out_f; o += 2) {
                            const double d0 = dy[i * out_f + o];
                            const double d1 = dy[i * out_f + o + 1];
                            const double* w0 = wd + o * in;
                            const double* w1 = w0 + in;
                            for (std::size_t f = 0; f < in; ++f) {
                                dxrow[f] += d0 * w0[f] + d1 * w1[f];
                            }
                        }
                        for (; o < out_f; ++o) {
                            const double d = dy[i * out_f + o];
                            const double* wrow = wd + o * in;
                            for (std::size_t f = 0; f < in; ++f) {
                                dxrow[f] += d * wrow[f];
                            }
                        }
                    }
                }
                if (din[1]) {  // dw += dy^T * x
                    double* dw = din[1]->data();
                    const double* xd = x->data().data();
                    std::size_t i = 0;
                    for (; i + 1 < n; i += 2) {
                        const double* x0 = xd + i * in;
                        const double* x1 = x0 + in;
                        for (std::size_t o = 0; o < out_f; ++o) {
                            const double d0 = dy[i * out_f + o];
                            const double d1 = dy[(i + 1) * out_f + o];
                            double* dwrow = dw + o * in;
                            for (std::size_t f = 0; f < in; ++f) {
                                dwrow[f] += d0 * x0[f] + d1 * x1[f];
                            }
                        }
                    }
                    for (; i < n; ++i) {
                        const double* xrow = xd + i * in;
                        for (std::size_t o = 0; o < out_f; ++o) {
                            const double d = dy[i * out_f + o];
                            double* dwrow = dw + o * in;
                            for (std::size_t f = 0; f < in; ++f) {
                                dwrow[f] += d * xrow[f];
                            }
                        }
                    }
                }
                if (has_bias && din[2]) {
                    double* db = din[2]->data();
                    for (std::size_t i = 0; i < n; ++i) {
                        for (std::size_t o = 0; o < out_f; ++o) {
                            db[o] += dy[i * out_f + o];
                        }
                    }
                }
            }});
    return out;
}

TensorPtr Tape::linear(const TensorPtr& x, const TensorPtr& w) {
    return linear(x, w, nullptr);
}

TensorPtr Tape::add(const TensorPtr& a, const TensorPtr& b) {
    const bool same = a->shape() == b->shape();
    const bool bias = !same && b->rank() == 1 && a->rank() >= 2 &&
                      b->dim(0) == a->shape().back();
    if (!same && !bias) {
        throw DimensionError("add: incompatible shapes " +
                             shape_str(a->shape()) + " and " +
                             shape_str(b->shape()));
    }
    auto out = make_output(a->shape(), any_requires_grad({a, b}));
    const std::size_t n = a->size();
    const std::size_t c = b->size();
    for (std::size_t i = 0; i < n; ++i) {
        out->at(i) = a->at(i) + (same ? b->at(i) : b->at(i % c));
    }
    record({{a, b},
            out,
            [same, n, c](const std::vector<double>& dy,
                         const std::vector<std::vector<double>*>& din) {
                if (din[0]) {
                    double* da = din[0]->data();
                    for (std::size_t i = 0; i < n; ++i) da[i] += dy[i];
                }
                if (din[1]) {
                    double* db = din[1]->data();
                    if (same) {
                        for (std::size_t i = 0; i < n; ++i) db[i] += dy[i];
                    } else {
                        for (std::size_t i = 0; i < n; ++i) db[i % c] += dy[i];
                    }
                }
            }});
    return out;
}

TensorPtr Tape::sub(const TensorPtr& a, const TensorPtr& b) {
    if (a->shape() != b->shape()) {
        throw DimensionError("sub: shapes differ, " + shape_str(a->shape()) +
                             " vs " + shape_str(b->shape()));
    }
    auto out = make_output(a->shape(), any_requires_grad({a, b}));
    const std::size_t n = a->size();
    for (std::size_t i = 0; i < n; ++i) out->at(i) = a->at(i) - b->at(i);
    record({{a, b},
            out,
            [n](const std::vector<double>& dy,
                const std::vector<std::vector<double>*>& din) {
                if (din[0]) {
                    double* da = din[0]->data();
                    for (std::size_t i = 0; i < n; ++i) da[i] += dy[i];
                }
                if (din[1]) {
                    double* db = din[1]->data();
                    for (std::size_t i = 0; i < n; ++i) db[i] -= dy[i];
                }
            }});
    return out;
}

TensorPtr Tape::mul(const TensorPtr& a, const TensorPtr& b) {
    if (a->shape() != b->shape()) {
        throw DimensionError("mul: shapes differ, " + shape_str(a->shape()) +
                             " vs " + shape_str(b->shape()));
    }
    auto out = make_output(a->shape(), any_requires_grad({a, b}));
    const std::size_t n = a->size();
    for (std::size_t i = 0; i < n; ++i) out->at(i) = a->at(i) * b->at(i);
    record({{a, b},
            out,
            [a, b, n](const std::vector<double>& dy,
                      const std::vector<std::vector<double>*>& din) {
                if (din[0]) {
                    double* da = din[0]->data();
                    const double* bd = b->data().data();
                    for (std::size_t i = 0; i < n; ++i) da[i] += dy[i] * bd[i];
                }
                if (din[1]) {
                    double* db = din[1]->data();
                    const double* ad = a->data().data();
                    for (std::size_t i = 0; i < n; ++i) db[i] += dy[i] * ad[i];
                }
            }});
    return out;
}

TensorPtr Tape::relu(const TensorPtr& x) {
    auto out = make_output(x->shape(), x->requires_grad);
    const std::size_t n = x->size();
    for (std::size_t i = 0; i < n; ++i) {
        out->at(i) = x->at(i) > 0.0 ? x->at(i) : 0.0;
    }
    record({{x},
            out,
            [x, n](const std::vector<double>& dy,
                   const std::vector<std::vector<double>*>& din) {
                if (!din[0]) return;
                double* dx = din[0]->data();
                const double* xd = x->data().data();
                for (std::size_t i = 0; i < n; ++i) {
                    if (xd[i] > 0.0) dx[i] += dy[i];
                }
            }});
    return out;
}

TensorPtr Tape::sigmoid(const TensorPtr& x) {
    auto out = make_output(x->shape(), x->requires_grad);
    const std::size_t n = x->size();
    for (std::size_t i = 0; i < n; ++i) {
        const double v = x->at(i);
        // split by sign so exp never overflows
        out->at(i) = v >= 0.0 ? 1.0 / (1.0 + std::exp(-v))
                              : std::exp(v) / (1.0 + std::exp(v));
    }
    record({{x},
            out,
            [out, n](const std::vector<double>& dy,
                     const std::vector<std::vector<double>*>& din) {
                if (!din[0]) return;
                double* dx = din[0]->data();
                const double* s = out->data().data();
                for (std::size_t i = 0; i < n; ++i) {
                    dx[i] += dy[i] * s[i] * (1.0 - s[i]);
                }
            }});
    return out;
}

TensorPtr Tape::tanh(const TensorPtr& x) {
    auto out = make_output(x->shape(), x->requires_grad);
    const std::size_t n = x->size();
    for (std::size_t i = 0; i < n; ++i) out->at(i) = std::tanh(x->at(i));
    record({{x},
            out,
            [out, n](const std::vector<double>& dy,
                     const std::vector<std::vector<double>*>& din) {
                if (!din[0]) return;
                double* dx = din[0]->data();
                const double* t = out->data().data();
                for (std::size_t i = 0; i < n; ++i) {
                    dx[i] += dy[i] * (1.0 - t[i] * t[i]);
                }
            }});
    return out;
}

TensorPtr Tape::scale(const TensorPtr& x, double c) {
    auto out = make_output(x->shape(), x->requires_grad);
    const std::size_t n = x->size();
    for (std::size_t i = 0; i < n; ++i) out->at(i) = c * x->at(i);
    record({{x},
            out,
            [c, n](const std::vector<double>& dy,
                   const std::vector<std::vector<double>*>& din) {
                if (!din[0]) return;
                double* dx = din[0]->data();
                for (std::size_t i = 0; i < n; ++i) dx[i] += c * dy[i];
            }});
    return out;
}

TensorPtr Tape::sum(const TensorPtr& x) {
    auto out = make_output({1}, x->requires_grad);
    double acc = 0.0;
    for (double v : x->data()) acc += v;
    out->at(0) = acc;
    const std::size_t n = x->size();
    record({{x},
            out,
            [n](const std::vector<double>& dy,
                const std::vector<std::vector<double>*>& din) {
                if (!din[0]) return;
                double* dx = din[0]->data();
                for (std::size_t i = 0; i < n; ++i) dx[i] += dy[0];
            }});
    return out;
}

TensorPtr Tape::reshape(const TensorPtr& x, std::vector<std::size_t> shape) {
    auto out = make_output(std::move(shape), x->requires_grad);
    if (out->size() != x->size()) {
        throw DimensionError("reshape: cannot view " + shape_str(x->shape()) +
                             " as " + shape_str(out->shape()));
    }
    out->data() = x->data();
    const std::size_t n = x->size();
    record({{x},
            out,
            [n](const std::vector<double>& dy,
                const std::vector<std::vector<double>*>& din) {
                if (!din[0]) return;
                double* dx = din[0]->data();
                for (std::size_t i = 0; i < n; ++i) dx[i] += dy[i];
            }});
    return out;
}

TensorPtr Tape::select_step(const TensorPtr& x, std::size_t t) {
    if (x->rank() != 3) {
        throw DimensionError("select_step: expected rank-3 input, got " +
                             shape_str(x->shape()));
    }
    const std::size_t b = x->dim(0), steps = x->dim(1), f = x->dim(2);
    if (t >= steps) {
        throw DimensionError("select_step: step " + std::to_string(t) +
                             " out of range for " + shape_str(x->shape()));
    }
    auto out = make_output({b, f}, x->requires_grad);
    for (std::size_t i = 0; i < b; ++i) {
        for (std::size_t j = 0; j < f; ++j) out->at(i, j) = x->at(i, t, j);
    }
    record({{x},
            out,
            [b, steps, f, t](const std::vector<double>& dy,
                             const std::vector<std::vector<double>*>& din) {
                if (!din[0]) return;
                double* dx = din[0]->data();
                for (std::size_t i = 0; i < b; ++i) {
                    for (std::size_t j = 0; j < f; ++j) {
                        dx[(i * steps + t) * f + j] += dy[i * f + j];
                    }
                }
            }});
    return out;
}

TensorPtr Tape::stack_steps(const std::vector<TensorPtr>& steps) {
    if (steps.empty()) {
        throw DimensionError("stack_steps: no tensors given");
    }
    const auto& s0 = steps[0]->shape();
    if (s0.size() != 2) {
        throw DimensionError("stack_steps: expected rank-2 steps, got " +
                             shape_str(s0));
    }
    for (const auto& s : steps) {
        if (s->shape() != s0) {
            throw DimensionError("stack_steps: step shape " +
                                 shape_str(s->shape()) + " differs from " +
                                 shape_str(s0));
        }
    }
    const std::size_t b = s0[0], f = s0[1], t_n = steps.size();
    auto out = make_output({b, t_n, f}, any_requires_grad(steps));
    for (std::size_t t = 0; t < t_n; ++t) {
        for (std::size_t i = 0; i < b; ++i) {
            for (std::size_t j = 0; j < f; ++j) {
                out->at(i, t, j) = steps[t]->at(i, j);
            }
        }
    }
    record({steps,
            out,
            [b, f, t_n](const std::vector<double>& dy,
                        const std::vector<std::vector<double>*>& din) {
                for (std::size_t t = 0; t < t_n; ++t) {
                    if (!din[t]) continue;
                    double* ds = din[t]->data();
                    for (std::size_t i = 0; i < b; ++i) {
                        for (std::size_t j = 0; j < f; ++j) {
                            ds[i * f + j] += dy[(i * t_n + t) * f + j];
                        }
                    }
                }
            }});
    return out;
}

TensorPtr Tape::concat(const TensorPtr& a, const TensorPtr& b) {
    if (a->rank() != 2 || b->rank() != 2 || a->dim(0) != b->dim(0)) {
        throw DimensionError("concat: incompatible shapes " +
                             shape_str(a->shape()) + " and " +
                             shape_str(b->shape()));
    }
    const std::size_t n = a->dim(0), fa = a->dim(1), fb = b->dim(1);
    auto out = make_output({n, fa + fb}, any_requires_grad({a, b}));
    for (std::size_t i = 0; i < n; ++i) {
        for (std::size_t j = 0; j < fa; ++j) out->at(i, j) = a->at(i, j);
        for (std::size_t j = 0; j < fb; ++j) out->at(i, fa + j) = b->at(i, j);
    }
    record({{a, b},
            out,
            [n, fa, fb](const std::vector<double>& dy,
                        const std::vector<std::vector<double>*>& din) {
                const std::size_t w = fa + fb;
                if (din[0]) {
                    double* da = din[0]->data();
                    for (std::size_t i = 0; i < n; ++i) {
                        for (std::size_t j = 0; j < fa; ++j) {
                            da[i * fa + j] += dy[i * w + j];
                        }
                    }
                }
                if (din[1]) {
                    double* db = din[1]->data();
                    for (std::size_t i = 0; i < n; ++i) {
                        for (std::size_t j = 0; j < fb; ++j) {
                            db[i * fb + j] += dy[i * w + fa + j];
                        }
                    }
                }
            }});
    return out;
}

TensorPtr Tape::conv1d(const TensorPtr& x, const TensorPtr& kernels,
                       const TensorPtr& bias, std::size_t padding) {
    if (x->rank() != 3 || kernels->rank() != 3 || x->dim(1) != kernels->dim(1)) {
        throw DimensionError("conv1d: input " + shape_str(x->shape()) +
                             " does not match kernels " +
                             shape_str(kernels->shape()));
    }
    if (bias->rank() != 1 || bias->dim(0) != kernels->dim(0)) {
        throw DimensionError("conv1d: bias " + shape_str(bias->shape()) +
                             " does not match kernels " +
                             shape_str(kernels->shape()));
    }
    const std::size_t batch = x->dim(0), ci = x->dim(1), len = x->dim(2);
    const std::size_t co = kernels->dim(0), k = kernels->dim(2);
    if (len + 2 * padding < k) {
        throw DimensionError("conv1d: kernel size " + std::to_string(k) +
                             " exceeds padded length " +
                             std::to_string(len + 2 * padding));
    }
    const std::size_t lout = len + 2 * padding - k + 1;
    const std::size_t lpad = len + 2 * padding;
    auto out =
        make_output({batch, co, lout}, any_requires_grad({x, kernels, bias}));
    const double* xd = x->data().data();
    const double* kd = kernels->data().data();
    double* od = out->data().data();
    // The padded copy keeps the accumulation loops dense: no per-tap edge
    // bounds in the hot path, which is most of the cost at these tiny
    // window lengths.
    std::vector<double> xpad(ci * lpad, 0.0);
    for (std::size_t b = 0; b < batch; ++b) {
        for (std::size_t c = 0; c < ci; ++c) {
            const double* xrow = xd + (b * ci + c) * len;
            double* prow = xpad.data() + c * lpad + padding;
            for (std::size_t t = 0; t < len; ++t) prow[t] = xrow[t];
        }
        // output channels go in pairs: twice the independent accumulator
        // chains, and each padded input row is loaded once for both
        std::size_t o = 0;
        for (; o + 1 < co; o += 2) {
            double* y0 = od + (b * co + o) * lout;
            double* y1 = y0 + lout;
            const double b0 = bias->at(o), b1 = bias->at(o + 1);
            for (std::size_t t = 0; t < lout; ++t) {
                y0[t] = b0;
                y1[t] = b1;
            }
            for (std::size_t c = 0; c < ci; ++c) {
                const double* prow = xpad.data() + c * lpad;
                const double* k0 = kd + (o * ci + c) * k;
                const double* k1 = k0 + ci * k;
                for (std::size_t kk = 0; kk < k; ++kk) {
                    const double w0 = k0[kk], w1 = k1[kk];
                    const double* px = prow + kk;
                    for (std::size_t t = 0; t < lout; ++t) {
                        y0[t] += w0 * px[t];
                        y1[t] += w1 * px[t];
                    }
                }
            }
        }
        for (; o < co; ++o) {
            double* yrow = od + (b * co + o) * lout;
            const double bo = bias->at(o);
            for (std::size_t t = 0; t < lout; ++t) yrow[t] = bo;
            for (std::size_t c = 0; c < ci; ++c) {
                const double* prow = xpad.data() + c * lpad;
                const double* krow = kd + (o * ci + c) * k;
                for (std::size_t kk = 0; kk < k; ++kk) {
                    const double w = krow[kk];
                    const double* px = prow + kk;
                    for (std::size_t t = 0; t < lout; ++t) {
                        yrow[t] += w * px[t];
                    }
                }
            }
        }
    }
    record({{x, kernels, bias},
            out,
            [x, kernels, batch, ci, len, co, k, lout, lpad, padding](
                const std::vector<double>& dy,
                const std::vector<std::vector<double>*>& din) {
                const double* xd = x->data().data();
                const double* kd = kernels->data().data();
                std::vector<double> xpad(ci * lpad, 0.0);
                std::vector<double> dxpad;
                if (din[0]) dxpad.resize(ci * lpad);
                for (std::size_t b = 0; b < batch; ++b) {
                    for (std::size_t c = 0; c < ci; ++c) {
                        const double* xrow = xd + (b * ci + c) * len;
                        double* prow = xpad.data() + c * lpad + padding;
                        for (std::size_t t = 0; t < len; ++t) prow[t] = xrow[t];
                    }
                    if (din[0]) {
                        std::fill(dxpad.begin(), dxpad.end(), 0.0);
                    }
                    std::size_t o = 0;
                    for (; o + 1 < co; o += 2) {
                        const double* dy0 = dy.data() + (b * co + o) * lout;
                        const double* dy1 = dy0 + lout;
                        if (din[2]) {
                            double a0 = 0.0, a1 = 0.0;
                            for (std::size_t t = 0; t < lout; ++t) {
                                a0 += dy0[t];
                                a1 += dy1[t];
                            }
                            (*din[2])[o] += a0;
                            (*din[2])[o + 1] += a1;
                        }
                        for (std::size_t c = 0; c < ci; ++c) {
                            const double* prow = xpad.data() + c * lpad;
                            const double* k0 = kd + (o * ci + c) * k;
                            const double* k1 = k0 + ci * k;
                            if (din[0]) {
                                double* dprow = dxpad.data() + c * lpad;
                                for (std::size_t kk = 0; kk < k; ++kk) {
                                    const double w0 = k0[kk], w1 = k1[kk];
                                    double* dpx = dprow + kk;
                                    for (std::size_t t = 0; t < lout; ++t) {
                                        dpx[t] += w0 * dy0[t] + w1 * dy1[t];
                                    }
                                }
                            }
                            if (din[1]) {
                                double* dk0 = din[1]->data() + (o * ci + c) * k;
                                double* dk1 = dk0 + ci * k;
                                for (std::size_t kk = 0; kk < k; ++kk) {
                                    const double* px = prow + kk;
                                    double a0 = 0.0, a1 = 0.0;
                                    for (std::size_t t = 0; t < lout; ++t) {
                                        a0 += dy0[t] * px[t];
                                        a1 += dy1[t] * px[t];
                                    }
                                    dk0[kk] += a0;
                                    dk1[kk] += a1;
                                }
                            }
                        }
                    }
                    for (; o < co; ++o) {
                        const double* dyrow = dy.data() + (b * co + o) * lout;
                        if (din[2]) {
                            double acc = 0.0;
                            for (std::size_t t = 0; t < lout; ++t) {
                                acc += dyrow[t];
                            }
                            (*din[2])[o] += acc;
                        }
                        for (std::size_t c = 0; c < ci; ++c) {
                            const double* prow = xpad.data() + c * lpad;
                            const double* krow = kd + (o * ci + c) * k;
                            if (din[0]) {
                                double* dprow = dxpad.data() + c * lpad;
                                for (std::size_t kk = 0; kk < k; ++kk) {
                                    const double w = krow[kk];
                                    double* dpx = dprow + kk;
                                    for (std::size_t t = 0; t < lout; ++t) {
                                        dpx[t] += w * dyrow[t];
                                    }
                                }
                            }
                            if (din[1]) {
                                double* dkrow =
                                    din[1]->data() + (o * ci + c) * k;
                                for (std::size_t kk = 0; kk < k; ++kk) {
                                    const double* px = prow + kk;
                                    double acc = 0.0;
                                    for (std::size_t t = 0; t < lout; ++t) {
                                        acc += dyrow[t] * px[t];
                                    }
                                    dkrow[kk] += acc;
                                }
                            }
                        }
                    }
                    if (din[0]) {
                        for (std::size_t c = 0; c < ci; ++c) {
                            const double* dprow =
                                dxpad.data() + c * lpad + padding;
                            double* dxrow =
                                din[0]->data() + (b * ci + c) * len;
                            for (std::size_t t = 0; t < len; ++t) {
                                dxrow[t] += dprow[t];
                            }
                        }
                    }
                }
            }});
    return out;
}

TensorPtr Tape::batchnorm(const TensorPtr& x, const TensorPtr& gamma,
                          const TensorPtr& beta, const TensorPtr& running_mean,
                          const TensorPtr& running_var, double momentum,
                          double eps, bool training) {
    if (x->rank() != 3) {
        throw DimensionError("batchnorm: expected rank-3 input, got " +
                             shape_str(x->shape()));
    }
    const std::size_t batch = x->dim(0), ch = x->dim(1), len = x->dim(2);
    for (const TensorPtr& t : {gamma, beta, running_mean, running_var}) {
        if (t->rank() != 1 || t->dim(0) != ch) {
            throw DimensionError(
                "batchnorm: per-channel tensor " + shape_str(t->shape()) +
                " does not match " + std::to_string(ch) + " channels");
        }
    }
    if (momentum < 0.0 || momentum > 1.0 || eps <= 0.0) {
        throw ContractError("batchnorm: momentum must be in [0, 1] and eps > 0");
    }
    const std::size_t m = batch * len;
    if (training && m < 2) {
        throw ContractError(
            "batchnorm: training mode needs at least 2 values per channel");
    }
    std::vector<double> inv_std(ch);
    std::vector<double> center(ch);
    const double* xd = x->data().data();
    if (training) {
        for (std::size_t c = 0; c < ch; ++c) {
            double mean = 0.0;
            for (std::size_t b = 0; b < batch; ++b) {
                const double* row = xd + (b * ch + c) * len;
                for (std::size_t t = 0; t < len; ++t) mean += row[t];
            }
            mean /= static_cast<double>(m);
            double var = 0.0;
            for (std::size_t b = 0; b < batch; ++b) {
                const double* row = xd + (b * ch + c) * len;
                for (std::size_t t = 0; t < len; ++t) {
                    const double d = row[t] - mean;
                    var += d * d;
                }
            }
            var /= static_cast<double>(m);  // biased, matches the running buffer
            center[c] = mean;
            inv_std[c] = 1.0 / std::sqrt(var + eps);
            running_mean->at(c) =
                (1.0 - momentum) * running_mean->at(c) + momentum * mean;
            running_var->at(c) =
                (1.0 - momentum) * running_var->at(c) + momentum * var;
        }
    } else {
        for (std::size_t c = 0; c < ch; ++c) {
            center[c] = running_mean->at(c);
            inv_std[c] = 1.0 / std::sqrt(running_var->at(c) + eps);
        }
    }
    auto out =
        make_output({batch, ch, len}, any_requires_grad({x, gamma, beta}));
    std::vector<double> xhat(x->size());
    double* od = out->data().data();
    for (std::size_t b = 0; b < batch; ++b) {
        for (std::size_t c = 0; c < ch; ++c) {
            const double* row = xd + (b * ch + c) * len;
            double* xh = xhat.data() + (b * ch + c) * len;
            double* orow = od + (b * ch + c) * len;
            const double g = gamma->at(c), bt = beta->at(c);
            for (std::size_t t = 0; t < len; ++t) {
                xh[t] = (row[t] - center[c]) * inv_std[c];
                orow[t] = g * xh[t] + bt;
            }
        }
    }
    record({{x, gamma, beta},
            out,
            [gamma, batch, ch, len, m, training, inv_std = std::move(inv_std),
             xhat = std::move(xhat)](
                const std::vector<double>& dy,
                const std::vector<std::vector<double>*>& din) {
                for (std::size_t c = 0; c < ch; ++c) {
                    double sum_dy = 0.0, sum_dyxh = 0.0;
                    for (std::size_t b = 0; b < batch; ++b) {
                        const std::size_t base = (b * ch + c) * len;
                        for (std::size_t t = 0; t < len; ++t) {
                            sum_dy += dy[base + t];
                            sum_dyxh += dy[base + t] * xhat[base + t];
                        }
                    }
                    if (din[1]) (*din[1])[c] += sum_dyxh;
                    if (din[2]) (*din[2])[c] += sum_dy;
                    if (din[0]) {
                        const double g = gamma->at(c) * inv_std[c];
                        const double k1 =
                            training ? sum_dy / static_cast<double>(m) : 0.0;
                        const double k2 =
                            training ? sum_dyxh / static_cast<double>(m) : 0.0;
                        double* dx = din[0]->data();
                        for (std::size_t b = 0; b < batch; ++b) {
                            const std::size_t base = (b * ch + c) * len;
                            for (std::size_t t = 0; t < len; ++t) {
                                dx[base + t] +=
                                    g * (dy[base + t] - k1 -
                                         xhat[base + t] * k2);
                            }
                        }
                    }
                }
            }});
    return out;
}

TensorPtr Tape::dropout(const TensorPtr& x, double keep_prob, DetRng& rng,
                        bool training) {
    if (keep_prob <= 0.0 || keep_prob > 1.0) {
        throw ContractError("dropout: keep probability must be in (0, 1]");
    }
    if (!training || keep_prob == 1.0) return x;  // identity, no rng draws
    const std::size_t n = x->size();
    std::vector<double> mask(n);
    const double inv_keep = 1.0 / keep_prob;
    for (std::size_t i = 0; i < n; ++i) {
        mask[i] = rng.uniform() < keep_prob ? inv_keep : 0.0;
    }
    auto out = make_output(x->shape(), x->requires_grad);
    for (std::size_t i = 0; i < n; ++i) out->at(i) = x->at(i) * mask[i];
    record({{x},
            out,
            [n, mask = std::move(mask)](
                const std::vector<double>& dy,
                const std::vector<std::vector<double>*>& din) {
                if (!din[0]) return;
                double* dx = din[0]->data();
                for (std::size_t i = 0; i < n; ++i) dx[i] += dy[i] * mask[i];
            }});
    return out;
}

void Tape::backward(const TensorPtr& loss) {
    if (loss->size() != 1) {
        throw ContractError("backward: loss must be a scalar, got shape " +
                            shape_str(loss->shape()));
    }
    if (!nodes_.empty() && produced_.count(loss.get()) == 0) {
        throw ContractError("backward: loss was not produced by this tape");
    }
    // Per-call adjoint buffers; flushed into .grad at the end so repeated
    // calls accumulate.
    std::unordered_map<Tensor*, std::vector<double>> adj;
    adj.reserve(nodes_.size() + 1);
    adj.emplace(loss.get(), std::vector<double>{1.0});
    std::vector<std::vector<double>*> in_adj;
    for (auto it = nodes_.rbegin(); it != nodes_.rend(); ++it) {
        auto found = adj.find(it->output.get());
        if (found == adj.end()) continue;  // not on the path to the loss
        const std::vector<double>& out_adj = found->second;
        in_adj.clear();
        for (const TensorPtr& in : it->inputs) {
            if (!in->requires_grad) {
                in_adj.push_back(nullptr);
                continue;
            }
            auto [slot, inserted] =
                adj.try_emplace(in.get(), std::vector<double>());
            if (inserted) slot->second.assign(in->size(), 0.0);
            in_adj.push_back(&slot->second);
        }
        it->pull(out_adj, in_adj);
    }
    for (auto& [t, buf] : adj) {
        if (!t->requires_grad) continue;
        std::vector<double>& g = t->grad();
        for (std::size_t i = 0; i < buf.size(); ++i) g[i] += buf[i];
    }
}

}  // namespace resnls
