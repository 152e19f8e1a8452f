#include "resnls/gradsuite.hpp"

#include <algorithm>

#include "resnls/layers.hpp"
#include "resnls/model.hpp"
#include "resnls/rng.hpp"

namespace resnls {

double SuiteResult::max_rel_err() const {
    double m = 0.0;
    for (const SuiteCase& c : cases) m = std::max(m, c.report.max_rel_err());
    return m;
}

bool SuiteResult::passed() const {
    return std::all_of(cases.begin(), cases.end(),
                       [](const SuiteCase& c) { return c.report.passed(); });
}

namespace {

TensorPtr random_const(std::vector<std::size_t> shape, DetRng& rng) {
    auto t = tensor(std::move(shape));
    for (double& v : t->data()) v = rng.uniform(-1.0, 1.0);
    return t;
}

TensorPtr random_param(std::vector<std::size_t> shape, DetRng& rng) {
    auto t = random_const(std::move(shape), rng);
    t->requires_grad = true;
    return t;
}

// sum(y^2) + sum(y): nonlinear in y, so adjoints vary per element.
TensorPtr quad_loss(Tape& tape, const TensorPtr& y) {
    return tape.add(tape.sum(tape.mul(y, y)), tape.sum(y));
}

SuiteCase linear_case(double step, double tol, DetRng& rng) {
    auto x = random_param({3, 4}, rng);
    DetRng init(rng.next_u64());
    auto layer = LinearLayer::create(2, 4, init);
    TapeFn f = [&](Tape& tape) {
        return quad_loss(tape, layer.forward(tape, x));
    };
    return {"layer.linear",
            grad_check(f,
                       {{"x", x},
                        {"weight", layer.weight},
                        {"bias", layer.bias}},
                       step, tol)};
}

SuiteCase conv_case(double step, double tol, DetRng& rng) {
    auto x = random_param({2, 2, 6}, rng);
    DetRng init(rng.next_u64());
    auto layer = Conv1DLayer::create(3, 2, 3, 1, init);
    TapeFn f = [&](Tape& tape) {
        return quad_loss(tape, layer.forward(tape, x));
    };
    return {"layer.conv1d",
            grad_check(f,
                       {{"x", x},
                        {"kernels", layer.kernels},
                        {"bias", layer.bias}},
                       step, tol)};
}

SuiteCase batchnorm_case(Mode mode, double step, double tol, DetRng& rng) {
    auto x = random_param({4, 3, 5}, rng);
    auto layer = BatchNorm1DLayer::create(3);
    for (double& v : layer.gamma->data()) v = rng.uniform(0.5, 1.5);
    for (double& v : layer.beta->data()) v = rng.uniform(-0.5, 0.5);
    for (double& v : layer.running_mean->data()) v = rng.uniform(-0.5, 0.5);
    for (double& v : layer.running_var->data()) v = rng.uniform(0.5, 1.5);
    TapeFn f = [&, mode](Tape& tape) {
        return quad_loss(tape, layer.forward(tape, x, mode));
    };
    return {mode == Mode::kTrain ? "layer.batchnorm_train"
                                 : "layer.batchnorm_eval",
            grad_check(f,
                       {{"x", x},
                        {"gamma", layer.gamma},
                        {"beta", layer.beta}},
                       step, tol)};
}

SuiteCase dropout_case(double step, double tol, DetRng& rng) {
    auto x = random_param({4, 6}, rng);
    const std::uint64_t mask_seed = rng.next_u64();
    // A fresh stream per evaluation pins the mask, so the finite difference
    // and the tape differentiate the same fixed-mask function.
    TapeFn f = [&, mask_seed](Tape& tape) {
        DetRng mask_rng(mask_seed);
        return quad_loss(tape, tape.dropout(x, 0.5, mask_rng, true));
    };
    return {"layer.dropout", grad_check(f, {{"x", x}}, step, tol)};
}

SuiteCase lstm_case(double step, double tol, DetRng& rng) {
    auto xs = random_param({2, 5, 2}, rng);
    DetRng init(rng.next_u64());
    auto cell = LstmCell::create(3, 2, init);
    TapeFn f = [&](Tape& tape) {
        auto out = cell.sequence(tape, xs);
        return tape.add(quad_loss(tape, out.all_h), tape.sum(out.last_c));
    };
    std::vector<NamedParam> params = {
        {"xs", xs},
        {"w_ii", cell.w_ii}, {"w_if", cell.w_if},
        {"w_ig", cell.w_ig}, {"w_io", cell.w_io},
        {"w_hi", cell.w_hi}, {"w_hf", cell.w_hf},
        {"w_hg", cell.w_hg}, {"w_ho", cell.w_ho},
        {"b_i", cell.b_i}, {"b_f", cell.b_f},
        {"b_g", cell.b_g}, {"b_o", cell.b_o},
    };
    return {"layer.lstm", grad_check(f, params, step, tol)};
}

SuiteCase rnn_case(double step, double tol, DetRng& rng) {
    auto xs = random_param({2, 5, 2}, rng);
    DetRng init(rng.next_u64());
    auto cell = RnnCell::create(3, 2, init);
    TapeFn f = [&](Tape& tape) {
        return quad_loss(tape, cell.last_hidden(tape, xs));
    };
    return {"layer.rnn",
            grad_check(f,
                       {{"xs", xs},
                        {"w_ih", cell.w_ih},
                        {"w_hh", cell.w_hh},
                        {"b", cell.b}},
                       step, tol)};
}

SuiteCase model_case(Architecture arch, double step, double tol, DetRng& rng) {
    ModelSpec spec;
    spec.architecture = arch;
    spec.window_n = 5;
    spec.dropout_keep = 1.0;
    spec.init_seed = rng.next_u64();
    Model model = Model::build(spec);
    auto x = random_const({3, 5}, rng);
    TapeFn f = [&](Tape& tape) {
        return quad_loss(tape, model.forward(tape, x, Mode::kTrain));
    };
    std::vector<NamedParam> params;
    for (const Param& p : model.params()) {
        if (p.trainable) params.push_back({p.name, p.tensor});
    }
    return {"model." + architecture_name(arch), grad_check(f, params, step, tol)};
}

}  // namespace

SuiteResult run_gradient_suite(double step, double tol, std::uint64_t seed) {
    DetRng rng(seed);
    SuiteResult result;
    result.step = step;
    result.tol = tol;
    result.cases.push_back(linear_case(step, tol, rng));
    result.cases.push_back(conv_case(step, tol, rng));
    result.cases.push_back(batchnorm_case(Mode::kTrain, step, tol, rng));
    result.cases.push_back(batchnorm_case(Mode::kEval, step, tol, rng));
    result.cases.push_back(dropout_case(step, tol, rng));
    result.cases.push_back(lstm_case(step, tol, rng));
    result.cases.push_back(rnn_case(step, tol, rng));
    for (Architecture arch :
         {Architecture::kResnls, Architecture::kCnn, Architecture::kRnn,
          Architecture::kLstm, Architecture::kBilstm}) {
        result.cases.push_back(model_case(arch, step, tol, rng));
    }
    return result;
}

}  // namespace resnls
