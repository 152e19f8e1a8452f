#include "resnls/gradcheck.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>

namespace resnls {

double GradCheckReport::max_rel_err() const {
    double m = 0.0;
    for (const auto& e : entries) m = std::max(m, e.rel_err);
    return m;
}

bool GradCheckReport::passed() const {
    return std::all_of(entries.begin(), entries.end(),
                       [](const GradCheckEntry& e) { return e.passed; });
}

const GradCheckEntry* GradCheckReport::worst() const {
    auto it = std::max_element(entries.begin(), entries.end(),
                               [](const GradCheckEntry& a,
                                  const GradCheckEntry& b) {
                                   return a.rel_err < b.rel_err;
                               });
    return it == entries.end() ? nullptr : &*it;
}

namespace {

double eval_scalar(const TapeFn& f) {
    Tape tape(false);
    TensorPtr out = f(tape);
    if (out->size() != 1) {
        throw ContractError("grad_check: function must return a scalar, got " +
                            shape_str(out->shape()));
    }
    return out->at(0);
}

}  // namespace

GradCheckReport grad_check(const TapeFn& f,
                           const std::vector<NamedParam>& params, double step,
                           double tol) {
    if (step <= 0.0) {
        throw ContractError("grad_check: step must be positive");
    }
    for (const auto& [name, p] : params) {
        if (!p->requires_grad) {
            throw ContractError("grad_check: parameter '" + name +
                                "' does not require gradients");
        }
    }
    const double probe_a = eval_scalar(f);
    const double probe_b = eval_scalar(f);
    if (std::memcmp(&probe_a, &probe_b, sizeof probe_a) != 0) {
        throw ContractError(
            "grad_check: two forward passes disagree; the function is "
            "stochastic (disable dropout or fix its source of randomness)");
    }

    for (const auto& [name, p] : params) p->zero_grad();
    {
        Tape tape(true);
        tape.backward(f(tape));
    }
    std::vector<std::vector<double>> ad;
    ad.reserve(params.size());
    for (const auto& [name, p] : params) {
        ad.push_back(p->has_grad() ? p->grad()
                                   : std::vector<double>(p->size(), 0.0));
    }

    GradCheckReport report;
    report.step = step;
    report.tol = tol;
    for (std::size_t i = 0; i < params.size(); ++i) {
        const auto& [name, p] = params[i];
        double max_diff = 0.0;
        double max_fd = 0.0;
        for (std::size_t j = 0; j < p->size(); ++j) {
            const double v = p->at(j);
            p->at(j) = v + step;
            const double lp = eval_scalar(f);
            p->at(j) = v - step;
            const double lm = eval_scalar(f);
            p->at(j) = v;
            const double fd = (lp - lm) / (2.0 * step);
            max_diff = std::max(max_diff, std::abs(ad[i][j] - fd));
            max_fd = std::max(max_fd, std::abs(fd));
        }
        const double rel = max_diff / std::max(1.0, max_fd);
        report.entries.push_back({name, rel, rel <= tol});
    }
    return report;
}

}  // namespace resnls
