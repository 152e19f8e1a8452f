#pragma once

#include <functional>
#include <string>
#include <utility>
#include <vector>

#include "resnls/tensor.hpp"

namespace resnls {

// Scalar-valued function under test. It is called with a fresh tape for
// every evaluation, so it must rebuild its graph from captured tensors.
using TapeFn = std::function<TensorPtr(Tape&)>;
using NamedParam = std::pair<std::string, TensorPtr>;

struct GradCheckEntry {
    std::string name;
    double rel_err = 0.0;
    bool passed = false;
};

struct GradCheckReport {
    double step = 0.0;
    double tol = 0.0;
    std::vector<GradCheckEntry> entries;

    double max_rel_err() const;
    bool passed() const;
    // Entry with the largest relative error, or null when empty.
    const GradCheckEntry* worst() const;
};

// Compares reverse-mode gradients against central finite differences.
// Per parameter the score is max|g_ad - g_fd| / max(1, max|g_fd|).
// The function is evaluated twice up front; a bitwise difference between
// the two runs means a stochastic layer was left on and is an error.
GradCheckReport grad_check(const TapeFn& f,
                           const std::vector<NamedParam>& params, double step,
                           double tol);

}  // namespace resnls
