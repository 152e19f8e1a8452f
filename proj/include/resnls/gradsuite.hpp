#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "resnls/gradcheck.hpp"

namespace resnls {

struct SuiteCase {
    std::string name;  // "layer.conv1d", "model.resnls", ...
    GradCheckReport report;
};

struct SuiteResult {
    double step = 0.0;
    double tol = 0.0;
    std::vector<SuiteCase> cases;

    double max_rel_err() const;
    bool passed() const;
};

// Central-difference gradient checks for every layer primitive and every
// architecture (window 5, batch 3, train mode). Dropout keep probability is
// forced to 1 inside the model cases so repeated forward passes are bitwise
// identical; the dropout backward itself is covered by a dedicated layer
// case that reseeds its mask stream on every evaluation.
SuiteResult run_gradient_suite(double step = 1e-5, double tol = 1e-4,
                               std::uint64_t seed = 7);

}  // namespace resnls
