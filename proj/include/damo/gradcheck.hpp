#pragma once

#include <cstdint>
#include <functional>
#include <string>
#include <vector>

#include "damo/rng.hpp"

namespace damo {

// Worst-entry relative error with the denominator floored at 1 so near-zero
// gradients are compared absolutely.
double worst_rel_err(const std::vector<double>& analytic, const std::vector<double>& numeric);

struct GradCheckOp {
    std::string name;
    double tolerance;
    // Runs one seeded random case and returns its worst relative error.
    std::function<double(Rng&, double step)> run_case;
};

struct GradCheckResult {
    std::string op;
    int cases = 0;
    double worst_rel_err = 0.0;
    double tolerance = 0.0;
    bool passed = false;
};

// Every op with a backward pass, each checked against numeric_gradient on
// inputs conditioned away from max ties and interpolation kinks.
const std::vector<GradCheckOp>& gradcheck_registry();

GradCheckResult run_gradcheck_op(const GradCheckOp& op, std::uint64_t seed, int cases,
                                 double step = 1e-6);

// Runs one registered op by name (UsageError if unknown) or, with an empty
// name, the whole registry.
std::vector<GradCheckResult> run_gradcheck(const std::string& op_name, std::uint64_t seed,
                                           int cases, double step = 1e-6);

}  // namespace damo
