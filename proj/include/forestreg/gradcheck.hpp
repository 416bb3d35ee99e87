#pragma once

#include <cstdint>
#include <string>
#include <vector>

namespace forestreg {

// One finite-difference suite: named unit, worst relative error over the
// checked coordinates, and the tolerance it was held to.
struct GradCheckResult {
    std::string name;
    double max_rel_err = 0.0;
    double tolerance = 1e-4;
    bool pass = false;
    std::size_t coords = 0;  // coordinates compared
};

// Central-difference gradient verification of every layer type and loss
// term (double precision), plus end-to-end composites on sampled
// parameters. Layer/loss tolerance 1e-4; composites 1e-3.
std::vector<GradCheckResult> run_gradcheck(std::uint64_t seed = 42);

bool all_passed(const std::vector<GradCheckResult>& results);

}  // namespace forestreg
