#pragma once

#include <string>
#include <vector>

namespace reid {

struct VerifySuite {
    std::string name;
    double max_error = 0.0;
    double threshold = 0.0;
    bool pass = false;
    std::string detail;
};

// Runs every property suite at 64-bit precision: finite-difference gradient
// checks for all primitives, layers, and losses; the softmax/reweighting
// decomposition identity; the center-update rule against a brute-force
// evaluation; the no-backprop contract for centers; and the single-shot CMC
// ranking against exhaustive enumeration.
std::vector<VerifySuite> run_verification();

bool all_passed(const std::vector<VerifySuite>& suites);

}  // namespace reid
