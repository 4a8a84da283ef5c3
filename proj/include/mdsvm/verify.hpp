#pragma once

#include <string>
#include <vector>

namespace mdsvm {

struct CheckResult {
    std::string name;
    bool pass = false;
    std::string detail;
};

// Finite-difference gradient checks for every differentiable op and the
// composed MDSConv / VSSM / RVM blocks plus a 2-level toy network.
std::vector<CheckResult> verify_gradcheck();

// Numeric oracles: zero-offset snake degeneracy, selective-scan unroll and
// chunked equivalence, exact metric brute-force agreement, file format
// round-trips.
std::vector<CheckResult> verify_oracle();

// Two-stage pipeline invariants on randomized synthetic cases: extraction
// completeness, merge conservation, guidance-only output, block-order
// invariance, learning-rate schedule.
std::vector<CheckResult> verify_pipeline();

bool all_pass(const std::vector<CheckResult>& results);

}  // namespace mdsvm
