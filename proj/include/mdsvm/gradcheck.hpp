#pragma once

#include <functional>
#include <string>
#include <vector>

#include "mdsvm/tensor.hpp"

namespace mdsvm {

struct GradCheckReport {
    double max_rel_err = 0.0;
    std::string worst;  // "leaf 2 @ 17" of the worst coordinate
    std::int64_t probes = 0;

    bool within(double tol) const { return max_rel_err < tol; }
};

// Central finite differences against the reverse-mode gradients of the scalar
// produced by fn(leaves). Every leaf must require grad; fn must rebuild its
// graph from the leaf values on each call. probes_per_leaf == 0 checks every
// coordinate; otherwise a seeded random subset. The relative error uses
// |a - n| / max(1, |a|, |n|), i.e. absolute below unit scale.
GradCheckReport gradcheck(const std::function<Tensor(const std::vector<Tensor>&)>& fn,
                          std::vector<Tensor> leaves, double step = 1e-4,
                          std::int64_t probes_per_leaf = 0, std::uint64_t probe_seed = 1);

}  // namespace mdsvm
