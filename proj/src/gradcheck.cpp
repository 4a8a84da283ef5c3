#include "mdsvm/gradcheck.hpp"

#include <algorithm>
#include <cmath>

#include "mdsvm/rng.hpp"

namespace mdsvm {

GradCheckReport gradcheck(const std::function<Tensor(const std::vector<Tensor>&)>& fn,
                          std::vector<Tensor> leaves, double step, std::int64_t probes_per_leaf,
                          std::uint64_t probe_seed) {
    for (auto& l : leaves) {
        if (!l.requires_grad()) throw ContractError("gradcheck: every leaf must require grad");
        l.zero_grad();
    }
    Tensor loss = fn(leaves);
    if (loss.numel() != 1) throw ContractError("gradcheck: fn must return a scalar");
    backward(loss);

    std::vector<std::vector<double>> analytic;
    analytic.reserve(leaves.size());
    for (auto& l : leaves) {
        l.mutable_grad();  // ensure buffer exists even if untouched
        analytic.emplace_back(l.grad().begin(), l.grad().end());
    }

    GradCheckReport rep;
    Rng rng(probe_seed);
    for (std::size_t li = 0; li < leaves.size(); ++li) {
        auto& leaf = leaves[li];
        const std::int64_t n = leaf.numel();
        std::vector<std::int64_t> idx;
        if (probes_per_leaf <= 0 || probes_per_leaf >= n) {
            idx.resize(static_cast<std::size_t>(n));
            for (std::int64_t i = 0; i < n; ++i) idx[static_cast<std::size_t>(i)] = i;
        } else {
            for (std::int64_t k = 0; k < probes_per_leaf; ++k) idx.push_back(rng.index(n));
            std::sort(idx.begin(), idx.end());
            idx.erase(std::unique(idx.begin(), idx.end()), idx.end());
        }
        auto vals = leaf.mutable_values();
        for (std::int64_t i : idx) {
            const double keep = vals[static_cast<std::size_t>(i)];
            vals[static_cast<std::size_t>(i)] = keep + step;
            const double f_plus = fn(leaves).item();
            vals[static_cast<std::size_t>(i)] = keep - step;
            const double f_minus = fn(leaves).item();
            vals[static_cast<std::size_t>(i)] = keep;
            const double numeric = (f_plus - f_minus) / (2.0 * step);
            const double a = analytic[li][static_cast<std::size_t>(i)];
            const double denom = std::max({1.0, std::abs(a), std::abs(numeric)});
            const double rel = std::abs(a - numeric) / denom;
            ++rep.probes;
            if (rel > rep.max_rel_err) {
                rep.max_rel_err = rel;
                rep.worst = "leaf " + std::to_string(li) + " @ " + std::to_string(i);
            }
        }
    }
    return rep;
}

}  // namespace mdsvm
