#pragma once

#include <string>
#include <vector>

#include "mdsvm/metrics.hpp"
#include "mdsvm/network.hpp"
#include "mdsvm/volume.hpp"

namespace mdsvm {

struct TrainConfig {
    int stage = 1;
    int epochs = 25;
    double lr = 1e-3;
    std::vector<int> milestones;  // 1-based epochs where lr decays
    double decay = 0.1;
    int batch = 1;
    std::uint64_t seed = 1;
    double beta1 = 0.9, beta2 = 0.999, eps = 1e-8;
    // stage-2 sampling: positives per negative
    double pos_neg_ratio = 3.0;

    void validate() const;
};

// lr * decay^(milestones passed); a milestone takes effect at its own epoch.
double lr_at_epoch(const TrainConfig& cfg, int epoch);

// Adam over a parameter registry. Gradients are consumed and cleared by
// step().
class Adam {
public:
    Adam(ParamRegistry& params, const TrainConfig& cfg);
    void step(double lr);

private:
    ParamRegistry& params_;
    double beta1_, beta2_, eps_;
    std::int64_t t_ = 0;
    std::vector<std::vector<double>> m_, v_;
};

struct TrainItem {
    Volume input;  // already normalized, at network input shape
    LabelVolume target;
    bool positive = true;  // stage-2 sampling tag
};

struct TrainResult {
    std::vector<double> loss_trace;  // per-epoch mean soft Dice loss
    std::vector<double> lr_trace;
    std::vector<std::string> checkpoints;
};

// Adam + soft Dice training loop; deterministic under cfg.seed. Writes
// checkpoints at milestones and at the end when ckpt_dir is non-empty.
// Aborts with NumericsError naming the first non-finite parameter gradient.
TrainResult train_stage(const std::vector<TrainItem>& data, const TrainConfig& cfg, Network& net,
                        const std::string& ckpt_dir = "");

// Writes the tab-separated `epoch loss lr` trace.
void save_loss_trace(const std::string& path, const TrainResult& result);

}  // namespace mdsvm
