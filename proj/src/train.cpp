#include "mdsvm/train.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>

#include "mdsvm/checkpoint.hpp"
#include "mdsvm/rng.hpp"

namespace mdsvm {

void TrainConfig::validate() const {
    if (stage != 1 && stage != 2) throw ConfigError("train: stage must be 1 or 2");
    if (epochs < 1) throw ConfigError("train: epochs must be positive");
    if (lr <= 0.0) throw ConfigError("train: learning rate must be positive");
    if (batch < 1) throw ConfigError("train: batch size must be positive");
    for (std::size_t i = 0; i < milestones.size(); ++i) {
        if (milestones[i] < 1 || milestones[i] >= epochs) {
            throw ConfigError("train: milestone " + std::to_string(milestones[i]) +
                              " must lie in [1, epochs)");
        }
        if (i > 0 && milestones[i] <= milestones[i - 1]) {
            throw ConfigError("train: milestones must be strictly increasing");
        }
    }
}

double lr_at_epoch(const TrainConfig& cfg, int epoch) {
    int passed = 0;
    for (int m : cfg.milestones) {
        if (epoch >= m) ++passed;
    }
    return cfg.lr * std::pow(cfg.decay, passed);
}

Adam::Adam(ParamRegistry& params, const TrainConfig& cfg)
    : params_(params), beta1_(cfg.beta1), beta2_(cfg.beta2), eps_(cfg.eps) {
    for (const auto& [name, p] : params_.items()) {
        m_.emplace_back(static_cast<std::size_t>(p.numel()), 0.0);
        v_.emplace_back(static_cast<std::size_t>(p.numel()), 0.0);
    }
}

void Adam::step(double lr) {
    ++t_;
    const double bc1 = 1.0 - std::pow(beta1_, static_cast<double>(t_));
    const double bc2 = 1.0 - std::pow(beta2_, static_cast<double>(t_));
    for (std::size_t i = 0; i < params_.items().size(); ++i) {
        auto& p = params_.items()[i].second;
        if (!p.has_grad()) continue;
        auto vals = p.mutable_values();
        auto g = p.grad();
        auto& m = m_[i];
        auto& v = v_[i];
        for (std::size_t k = 0; k < vals.size(); ++k) {
            m[k] = beta1_ * m[k] + (1.0 - beta1_) * g[k];
            v[k] = beta2_ * v[k] + (1.0 - beta2_) * g[k] * g[k];
            vals[k] -= lr * (m[k] / bc1) / (std::sqrt(v[k] / bc2) + eps_);
        }
        p.zero_grad();
    }
}

namespace {

Tensor stack_inputs(const std::vector<const TrainItem*>& items) {
    const auto& first = items[0]->input;
    std::vector<double> data;
    data.reserve(static_cast<std::size_t>(first.numel()) * items.size());
    for (const auto* it : items) {
        if (it->input.h != first.h || it->input.w != first.w || it->input.d != first.d) {
            throw ShapeError("train: all items in a batch must share a shape");
        }
        data.insert(data.end(), it->input.data.begin(), it->input.data.end());
    }
    return Tensor::from_data({static_cast<std::int64_t>(items.size()), 1, first.h, first.w, first.d},
                             std::move(data));
}

LabelVolume stack_targets(const std::vector<const TrainItem*>& items) {
    const auto& first = items[0]->target;
    LabelVolume out(static_cast<std::int64_t>(items.size()) * first.h, first.w, first.d);
    std::size_t off = 0;
    for (const auto* it : items) {
        std::copy(it->target.data.begin(), it->target.data.end(), out.data.begin() + off);
        off += it->target.data.size();
    }
    return out;
}

void check_gradients_finite(const ParamRegistry& params) {
    for (const auto& [name, p] : params.items()) {
        if (!p.has_grad()) continue;
        for (double g : p.grad()) {
            if (!std::isfinite(g)) {
                throw NumericsError("non-finite gradient in parameter '" + name + "'");
            }
        }
    }
}

}  // namespace

TrainResult train_stage(const std::vector<TrainItem>& data, const TrainConfig& cfg, Network& net,
                        const std::string& ckpt_dir) {
    cfg.validate();
    if (data.empty()) throw ContractError("train: dataset is empty");
    for (auto& [name, p] : net.params().items()) p.zero_grad();
    Adam opt(net.params(), cfg);
    TrainResult result;
    Rng order_rng(cfg.seed ^ 0x9e3779b97f4a7c15ull);

    for (int epoch = 1; epoch <= cfg.epochs; ++epoch) {
        const double lr = lr_at_epoch(cfg, epoch);

        // epoch roster: stage 1 uses everything; stage 2 keeps all positive
        // blocks and samples negatives at the configured ratio
        std::vector<std::size_t> roster;
        if (cfg.stage == 1) {
            for (std::size_t i = 0; i < data.size(); ++i) roster.push_back(i);
        } else {
            std::vector<std::size_t> negatives;
            std::size_t n_pos = 0;
            for (std::size_t i = 0; i < data.size(); ++i) {
                if (data[i].positive) {
                    roster.push_back(i);
                    ++n_pos;
                } else {
                    negatives.push_back(i);
                }
            }
            const std::size_t want_neg = static_cast<std::size_t>(
                std::ceil(static_cast<double>(n_pos) / std::max(1.0, cfg.pos_neg_ratio)));
            for (std::size_t k = 0; k < want_neg && !negatives.empty(); ++k) {
                roster.push_back(negatives[static_cast<std::size_t>(
                    order_rng.index(static_cast<std::int64_t>(negatives.size())))]);
            }
            if (roster.empty()) {
                for (std::size_t i = 0; i < data.size(); ++i) roster.push_back(i);
            }
        }
        for (std::size_t i = roster.size(); i > 1; --i) {
            std::swap(roster[i - 1], roster[static_cast<std::size_t>(order_rng.index(static_cast<std::int64_t>(i)))]);
        }

        double epoch_loss = 0.0;
        std::size_t batches = 0;
        for (std::size_t at = 0; at < roster.size(); at += static_cast<std::size_t>(cfg.batch)) {
            std::vector<const TrainItem*> batch_items;
            for (std::size_t k = at; k < std::min(roster.size(), at + static_cast<std::size_t>(cfg.batch)); ++k) {
                batch_items.push_back(&data[roster[k]]);
            }
            Tensor x = stack_inputs(batch_items);
            Tensor probs = net.forward(x);
            Tensor loss = dice_loss(probs, stack_targets(batch_items));
            backward(loss);
            if (!loss.all_finite()) {
                check_gradients_finite(net.params());
                throw NumericsError("non-finite loss with finite gradients");
            }
            check_gradients_finite(net.params());
            opt.step(lr);
            epoch_loss += loss.item();
            ++batches;
        }
        result.loss_trace.push_back(epoch_loss / static_cast<double>(batches));
        result.lr_trace.push_back(lr);

        const bool at_milestone =
            std::find(cfg.milestones.begin(), cfg.milestones.end(), epoch) != cfg.milestones.end();
        if (!ckpt_dir.empty() && (at_milestone || epoch == cfg.epochs)) {
            char buf[32];
            std::snprintf(buf, sizeof(buf), "ckpt_epoch_%04d.mdsvckpt", epoch);
            const std::string path = ckpt_dir + "/" + buf;
            save_checkpoint(path, net.params());
            result.checkpoints.push_back(path);
        }
    }
    return result;
}

void save_loss_trace(const std::string& path, const TrainResult& result) {
    std::ofstream os(path, std::ios::trunc);
    if (!os) throw IoError("cannot write loss trace: " + path);
    os << "epoch\tloss\tlr\n";
    for (std::size_t i = 0; i < result.loss_trace.size(); ++i) {
        char line[96];
        std::snprintf(line, sizeof(line), "%zu\t%.10g\t%.10g\n", i + 1, result.loss_trace[i],
                      result.lr_trace[i]);
        os << line;
    }
}

}  // namespace mdsvm
