// Acceptance suite: one criterion per subcommand, one PASS/FAIL line each.
// Run `acceptance all` (or a specific c1..c8) from ctest or the shell.

#include <cmath>
#include <cstdio>
#include <cstring>
#include <fstream>
#include <functional>
#include <map>
#include <string>
#include <vector>

#include "mdsvm/checkpoint.hpp"
#include "mdsvm/metrics.hpp"
#include "mdsvm/network.hpp"
#include "mdsvm/pipeline.hpp"
#include "mdsvm/rng.hpp"
#include "mdsvm/synth.hpp"
#include "mdsvm/train.hpp"
#include "mdsvm/verify.hpp"

using namespace mdsvm;

namespace {

bool report(const char* id, const char* name, bool pass, const std::string& detail) {
    std::printf("%-4s %-46s %s%s%s\n", id, name, pass ? "PASS" : "FAIL",
                detail.empty() ? "" : "  -- ", detail.c_str());
    std::fflush(stdout);
    return pass;
}

bool run_group(const char* id, const char* name, const std::vector<CheckResult>& results,
               const std::string& filter = "") {
    bool ok = true;
    std::string first_fail;
    int matched = 0;
    for (const auto& r : results) {
        if (!filter.empty() && r.name.find(filter) == std::string::npos) continue;
        ++matched;
        if (!r.pass && first_fail.empty()) first_fail = r.name + ": " + r.detail;
        ok = ok && r.pass;
    }
    if (matched == 0) {
        ok = false;
        first_fail = "no checks matched filter '" + filter + "'";
    }
    return report(id, name, ok, ok ? std::to_string(matched) + " checks" : first_fail);
}

// ---- criterion 1: parameter-count anchor ------------------------------------

bool criterion1() {
    NetworkConfig cfg;  // reference configuration
    cfg.ladder = {16, 32, 64, 128, 256};
    cfg.snake_half_length = 4;
    cfg.ssm_expansion = 2;
    cfg.ssm_state = 16;
    Network net = Network::build(cfg, 1);
    const double count = static_cast<double>(net.parameter_count());
    const double target = 26.7e6;
    const bool pass = count >= 0.85 * target && count <= 1.15 * target;
    char detail[128];
    std::snprintf(detail, sizeof(detail), "counted %.0f parameters, accepted band [%.0f, %.0f]",
                  count, 0.85 * target, 1.15 * target);
    return report("C1", "parameter-count anchor (26.7M +/- 15%)", pass, detail);
}

// ---- criterion 7: toy overfit and two-stage gain ----------------------------

LabelVolume threshold_probs(const Tensor& probs, std::int64_t h, std::int64_t w, std::int64_t d) {
    LabelVolume out(h, w, d);
    auto v = probs.values();
    for (std::size_t i = 0; i < out.data.size(); ++i) out.data[i] = v[i] > 0.5 ? 1 : 0;
    return out;
}

Tensor volume_tensor(const Volume& v) {
    return Tensor::from_data({1, 1, v.h, v.w, v.d}, std::vector<double>(v.data.begin(), v.data.end()));
}

bool criterion7() {
    bool all_ok = true;

    // --- single-sample overfit on one 64x64x32 tube volume
    {
        SynthSpec spec;
        spec.seed = 404;
        spec.h = 64;
        spec.w = 64;
        spec.d = 32;
        spec.tube_count = 1;
        spec.branch_depth = 1;
        spec.radius_min = 2.0;
        spec.radius_max = 3.0;
        SynthCase cs = synth_generate(spec);

        NetworkConfig cfg;
        cfg.ladder = {4, 8, 16, 32, 64};
        const std::uint64_t net_seed = 7;

        TrainConfig tcfg;
        tcfg.stage = 1;
        tcfg.epochs = 2;
        tcfg.lr = 2e-3;
        tcfg.seed = 11;

        std::vector<TrainItem> data;
        data.push_back({normalize_volume(cs.intensity), cs.label, true});

        // determinism of this exact configuration: a 2-epoch prefix must be
        // bit-identical across rebuilds
        Network net_a = Network::build(cfg, net_seed);
        auto trace_a = train_stage(data, tcfg, net_a);
        Network net_b = Network::build(cfg, net_seed);
        auto trace_b = train_stage(data, tcfg, net_b);
        bool deterministic = trace_a.loss_trace == trace_b.loss_trace;
        for (std::size_t i = 0; deterministic && i < net_a.params().items().size(); ++i) {
            const auto& pa = net_a.params().items()[i].second;
            const auto& pb = net_b.params().items()[i].second;
            for (std::int64_t k = 0; k < pa.numel(); ++k) {
                if (pa.values()[k] != pb.values()[k]) {
                    deterministic = false;
                    break;
                }
            }
        }
        all_ok &= report("C7a", "overfit run is deterministic under its seed", deterministic, "");

        // continue training net_a up to 200 total epochs, checking hard Dice
        Tensor x = volume_tensor(data[0].input);
        Adam opt(net_a.params(), tcfg);
        std::vector<double> losses(trace_a.loss_trace);
        double dice = 0.0;
        int epoch = static_cast<int>(losses.size());
        double final_loss = 1.0;
        for (; epoch < 200; ) {
            Tensor probs = net_a.forward(x);
            Tensor loss = dice_loss(probs, data[0].target);
            backward(loss);
            opt.step(tcfg.lr);
            ++epoch;
            losses.push_back(loss.item());
            final_loss = loss.item();
            if (epoch % 5 == 0 && epoch >= 20) {
                LabelVolume pred = threshold_probs(net_a.forward(x), 64, 64, 32);
                dice = dice_coefficient(pred, cs.label);
                if (dice > 0.95 && final_loss < 0.05) break;
            }
        }
        char detail[96];
        std::snprintf(detail, sizeof(detail), "hard Dice %.4f, soft loss %.4f after %d epochs", dice,
                      final_loss, epoch);
        all_ok &= report("C7b", "single-volume overfit Dice > 0.95 within 200 epochs",
                         dice > 0.95 && epoch <= 200, detail);
        all_ok &= report("C7c", "overfit soft Dice loss < 0.05 within 200 epochs", final_loss < 0.05,
                         "");

        // loss trend: 10-epoch moving average non-increasing after epoch 20
        bool monotone = true;
        int bad_epoch = 0;
        auto ma = [&](int end) {  // mean of losses[end-10, end)
            double s = 0.0;
            for (int i = end - 10; i < end; ++i) s += losses[static_cast<std::size_t>(i)];
            return s / 10.0;
        };
        for (int e = 21; e <= static_cast<int>(losses.size()); ++e) {
            if (ma(e) > ma(e - 1) + 1e-12) {
                monotone = false;
                bad_epoch = e;
                break;
            }
        }
        all_ok &= report("C7d", "10-epoch loss moving average non-increasing after 20", monotone,
                         monotone ? "" : "violated at epoch " + std::to_string(bad_epoch));
    }

    // --- two-stage pipeline beats upsampled stage-1 on 5 synthetic cases
    {
        std::vector<SynthCase> cases;
        for (int i = 0; i < 5; ++i) {
            SynthSpec spec;
            spec.seed = 900 + static_cast<std::uint64_t>(i);
            spec.h = 64;
            spec.w = 64;
            spec.d = 32;
            spec.tube_count = 1 + i % 2;
            spec.branch_depth = 1;
            spec.radius_min = 1.6;
            spec.radius_max = 2.4;
            spec.fg_max = 0.03;
            cases.push_back(synth_generate(spec));
        }
        NetworkConfig cfg;
        cfg.ladder = {4, 8, 16, 32, 64};
        TwoStageConfig pcfg;
        pcfg.coarse_h = 32;
        pcfg.coarse_w = 32;
        pcfg.coarse_d = 16;
        pcfg.block_side = 16;

        // stage 1: coarse whole-volume training
        std::vector<TrainItem> stage1_items;
        for (const auto& cs : cases) {
            stage1_items.push_back(
                {downsample_volume(normalize_volume(cs.intensity), pcfg.coarse_h, pcfg.coarse_w,
                                   pcfg.coarse_d),
                 downsample_label(cs.label, pcfg.coarse_h, pcfg.coarse_w, pcfg.coarse_d), true});
        }
        TrainConfig t1;
        t1.stage = 1;
        t1.epochs = 60;
        t1.lr = 2e-3;
        t1.seed = 21;
        Network net1 = Network::build(cfg, 31);
        train_stage(stage1_items, t1, net1);

        // stage 2: block-level training on coarse-guided extractions
        std::vector<TrainItem> stage2_items;
        for (const auto& cs : cases) {
            Volume normed = normalize_volume(cs.intensity);
            Volume coarse_probs = coarse_segment(
                downsample_volume(normed, pcfg.coarse_h, pcfg.coarse_w, pcfg.coarse_d), net1);
            auto extracted = extract_blocks(coarse_probs, normed, 0.5, pcfg.block_side);
            for (const auto& [idx, blk] : extracted.blocks) {
                LabelVolume target(idx.side, idx.side, idx.side);
                for (std::int64_t i = 0; i < idx.side; ++i) {
                    for (std::int64_t j = 0; j < idx.side; ++j) {
                        for (std::int64_t k = 0; k < idx.side; ++k) {
                            target.at(i, j, k) = cs.label.at(idx.h0 + i, idx.w0 + j, idx.d0 + k);
                        }
                    }
                }
                const bool positive = target.foreground_count() > 0;
                stage2_items.push_back({blk, std::move(target), positive});
            }
        }
        TrainConfig t2;
        t2.stage = 2;
        t2.epochs = 40;
        t2.lr = 2e-3;
        t2.milestones = {30};
        t2.seed = 22;
        Network net2 = Network::build(cfg, 32);
        train_stage(stage2_items, t2, net2);

        double mean_two_stage = 0.0, mean_stage1 = 0.0;
        for (const auto& cs : cases) {
            auto two = two_stage_infer(cs.intensity, net1, net2, pcfg);
            mean_two_stage += dice_coefficient(two.label, cs.label);

            // stage-1-only baseline: coarse probabilities upsampled to full
            // resolution, then thresholded
            Volume coarse_probs = coarse_segment(
                downsample_volume(normalize_volume(cs.intensity), pcfg.coarse_h, pcfg.coarse_w,
                                  pcfg.coarse_d),
                net1);
            Volume up = downsample_volume(coarse_probs, 64, 64, 32);  // trilinear resample up
            LabelVolume pred1(64, 64, 32);
            for (std::size_t i = 0; i < pred1.data.size(); ++i) {
                pred1.data[i] = up.data[i] > 0.5f ? 1 : 0;
            }
            mean_stage1 += dice_coefficient(pred1, cs.label);
        }
        mean_two_stage /= 5.0;
        mean_stage1 /= 5.0;
        char detail[96];
        std::snprintf(detail, sizeof(detail), "two-stage mean Dice %.4f vs stage-1-only %.4f",
                      mean_two_stage, mean_stage1);
        all_ok &= report("C7e", "two-stage mean Dice beats upsampled stage-1",
                         mean_two_stage > mean_stage1, detail);
    }
    return all_ok;
}

// ---- criterion 8: determinism and format round-trips ------------------------

bool files_equal(const std::string& a, const std::string& b) {
    std::ifstream fa(a, std::ios::binary), fb(b, std::ios::binary);
    std::vector<char> ba((std::istreambuf_iterator<char>(fa)), std::istreambuf_iterator<char>());
    std::vector<char> bb((std::istreambuf_iterator<char>(fb)), std::istreambuf_iterator<char>());
    return !ba.empty() && ba == bb;
}

bool criterion8() {
    bool ok = true;
    NetworkConfig cfg;
    cfg.ladder = {2, 4};
    cfg.snake_half_length = 2;
    cfg.ssm_state = 3;

    SynthSpec spec;
    spec.seed = 777;
    spec.h = spec.w = spec.d = 16;
    spec.tube_count = 1;
    spec.branch_depth = 0;
    spec.fg_max = 0.08;
    SynthCase cs = synth_generate(spec);
    std::vector<TrainItem> data;
    data.push_back({normalize_volume(cs.intensity), cs.label, true});
    TrainConfig tcfg;
    tcfg.epochs = 4;
    tcfg.lr = 1e-3;
    tcfg.seed = 3;

    // fixed-seed training runs produce bit-identical checkpoints
    Network a = Network::build(cfg, 5);
    train_stage(data, tcfg, a);
    save_checkpoint("acc_c8_a.mdsvckpt", a.params());
    Network b = Network::build(cfg, 5);
    train_stage(data, tcfg, b);
    save_checkpoint("acc_c8_b.mdsvckpt", b.params());
    ok &= report("C8a", "fixed-seed training checkpoints bit-identical",
                 files_equal("acc_c8_a.mdsvckpt", "acc_c8_b.mdsvckpt"), "");

    // checkpoint round-trip: load and re-save reproduces the bytes
    Network c = Network::build(cfg, 6);
    load_checkpoint("acc_c8_a.mdsvckpt", c.params());
    save_checkpoint("acc_c8_c.mdsvckpt", c.params());
    ok &= report("C8b", "MDSVCKPT round-trip bit-exact",
                 files_equal("acc_c8_a.mdsvckpt", "acc_c8_c.mdsvckpt"), "");

    // fixed-seed predictions are bit-identical; label files round-trip
    TwoStageConfig pcfg;
    pcfg.coarse_h = pcfg.coarse_w = pcfg.coarse_d = 8;
    pcfg.block_side = 16;
    auto p1 = two_stage_infer(cs.intensity, a, c, pcfg);
    auto p2 = two_stage_infer(cs.intensity, a, c, pcfg);
    ok &= report("C8c", "fixed-seed two-stage predictions identical", p1.label.data == p2.label.data,
                 "");
    save_label("acc_c8_p1.mdsv", p1.label);
    LabelVolume lr = load_label("acc_c8_p1.mdsv");
    save_label("acc_c8_p2.mdsv", lr);
    ok &= report("C8d", "MDSV round-trip bit-exact", files_equal("acc_c8_p1.mdsv", "acc_c8_p2.mdsv"),
                 "");

    // intensity volumes round-trip too
    save_volume("acc_c8_v1.mdsv", cs.intensity);
    Volume vr = load_volume("acc_c8_v1.mdsv");
    save_volume("acc_c8_v2.mdsv", vr);
    ok &= report("C8e", "MDSV float round-trip bit-exact",
                 files_equal("acc_c8_v1.mdsv", "acc_c8_v2.mdsv"), "");

    for (const char* f : {"acc_c8_a.mdsvckpt", "acc_c8_b.mdsvckpt", "acc_c8_c.mdsvckpt",
                          "acc_c8_p1.mdsv", "acc_c8_p2.mdsv", "acc_c8_v1.mdsv", "acc_c8_v2.mdsv"}) {
        std::remove(f);
    }
    return ok;
}

}  // namespace

int main(int argc, char** argv) {
    const std::string which = argc > 1 ? argv[1] : "all";
    std::map<std::string, std::function<bool()>> criteria;
    criteria["c1"] = criterion1;
    criteria["c2"] = [] { return run_group("C2", "gradient suite (ops + composed blocks + toy net)",
                                           verify_gradcheck()); };
    criteria["c3"] = [] { return run_group("C3", "zero-offset snake degeneracy", verify_oracle(),
                                           "zero-offset"); };
    criteria["c4"] = [] {
        return run_group("C4", "selective-scan oracle (unroll, chunked, cumsum)", verify_oracle(),
                         "scan");
    };
    criteria["c5"] = [] {
        const auto oracle = verify_oracle();
        bool ok = run_group("C5", "metric brute-force oracles", oracle, "brute-force");
        ok &= run_group("C5b", "metric hand cases + spacing scaling", oracle, "hand cases");
        return ok;
    };
    criteria["c6"] = [] { return run_group("C6", "pipeline invariants (50 randomized cases)",
                                           verify_pipeline()); };
    criteria["c7"] = criterion7;
    criteria["c8"] = criterion8;

    bool ok = true;
    if (which == "all") {
        for (auto& [name, fn] : criteria) ok &= fn();
    } else {
        auto it = criteria.find(which);
        if (it == criteria.end()) {
            std::fprintf(stderr, "unknown criterion '%s' (use c1..c8 or all)\n", which.c_str());
            return 2;
        }
        ok = it->second();
    }
    return ok ? 0 : 1;
}
