// mdsvm: data synthesis, two-stage training and inference, evaluation, and
// verification suites for the MDSVM-UNet segmentation toolkit.

#include <algorithm>
#include <chrono>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "json.hpp"
#include "mdsvm/checkpoint.hpp"
#include "mdsvm/metrics.hpp"
#include "mdsvm/network.hpp"
#include "mdsvm/pipeline.hpp"
#include "mdsvm/synth.hpp"
#include "mdsvm/train.hpp"
#include "mdsvm/verify.hpp"

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

constexpr int kExitOk = 0;
constexpr int kExitVerifyFail = 1;
constexpr int kExitUsage = 2;
constexpr int kExitNumeric = 3;
constexpr int kExitUndefinedMetric = 4;

std::string iso_now() {
    const auto now = std::chrono::system_clock::now();
    const std::time_t t = std::chrono::system_clock::to_time_t(now);
    char buf[32];
    std::tm tm_utc{};
    gmtime_r(&t, &tm_utc);
    std::strftime(buf, sizeof(buf), "%Y-%m-%dT%H:%M:%SZ", &tm_utc);
    return buf;
}

std::uint64_t fnv1a_file(const std::string& path) {
    std::ifstream is(path, std::ios::binary);
    std::uint64_t h = 1469598103934665603ull;
    char buf[1 << 14];
    while (is) {
        is.read(buf, sizeof(buf));
        for (std::streamsize i = 0; i < is.gcount(); ++i) {
            h ^= static_cast<unsigned char>(buf[i]);
            h *= 1099511628211ull;
        }
    }
    return h;
}

// Run manifest: written before exit on success and failure alike.
struct Manifest {
    std::string command;
    std::string path;
    json config = json::object();
    std::vector<std::string> outputs;
    std::string start = iso_now();

    void write(const std::string& status, const std::string& message = "") const {
        if (path.empty()) return;
        json j;
        j["command"] = command;
        j["config"] = config;
        j["start"] = start;
        j["end"] = iso_now();
        j["status"] = status;
        if (!message.empty()) j["message"] = message;
        json outs = json::array();
        for (const auto& p : outputs) {
            char hex[20];
            std::snprintf(hex, sizeof(hex), "%016llx",
                          static_cast<unsigned long long>(fnv1a_file(p)));
            outs.push_back({{"path", p}, {"fnv1a64", hex}});
        }
        j["outputs"] = outs;
        std::error_code ec;
        const fs::path parent = fs::path(path).parent_path();
        if (!parent.empty()) fs::create_directories(parent, ec);
        std::ofstream os(path, std::ios::trunc);
        os << j.dump(2) << "\n";
    }
};

int exit_code_for(const std::exception& e) {
    if (dynamic_cast<const mdsvm::NumericsError*>(&e)) return kExitNumeric;
    if (dynamic_cast<const mdsvm::UndefinedMetricError*>(&e)) return kExitUndefinedMetric;
    return kExitUsage;
}

// ---- shared network/pipeline options ---------------------------------------

struct NetOptions {
    std::vector<int> ladder = {16, 32, 64, 128, 256};
    int cmax = 4;
    int lambda = 2;
    int nstate = 16;
    std::vector<std::int64_t> coarse = {128, 128, 64};
    std::int64_t block_side = 64;
    bool transposed_head = false;

    void attach(CLI::App* cmd) {
        cmd->add_option("--ladder", ladder, "channel ladder (doubling)")->expected(2, 8);
        cmd->add_option("--cmax", cmax, "snake kernel half length");
        cmd->add_option("--lambda", lambda, "VSSM expansion factor");
        cmd->add_option("--nstate", nstate, "SSM state dimension");
        cmd->add_option("--coarse", coarse, "stage-1 volume shape H W D")->expected(3);
        cmd->add_option("--block-side", block_side, "stage-2 block cube side");
        cmd->add_flag("--transposed-head", transposed_head, "use a strided transposed conv head");
    }

    mdsvm::NetworkConfig network_config() const {
        mdsvm::NetworkConfig cfg;
        cfg.ladder = ladder;
        cfg.snake_half_length = cmax;
        cfg.ssm_expansion = lambda;
        cfg.ssm_state = nstate;
        cfg.transposed_head = transposed_head;
        return cfg;
    }

    json to_json() const {
        return {{"ladder", ladder},     {"cmax", cmax},
                {"lambda", lambda},     {"nstate", nstate},
                {"coarse", coarse},     {"block_side", block_side},
                {"transposed_head", transposed_head}};
    }
};

struct CasePair {
    std::string id;
    std::string img, lbl;
};

std::vector<CasePair> scan_dataset(const std::string& dir) {
    std::vector<CasePair> cases;
    if (!fs::is_directory(dir)) throw mdsvm::IoError("data directory not found: " + dir);
    std::vector<std::string> imgs;
    for (const auto& e : fs::directory_iterator(dir)) {
        const std::string name = e.path().filename().string();
        if (name.size() > 9 && name.substr(name.size() - 9) == ".img.mdsv") imgs.push_back(name);
    }
    std::sort(imgs.begin(), imgs.end());
    for (const auto& img : imgs) {
        const std::string stem = img.substr(0, img.size() - 9);
        const std::string lbl = dir + "/" + stem + ".lbl.mdsv";
        if (fs::exists(lbl)) cases.push_back({stem, dir + "/" + img, lbl});
    }
    if (cases.empty()) throw mdsvm::IoError("no case_*.img.mdsv / .lbl.mdsv pairs in " + dir);
    return cases;
}

mdsvm::Network load_network(const mdsvm::NetworkConfig& cfg, const std::string& ckpt) {
    mdsvm::Network net = mdsvm::Network::build(cfg, 0);
    mdsvm::load_checkpoint(ckpt, net.params());
    return net;
}

void export_slices(const mdsvm::LabelVolume& lbl, const std::string& dir) {
    fs::create_directories(dir);
    for (std::int64_t k = 0; k < lbl.d; ++k) {
        char name[32];
        std::snprintf(name, sizeof(name), "slice_%04lld.pgm", static_cast<long long>(k));
        std::ofstream os(dir + "/" + name, std::ios::binary | std::ios::trunc);
        os << "P5\n" << lbl.w << " " << lbl.h << "\n255\n";
        for (std::int64_t i = 0; i < lbl.h; ++i) {
            for (std::int64_t j = 0; j < lbl.w; ++j) {
                os.put(lbl.at(i, j, k) ? static_cast<char>(255) : 0);
            }
        }
    }
}

std::string fmt4(double v) {
    char buf[32];
    std::snprintf(buf, sizeof(buf), "%.4f", v);
    return buf;
}

// Flat key=value configuration: keys mirror the long flag names. The file is
// folded into the argument list before parsing; keys already given as flags
// are skipped, so flags always win.
std::vector<std::string> fold_config_into_args(int argc, char** argv) {
    std::vector<std::string> args;
    std::string config_path;
    for (int i = 1; i < argc; ++i) {
        const std::string a = argv[i];
        if (a == "--config") {
            if (i + 1 >= argc) throw mdsvm::ConfigError("--config expects a file path");
            config_path = argv[++i];
        } else if (a.rfind("--config=", 0) == 0) {
            config_path = a.substr(9);
        } else {
            args.push_back(a);
        }
    }
    if (config_path.empty()) return args;
    std::ifstream is(config_path);
    if (!is) throw mdsvm::IoError("cannot open config file: " + config_path);
    std::string line;
    std::vector<std::string> extra;
    while (std::getline(is, line)) {
        const auto hash = line.find('#');
        if (hash != std::string::npos) line.resize(hash);
        const auto eq = line.find('=');
        if (eq == std::string::npos) continue;
        auto trim = [](std::string s) {
            const auto b = s.find_first_not_of(" \t\r");
            const auto e = s.find_last_not_of(" \t\r");
            return b == std::string::npos ? std::string() : s.substr(b, e - b + 1);
        };
        const std::string key = trim(line.substr(0, eq));
        const std::string value = trim(line.substr(eq + 1));
        if (key.empty()) continue;
        const std::string flag = "--" + key;
        bool given = false;
        for (const auto& a : args) {
            if (a == flag || a.rfind(flag + "=", 0) == 0) given = true;
        }
        if (given) continue;
        if (value == "true" || value == "false") {
            extra.push_back(flag + "=" + value);
        } else {
            extra.push_back(flag);
            std::stringstream ss(value);
            std::string tok;
            while (ss >> tok) extra.push_back(tok);
        }
    }
    args.insert(args.end(), extra.begin(), extra.end());
    return args;
}

// ---- subcommand bodies ------------------------------------------------------

int run_synth(std::uint64_t seed, std::vector<std::int64_t> shape, int count, std::string out_dir,
              int tubes, int branch_depth, double radius_min, double radius_max, double noise,
              Manifest& man) {
    fs::create_directories(out_dir);
    for (int i = 0; i < count; ++i) {
        mdsvm::SynthSpec spec;
        spec.seed = seed + static_cast<std::uint64_t>(i);
        spec.h = shape[0];
        spec.w = shape[1];
        spec.d = shape[2];
        spec.tube_count = tubes;
        spec.branch_depth = branch_depth;
        spec.radius_min = radius_min;
        spec.radius_max = radius_max;
        spec.noise_sigma = noise;
        mdsvm::SynthCase cs = mdsvm::synth_generate(spec);
        char base[32];
        std::snprintf(base, sizeof(base), "case_%04d", i);
        const std::string img = out_dir + "/" + base + ".img.mdsv";
        const std::string lbl = out_dir + "/" + base + ".lbl.mdsv";
        mdsvm::save_volume(img, cs.intensity);
        mdsvm::save_label(lbl, cs.label);
        man.outputs.push_back(img);
        man.outputs.push_back(lbl);
        std::cout << base << ": foreground fraction "
                  << static_cast<double>(cs.label.foreground_count()) / cs.label.numel() << "\n";
    }
    return kExitOk;
}

int run_train(int stage, const std::string& data_dir, int epochs, double lr,
              std::vector<int> milestones, int batch, std::uint64_t seed, const NetOptions& net_opts,
              const std::string& model1, const std::string& guidance, const std::string& out_dir,
              Manifest& man) {
    auto cases = scan_dataset(data_dir);
    mdsvm::TrainConfig tcfg;
    tcfg.stage = stage;
    tcfg.epochs = epochs;
    tcfg.lr = lr;
    tcfg.milestones = milestones;
    tcfg.batch = batch;
    tcfg.seed = seed;
    tcfg.validate();

    std::vector<mdsvm::TrainItem> items;
    if (stage == 1) {
        for (const auto& c : cases) {
            mdsvm::Volume img = mdsvm::load_volume(c.img);
            mdsvm::LabelVolume lbl = mdsvm::load_label(c.lbl);
            items.push_back({mdsvm::downsample_volume(mdsvm::normalize_volume(img), net_opts.coarse[0],
                                                      net_opts.coarse[1], net_opts.coarse[2]),
                             mdsvm::downsample_label(lbl, net_opts.coarse[0], net_opts.coarse[1],
                                                     net_opts.coarse[2]),
                             true});
        }
    } else {
        // stage 2: guided block extraction, positive/negative tagging
        std::optional<mdsvm::Network> net1;
        if (guidance == "coarse") {
            if (model1.empty()) {
                throw mdsvm::ConfigError("stage 2 with coarse guidance needs --model1");
            }
            net1 = load_network(net_opts.network_config(), model1);
        }
        for (const auto& c : cases) {
            mdsvm::Volume img = mdsvm::normalize_volume(mdsvm::load_volume(c.img));
            mdsvm::LabelVolume lbl = mdsvm::load_label(c.lbl);
            mdsvm::Volume coarse_probs;
            if (net1) {
                coarse_probs = mdsvm::coarse_segment(
                    mdsvm::downsample_volume(img, net_opts.coarse[0], net_opts.coarse[1],
                                             net_opts.coarse[2]),
                    *net1);
            } else {
                mdsvm::LabelVolume cl = mdsvm::downsample_label(lbl, net_opts.coarse[0],
                                                                net_opts.coarse[1], net_opts.coarse[2]);
                coarse_probs = mdsvm::Volume(cl.h, cl.w, cl.d);
                for (std::size_t i = 0; i < cl.data.size(); ++i) {
                    coarse_probs.data[i] = static_cast<float>(cl.data[i]);
                }
            }
            auto extracted = mdsvm::extract_blocks(coarse_probs, img, 0.5, net_opts.block_side);
            for (const auto& [idx, blk] : extracted.blocks) {
                mdsvm::LabelVolume target(idx.side, idx.side, idx.side);
                for (std::int64_t i = 0; i < idx.side; ++i) {
                    for (std::int64_t j = 0; j < idx.side; ++j) {
                        for (std::int64_t k = 0; k < idx.side; ++k) {
                            target.at(i, j, k) = lbl.at(idx.h0 + i, idx.w0 + j, idx.d0 + k);
                        }
                    }
                }
                const bool positive = target.foreground_count() > 0;
                items.push_back({blk, std::move(target), positive});
            }
        }
    }

    mdsvm::Network net = mdsvm::Network::build(net_opts.network_config(), seed);
    std::cout << "parameters: " << net.parameter_count() << "\n";
    fs::create_directories(out_dir);
    auto result = mdsvm::train_stage(items, tcfg, net, out_dir);
    const std::string final_ckpt = out_dir + "/model_stage" + std::to_string(stage) + ".mdsvckpt";
    mdsvm::save_checkpoint(final_ckpt, net.params());
    const std::string trace_path = out_dir + "/loss_trace.tsv";
    mdsvm::save_loss_trace(trace_path, result);
    man.outputs = result.checkpoints;
    man.outputs.push_back(final_ckpt);
    man.outputs.push_back(trace_path);
    std::cout << "final loss " << result.loss_trace.back() << ", checkpoint " << final_ckpt << "\n";
    return kExitOk;
}

int run_segment(const std::string& model1, const std::string& model2, const std::string& input,
                const std::string& output, const std::string& slices_dir, const NetOptions& net_opts,
                Manifest& man) {
    mdsvm::Network net1 = load_network(net_opts.network_config(), model1);
    mdsvm::Network net2 = load_network(net_opts.network_config(), model2);
    mdsvm::Volume v = mdsvm::load_volume(input);
    mdsvm::TwoStageConfig cfg;
    cfg.coarse_h = net_opts.coarse[0];
    cfg.coarse_w = net_opts.coarse[1];
    cfg.coarse_d = net_opts.coarse[2];
    cfg.block_side = net_opts.block_side;
    auto res = mdsvm::two_stage_infer(v, net1, net2, cfg);
    if (res.empty_guidance) {
        std::cerr << "warning: empty coarse guidance; prediction is all background\n";
    }
    mdsvm::save_label(output, res.label);
    man.outputs.push_back(output);
    if (!slices_dir.empty()) {
        export_slices(res.label, slices_dir);
        std::cout << "wrote " << res.label.d << " axial slices to " << slices_dir << "\n";
    }
    std::cout << "blocks: " << res.block_count
              << ", foreground voxels: " << res.label.foreground_count() << "\n";
    return kExitOk;
}

int run_eval(const std::string& pred_path, const std::string& gt_path) {
    mdsvm::LabelVolume pred = mdsvm::load_label(pred_path);
    mdsvm::LabelVolume gt = mdsvm::load_label(gt_path);
    if (pred.h != gt.h || pred.w != gt.w || pred.d != gt.d) {
        throw mdsvm::ShapeError("prediction and ground truth shapes disagree");
    }
    if (gt.foreground_count() == 0) {
        throw mdsvm::UndefinedMetricError("ground truth is empty; HD and AHD are undefined");
    }
    if (pred.foreground_count() == 0) {
        throw mdsvm::UndefinedMetricError("prediction is empty; HD and AHD are undefined");
    }
    const bool has_spacing = gt.spacing[0] > 0 || gt.spacing[1] > 0 || gt.spacing[2] > 0;
    std::cout << "# units: " << (has_spacing ? "mm" : "voxels") << "\n";
    const double dsc = mdsvm::dice_coefficient(gt, pred);
    const double hd = mdsvm::hausdorff(gt, pred);
    const double ahd = mdsvm::average_hausdorff(gt, pred);
    const std::string case_id = fs::path(pred_path).stem().stem().string();
    std::cout << case_id << "\tDSC " << fmt4(dsc) << "\tHD " << fmt4(hd) << "\tAHD " << fmt4(ahd)
              << "\n";
    std::cout << "MEAN\tDSC " << fmt4(dsc) << "\tHD " << fmt4(hd) << "\tAHD " << fmt4(ahd) << "\n";
    return kExitOk;
}

int run_verify(const std::string& suite) {
    std::vector<std::pair<std::string, std::vector<mdsvm::CheckResult>>> groups;
    if (suite == "gradcheck" || suite == "all") groups.emplace_back("gradcheck", mdsvm::verify_gradcheck());
    if (suite == "oracle" || suite == "all") groups.emplace_back("oracle", mdsvm::verify_oracle());
    if (suite == "pipeline" || suite == "all") groups.emplace_back("pipeline", mdsvm::verify_pipeline());
    bool ok = true;
    for (const auto& [name, results] : groups) {
        for (const auto& r : results) {
            ok = ok && r.pass;
            std::cout << (r.pass ? "PASS" : "FAIL") << "  [" << name << "] " << r.name;
            if (!r.detail.empty()) std::cout << "  (" << r.detail << ")";
            std::cout << "\n";
        }
    }
    std::cout << (ok ? "all checks passed" : "VERIFICATION FAILED") << "\n";
    return ok ? kExitOk : kExitVerifyFail;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"MDSVM-UNet: two-stage coronary-artery segmentation toolkit"};
    app.require_subcommand(1);

    std::string config_placeholder;
    for (auto* sub_name : {"synth", "train", "segment"}) {
        (void)sub_name;  // --config is handled before parsing; see fold_config_into_args
    }

    // synth
    auto* synth = app.add_subcommand("synth", "generate synthetic tubular volumes");
    std::uint64_t s_seed = 1;
    std::vector<std::int64_t> s_shape = {128, 128, 64};
    int s_count = 1, s_tubes = 2, s_branch = 1;
    double s_rmin = 1.5, s_rmax = 3.0, s_noise = 0.05;
    std::string s_out = "data";
    synth->add_option("--config", config_placeholder,
                      "flat key=value configuration file (flags win)");
    synth->add_option("--seed", s_seed, "base seed; case i uses seed+i");
    synth->add_option("--shape", s_shape, "volume shape H W D")->expected(3)
        ->check(CLI::PositiveNumber);
    synth->add_option("--count", s_count, "number of cases")->check(CLI::PositiveNumber);
    synth->add_option("--tubes", s_tubes, "tubes per volume");
    synth->add_option("--branch-depth", s_branch, "binary branching depth");
    synth->add_option("--radius-min", s_rmin, "minimum tube radius (voxels)");
    synth->add_option("--radius-max", s_rmax, "maximum tube radius (voxels)");
    synth->add_option("--noise", s_noise, "additive Gaussian noise sigma");
    synth->add_option("--out", s_out, "output directory");

    // train
    auto* train = app.add_subcommand("train", "train a stage-1 or stage-2 network");
    int t_stage = 1, t_epochs = -1, t_batch = 1;
    double t_lr = -1.0;
    std::vector<int> t_milestones;
    std::uint64_t t_seed = 1;
    std::string t_data = "data", t_out = "run", t_model1, t_guidance = "coarse";
    NetOptions t_net;
    train->add_option("--config", config_placeholder,
                      "flat key=value configuration file (flags win)");
    train->add_option("--stage", t_stage, "1 = coarse whole-volume, 2 = block level")
        ->check(CLI::IsMember({1, 2}));
    train->add_option("--data", t_data, "dataset directory");
    train->add_option("--epochs", t_epochs, "training epochs (default: stage 1 -> 25, stage 2 -> 50)");
    train->add_option("--lr", t_lr, "Adam learning rate (default 1e-3)");
    train->add_option("--milestones", t_milestones,
                      "epochs where lr decays x0.1 (default stage 2: 30 40)");
    train->add_option("--batch", t_batch, "batch size");
    train->add_option("--seed", t_seed, "initialization and sampling seed");
    train->add_option("--model1", t_model1, "stage-1 checkpoint for coarse guidance (stage 2)");
    train->add_option("--guidance", t_guidance, "stage-2 block guidance source")
        ->check(CLI::IsMember({"coarse", "gt"}));
    train->add_option("--out", t_out, "output directory for checkpoints and traces");
    t_net.attach(train);

    // segment
    auto* segment = app.add_subcommand("segment", "two-stage inference on a volume");
    std::string g_model1, g_model2, g_input, g_output = "prediction.lbl.mdsv", g_slices;
    NetOptions g_net;
    segment->add_option("--config", config_placeholder,
                        "flat key=value configuration file (flags win)");
    segment->add_option("--model1", g_model1, "stage-1 checkpoint")->required();
    segment->add_option("--model2", g_model2, "stage-2 checkpoint")->required();
    segment->add_option("--input", g_input, "input intensity volume (.mdsv)")->required();
    segment->add_option("--output", g_output, "output label volume (.mdsv)");
    segment->add_option("--export-slices", g_slices, "directory for per-slice PGM exports");
    g_net.attach(segment);

    // eval
    auto* eval = app.add_subcommand("eval", "DSC/HD/AHD report for a prediction");
    std::string e_pred, e_gt;
    eval->add_option("--pred", e_pred, "predicted label volume")->required();
    eval->add_option("--gt", e_gt, "ground-truth label volume")->required();

    // verify
    auto* verify = app.add_subcommand("verify", "run the verification suites");
    std::string v_suite = "all";
    verify->add_option("--suite", v_suite, "gradcheck | oracle | pipeline | all")
        ->check(CLI::IsMember({"gradcheck", "oracle", "pipeline", "all"}));

    try {
        std::vector<std::string> args = fold_config_into_args(argc, argv);
        std::reverse(args.begin(), args.end());  // CLI11 vector parse is back-to-front
        app.parse(args);
    } catch (const CLI::ParseError& e) {
        const int rc = app.exit(e);
        return rc == 0 ? kExitOk : kExitUsage;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return kExitUsage;
    }

    Manifest man;
    try {
        if (synth->parsed()) {
            man.command = "synth";
            man.path = s_out + "/manifest.json";
            man.config = {{"seed", s_seed}, {"shape", s_shape},   {"count", s_count},
                          {"tubes", s_tubes}, {"branch_depth", s_branch}, {"radius_min", s_rmin},
                          {"radius_max", s_rmax}, {"noise", s_noise}, {"out", s_out}};
            const int rc = run_synth(s_seed, s_shape, s_count, s_out, s_tubes, s_branch, s_rmin,
                                     s_rmax, s_noise, man);
            man.write("ok");
            return rc;
        }
        if (train->parsed()) {
            if (t_epochs < 0) t_epochs = t_stage == 1 ? 25 : 50;
            if (t_lr < 0) t_lr = 1e-3;
            if (t_stage == 2 && train->get_option("--milestones")->count() == 0) {
                for (int m : {30, 40}) {
                    if (m < t_epochs) t_milestones.push_back(m);
                }
            }
            man.command = "train";
            man.path = t_out + "/manifest.json";
            man.config = {{"stage", t_stage},   {"data", t_data},     {"epochs", t_epochs},
                          {"lr", t_lr},         {"milestones", t_milestones}, {"batch", t_batch},
                          {"seed", t_seed},     {"model1", t_model1}, {"guidance", t_guidance},
                          {"out", t_out},       {"network", t_net.to_json()}};
            const int rc = run_train(t_stage, t_data, t_epochs, t_lr, t_milestones, t_batch, t_seed,
                                     t_net, t_model1, t_guidance, t_out, man);
            man.write("ok");
            return rc;
        }
        if (segment->parsed()) {
            man.command = "segment";
            man.path = g_output + ".manifest.json";
            man.config = {{"model1", g_model1},
                          {"model2", g_model2},
                          {"input", g_input},
                          {"output", g_output},
                          {"export_slices", g_slices},
                          {"network", g_net.to_json()}};
            const int rc = run_segment(g_model1, g_model2, g_input, g_output, g_slices, g_net, man);
            man.write("ok");
            return rc;
        }
        if (eval->parsed()) {
            man.command = "eval";
            man.path = "mdsvm_eval_manifest.json";
            man.config = {{"pred", e_pred}, {"gt", e_gt}};
            const int rc = run_eval(e_pred, e_gt);
            man.write("ok");
            return rc;
        }
        if (verify->parsed()) {
            man.command = "verify";
            man.path = "mdsvm_verify_manifest.json";
            man.config = {{"suite", v_suite}};
            const int rc = run_verify(v_suite);
            man.write(rc == kExitOk ? "ok" : "verification_failed");
            return rc;
        }
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        man.write("error", e.what());
        return exit_code_for(e);
    }
    return kExitUsage;
}
