#include "mdsvm/network.hpp"

#include <algorithm>
#include <cmath>

#include "mdsvm/rng.hpp"

namespace mdsvm {

void ParamRegistry::add(std::string name, const Tensor& t) {
    items_.emplace_back(std::move(name), t);
}

const Tensor* ParamRegistry::find(const std::string& name) const {
    for (const auto& [n, t] : items_) {
        if (n == name) return &t;
    }
    return nullptr;
}

std::int64_t ParamRegistry::total_parameters() const {
    std::int64_t n = 0;
    for (const auto& [name, t] : items_) n += t.numel();
    return n;
}

Tensor conv_block_forward(const Tensor& x, const ConvBlock& blk) {
    Conv3dOpts pad1;
    pad1.padding = 1;
    return relu(group_norm(conv3d(x, blk.w, blk.b, pad1), blk.groups, blk.gn_gain, blk.gn_bias));
}

namespace {

struct Init {
    Rng rng;
    ParamRegistry* reg;

    explicit Init(std::uint64_t seed, ParamRegistry* r) : rng(seed), reg(r) {}

    Tensor he_uniform(Shape shape, std::int64_t fan_in, const std::string& name) {
        const double bound = std::sqrt(6.0 / static_cast<double>(fan_in));
        std::vector<double> v(static_cast<std::size_t>(shape_numel(shape)));
        for (auto& x : v) x = rng.uniform(-bound, bound);
        Tensor t = Tensor::from_data(std::move(shape), std::move(v), true);
        reg->add(name, t);
        return t;
    }

    Tensor constant(Shape shape, double value, const std::string& name) {
        Tensor t = Tensor::full(std::move(shape), value, true);
        reg->add(name, t);
        return t;
    }

    Tensor conv_w(int cout, int cin_per_group, int k, const std::string& name) {
        return he_uniform({cout, cin_per_group, k, k, k},
                          static_cast<std::int64_t>(cin_per_group) * k * k * k, name);
    }

    Tensor linear_w(int cout, int cin, const std::string& name) {
        return he_uniform({cout, cin}, cin, name);
    }
};

int gn_groups_for(int channels, int cap) { return std::min(cap, channels); }

MdsConvBlock make_mdsconv(Init& init, const NetworkConfig& cfg, int cin, int cout,
                          const std::string& prefix) {
    MdsConvBlock blk;
    blk.in_channels = cin;
    blk.out_channels = cout;
    blk.gn_groups = gn_groups_for(cout, cfg.gn_groups_cap);
    blk.std_w = init.conv_w(cout, cin, 3, prefix + ".std.w");
    blk.std_b = init.constant({cout}, 0.0, prefix + ".std.b");
    const int T = 2 * cfg.snake_half_length + 1;
    const char* axis_name[3] = {"x", "y", "z"};
    SnakeBranch* branches[3] = {&blk.branch_x, &blk.branch_y, &blk.branch_z};
    const SnakeAxis axes[3] = {SnakeAxis::X, SnakeAxis::Y, SnakeAxis::Z};
    for (int a = 0; a < 3; ++a) {
        SnakeBranch& br = *branches[a];
        br.spec.axis = axes[a];
        br.spec.half_length = cfg.snake_half_length;
        br.spec.in_channels = cin;
        br.spec.out_channels = cout;
        br.spec.offset_scale = cfg.offset_scale;
        const std::string p = prefix + ".snake_" + axis_name[a];
        // zero-initialized predictor: training starts from straight kernels
        br.pred_w = init.constant({2 * T, cin, 3, 3, 3}, 0.0, p + ".pred.w");
        br.pred_b = init.constant({2 * T}, 0.0, p + ".pred.b");
        br.w = init.he_uniform({cout, cin, T}, static_cast<std::int64_t>(cin) * T, p + ".w");
        br.b = init.constant({cout}, 0.0, p + ".b");
    }
    blk.fuse_w = init.conv_w(cout, 4 * cout, 1, prefix + ".fuse.w");
    blk.fuse_b = init.constant({cout}, 0.0, prefix + ".fuse.b");
    blk.gn_gain = init.constant({cout}, 1.0, prefix + ".gn.gain");
    blk.gn_bias = init.constant({cout}, 0.0, prefix + ".gn.bias");
    return blk;
}

SsmParams make_ssm(Init& init, int ce, int n_state, const std::string& prefix) {
    SsmParams p;
    p.n_state = n_state;
    p.w_b = init.linear_w(n_state, ce, prefix + ".w_b");
    p.w_c = init.linear_w(n_state, ce, prefix + ".w_c");
    p.w_delta = init.linear_w(ce, ce, prefix + ".w_delta");
    // softplus(-2.25) ~ 0.1: moderate initial step sizes
    p.b_delta = init.constant({ce}, -2.25, prefix + ".b_delta");
    // A = -(n+1): progressively faster-decaying state directions
    {
        std::vector<double> v(static_cast<std::size_t>(ce) * n_state);
        for (int c = 0; c < ce; ++c) {
            for (int n = 0; n < n_state; ++n) {
                v[static_cast<std::size_t>(c) * n_state + n] = std::log(static_cast<double>(n + 1));
            }
        }
        p.a_log = Tensor::from_data({ce, n_state}, std::move(v), true);
        init.reg->add(prefix + ".a_log", p.a_log);
    }
    p.d_skip = init.constant({ce}, 1.0, prefix + ".d_skip");
    return p;
}

VssmBlock make_vssm(Init& init, int c, int lambda, int n_state, const std::string& prefix) {
    VssmBlock b;
    b.expansion = lambda;
    const int ce = c * lambda;
    b.w_in1 = init.linear_w(ce, c, prefix + ".in1.w");
    b.b_in1 = init.constant({ce}, 0.0, prefix + ".in1.b");
    b.dw_w = init.he_uniform({ce, 1, 3, 3, 3}, 27, prefix + ".dw.w");
    b.dw_b = init.constant({ce}, 0.0, prefix + ".dw.b");
    b.ssm = make_ssm(init, ce, n_state, prefix + ".ssm");
    b.ln_gain = init.constant({ce}, 1.0, prefix + ".ln.gain");
    b.ln_bias = init.constant({ce}, 0.0, prefix + ".ln.bias");
    b.w_in2 = init.linear_w(ce, c, prefix + ".in2.w");
    b.b_in2 = init.constant({ce}, 0.0, prefix + ".in2.b");
    b.w_out = init.linear_w(c, ce, prefix + ".out.w");
    b.b_out = init.constant({c}, 0.0, prefix + ".out.b");
    return b;
}

RvmLayer make_rvm(Init& init, int c, int c_out, int lambda, int n_state, const std::string& prefix) {
    RvmLayer l;
    l.ln_in_gain = init.constant({c}, 1.0, prefix + ".ln_in.gain");
    l.ln_in_bias = init.constant({c}, 0.0, prefix + ".ln_in.bias");
    l.vssm = make_vssm(init, c, lambda, n_state, prefix + ".vssm");
    l.res_scale = init.constant({c}, 1.0, prefix + ".scale");
    l.ln_post_gain = init.constant({c}, 1.0, prefix + ".ln_post.gain");
    l.ln_post_bias = init.constant({c}, 0.0, prefix + ".ln_post.bias");
    l.proj_w = init.linear_w(c_out, c, prefix + ".proj.w");
    l.proj_b = init.constant({c_out}, 0.0, prefix + ".proj.b");
    return l;
}

ConvBlock make_conv_block(Init& init, const NetworkConfig& cfg, int cin, int cout,
                          const std::string& prefix) {
    ConvBlock blk;
    blk.groups = gn_groups_for(cout, cfg.gn_groups_cap);
    blk.w = init.conv_w(cout, cin, 3, prefix + ".conv.w");
    blk.b = init.constant({cout}, 0.0, prefix + ".conv.b");
    blk.gn_gain = init.constant({cout}, 1.0, prefix + ".gn.gain");
    blk.gn_bias = init.constant({cout}, 0.0, prefix + ".gn.bias");
    return blk;
}

}  // namespace

Network Network::build(const NetworkConfig& cfg, std::uint64_t seed) {
    const int L = cfg.levels();
    if (L < 2) throw ConfigError("network: channel ladder needs at least 2 levels");
    for (int i = 0; i + 1 < L; ++i) {
        if (cfg.ladder[i + 1] != 2 * cfg.ladder[i]) {
            throw ConfigError("network: ladder must double at every level, got " +
                              std::to_string(cfg.ladder[i]) + " -> " + std::to_string(cfg.ladder[i + 1]));
        }
    }
    for (int c : cfg.ladder) {
        if (c % gn_groups_for(c, cfg.gn_groups_cap) != 0) {
            throw ConfigError("network: channel count " + std::to_string(c) +
                              " not divisible by its group-norm group count");
        }
    }
    Network net;
    net.cfg_ = cfg;
    Init init(seed, &net.registry_);

    for (int l = 0; l + 1 < L; ++l) {
        const int cin = l == 0 ? cfg.in_channels : cfg.ladder[l - 1];
        net.encoder_.push_back(make_mdsconv(init, cfg, cin, cfg.ladder[l], "enc" + std::to_string(l)));
    }
    net.bottleneck_ = make_rvm(init, cfg.ladder[L - 2], cfg.ladder[L - 1], cfg.ssm_expansion,
                               cfg.ssm_state, "bottleneck");

    if (cfg.dense_skips) {
        net.lattice_.resize(static_cast<std::size_t>(L - 1));
        for (int i = 0; i + 1 < L; ++i) {
            for (int j = 1; j <= L - 1 - i; ++j) {
                const int cin = j * cfg.ladder[i] + cfg.ladder[i + 1];
                net.lattice_[static_cast<std::size_t>(i)].push_back(make_conv_block(
                    init, cfg, cin, cfg.ladder[i], "skip" + std::to_string(i) + "_" + std::to_string(j)));
            }
        }
    }

    for (int l = L - 1; l >= 2; --l) {
        net.decoder_rvm_.push_back(make_rvm(init, cfg.ladder[l], cfg.ladder[l - 1], cfg.ssm_expansion,
                                            cfg.ssm_state, "dec" + std::to_string(l) + ".rvm"));
    }
    net.decoder_conv_ = make_conv_block(init, cfg, cfg.ladder[1], cfg.ladder[0], "dec1");
    if (cfg.transposed_head) {
        net.head_w = init.he_uniform({cfg.ladder[0], cfg.ladder[0], 2, 2, 2},
                                     static_cast<std::int64_t>(cfg.ladder[0]) * 8, "head.w");
        net.head_b = init.constant({cfg.ladder[0]}, 0.0, "head.b");
    }
    net.out_w = init.conv_w(cfg.out_classes, cfg.ladder[0], 3, "out.w");
    net.out_b = init.constant({cfg.out_classes}, 0.0, "out.b");
    return net;
}

void Network::check_input(const Tensor& x) const {
    if (x.dim() != 5) throw ShapeError("network: input must be [B,C,H,W,D]");
    if (x.extent(1) != cfg_.in_channels) {
        throw ShapeError("network: input channel axis 1 has extent " + std::to_string(x.extent(1)) +
                         ", expected " + std::to_string(cfg_.in_channels));
    }
    const std::int64_t div = cfg_.spatial_divisor();
    for (int ax = 2; ax < 5; ++ax) {
        if (x.extent(ax) % div != 0) {
            throw ShapeError("network: spatial axis " + std::to_string(ax) + " extent " +
                             std::to_string(x.extent(ax)) + " not divisible by " + std::to_string(div));
        }
    }
}

std::vector<Tensor> Network::encoder_forward(const Tensor& x) const {
    check_input(x);
    std::vector<Tensor> feats;
    feats.reserve(static_cast<std::size_t>(cfg_.levels()));
    Tensor cur = x;
    for (std::size_t l = 0; l < encoder_.size(); ++l) {
        if (l > 0) cur = pool_max3d(cur);
        cur = mdsconv_forward(cur, encoder_[l]);
        feats.push_back(cur);
    }
    feats.push_back(rvm_forward(pool_max3d(cur), bottleneck_));
    return feats;
}

std::vector<Tensor> Network::dense_skip(const std::vector<Tensor>& features) const {
    const int L = cfg_.levels();
    if (static_cast<int>(features.size()) != L) {
        throw ContractError("dense_skip: expected " + std::to_string(L) + " encoder features");
    }
    if (!cfg_.dense_skips) {
        return std::vector<Tensor>(features.begin(), features.end() - 1);
    }
    // rows[i][j] = X^{i,j}; row i extends to j = L-1-i
    std::vector<std::vector<Tensor>> rows(static_cast<std::size_t>(L));
    for (int i = 0; i < L; ++i) rows[static_cast<std::size_t>(i)].push_back(features[static_cast<std::size_t>(i)]);
    for (int j = 1; j <= L - 1; ++j) {
        for (int i = 0; i + j <= L - 1; ++i) {
            auto& row = rows[static_cast<std::size_t>(i)];
            std::vector<Tensor> cat_inputs(row.begin(), row.end());
            cat_inputs.push_back(upsample_trilinear(rows[static_cast<std::size_t>(i + 1)][static_cast<std::size_t>(j - 1)]));
            Tensor node = conv_block_forward(concat(cat_inputs, 1),
                                             lattice_[static_cast<std::size_t>(i)][static_cast<std::size_t>(j - 1)]);
            row.push_back(node);
        }
    }
    std::vector<Tensor> skips;
    for (int i = 0; i + 1 < L; ++i) skips.push_back(rows[static_cast<std::size_t>(i)].back());
    return skips;
}

Tensor Network::decoder_forward(const std::vector<Tensor>& skips, const Tensor& bottleneck) const {
    const int L = cfg_.levels();
    if (static_cast<int>(skips.size()) != L - 1) {
        throw ContractError("decoder: expected " + std::to_string(L - 1) + " skip tensors");
    }
    Tensor p = bottleneck;
    int idx = 0;
    for (int l = L - 1; l >= 2; --l, ++idx) {
        Tensor fused = l <= L - 2 ? add(skips[static_cast<std::size_t>(l)], p) : p;
        if (fused.extent(1) != cfg_.ladder[l]) {
            throw ContractError("decoder: level " + std::to_string(l) + " expects " +
                                std::to_string(cfg_.ladder[l]) + " channels, got " +
                                std::to_string(fused.extent(1)));
        }
        p = upsample_trilinear(rvm_forward(fused, decoder_rvm_[static_cast<std::size_t>(idx)]));
    }
    // level-1 conv block (resolution stays at 1/2), then the resolution head
    Tensor fused1 = L >= 3 ? add(skips[1], p) : p;
    if (fused1.extent(1) != cfg_.ladder[1]) {
        throw ContractError("decoder: level 1 expects " + std::to_string(cfg_.ladder[1]) +
                            " channels, got " + std::to_string(fused1.extent(1)));
    }
    p = conv_block_forward(fused1, decoder_conv_);
    p = cfg_.transposed_head ? conv_transpose3d(p, head_w, head_b, 2) : upsample_trilinear(p);
    Conv3dOpts pad1;
    pad1.padding = 1;
    return sigmoid(conv3d(add(skips[0], p), out_w, out_b, pad1));
}

Tensor Network::forward(const Tensor& x) const {
    std::vector<Tensor> feats = encoder_forward(x);
    std::vector<Tensor> skips = dense_skip(feats);
    return decoder_forward(skips, feats.back());
}

}  // namespace mdsvm
