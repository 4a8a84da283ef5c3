#pragma once

#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include "mdsvm/snake.hpp"
#include "mdsvm/ssm.hpp"

namespace mdsvm {

struct NetworkConfig {
    std::vector<int> ladder = {16, 32, 64, 128, 256};  // channels per level, doubling
    int in_channels = 1;
    int out_classes = 1;
    int snake_half_length = 4;  // c_max; 9 taps
    double offset_scale = 1.0;
    int ssm_expansion = 2;  // lambda
    int ssm_state = 16;     // N
    int gn_groups_cap = 8;  // per-block groups = min(cap, C)
    bool dense_skips = true;       // UNet++ lattice; false = plain U-Net skips
    bool transposed_head = false;  // true: strided transposed conv; false: trilinear upsample

    int levels() const { return static_cast<int>(ladder.size()); }
    std::int64_t spatial_divisor() const { return std::int64_t{1} << (levels() - 1); }
};

// Flat, ordered registry of named parameters. Tensors share storage with the
// layer structs, so optimizer updates through the registry are visible to the
// next forward pass.
class ParamRegistry {
public:
    void add(std::string name, const Tensor& t);
    const std::vector<std::pair<std::string, Tensor>>& items() const { return items_; }
    std::vector<std::pair<std::string, Tensor>>& items() { return items_; }
    const Tensor* find(const std::string& name) const;
    std::int64_t total_parameters() const;

private:
    std::vector<std::pair<std::string, Tensor>> items_;
};

// Plain conv3x3 + GroupNorm + ReLU block (skip-lattice nodes and the final
// decoder conv).
struct ConvBlock {
    Tensor w, b, gn_gain, gn_bias;
    int groups = 1;
};

Tensor conv_block_forward(const Tensor& x, const ConvBlock& blk);

// MDSVM-UNet: MDSConv encoder, RVM bottleneck, UNet++-style dense skip
// lattice, RVM decoder with trilinear upsampling, sigmoid head.
class Network {
public:
    static Network build(const NetworkConfig& cfg, std::uint64_t seed);

    // Encoder pyramid: level l has ladder[l] channels at 1/2^l resolution;
    // the deepest level passes through the bottleneck RVM.
    std::vector<Tensor> encoder_forward(const Tensor& x) const;

    // Enriched skip tensors S_0..S_{L-2} from the dense lattice (or the
    // encoder features directly in plain U-Net mode).
    std::vector<Tensor> dense_skip(const std::vector<Tensor>& features) const;

    // Decodes from the bottleneck with per-level skip fusion back to a
    // probability volume of the input's spatial shape.
    Tensor decoder_forward(const std::vector<Tensor>& skips, const Tensor& bottleneck) const;

    Tensor forward(const Tensor& x) const;

    const NetworkConfig& config() const { return cfg_; }
    ParamRegistry& params() { return registry_; }
    const ParamRegistry& params() const { return registry_; }
    std::int64_t parameter_count() const { return registry_.total_parameters(); }

private:
    NetworkConfig cfg_;
    std::vector<MdsConvBlock> encoder_;
    RvmLayer bottleneck_;
    // lattice_[i][j-1] holds node X^{i,j}, j in [1, L-1-i]
    std::vector<std::vector<ConvBlock>> lattice_;
    std::vector<RvmLayer> decoder_rvm_;  // levels L-1 down to 2
    ConvBlock decoder_conv_;             // level-1 block
    Tensor head_w, head_b;               // transposed head only
    Tensor out_w, out_b;                 // final 3x3x3 conv to class logits
    ParamRegistry registry_;

    void check_input(const Tensor& x) const;
};

}  // namespace mdsvm
