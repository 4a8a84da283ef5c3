#pragma once

#include <string>

#include "mdsvm/network.hpp"

namespace mdsvm {

// MDSVCKPT checkpoint: magic "MDSVCKPT", u32 version = 1, u32 record count,
// then per record: u32 name length, UTF-8 name, u32 rank, u32 extents, raw
// 64-bit little-endian values. Round-trips are bit-exact.
void save_checkpoint(const std::string& path, const ParamRegistry& params);

// Loads into an existing registry; every record must match a registered
// parameter's name and shape.
void load_checkpoint(const std::string& path, ParamRegistry& params);

}  // namespace mdsvm
