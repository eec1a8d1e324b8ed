#pragma once

#include <string>

#include "vseg/network.hpp"

namespace vseg {

/// Binary layout: "VSEGCKPT", u64 little-endian header length, JSON header
/// {"fingerprint", "tensors": [{"name", "shape"}...]}, then every tensor as
/// little-endian float32 in header order.
void save_checkpoint(const std::string& path, Network& net);

/// Loads into a network of identical architecture; throws IoError on a
/// malformed file and ValidationError on a fingerprint or shape mismatch.
void load_checkpoint(const std::string& path, Network& net);

}  // namespace vseg
