#pragma once

#include <filesystem>

#include "dcnp/tensor.hpp"

namespace dcnp {

// Flat binary tensor file: magic "DCNP", u32 version, u32 rank, u32 extents,
// then little-endian 64-bit floats in row-major order.
void save_tensor(const std::filesystem::path& path, const Tensor& t);
Tensor load_tensor(const std::filesystem::path& path);

}  // namespace dcnp
