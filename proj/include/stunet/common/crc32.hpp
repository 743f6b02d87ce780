#pragma once

#include <cstddef>
#include <cstdint>
#include <span>

namespace stunet {

// Standard CRC-32 (IEEE 802.3, as in zlib/PNG). Chain calls by passing the
// previous value as `seed`.
uint32_t crc32(std::span<const std::byte> bytes, uint32_t seed = 0);

}  // namespace stunet
