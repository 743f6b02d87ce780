#pragma once

#include <array>
#include <cstdint>
#include <string>

namespace stunet {

// Per-axis integer triple in (D, H, W) order.
using Triple = std::array<int, 3>;

inline int64_t volume_of(const Triple& t) {
  return static_cast<int64_t>(t[0]) * t[1] * t[2];
}

inline Triple filled(int v) { return {v, v, v}; }

std::string to_string(const Triple& t);

// Parses "D,H,W" (or a single integer applied to all axes).
Triple parse_triple(const std::string& text);

}  // namespace stunet
