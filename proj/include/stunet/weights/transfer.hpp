#pragma once

#include <cstdint>
#include <map>
#include <string>

#include "stunet/arch/graph.hpp"
#include "stunet/weights/store.hpp"

namespace stunet {

// Per-parameter learning-rate multiplier.
using LrMultiplierMap = std::map<std::string, double>;

inline constexpr double kBackboneLrMultiplier = 0.1;
inline constexpr double kHeadLrMultiplier = 1.0;

// He-normal conv weights (gain for leaky ReLU, slope 0.01, fan-in), zero
// biases, IN weight 1 / bias 0. Each tensor draws from its own stream
// derived from (seed, name), so one tensor can be re-drawn without
// touching the others.
WeightStore init_weights(const NetworkGraph& graph, uint64_t seed);

// Initializes a single parameter of `graph` exactly as init_weights would.
Tensor init_parameter(const NetworkGraph& graph, const std::string& name, uint64_t seed);

struct TransferResult {
  WeightStore store;
  LrMultiplierMap multipliers;
};

// Moves a pre-trained store onto `target`:
//  * head parameters (seg_head., deep_supervision.) are freshly initialized,
//    multiplier 1.0;
//  * every other parameter is copied verbatim, multiplier 0.1;
//  * convs that read the network input are replicated along the input
//    channel axis when the target has more input channels (target channel c
//    takes source channel c mod C_src, no rescaling).
// Throws MissingParameter / ShapeMismatch (with a per-parameter diff) when the
// backbones are incompatible.
TransferResult transfer(const WeightStore& pretrained, const NetworkGraph& target, uint64_t seed);

// Uniform multiplier for every parameter of `graph` (1.0 = train from scratch).
LrMultiplierMap uniform_multipliers(const NetworkGraph& graph, double value);

}  // namespace stunet
