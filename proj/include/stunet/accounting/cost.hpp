#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "stunet/accounting/convention.hpp"
#include "stunet/arch/graph.hpp"
#include "stunet/common/triple.hpp"

namespace stunet {

struct LayerCost {
  std::string name;
  LayerKind kind = LayerKind::conv;
  Triple out_extent{0, 0, 0};
  int64_t params = 0;
  int64_t flops = 0;
};

struct CostReport {
  int64_t params = 0;
  int64_t flops = 0;
  std::vector<LayerCost> layers;

  double params_M() const { return static_cast<double>(params) / 1e6; }
  double flops_T() const { return static_cast<double>(flops) / 1e12; }
};

// Output spatial extent of every layer for an input patch. Throws
// InvalidInput unless the patch is divisible by the cumulative factor.
std::vector<Triple> infer_extents(const NetworkGraph& graph, Triple patch);

// Learnable element count; flops stay 0.
CostReport count_params(const NetworkGraph& graph);

// Parameters and FLOPs for a batch of one at `patch`.
CostReport count_flops(const NetworkGraph& graph, Triple patch, const Convention& convention);

// Builds `config` under `convention` and counts it.
CostReport cost_of(const ArchConfig& config, Triple patch, const Convention& convention);

}  // namespace stunet
