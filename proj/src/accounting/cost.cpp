#include "stunet/accounting/cost.hpp"

#include "stunet/common/error.hpp"
#include "stunet/tensor/kernels.hpp"

namespace stunet {

std::vector<Triple> infer_extents(const NetworkGraph& graph, Triple patch) {
  const Triple f = graph.downsample_factor();
  for (int a = 0; a < 3; ++a) {
    if (patch[a] < 1 || patch[a] % f[a] != 0) {
      throw InvalidInput("patch " + to_string(patch) + " is not divisible by the cumulative down-sampling factor " +
                         to_string(f));
    }
  }
  const auto layers = graph.layers();
  std::vector<Triple> out(layers.size());
  for (size_t i = 0; i < layers.size(); ++i) {
    const Layer& l = layers[i];
    const int src = l.inputs.front();
    const Triple in = src == kNetworkInput ? patch : out[static_cast<size_t>(src)];
    Triple e = in;
    switch (l.kind) {
      case LayerKind::conv:
        for (int a = 0; a < 3; ++a) {
          e[a] = static_cast<int>(kernels::conv_out_extent(in[a], l.kernel[a], l.stride[a], l.pad[a]));
        }
        break;
      case LayerKind::transpose_conv:
        for (int a = 0; a < 3; ++a) e[a] = in[a] * l.stride[a];
        break;
      case LayerKind::upsample_nearest:
      case LayerKind::upsample_trilinear:
        for (int a = 0; a < 3; ++a) e[a] = in[a] * l.factors[a];
        break;
      default:
        break;
    }
    out[i] = e;
  }
  return out;
}

CostReport count_params(const NetworkGraph& graph) {
  CostReport r;
  for (const auto& l : graph.layers()) {
    LayerCost row;
    row.name = l.name;
    row.kind = l.kind;
    for (const auto& p : l.params) row.params += shape_numel(p.shape);
    r.params += row.params;
    r.layers.push_back(std::move(row));
  }
  return r;
}

CostReport count_flops(const NetworkGraph& graph, Triple patch, const Convention& conv) {
  const std::vector<Triple> extents = infer_extents(graph, patch);
  CostReport r = count_params(graph);
  const auto layers = graph.layers();
  for (size_t i = 0; i < layers.size(); ++i) {
    const Layer& l = layers[i];
    LayerCost& row = r.layers[i];
    row.out_extent = extents[i];
    const int64_t out_vox = volume_of(extents[i]);
    const int64_t out_elems = out_vox * l.out_channels;
    const int64_t kvol = volume_of(l.kernel);
    int64_t flops = 0;
    switch (l.kind) {
      case LayerKind::conv:
        flops = conv.mac_factor * int64_t{l.in_channels} * kvol * l.out_channels * out_vox;
        if (l.bias && conv.bias_ops) flops += out_elems;
        break;
      case LayerKind::transpose_conv: {
        const int64_t vox = conv.transpose_cost == TransposeCost::per_output_voxel
                                ? out_vox
                                : out_vox / volume_of(l.stride);
        flops = conv.mac_factor * int64_t{l.in_channels} * kvol * l.out_channels * vox;
        if (l.bias && conv.bias_ops) flops += out_elems;
        break;
      }
      case LayerKind::instance_norm:
        if (conv.include_norm_act) flops = kNormOpsPerElement * out_elems;
        break;
      case LayerKind::leaky_relu:
        if (conv.include_norm_act) flops = kActOpsPerElement * out_elems;
        break;
      case LayerKind::add:
        if (conv.include_norm_act) flops = kAddOpsPerElement * out_elems;
        break;
      default:
        break;
    }
    row.flops = flops;
    r.flops += flops;
  }
  return r;
}

CostReport cost_of(const ArchConfig& config, Triple patch, const Convention& convention) {
  return count_flops(build(convention.apply(config), convention.build_options()), patch, convention);
}

}  // namespace stunet
