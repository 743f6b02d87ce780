#pragma once

#include <string>

#include <nlohmann/json_fwd.hpp>

#include "stunet/arch/config.hpp"
#include "stunet/arch/graph.hpp"

namespace stunet {

enum class TransposeCost {
  per_output_voxel,  // Cin * k^3 * Cout MACs for every output voxel
  per_input_voxel,   // Cin * k^3 * Cout MACs for every input voxel (the true count)
};

std::string to_string(TransposeCost v);
TransposeCost parse_transpose_cost(const std::string& s);

// How parameters and FLOPs are counted. The first five fields form the
// published descriptor; the rest cover structural choices the figures leave
// open and are searched over by calibration as well.
struct Convention {
  int mac_factor = 1;             // FLOPs per multiply-accumulate (1 or 2)
  bool include_norm_act = false;  // charge instance norm, activation and residual add
  bool conv_bias = true;
  bool deep_supervision = true;
  ShortcutNorm downsample_norm_variant = ShortcutNorm::none;

  bool bias_ops = true;  // one op per output element of a biased conv
  StridePosition downsample_stride_position = StridePosition::first_conv;
  StemVariant stem_variant = StemVariant::residual_projection;
  TransposeCost transpose_cost = TransposeCost::per_output_voxel;
  SeparateDownKernel separate_downsample_kernel = SeparateDownKernel::ratio;
  bool plain_up_head_bias = false;  // bias on nnunet_plain transposed convs and heads

  bool operator==(const Convention&) const = default;

  BuildOptions build_options() const;
  // `config` with deep supervision forced to this convention's choice.
  ArchConfig apply(ArchConfig config) const;
};

// Costs charged per element when include_norm_act is set.
inline constexpr int kNormOpsPerElement = 4;
inline constexpr int kActOpsPerElement = 1;
inline constexpr int kAddOpsPerElement = 1;

nlohmann::json to_json(const Convention& c);
Convention convention_from_json(const nlohmann::json& doc);
std::string dump_convention(const Convention& c);
Convention parse_convention(const std::string& text);
Convention load_convention(const std::string& path);
void save_convention(const Convention& c, const std::string& path);

// The convention recovered by calibration (identical to data/convention.json).
Convention frozen_convention();

// Short human-readable summary, e.g. "macx1 bias ds ...".
std::string describe(const Convention& c);

}  // namespace stunet
