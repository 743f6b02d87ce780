#pragma once

#include <string>
#include <vector>

#include <nlohmann/json_fwd.hpp>

#include "stunet/common/triple.hpp"

namespace stunet {

inline constexpr int kNumStages = 6;

enum class BlockStyle { stu_residual, nnunet_plain };
enum class DownsampleStyle { in_first_residual, separate_conv };
enum class UpsampleStyle { nearest_plus_1x1x1, trilinear_plus_1x1x1, transpose_conv };

std::string to_string(BlockStyle v);
std::string to_string(DownsampleStyle v);
std::string to_string(UpsampleStyle v);

struct ArchConfig {
  int num_stages = kNumStages;
  std::vector<int> depths;               // residual blocks (or conv pairs) per stage
  std::vector<int> widths;               // channels per stage
  std::vector<Triple> updown_ratios;     // one per stage transition, each (2,2,2) or (2,2,1)
  int in_channels = 1;
  int num_classes = 105;
  BlockStyle block_style = BlockStyle::stu_residual;
  DownsampleStyle downsample_style = DownsampleStyle::in_first_residual;
  UpsampleStyle upsample_style = UpsampleStyle::nearest_plus_1x1x1;
  bool deep_supervision = true;

  bool operator==(const ArchConfig&) const = default;
};

// Throws ConfigError naming the first offending field.
void validate(const ArchConfig& config);

// Cumulative down-sampling factor per axis over all transitions.
Triple cumulative_factor(const ArchConfig& config);

struct ScalePlan {
  double depth = 1.0;
  double width = 1.0;
};

// Multiplies every stage depth and width by the plan's coefficients, rounding
// half up. Throws ConfigError if any scaled value drops below 1.
ArchConfig scale(const ArchConfig& base, const ScalePlan& plan);

enum class Variant { conv_downsample, transpose_up, trilinear_up };

// Flips exactly one style flag of `config`.
ArchConfig variant(const ArchConfig& config, Variant which);

Variant parse_variant(const std::string& name);

// Reference configurations. All use six stages, (2,2,2) transitions,
// one input channel and 105 output classes unless overridden by the caller.
namespace presets {
ArchConfig stunet_base();
ArchConfig stunet_small();
ArchConfig stunet_large();
ArchConfig stunet_huge();
// Plain two-conv stages with transposed-conv upsampling and a 320-channel cap.
ArchConfig nnunet();
// nnunet() with the channel cap raised to 512.
ArchConfig nnunet_wide();
}  // namespace presets

nlohmann::json to_json(const ArchConfig& config);
ArchConfig config_from_json(const nlohmann::json& doc);

std::string dump_config(const ArchConfig& config);
ArchConfig parse_config(const std::string& text);
ArchConfig load_config(const std::string& path);
void save_config(const ArchConfig& config, const std::string& path);

// Stable hex digest of the canonical JSON form.
std::string config_digest(const ArchConfig& config);

}  // namespace stunet
