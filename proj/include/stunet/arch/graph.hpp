#pragma once

#include <span>
#include <string>
#include <vector>

#include "stunet/arch/config.hpp"
#include "stunet/common/triple.hpp"
#include "stunet/tensor/tensor.hpp"

namespace stunet {

// Structural choices the published block diagrams leave open. The defaults
// are the frozen values recovered by parameter/FLOPs calibration; the other
// enumerators exist so calibration can rule them out.
enum class StemVariant {
  residual_projection,  // residual block in_channels -> widths[0] with a 1^3 projection shortcut
  conv_norm_act,        // a single 3^3 Conv-IN-LeakyReLU
};

enum class ShortcutNorm {
  none,      // projection shortcut is a bare 1^3 conv
  instance,  // projection shortcut is 1^3 conv followed by IN
};

enum class StridePosition { first_conv, second_conv };

enum class SeparateDownKernel {
  ratio,  // kernel extent equals the down-sample ratio, no padding
  cube3,  // 3^3 kernel, padding 1
};

struct BuildOptions {
  bool conv_bias = true;
  StemVariant stem = StemVariant::residual_projection;
  ShortcutNorm shortcut_norm = ShortcutNorm::none;
  StridePosition stride_position = StridePosition::first_conv;
  SeparateDownKernel separate_down_kernel = SeparateDownKernel::ratio;
  // Bias on the transposed convs and heads of nnunet_plain graphs.
  bool plain_up_head_bias = false;

  bool operator==(const BuildOptions&) const = default;
};

std::string to_string(StemVariant v);
std::string to_string(ShortcutNorm v);
std::string to_string(StridePosition v);
std::string to_string(SeparateDownKernel v);
StemVariant parse_stem_variant(const std::string& s);
ShortcutNorm parse_shortcut_norm(const std::string& s);
StridePosition parse_stride_position(const std::string& s);
SeparateDownKernel parse_separate_down_kernel(const std::string& s);

enum class LayerKind {
  conv,
  transpose_conv,
  instance_norm,
  leaky_relu,
  add,
  concat,
  upsample_nearest,
  upsample_trilinear,
};

std::string to_string(LayerKind k);

struct ParamSpec {
  std::string name;
  Shape shape;
};

inline constexpr int kNetworkInput = -1;

struct Layer {
  std::string name;
  LayerKind kind = LayerKind::conv;
  std::vector<int> inputs;  // earlier layer ids, or kNetworkInput
  int in_channels = 0;
  int out_channels = 0;
  Triple kernel{1, 1, 1};
  Triple stride{1, 1, 1};
  Triple pad{0, 0, 0};
  Triple factors{1, 1, 1};  // up-sampling only
  bool bias = false;
  double slope = 0.01;
  std::vector<ParamSpec> params;
};

struct SkipLink {
  int stage = 0;
  int encoder_output = 0;  // layer id producing the encoder stage's output
  int decoder_concat = 0;  // concat layer consuming it
};

struct HeadOutput {
  std::string name;
  int layer = 0;
  int stage = 0;  // decoder resolution stage (0 = full resolution)
};

// Immutable, topologically ordered layer list compiled from an ArchConfig.
class NetworkGraph {
 public:
  const ArchConfig& config() const noexcept { return config_; }
  const BuildOptions& options() const noexcept { return options_; }
  std::span<const Layer> layers() const noexcept { return layers_; }
  const Layer& layer(int id) const { return layers_.at(static_cast<size_t>(id)); }

  // Main segmentation head first, then deep-supervision heads by stage.
  const std::vector<HeadOutput>& heads() const noexcept { return heads_; }
  const std::vector<int>& encoder_outputs() const noexcept { return encoder_outputs_; }
  const std::vector<SkipLink>& skips() const noexcept { return skips_; }

  // All parameters in layer order.
  std::vector<ParamSpec> parameters() const;
  Triple downsample_factor() const { return cumulative_factor(config_); }
  // Ids of layers that read the network input directly.
  std::vector<int> input_consumers() const;
  // Id of the last layer that runs before any head.
  int pre_head_output() const noexcept { return pre_head_output_; }

 private:
  friend class GraphBuilder;
  NetworkGraph() = default;

  ArchConfig config_;
  BuildOptions options_;
  std::vector<Layer> layers_;
  std::vector<HeadOutput> heads_;
  std::vector<int> encoder_outputs_;
  std::vector<SkipLink> skips_;
  int pre_head_output_ = 0;
};

NetworkGraph build(const ArchConfig& config, const BuildOptions& options = {});

// Parameter-name prefixes that mark freshly initialized heads on transfer.
inline constexpr const char* kSegHeadPrefix = "seg_head.";
inline constexpr const char* kDeepSupervisionPrefix = "deep_supervision.";
bool is_head_parameter(const std::string& name);

}  // namespace stunet
