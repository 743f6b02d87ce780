#include "stunet/arch/graph.hpp"

#include <algorithm>

#include "stunet/common/error.hpp"

namespace stunet {

std::string to_string(StemVariant v) {
  return v == StemVariant::residual_projection ? "residual_projection" : "conv_norm_act";
}
std::string to_string(ShortcutNorm v) { return v == ShortcutNorm::none ? "none" : "instance"; }
std::string to_string(StridePosition v) {
  return v == StridePosition::first_conv ? "first_conv" : "second_conv";
}
std::string to_string(SeparateDownKernel v) { return v == SeparateDownKernel::ratio ? "ratio" : "cube3"; }

StemVariant parse_stem_variant(const std::string& s) {
  if (s == "residual_projection") return StemVariant::residual_projection;
  if (s == "conv_norm_act") return StemVariant::conv_norm_act;
  throw ConfigError("stem_variant", "unknown value '" + s + "'");
}
ShortcutNorm parse_shortcut_norm(const std::string& s) {
  if (s == "none") return ShortcutNorm::none;
  if (s == "instance") return ShortcutNorm::instance;
  throw ConfigError("downsample_norm_variant", "unknown value '" + s + "'");
}
StridePosition parse_stride_position(const std::string& s) {
  if (s == "first_conv") return StridePosition::first_conv;
  if (s == "second_conv") return StridePosition::second_conv;
  throw ConfigError("downsample_stride_position", "unknown value '" + s + "'");
}
SeparateDownKernel parse_separate_down_kernel(const std::string& s) {
  if (s == "ratio") return SeparateDownKernel::ratio;
  if (s == "cube3") return SeparateDownKernel::cube3;
  throw ConfigError("separate_downsample_kernel", "unknown value '" + s + "'");
}

std::string to_string(LayerKind k) {
  switch (k) {
    case LayerKind::conv: return "conv";
    case LayerKind::transpose_conv: return "transpose_conv";
    case LayerKind::instance_norm: return "instance_norm";
    case LayerKind::leaky_relu: return "leaky_relu";
    case LayerKind::add: return "add";
    case LayerKind::concat: return "concat";
    case LayerKind::upsample_nearest: return "upsample_nearest";
    case LayerKind::upsample_trilinear: return "upsample_trilinear";
  }
  return "?";
}

bool is_head_parameter(const std::string& name) {
  return name.starts_with(kSegHeadPrefix) || name.starts_with(kDeepSupervisionPrefix);
}

std::vector<ParamSpec> NetworkGraph::parameters() const {
  std::vector<ParamSpec> out;
  for (const auto& l : layers_) out.insert(out.end(), l.params.begin(), l.params.end());
  return out;
}

std::vector<int> NetworkGraph::input_consumers() const {
  std::vector<int> out;
  for (size_t i = 0; i < layers_.size(); ++i) {
    for (int in : layers_[i].inputs) {
      if (in == kNetworkInput) {
        out.push_back(static_cast<int>(i));
        break;
      }
    }
  }
  return out;
}

// Tracks a value's id and channel count while layers are appended.
struct Value {
  int id;
  int channels;
};

class GraphBuilder {
 public:
  GraphBuilder(const ArchConfig& config, const BuildOptions& options) {
    g_.config_ = config;
    g_.options_ = options;
  }

  NetworkGraph finish() {
    std::stable_sort(g_.heads_.begin(), g_.heads_.end(),
                     [](const HeadOutput& a, const HeadOutput& b) { return a.stage < b.stage; });
    return std::move(g_);
  }

  Value conv(const std::string& name, Value x, int out, Triple kernel, Triple stride, bool bias) {
    Layer l;
    l.name = name;
    l.kind = LayerKind::conv;
    l.inputs = {x.id};
    l.in_channels = x.channels;
    l.out_channels = out;
    l.kernel = kernel;
    l.stride = stride;
    for (int a = 0; a < 3; ++a) l.pad[a] = kernel[a] % 2 == 1 ? kernel[a] / 2 : 0;
    l.bias = bias;
    l.params.push_back({name + ".weight", {out, x.channels, kernel[0], kernel[1], kernel[2]}});
    if (bias) l.params.push_back({name + ".bias", {out}});
    return push(std::move(l));
  }

  Value conv3(const std::string& name, Value x, int out, Triple stride) {
    return conv(name, x, out, {3, 3, 3}, stride, g_.options_.conv_bias);
  }

  Value transpose_conv(const std::string& name, Value x, int out, Triple stride, bool bias) {
    Layer l;
    l.name = name;
    l.kind = LayerKind::transpose_conv;
    l.inputs = {x.id};
    l.in_channels = x.channels;
    l.out_channels = out;
    l.kernel = stride;
    l.stride = stride;
    l.bias = bias;
    l.params.push_back({name + ".weight", {x.channels, out, stride[0], stride[1], stride[2]}});
    if (l.bias) l.params.push_back({name + ".bias", {out}});
    return push(std::move(l));
  }

  Value norm(const std::string& name, Value x) {
    Layer l;
    l.name = name;
    l.kind = LayerKind::instance_norm;
    l.inputs = {x.id};
    l.in_channels = l.out_channels = x.channels;
    l.params.push_back({name + ".weight", {x.channels}});
    l.params.push_back({name + ".bias", {x.channels}});
    return push(std::move(l));
  }

  Value act(const std::string& name, Value x) {
    Layer l;
    l.name = name;
    l.kind = LayerKind::leaky_relu;
    l.inputs = {x.id};
    l.in_channels = l.out_channels = x.channels;
    return push(std::move(l));
  }

  Value add(const std::string& name, Value a, Value b) {
    Layer l;
    l.name = name;
    l.kind = LayerKind::add;
    l.inputs = {a.id, b.id};
    l.in_channels = l.out_channels = a.channels;
    return push(std::move(l));
  }

  Value concat(const std::string& name, Value a, Value b) {
    Layer l;
    l.name = name;
    l.kind = LayerKind::concat;
    l.inputs = {a.id, b.id};
    l.in_channels = a.channels + b.channels;
    l.out_channels = a.channels + b.channels;
    return push(std::move(l));
  }

  Value upsample(const std::string& name, Value x, Triple factors, LayerKind kind) {
    Layer l;
    l.name = name;
    l.kind = kind;
    l.inputs = {x.id};
    l.in_channels = l.out_channels = x.channels;
    l.factors = factors;
    return push(std::move(l));
  }

  // Conv-IN-LeakyReLU.
  Value conv_norm_act(const std::string& prefix, Value x, int out, Triple kernel, Triple stride) {
    Value y = conv(prefix + ".conv", x, out, kernel, stride, g_.options_.conv_bias);
    y = norm(prefix + ".norm", y);
    return act(prefix + ".act", y);
  }

  // conv-IN-LReLU-conv-IN, plus shortcut, then LReLU. A 1^3 projection is
  // used whenever channels or resolution change (or `force_projection`).
  Value residual(const std::string& p, Value x, int out, Triple stride, bool force_projection = false) {
    const BuildOptions& o = g_.options_;
    const Triple one{1, 1, 1};
    const bool stride_first = o.stride_position == StridePosition::first_conv;
    Value y = conv3(p + ".conv1", x, out, stride_first ? stride : one);
    y = norm(p + ".norm1", y);
    y = act(p + ".act1", y);
    y = conv3(p + ".conv2", y, out, stride_first ? one : stride);
    y = norm(p + ".norm2", y);
    Value shortcut = x;
    if (force_projection || x.channels != out || stride != one) {
      shortcut = conv(p + ".proj", x, out, one, stride, o.conv_bias);
      if (o.shortcut_norm == ShortcutNorm::instance) shortcut = norm(p + ".proj_norm", shortcut);
    }
    y = add(p + ".add", y, shortcut);
    return act(p + ".act2", y);
  }

  void encoder_output(Value v) { g_.encoder_outputs_.push_back(v.id); }
  void skip(int stage, int encoder_output, Value concat) {
    g_.skips_.push_back({stage, encoder_output, concat.id});
  }
  void head(const std::string& name, Value v, int stage) { g_.heads_.push_back({name, v.id, stage}); }
  void mark_pre_head(Value v) { g_.pre_head_output_ = v.id; }

 private:
  Value push(Layer l) {
    const int out = l.out_channels;
    g_.layers_.push_back(std::move(l));
    return {static_cast<int>(g_.layers_.size()) - 1, out};
  }

  NetworkGraph g_;
};

namespace {

std::string stage_name(const char* side, int s) { return std::string(side) + ".stage" + std::to_string(s); }

Value build_stu_encoder_stage(GraphBuilder& b, const ArchConfig& c, const BuildOptions& o, int s, Value x) {
  const std::string p = stage_name("encoder", s);
  const int w = c.widths[s];
  int remaining = c.depths[s];
  int next = 0;
  if (s == 0) {
    if (o.stem == StemVariant::residual_projection) {
      // The residual stem doubles as the stage's first block.
      x = b.residual("stem", x, w, {1, 1, 1}, /*force_projection=*/true);
      --remaining;
    } else {
      x = b.conv_norm_act("stem", x, w, {3, 3, 3}, {1, 1, 1});
    }
  } else {
    const Triple r = c.updown_ratios[s - 1];
    if (c.downsample_style == DownsampleStyle::in_first_residual) {
      x = b.residual(p + ".block0", x, w, r);
      --remaining;
      next = 1;
    } else {
      const Triple k = o.separate_down_kernel == SeparateDownKernel::ratio ? r : Triple{3, 3, 3};
      x = b.conv_norm_act(p + ".down", x, w, k, r);
    }
  }
  for (int i = 0; i < remaining; ++i) x = b.residual(p + ".block" + std::to_string(next + i), x, w, {1, 1, 1});
  return x;
}

Value build_plain_encoder_stage(GraphBuilder& b, const ArchConfig& c, int s, Value x) {
  const std::string p = stage_name("encoder", s);
  const int w = c.widths[s];
  for (int i = 0; i < 2 * c.depths[s]; ++i) {
    const Triple stride = (s > 0 && i == 0) ? c.updown_ratios[s - 1] : Triple{1, 1, 1};
    x = b.conv_norm_act(p + ".layer" + std::to_string(i), x, w, {3, 3, 3}, stride);
  }
  return x;
}

}  // namespace

NetworkGraph build(const ArchConfig& config, const BuildOptions& options) {
  validate(config);
  GraphBuilder b(config, options);
  const bool plain = config.block_style == BlockStyle::nnunet_plain;

  Value x{kNetworkInput, config.in_channels};
  std::vector<Value> skips;
  for (int s = 0; s < kNumStages; ++s) {
    x = plain ? build_plain_encoder_stage(b, config, s, x) : build_stu_encoder_stage(b, config, options, s, x);
    b.encoder_output(x);
    skips.push_back(x);
  }

  for (int s = kNumStages - 2; s >= 0; --s) {
    const std::string p = stage_name("decoder", s);
    const int w = config.widths[s];
    const Triple r = config.updown_ratios[s];
    Value up{};
    switch (config.upsample_style) {
      case UpsampleStyle::transpose_conv:
        up = b.transpose_conv(p + ".up", x, w, r, plain ? options.plain_up_head_bias : options.conv_bias);
        break;
      case UpsampleStyle::nearest_plus_1x1x1:
      case UpsampleStyle::trilinear_plus_1x1x1: {
        const LayerKind kind = config.upsample_style == UpsampleStyle::nearest_plus_1x1x1
                                   ? LayerKind::upsample_nearest
                                   : LayerKind::upsample_trilinear;
        up = b.upsample(p + ".interp", x, r, kind);
        up = b.conv(p + ".up", up, w, {1, 1, 1}, {1, 1, 1}, options.conv_bias);
        break;
      }
    }
    Value cat = b.concat(p + ".concat", up, skips[static_cast<size_t>(s)]);
    b.skip(s, skips[static_cast<size_t>(s)].id, cat);
    x = cat;
    if (plain) {
      for (int i = 0; i < 2 * config.depths[s]; ++i) {
        x = b.conv_norm_act(p + ".layer" + std::to_string(i), x, w, {3, 3, 3}, {1, 1, 1});
      }
    } else {
      for (int i = 0; i < config.depths[s]; ++i) x = b.residual(p + ".block" + std::to_string(i), x, w, {1, 1, 1});
    }
    const bool head_bias = plain ? options.plain_up_head_bias : true;
    if (s == 0) {
      b.mark_pre_head(x);
      b.head("seg_head", b.conv("seg_head", x, config.num_classes, {1, 1, 1}, {1, 1, 1}, head_bias), 0);
    } else if (config.deep_supervision) {
      const std::string name = std::string("deep_supervision.stage") + std::to_string(s);
      b.head(name, b.conv(name, x, config.num_classes, {1, 1, 1}, {1, 1, 1}, head_bias), s);
    }
  }
  return b.finish();
}

}  // namespace stunet
