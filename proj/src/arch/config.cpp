#include "stunet/arch/config.hpp"

#include <cmath>
#include <fstream>
#include <iomanip>
#include <nlohmann/json.hpp>
#include <sstream>

#include "stunet/common/crc32.hpp"
#include "stunet/common/error.hpp"

namespace stunet {

using nlohmann::json;

std::string to_string(BlockStyle v) {
  return v == BlockStyle::stu_residual ? "stu_residual" : "nnunet_plain";
}

std::string to_string(DownsampleStyle v) {
  return v == DownsampleStyle::in_first_residual ? "in_first_residual" : "separate_conv";
}

std::string to_string(UpsampleStyle v) {
  switch (v) {
    case UpsampleStyle::nearest_plus_1x1x1: return "nearest_plus_1x1x1";
    case UpsampleStyle::trilinear_plus_1x1x1: return "trilinear_plus_1x1x1";
    case UpsampleStyle::transpose_conv: return "transpose_conv";
  }
  return "?";
}

namespace {

BlockStyle parse_block(const std::string& s) {
  if (s == "stu_residual") return BlockStyle::stu_residual;
  if (s == "nnunet_plain") return BlockStyle::nnunet_plain;
  throw ConfigError("block_style", "unknown value '" + s + "'");
}

DownsampleStyle parse_down(const std::string& s) {
  if (s == "in_first_residual") return DownsampleStyle::in_first_residual;
  if (s == "separate_conv") return DownsampleStyle::separate_conv;
  throw ConfigError("downsample_style", "unknown value '" + s + "'");
}

UpsampleStyle parse_up(const std::string& s) {
  if (s == "nearest_plus_1x1x1") return UpsampleStyle::nearest_plus_1x1x1;
  if (s == "trilinear_plus_1x1x1") return UpsampleStyle::trilinear_plus_1x1x1;
  if (s == "transpose_conv") return UpsampleStyle::transpose_conv;
  throw ConfigError("upsample_style", "unknown value '" + s + "'");
}

ArchConfig make(std::vector<int> depths, std::vector<int> widths) {
  ArchConfig c;
  c.depths = std::move(depths);
  c.widths = std::move(widths);
  c.updown_ratios.assign(kNumStages - 1, Triple{2, 2, 2});
  return c;
}

int round_half_up(double v) { return static_cast<int>(std::floor(v + 0.5)); }

}  // namespace

void validate(const ArchConfig& c) {
  if (c.num_stages != kNumStages) {
    throw ConfigError("num_stages", "must be " + std::to_string(kNumStages) + ", got " + std::to_string(c.num_stages));
  }
  if (c.depths.size() != kNumStages) throw ConfigError("depths", "expected 6 entries");
  if (c.widths.size() != kNumStages) throw ConfigError("widths", "expected 6 entries");
  if (c.updown_ratios.size() != kNumStages - 1) throw ConfigError("updown_ratios", "expected 5 entries");
  for (int s = 0; s < kNumStages; ++s) {
    if (c.depths[s] < 1) throw ConfigError("depths", "stage " + std::to_string(s) + " depth must be >= 1");
    if (c.widths[s] < 1) throw ConfigError("widths", "stage " + std::to_string(s) + " width must be >= 1");
    if (s > 0 && c.widths[s] < c.widths[s - 1]) {
      throw ConfigError("widths", "must be non-decreasing across stages");
    }
  }
  for (size_t t = 0; t < c.updown_ratios.size(); ++t) {
    const Triple& r = c.updown_ratios[t];
    if (r != Triple{2, 2, 2} && r != Triple{2, 2, 1}) {
      throw ConfigError("updown_ratios", "transition " + std::to_string(t) + " must be (2,2,2) or (2,2,1), got (" +
                                             to_string(r) + ")");
    }
  }
  if (c.in_channels < 1) throw ConfigError("in_channels", "must be >= 1");
  if (c.num_classes < 2) throw ConfigError("num_classes", "must be >= 2");
  if (c.block_style == BlockStyle::nnunet_plain && c.downsample_style != DownsampleStyle::separate_conv) {
    throw ConfigError("downsample_style", "nnunet_plain stages down-sample with a strided conv (separate_conv)");
  }
}

Triple cumulative_factor(const ArchConfig& c) {
  Triple f{1, 1, 1};
  for (const auto& r : c.updown_ratios)
    for (int a = 0; a < 3; ++a) f[a] *= r[a];
  return f;
}

ArchConfig scale(const ArchConfig& base, const ScalePlan& plan) {
  if (!(plan.depth > 0.0)) throw ConfigError("depth", "scale coefficient must be positive");
  if (!(plan.width > 0.0)) throw ConfigError("width", "scale coefficient must be positive");
  validate(base);
  ArchConfig out = base;
  for (int s = 0; s < kNumStages; ++s) {
    out.depths[s] = round_half_up(plan.depth * base.depths[s]);
    out.widths[s] = round_half_up(plan.width * base.widths[s]);
    if (out.depths[s] < 1) {
      throw ConfigError("depths", "scaled depth of stage " + std::to_string(s) + " is below 1");
    }
    if (out.widths[s] < 1) {
      throw ConfigError("widths", "scaled width of stage " + std::to_string(s) + " is below 1");
    }
  }
  return out;
}

ArchConfig variant(const ArchConfig& config, Variant which) {
  ArchConfig out = config;
  switch (which) {
    case Variant::conv_downsample: out.downsample_style = DownsampleStyle::separate_conv; break;
    case Variant::transpose_up: out.upsample_style = UpsampleStyle::transpose_conv; break;
    case Variant::trilinear_up: out.upsample_style = UpsampleStyle::trilinear_plus_1x1x1; break;
  }
  return out;
}

Variant parse_variant(const std::string& name) {
  if (name == "conv_downsample") return Variant::conv_downsample;
  if (name == "transpose_up") return Variant::transpose_up;
  if (name == "trilinear_up") return Variant::trilinear_up;
  throw InvalidInput("unknown variant '" + name + "'");
}

namespace presets {

ArchConfig stunet_base() { return make({1, 1, 1, 1, 1, 1}, {32, 64, 128, 256, 512, 512}); }
ArchConfig stunet_small() { return make({1, 1, 1, 1, 1, 1}, {16, 32, 64, 128, 256, 256}); }
ArchConfig stunet_large() { return make({2, 2, 2, 2, 2, 2}, {64, 128, 256, 512, 1024, 1024}); }
ArchConfig stunet_huge() { return make({3, 3, 3, 3, 3, 3}, {96, 192, 384, 768, 1536, 1536}); }

ArchConfig nnunet() {
  ArchConfig c = make({1, 1, 1, 1, 1, 1}, {32, 64, 128, 256, 320, 320});
  c.block_style = BlockStyle::nnunet_plain;
  c.downsample_style = DownsampleStyle::separate_conv;
  c.upsample_style = UpsampleStyle::transpose_conv;
  return c;
}

ArchConfig nnunet_wide() {
  ArchConfig c = nnunet();
  c.widths = {32, 64, 128, 256, 512, 512};
  return c;
}

}  // namespace presets

json to_json(const ArchConfig& c) {
  json ratios = json::array();
  for (const auto& r : c.updown_ratios) ratios.push_back({r[0], r[1], r[2]});
  return json{{"num_stages", c.num_stages},
              {"depths", c.depths},
              {"widths", c.widths},
              {"updown_ratios", ratios},
              {"in_channels", c.in_channels},
              {"num_classes", c.num_classes},
              {"block_style", to_string(c.block_style)},
              {"downsample_style", to_string(c.downsample_style)},
              {"upsample_style", to_string(c.upsample_style)},
              {"deep_supervision", c.deep_supervision}};
}

namespace {

template <class V>
V field(const json& doc, const char* name) {
  if (!doc.contains(name)) throw ConfigError(name, "missing field");
  try {
    return doc.at(name).get<V>();
  } catch (const json::exception& e) {
    throw ConfigError(name, std::string("wrong type: ") + e.what());
  }
}

}  // namespace

ArchConfig config_from_json(const json& doc) {
  if (!doc.is_object()) throw ConfigError("<root>", "config must be a JSON object");
  static const char* kKnown[] = {"num_stages",  "depths",      "widths",           "updown_ratios",
                                 "in_channels", "num_classes", "block_style",      "downsample_style",
                                 "upsample_style", "deep_supervision"};
  for (const auto& [key, _] : doc.items()) {
    bool known = false;
    for (const char* k : kKnown) known = known || key == k;
    if (!known) throw ConfigError(key, "unknown field");
  }
  ArchConfig c;
  c.num_stages = field<int>(doc, "num_stages");
  c.depths = field<std::vector<int>>(doc, "depths");
  c.widths = field<std::vector<int>>(doc, "widths");
  for (const auto& r : field<std::vector<std::vector<int>>>(doc, "updown_ratios")) {
    if (r.size() != 3) throw ConfigError("updown_ratios", "each ratio needs 3 entries");
    c.updown_ratios.push_back({r[0], r[1], r[2]});
  }
  c.in_channels = field<int>(doc, "in_channels");
  c.num_classes = field<int>(doc, "num_classes");
  c.block_style = parse_block(field<std::string>(doc, "block_style"));
  c.downsample_style = parse_down(field<std::string>(doc, "downsample_style"));
  c.upsample_style = parse_up(field<std::string>(doc, "upsample_style"));
  c.deep_supervision = field<bool>(doc, "deep_supervision");
  validate(c);
  return c;
}

std::string dump_config(const ArchConfig& config) { return to_json(config).dump(2) + "\n"; }

ArchConfig parse_config(const std::string& text) {
  json doc;
  try {
    doc = json::parse(text);
  } catch (const json::parse_error& e) {
    throw ConfigError("<root>", std::string("invalid JSON: ") + e.what());
  }
  return config_from_json(doc);
}

ArchConfig load_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open config '" + path + "'");
  std::ostringstream ss;
  ss << in.rdbuf();
  return parse_config(ss.str());
}

void save_config(const ArchConfig& config, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw IoError("cannot write config '" + path + "'");
  out << dump_config(config);
  if (!out) throw IoError("failed writing config '" + path + "'");
}

std::string config_digest(const ArchConfig& config) {
  const std::string canon = to_json(config).dump();
  std::ostringstream os;
  os << std::hex << std::setw(8) << std::setfill('0')
     << crc32(std::as_bytes(std::span<const char>(canon.data(), canon.size())));
  return os.str();
}

}  // namespace stunet
