#include "stunet/accounting/convention.hpp"

#include <fstream>
#include <nlohmann/json.hpp>
#include <set>
#include <sstream>

#include "stunet/common/error.hpp"

namespace stunet {

using nlohmann::json;

std::string to_string(TransposeCost v) {
  return v == TransposeCost::per_output_voxel ? "per_output_voxel" : "per_input_voxel";
}

TransposeCost parse_transpose_cost(const std::string& s) {
  if (s == "per_output_voxel") return TransposeCost::per_output_voxel;
  if (s == "per_input_voxel") return TransposeCost::per_input_voxel;
  throw ConfigError("transpose_cost", "unknown value '" + s + "'");
}

BuildOptions Convention::build_options() const {
  BuildOptions o;
  o.conv_bias = conv_bias;
  o.stem = stem_variant;
  o.shortcut_norm = downsample_norm_variant;
  o.stride_position = downsample_stride_position;
  o.separate_down_kernel = separate_downsample_kernel;
  o.plain_up_head_bias = plain_up_head_bias;
  return o;
}

ArchConfig Convention::apply(ArchConfig config) const {
  config.deep_supervision = deep_supervision;
  return config;
}

json to_json(const Convention& c) {
  return json{{"mac_factor", c.mac_factor},
              {"include_norm_act", c.include_norm_act},
              {"conv_bias", c.conv_bias},
              {"deep_supervision", c.deep_supervision},
              {"downsample_norm_variant", to_string(c.downsample_norm_variant)},
              {"bias_ops", c.bias_ops},
              {"downsample_stride_position", to_string(c.downsample_stride_position)},
              {"stem_variant", to_string(c.stem_variant)},
              {"transpose_cost", to_string(c.transpose_cost)},
              {"separate_downsample_kernel", to_string(c.separate_downsample_kernel)},
              {"plain_up_head_bias", c.plain_up_head_bias}};
}

namespace {

template <class V>
V get_field(const json& doc, const char* name) {
  if (!doc.contains(name)) throw ConfigError(name, "missing");
  try {
    return doc.at(name).get<V>();
  } catch (const json::exception& e) {
    throw ConfigError(name, std::string("wrong type: ") + e.what());
  }
}

}  // namespace

Convention convention_from_json(const json& doc) {
  if (!doc.is_object()) throw ConfigError("<root>", "convention must be a JSON object");
  static const std::set<std::string> known{"mac_factor",
                                           "include_norm_act",
                                           "conv_bias",
                                           "deep_supervision",
                                           "downsample_norm_variant",
                                           "bias_ops",
                                           "downsample_stride_position",
                                           "stem_variant",
                                           "transpose_cost",
                                           "separate_downsample_kernel",
                                           "plain_up_head_bias"};
  for (const auto& [key, _] : doc.items()) {
    if (!known.count(key)) throw ConfigError(key, "unknown field");
  }
  Convention c;
  c.mac_factor = get_field<int>(doc, "mac_factor");
  if (c.mac_factor != 1 && c.mac_factor != 2) throw ConfigError("mac_factor", "must be 1 or 2");
  c.include_norm_act = get_field<bool>(doc, "include_norm_act");
  c.conv_bias = get_field<bool>(doc, "conv_bias");
  c.deep_supervision = get_field<bool>(doc, "deep_supervision");
  c.downsample_norm_variant = parse_shortcut_norm(get_field<std::string>(doc, "downsample_norm_variant"));
  // The remaining fields default to the frozen values when absent.
  const Convention defaults;
  c.bias_ops = doc.contains("bias_ops") ? get_field<bool>(doc, "bias_ops") : defaults.bias_ops;
  c.downsample_stride_position = doc.contains("downsample_stride_position")
                                     ? parse_stride_position(get_field<std::string>(doc, "downsample_stride_position"))
                                     : defaults.downsample_stride_position;
  c.stem_variant = doc.contains("stem_variant") ? parse_stem_variant(get_field<std::string>(doc, "stem_variant"))
                                                : defaults.stem_variant;
  c.transpose_cost = doc.contains("transpose_cost")
                         ? parse_transpose_cost(get_field<std::string>(doc, "transpose_cost"))
                         : defaults.transpose_cost;
  c.separate_downsample_kernel =
      doc.contains("separate_downsample_kernel")
          ? parse_separate_down_kernel(get_field<std::string>(doc, "separate_downsample_kernel"))
          : defaults.separate_downsample_kernel;
  c.plain_up_head_bias =
      doc.contains("plain_up_head_bias") ? get_field<bool>(doc, "plain_up_head_bias") : defaults.plain_up_head_bias;
  return c;
}

std::string dump_convention(const Convention& c) { return to_json(c).dump(2) + "\n"; }

Convention parse_convention(const std::string& text) {
  json doc;
  try {
    doc = json::parse(text);
  } catch (const json::exception& e) {
    throw ConfigError("<root>", std::string("invalid JSON: ") + e.what());
  }
  return convention_from_json(doc);
}

Convention load_convention(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open convention file '" + path + "'");
  std::stringstream ss;
  ss << in.rdbuf();
  return parse_convention(ss.str());
}

void save_convention(const Convention& c, const std::string& path) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw IoError("cannot open '" + path + "' for writing");
  out << dump_convention(c);
  if (!out) throw IoError("failed writing '" + path + "'");
}

Convention frozen_convention() { return Convention{}; }

std::string describe(const Convention& c) {
  std::ostringstream os;
  os << "mac_factor=" << c.mac_factor << " norm_act=" << (c.include_norm_act ? "on" : "off")
     << " conv_bias=" << (c.conv_bias ? "on" : "off") << " deep_supervision=" << (c.deep_supervision ? "on" : "off")
     << " shortcut_norm=" << to_string(c.downsample_norm_variant) << " bias_ops=" << (c.bias_ops ? "on" : "off")
     << " stride=" << to_string(c.downsample_stride_position) << " stem=" << to_string(c.stem_variant)
     << " transpose=" << to_string(c.transpose_cost) << " down_kernel=" << to_string(c.separate_downsample_kernel)
     << " plain_up_head_bias=" << (c.plain_up_head_bias ? "on" : "off");
  return os.str();
}

}  // namespace stunet
