#pragma once

#include <array>
#include <cstdint>
#include <string>
#include <vector>

#include <nlohmann/json_fwd.hpp>

#include "stunet/harness/volume.hpp"

namespace stunet {

enum class ShapeFamily { sphere, box, shell };

std::string to_string(ShapeFamily f);
ShapeFamily parse_shape_family(const std::string& s);

// Geometry and appearance of one foreground class.
struct ClassSpec {
  ShapeFamily family = ShapeFamily::sphere;
  double size_min = 4.0;  // radius (sphere, shell) or half edge (box), voxels
  double size_max = 8.0;
  int count_min = 1;
  int count_max = 1;
  std::vector<double> intensity;  // mean per channel

  bool operator==(const ClassSpec&) const = default;
};

struct SynthSpec {
  Triple extent{48, 48, 48};
  int num_classes = 2;  // background + classes.size()
  int channels = 1;
  std::vector<ClassSpec> classes;
  std::vector<double> background;  // mean per channel
  double noise = 0.1;
  std::array<double, 3> spacing{1.5, 1.5, 1.5};

  bool operator==(const SynthSpec&) const = default;

  // Throws ConfigError naming the offending field.
  void validate() const;
};

// n volumes; volume i depends only on (spec, seed, i). Images are z-scored
// per channel.
std::vector<Volume> gen_dataset(const SynthSpec& spec, int n, uint64_t seed);
Volume gen_volume(const SynthSpec& spec, uint64_t seed, int index);

// Rasterizers over voxel centres at integer coordinates.
void paint_sphere(LabelMap& labels, std::array<double, 3> center, double radius, int32_t label);
void paint_box(LabelMap& labels, std::array<double, 3> center, std::array<double, 3> half, int32_t label);
void paint_shell(LabelMap& labels, std::array<double, 3> center, double radius, double inner_radius, int32_t label);

inline constexpr double kShellInnerFraction = 0.6;

nlohmann::json to_json(const SynthSpec& spec);
SynthSpec synth_spec_from_json(const nlohmann::json& doc);

}  // namespace stunet
