#include "stunet/harness/synth.hpp"

#include <cmath>
#include <nlohmann/json.hpp>
#include <random>

#include "stunet/common/error.hpp"

namespace stunet {

using nlohmann::json;

std::string to_string(ShapeFamily f) {
  switch (f) {
    case ShapeFamily::sphere: return "sphere";
    case ShapeFamily::box: return "box";
    case ShapeFamily::shell: return "shell";
  }
  return "?";
}

ShapeFamily parse_shape_family(const std::string& s) {
  if (s == "sphere") return ShapeFamily::sphere;
  if (s == "box") return ShapeFamily::box;
  if (s == "shell") return ShapeFamily::shell;
  throw ConfigError("family", "unknown shape family '" + s + "'");
}

void SynthSpec::validate() const {
  for (int a = 0; a < 3; ++a) {
    if (extent[a] < 1) throw ConfigError("extent", "must be positive");
  }
  if (num_classes < 2) throw ConfigError("num_classes", "need background plus at least one foreground class");
  if (static_cast<int>(classes.size()) != num_classes - 1) {
    throw ConfigError("classes", "expected " + std::to_string(num_classes - 1) + " foreground class entries");
  }
  if (channels < 1) throw ConfigError("channels", "must be at least 1");
  if (static_cast<int>(background.size()) != channels) throw ConfigError("background", "one mean per channel");
  if (noise < 0) throw ConfigError("noise", "must be non-negative");
  for (const auto& c : classes) {
    if (static_cast<int>(c.intensity.size()) != channels) throw ConfigError("intensity", "one mean per channel");
    if (c.size_min <= 0 || c.size_max < c.size_min) throw ConfigError("size", "need 0 < size_min <= size_max");
    if (c.count_min < 1 || c.count_max < c.count_min) throw ConfigError("count", "need 1 <= count_min <= count_max");
    for (int a = 0; a < 3; ++a) {
      if (2 * c.size_max + 1 > extent[a]) throw ConfigError("size", "shape larger than the volume");
    }
  }
}

namespace {

template <class Inside>
void paint(LabelMap& labels, std::array<double, 3> center, double reach, int32_t label, Inside inside) {
  int lo[3], hi[3];
  for (int a = 0; a < 3; ++a) {
    lo[a] = std::max(0, static_cast<int>(std::floor(center[a] - reach)));
    hi[a] = std::min(labels.extent[a] - 1, static_cast<int>(std::ceil(center[a] + reach)));
  }
  for (int d = lo[0]; d <= hi[0]; ++d)
    for (int h = lo[1]; h <= hi[1]; ++h)
      for (int w = lo[2]; w <= hi[2]; ++w) {
        if (inside(d - center[0], h - center[1], w - center[2])) labels.at(d, h, w) = label;
      }
}

}  // namespace

void paint_sphere(LabelMap& labels, std::array<double, 3> c, double r, int32_t label) {
  paint(labels, c, r, label, [r](double x, double y, double z) { return x * x + y * y + z * z <= r * r; });
}

void paint_box(LabelMap& labels, std::array<double, 3> c, std::array<double, 3> half, int32_t label) {
  const double reach = std::max({half[0], half[1], half[2]});
  paint(labels, c, reach, label, [half](double x, double y, double z) {
    return std::abs(x) <= half[0] && std::abs(y) <= half[1] && std::abs(z) <= half[2];
  });
}

void paint_shell(LabelMap& labels, std::array<double, 3> c, double r, double inner, int32_t label) {
  paint(labels, c, r, label, [r, inner](double x, double y, double z) {
    const double q = x * x + y * y + z * z;
    return q <= r * r && q >= inner * inner;
  });
}

Volume gen_volume(const SynthSpec& spec, uint64_t seed, int index) {
  spec.validate();
  std::seed_seq seq{static_cast<uint32_t>(seed), static_cast<uint32_t>(seed >> 32), static_cast<uint32_t>(index)};
  std::mt19937_64 rng(seq);
  std::uniform_real_distribution<double> unit(0.0, 1.0);

  Volume v;
  v.num_classes = spec.num_classes;
  v.spacing = spec.spacing;
  v.labels = LabelMap(spec.extent);

  auto place = [&](const ClassSpec& cs, int32_t label) {
    const double size = cs.size_min + (cs.size_max - cs.size_min) * unit(rng);
    std::array<double, 3> half{size, size, size};
    if (cs.family == ShapeFamily::box) {
      for (auto& hv : half) hv = std::max(cs.size_min, size * (0.75 + 0.5 * unit(rng)));
      for (int a = 0; a < 3; ++a) half[a] = std::min(half[a], cs.size_max);
    }
    std::array<double, 3> center;
    for (int a = 0; a < 3; ++a) {
      const double lo = half[a];
      const double hi = spec.extent[a] - 1 - half[a];
      center[a] = lo + (hi - lo) * unit(rng);
    }
    switch (cs.family) {
      case ShapeFamily::sphere: paint_sphere(v.labels, center, size, label); break;
      case ShapeFamily::box: paint_box(v.labels, center, half, label); break;
      case ShapeFamily::shell: paint_shell(v.labels, center, size, kShellInnerFraction * size, label); break;
    }
  };

  for (size_t k = 0; k < spec.classes.size(); ++k) {
    const ClassSpec& cs = spec.classes[k];
    const int count = std::uniform_int_distribution<int>(cs.count_min, cs.count_max)(rng);
    for (int i = 0; i < count; ++i) place(cs, static_cast<int32_t>(k + 1));
  }
  // Later shapes may cover earlier ones completely; re-place missing classes.
  for (int attempt = 0; attempt < 8; ++attempt) {
    bool all_present = true;
    for (size_t k = 0; k < spec.classes.size(); ++k) {
      if (v.labels.count(static_cast<int32_t>(k + 1)) == 0) {
        all_present = false;
        place(spec.classes[k], static_cast<int32_t>(k + 1));
      }
    }
    if (all_present) break;
  }

  const int C = spec.channels;
  const int64_t V = volume_of(spec.extent);
  v.image = Tensor({C, spec.extent[0], spec.extent[1], spec.extent[2]});
  std::normal_distribution<double> gauss(0.0, 1.0);
  for (int c = 0; c < C; ++c) {
    double sum = 0.0, sq = 0.0;
    float* dst = v.image.ptr() + c * V;
    for (int64_t i = 0; i < V; ++i) {
      const int32_t l = v.labels.data[static_cast<size_t>(i)];
      const double mean = l == 0 ? spec.background[c] : spec.classes[l - 1].intensity[c];
      const double x = mean + spec.noise * gauss(rng);
      dst[i] = static_cast<float>(x);
      sum += x;
      sq += x * x;
    }
    const double mean = sum / V;
    const double sd = std::sqrt(std::max(sq / V - mean * mean, 1e-12));
    for (int64_t i = 0; i < V; ++i) dst[i] = static_cast<float>((dst[i] - mean) / sd);
  }
  return v;
}

std::vector<Volume> gen_dataset(const SynthSpec& spec, int n, uint64_t seed) {
  if (n < 0) throw InvalidInput("dataset size must be non-negative");
  std::vector<Volume> out;
  out.reserve(static_cast<size_t>(n));
  for (int i = 0; i < n; ++i) out.push_back(gen_volume(spec, seed, i));
  return out;
}

json to_json(const SynthSpec& s) {
  json classes = json::array();
  for (const auto& c : s.classes) {
    classes.push_back({{"family", to_string(c.family)},
                       {"size_min", c.size_min},
                       {"size_max", c.size_max},
                       {"count_min", c.count_min},
                       {"count_max", c.count_max},
                       {"intensity", c.intensity}});
  }
  return json{{"extent", s.extent},         {"num_classes", s.num_classes}, {"channels", s.channels},
              {"classes", classes},         {"background", s.background},   {"noise", s.noise},
              {"spacing", s.spacing}};
}

SynthSpec synth_spec_from_json(const json& doc) {
  SynthSpec s;
  try {
    s.extent = doc.at("extent").get<Triple>();
    s.num_classes = doc.at("num_classes").get<int>();
    s.channels = doc.at("channels").get<int>();
    s.background = doc.at("background").get<std::vector<double>>();
    s.noise = doc.at("noise").get<double>();
    if (doc.contains("spacing")) s.spacing = doc.at("spacing").get<std::array<double, 3>>();
    for (const auto& c : doc.at("classes")) {
      ClassSpec cs;
      cs.family = parse_shape_family(c.at("family").get<std::string>());
      cs.size_min = c.at("size_min").get<double>();
      cs.size_max = c.at("size_max").get<double>();
      cs.count_min = c.at("count_min").get<int>();
      cs.count_max = c.at("count_max").get<int>();
      cs.intensity = c.at("intensity").get<std::vector<double>>();
      s.classes.push_back(std::move(cs));
    }
  } catch (const json::exception& e) {
    throw ConfigError("synth_spec", e.what());
  }
  s.validate();
  return s;
}

}  // namespace stunet
