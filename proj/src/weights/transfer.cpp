#include "stunet/weights/transfer.hpp"

#include <cmath>
#include <random>
#include <set>

#include "stunet/common/crc32.hpp"
#include "stunet/common/error.hpp"
#include "stunet/tensor/kernels.hpp"

namespace stunet {

namespace {

struct ParamOwner {
  const Layer* layer = nullptr;
  bool is_weight = false;
};

ParamOwner find_owner(const NetworkGraph& graph, const std::string& name) {
  for (const auto& l : graph.layers()) {
    for (size_t i = 0; i < l.params.size(); ++i) {
      if (l.params[i].name == name) return {&l, i == 0};
    }
  }
  throw MissingParameter({name});
}

Tensor init_for(const Layer& layer, const ParamSpec& spec, bool is_weight, uint64_t seed) {
  Tensor t(spec.shape);
  if (layer.kind == LayerKind::instance_norm) {
    if (is_weight) t.fill(1.0f);
    return t;
  }
  if (!is_weight) return t;  // conv bias
  // fan_in follows the weight's second axis times the kernel volume, which
  // for transposed convs (Cin, Cout, k...) means Cout * k^3.
  const double fan_in = static_cast<double>(spec.shape[1]) * spec.shape[2] * spec.shape[3] * spec.shape[4];
  const double slope = kernels::kDefaultSlope;
  const double stddev = std::sqrt(2.0 / ((1.0 + slope * slope) * fan_in));
  const uint32_t name_hash = crc32(std::as_bytes(std::span<const char>(spec.name.data(), spec.name.size())));
  std::seed_seq seq{static_cast<uint32_t>(seed), static_cast<uint32_t>(seed >> 32), name_hash};
  std::mt19937_64 rng(seq);
  std::normal_distribution<float> dist(0.0f, static_cast<float>(stddev));
  for (auto& v : t.data()) v = dist(rng);
  return t;
}

}  // namespace

WeightStore init_weights(const NetworkGraph& graph, uint64_t seed) {
  WeightStore store;
  for (const auto& l : graph.layers()) {
    for (size_t i = 0; i < l.params.size(); ++i) store.insert(l.params[i].name, init_for(l, l.params[i], i == 0, seed));
  }
  store.set_config_digest(config_digest(graph.config()));
  return store;
}

Tensor init_parameter(const NetworkGraph& graph, const std::string& name, uint64_t seed) {
  const ParamOwner owner = find_owner(graph, name);
  for (const auto& p : owner.layer->params) {
    if (p.name == name) return init_for(*owner.layer, p, owner.is_weight, seed);
  }
  throw MissingParameter({name});
}

TransferResult transfer(const WeightStore& pretrained, const NetworkGraph& target, uint64_t seed) {
  std::set<std::string> input_weights;
  for (int id : target.input_consumers()) {
    const Layer& l = target.layer(id);
    if ((l.kind == LayerKind::conv) && !l.params.empty()) input_weights.insert(l.params[0].name);
  }

  TransferResult out;
  std::vector<std::string> missing;
  std::vector<ShapeMismatch::Entry> wrong;
  for (const auto& l : target.layers()) {
    for (size_t i = 0; i < l.params.size(); ++i) {
      const ParamSpec& spec = l.params[i];
      if (is_head_parameter(spec.name)) {
        out.store.insert(spec.name, init_for(l, spec, i == 0, seed));
        out.multipliers[spec.name] = kHeadLrMultiplier;
        continue;
      }
      if (!pretrained.contains(spec.name)) {
        missing.push_back(spec.name);
        continue;
      }
      const Tensor& src = pretrained.at(spec.name);
      if (src.shape() == spec.shape) {
        out.store.insert(spec.name, src);
        out.multipliers[spec.name] = kBackboneLrMultiplier;
        continue;
      }
      const bool replicable = input_weights.count(spec.name) && src.rank() == 5 && spec.shape.size() == 5 &&
                              src.dim(0) == spec.shape[0] && src.dim(1) < spec.shape[1] &&
                              src.dim(2) == spec.shape[2] && src.dim(3) == spec.shape[3] &&
                              src.dim(4) == spec.shape[4];
      if (!replicable) {
        wrong.push_back({spec.name, shape_to_string(spec.shape), shape_to_string(src.shape())});
        continue;
      }
      Tensor t(spec.shape);
      const int64_t kvol = spec.shape[2] * spec.shape[3] * spec.shape[4];
      const int64_t cs = src.dim(1);
      for (int64_t o = 0; o < spec.shape[0]; ++o)
        for (int64_t c = 0; c < spec.shape[1]; ++c)
          for (int64_t k = 0; k < kvol; ++k) t[(o * spec.shape[1] + c) * kvol + k] = src[(o * cs + c % cs) * kvol + k];
      out.store.insert(spec.name, std::move(t));
      out.multipliers[spec.name] = kBackboneLrMultiplier;
    }
  }
  if (!missing.empty()) throw MissingParameter(std::move(missing));
  if (!wrong.empty()) throw ShapeMismatch(std::move(wrong));
  out.store.set_config_digest(config_digest(target.config()));
  return out;
}

LrMultiplierMap uniform_multipliers(const NetworkGraph& graph, double value) {
  LrMultiplierMap m;
  for (const auto& p : graph.parameters()) m[p.name] = value;
  return m;
}

}  // namespace stunet
