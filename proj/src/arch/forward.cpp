#include "stunet/arch/forward.hpp"

#include <set>

#include "stunet/common/error.hpp"

namespace stunet {

template <class T>
ParamVars<T> register_parameters(ad::Tape<T>& tape, const NetworkGraph& graph, const WeightStore& store) {
  check_store(graph, store);
  ParamVars<T> vars;
  for (const auto& p : graph.parameters()) {
    if constexpr (std::is_same_v<T, float>) {
      vars.emplace(p.name, tape.parameter(p.name, store.at(p.name)));
    } else {
      vars.emplace(p.name, tape.parameter(p.name, store.at(p.name).template cast<T>()));
    }
  }
  return vars;
}

template <class T>
std::vector<ad::Var<T>> forward_on_tape(const NetworkGraph& graph, ad::Tape<T>& tape, const ParamVars<T>& params,
                                        const ad::Var<T>& x, bool main_only, const LayerObserver<T>& observer) {
  const auto layers = graph.layers();
  const int n = static_cast<int>(layers.size());
  const auto& heads = graph.heads();

  std::vector<char> skip(static_cast<size_t>(n), 0);
  if (main_only) {
    for (size_t h = 1; h < heads.size(); ++h) skip[static_cast<size_t>(heads[h].layer)] = 1;
  }
  std::set<int> head_layers;
  for (size_t h = 0; h < heads.size(); ++h) {
    if (!skip[static_cast<size_t>(heads[h].layer)]) head_layers.insert(heads[h].layer);
  }
  std::vector<int> last_use(static_cast<size_t>(n), -1);
  for (int i = 0; i < n; ++i) {
    if (skip[static_cast<size_t>(i)]) continue;
    for (int in : layers[static_cast<size_t>(i)].inputs) {
      if (in != kNetworkInput) last_use[static_cast<size_t>(in)] = i;
    }
  }

  auto param = [&](const std::string& name) -> const ad::Var<T>& {
    auto it = params.find(name);
    if (it == params.end()) throw MissingParameter({name});
    return it->second;
  };

  std::vector<ad::Var<T>> values(static_cast<size_t>(n));
  auto input = [&](const Layer& l, size_t k) -> const ad::Var<T>& {
    const int id = l.inputs.at(k);
    return id == kNetworkInput ? x : values[static_cast<size_t>(id)];
  };

  for (int i = 0; i < n; ++i) {
    if (skip[static_cast<size_t>(i)]) continue;
    const Layer& l = layers[static_cast<size_t>(i)];
    ad::Var<T> out;
    switch (l.kind) {
      case LayerKind::conv: {
        const ad::Var<T>* bias = l.bias ? &param(l.params[1].name) : nullptr;
        out = ad::conv3d(tape, input(l, 0), param(l.params[0].name), bias, l.stride, l.pad);
        break;
      }
      case LayerKind::transpose_conv: {
        const ad::Var<T>* bias = l.bias ? &param(l.params[1].name) : nullptr;
        out = ad::transpose_conv3d(tape, input(l, 0), param(l.params[0].name), bias, l.stride);
        break;
      }
      case LayerKind::instance_norm:
        out = ad::instance_norm(tape, input(l, 0), param(l.params[0].name), param(l.params[1].name));
        break;
      case LayerKind::leaky_relu:
        out = ad::leaky_relu(tape, input(l, 0), l.slope);
        break;
      case LayerKind::add:
        out = ad::add(tape, input(l, 0), input(l, 1));
        break;
      case LayerKind::concat:
        out = ad::concat_channels(tape, input(l, 0), input(l, 1));
        break;
      case LayerKind::upsample_nearest:
        out = ad::upsample_nearest(tape, input(l, 0), l.factors);
        break;
      case LayerKind::upsample_trilinear:
        out = ad::upsample_trilinear(tape, input(l, 0), l.factors);
        break;
    }
    if (observer) observer(i, out.value());
    values[static_cast<size_t>(i)] = std::move(out);
    for (int in : l.inputs) {
      if (in != kNetworkInput && last_use[static_cast<size_t>(in)] == i && !head_layers.count(in)) {
        values[static_cast<size_t>(in)] = ad::Var<T>();
      }
    }
  }

  std::vector<ad::Var<T>> result;
  for (size_t h = 0; h < heads.size(); ++h) {
    if (skip[static_cast<size_t>(heads[h].layer)]) continue;
    result.push_back(values[static_cast<size_t>(heads[h].layer)]);
  }
  return result;
}

void check_input(const NetworkGraph& graph, const Shape& x_shape) {
  if (x_shape.size() != 5) {
    throw InvalidInput("input must be N x C x D x H x W, got " + shape_to_string(x_shape));
  }
  if (x_shape[1] != graph.config().in_channels) {
    throw InvalidInput("input has " + std::to_string(x_shape[1]) + " channels, network expects " +
                       std::to_string(graph.config().in_channels));
  }
  const Triple f = graph.downsample_factor();
  for (int a = 0; a < 3; ++a) {
    if (x_shape[2 + a] % f[a] != 0) {
      throw InvalidInput("input spatial shape " + shape_to_string(x_shape) +
                         " is not divisible by the cumulative down-sampling factor " + to_string(f));
    }
  }
}

ForwardResult forward(const NetworkGraph& graph, const WeightStore& store, const Tensor& x,
                      const ForwardOptions& options) {
  check_input(graph, x.shape());
  ad::Tape<float> tape(false);
  const ParamVars<float> params = register_parameters(tape, graph, store);
  ForwardResult result;
  LayerObserver<float> observer;
  std::set<int> head_layers;
  for (const auto& h : graph.heads()) head_layers.insert(h.layer);
  if (options.keep_activations) {
    observer = [&](int id, const Tensor& v) {
      if (!head_layers.count(id)) result.activations.emplace(graph.layer(id).name, v);
    };
  }
  auto outs = forward_on_tape(graph, tape, params, tape.constant(x), !options.aux_heads, observer);
  result.logits = outs.front().value();
  for (size_t i = 1; i < outs.size(); ++i) result.aux.push_back(outs[i].value());
  return result;
}

Tensor predict_logits(const NetworkGraph& graph, const WeightStore& store, const Tensor& x) {
  return forward(graph, store, x).logits;
}

#define STUNET_INSTANTIATE_FORWARD(T)                                                                         \
  template ParamVars<T> register_parameters<T>(ad::Tape<T>&, const NetworkGraph&, const WeightStore&);         \
  template std::vector<ad::Var<T>> forward_on_tape<T>(const NetworkGraph&, ad::Tape<T>&, const ParamVars<T>&, \
                                                      const ad::Var<T>&, bool, const LayerObserver<T>&);

STUNET_INSTANTIATE_FORWARD(float)
STUNET_INSTANTIATE_FORWARD(double)

}  // namespace stunet
