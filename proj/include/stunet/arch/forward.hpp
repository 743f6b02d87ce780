#pragma once

#include <functional>
#include <map>
#include <string>
#include <vector>

#include "stunet/arch/graph.hpp"
#include "stunet/tensor/autograd.hpp"
#include "stunet/weights/store.hpp"

namespace stunet {

template <class T>
using ParamVars = std::map<std::string, ad::Var<T>>;

// Registers every parameter of `graph` from `store` on `tape` (cast to T).
template <class T>
ParamVars<T> register_parameters(ad::Tape<T>& tape, const NetworkGraph& graph, const WeightStore& store);

// Called with (layer id, value) as each layer is evaluated.
template <class T>
using LayerObserver = std::function<void(int, const BasicTensor<T>&)>;

// Runs the graph on `tape`. Returns one Var per head in graph.heads() order
// (main head first); with main_only, deep-supervision heads are skipped and
// the result has a single entry. Intermediate values are dropped after their
// last consumer.
template <class T>
std::vector<ad::Var<T>> forward_on_tape(const NetworkGraph& graph, ad::Tape<T>& tape, const ParamVars<T>& params,
                                        const ad::Var<T>& x, bool main_only = false,
                                        const LayerObserver<T>& observer = {});

struct ForwardOptions {
  bool aux_heads = false;        // also return deep-supervision logits
  bool keep_activations = false;  // copy every non-head layer output into the result
};

struct ForwardResult {
  Tensor logits;
  std::vector<Tensor> aux;                  // deep-supervision logits, shallowest stage first
  std::map<std::string, Tensor> activations;  // layer name -> output
};

// Throws InvalidInput for a malformed input and MissingParameter /
// ShapeMismatch for an incomplete store.
void check_input(const NetworkGraph& graph, const Shape& x_shape);

ForwardResult forward(const NetworkGraph& graph, const WeightStore& store, const Tensor& x,
                      const ForwardOptions& options = {});

// Logits only.
Tensor predict_logits(const NetworkGraph& graph, const WeightStore& store, const Tensor& x);

}  // namespace stunet
