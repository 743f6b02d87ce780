#pragma once

#include <functional>
#include <map>
#include <memory>
#include <string>
#include <vector>

#include "stunet/common/triple.hpp"
#include "stunet/tensor/kernels.hpp"
#include "stunet/tensor/tensor.hpp"

namespace stunet::ad {

template <class T>
struct Node {
  BasicTensor<T> value;
  BasicTensor<T> grad;
  std::vector<std::shared_ptr<Node>> parents;
  std::function<void(Node&)> backprop;
  std::string param_name;
  bool requires_grad = false;
};

template <class T>
class Var {
 public:
  Var() = default;
  explicit Var(std::shared_ptr<Node<T>> node) : node_(std::move(node)) {}

  const BasicTensor<T>& value() const { return node_->value; }
  const Shape& shape() const { return node_->value.shape(); }
  bool valid() const noexcept { return node_ != nullptr; }
  const std::shared_ptr<Node<T>>& node() const noexcept { return node_; }

 private:
  std::shared_ptr<Node<T>> node_;
};

template <class T>
using GradMap = std::map<std::string, BasicTensor<T>>;

// Records primitive applications so that gradients of a scalar can be
// replayed in reverse. A non-recording tape evaluates eagerly and keeps
// nothing, which is what inference uses.
template <class T>
class Tape {
 public:
  explicit Tape(bool recording = true) : recording_(recording) {}

  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;
  Tape(Tape&&) noexcept = default;
  Tape& operator=(Tape&&) noexcept = default;

  bool recording() const noexcept { return recording_; }

  Var<T> constant(BasicTensor<T> value);
  // Parameters are the leaves gradients are reported for; names must be unique.
  Var<T> parameter(const std::string& name, BasicTensor<T> value);

  // Internal: appends an op result. `backprop` receives the result node and
  // must accumulate into its parents via accumulate().
  Var<T> record(BasicTensor<T> value, std::vector<Var<T>> inputs, std::function<void(Node<T>&)> backprop);

  // Gradients of a one-element `loss` for every registered parameter.
  // Parameters the loss does not depend on get zero tensors.
  GradMap<T> backward(const Var<T>& loss);

  const std::vector<std::shared_ptr<Node<T>>>& parameters() const noexcept { return params_; }

 private:
  bool recording_;
  std::vector<std::shared_ptr<Node<T>>> order_;
  std::vector<std::shared_ptr<Node<T>>> params_;
  std::map<std::string, size_t> param_index_;
};

template <class T>
void accumulate(Node<T>& target, const BasicTensor<T>& g);

// ---- differentiable ops ----------------------------------------------------

template <class T>
Var<T> conv3d(Tape<T>& tape, const Var<T>& x, const Var<T>& w, const Var<T>* bias, Triple stride, Triple pad);

template <class T>
Var<T> transpose_conv3d(Tape<T>& tape, const Var<T>& x, const Var<T>& w, const Var<T>* bias, Triple stride);

template <class T>
Var<T> instance_norm(Tape<T>& tape, const Var<T>& x, const Var<T>& gamma, const Var<T>& beta,
                     double eps = kernels::kNormEps);

template <class T>
Var<T> leaky_relu(Tape<T>& tape, const Var<T>& x, double slope = kernels::kDefaultSlope);

template <class T>
Var<T> add(Tape<T>& tape, const Var<T>& a, const Var<T>& b);

template <class T>
Var<T> mul(Tape<T>& tape, const Var<T>& a, const Var<T>& b);

template <class T>
Var<T> scale(Tape<T>& tape, const Var<T>& x, double factor);

// Sum of all elements, as a one-element tensor.
template <class T>
Var<T> sum(Tape<T>& tape, const Var<T>& x);

template <class T>
Var<T> upsample_nearest(Tape<T>& tape, const Var<T>& x, Triple factors);

template <class T>
Var<T> upsample_trilinear(Tape<T>& tape, const Var<T>& x, Triple factors);

template <class T>
Var<T> concat_channels(Tape<T>& tape, const Var<T>& a, const Var<T>& b);

template <class T>
Var<T> softmax_channels(Tape<T>& tape, const Var<T>& logits);

template <class T>
Var<T> soft_dice_loss(Tape<T>& tape, const Var<T>& probs, const BasicTensor<T>& onehot,
                      double smooth = kernels::kDiceSmooth);

template <class T>
Var<T> cross_entropy(Tape<T>& tape, const Var<T>& logits, const std::vector<int32_t>& labels);

// Equally weighted soft Dice (on softmax) plus cross entropy.
template <class T>
Var<T> dice_ce_loss(Tape<T>& tape, const Var<T>& logits, const std::vector<int32_t>& labels);

}  // namespace stunet::ad
