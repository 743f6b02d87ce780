#include "stunet/tensor/autograd.hpp"

#include "stunet/common/error.hpp"

namespace stunet::ad {

namespace k = stunet::kernels;

template <class T>
void accumulate(Node<T>& target, const BasicTensor<T>& g) {
  if (!target.requires_grad) return;
  if (target.grad.empty()) {
    target.grad = g;
    return;
  }
  if (target.grad.shape() != g.shape()) {
    throw InvalidInput("gradient shape " + shape_to_string(g.shape()) + " does not match " +
                       shape_to_string(target.grad.shape()));
  }
  auto dst = target.grad.data();
  auto src = g.data();
  for (size_t i = 0; i < dst.size(); ++i) dst[i] += src[i];
}

template <class T>
Var<T> Tape<T>::constant(BasicTensor<T> value) {
  auto node = std::make_shared<Node<T>>();
  node->value = std::move(value);
  return Var<T>(std::move(node));
}

template <class T>
Var<T> Tape<T>::parameter(const std::string& name, BasicTensor<T> value) {
  if (param_index_.count(name)) throw InvalidInput("parameter '" + name + "' registered twice");
  auto node = std::make_shared<Node<T>>();
  node->value = std::move(value);
  node->param_name = name;
  node->requires_grad = recording_;
  param_index_[name] = params_.size();
  params_.push_back(node);
  return Var<T>(std::move(node));
}

template <class T>
Var<T> Tape<T>::record(BasicTensor<T> value, std::vector<Var<T>> inputs,
                       std::function<void(Node<T>&)> backprop) {
  auto node = std::make_shared<Node<T>>();
  node->value = std::move(value);
  if (!recording_) return Var<T>(std::move(node));
  for (const auto& in : inputs) {
    if (in.node()->requires_grad) node->requires_grad = true;
  }
  if (node->requires_grad) {
    for (auto& in : inputs) node->parents.push_back(in.node());
    node->backprop = std::move(backprop);
    order_.push_back(node);
  }
  return Var<T>(std::move(node));
}

template <class T>
GradMap<T> Tape<T>::backward(const Var<T>& loss) {
  if (!loss.valid() || loss.value().numel() != 1) {
    throw InvalidInput("backward requires a scalar (one-element) loss, got shape " +
                       (loss.valid() ? shape_to_string(loss.shape()) : std::string("<none>")));
  }
  if (!recording_) throw InvalidInput("backward called on a non-recording tape");
  auto root = loss.node();
  if (root->requires_grad) {
    root->grad = BasicTensor<T>(root->value.shape(), T{1});
    for (auto it = order_.rbegin(); it != order_.rend(); ++it) {
      Node<T>& node = **it;
      if (node.grad.empty() || !node.backprop) continue;
      node.backprop(node);
      node.grad = BasicTensor<T>();
    }
  }
  GradMap<T> grads;
  for (auto& p : params_) {
    grads[p->param_name] = p->grad.empty() ? BasicTensor<T>(p->value.shape()) : std::move(p->grad);
    p->grad = BasicTensor<T>();
  }
  order_.clear();
  return grads;
}

// ---------------------------------------------------------------------------

template <class T>
Var<T> conv3d(Tape<T>& tape, const Var<T>& x, const Var<T>& w, const Var<T>* bias, Triple stride, Triple pad) {
  const BasicTensor<T>* b = bias ? &bias->value() : nullptr;
  auto y = k::conv3d(x.value(), w.value(), b, stride, pad);
  std::vector<Var<T>> inputs{x, w};
  if (bias) inputs.push_back(*bias);
  const bool has_bias = bias != nullptr;
  return tape.record(std::move(y), inputs, [stride, pad, has_bias](Node<T>& self) {
    auto& px = *self.parents[0];
    auto& pw = *self.parents[1];
    auto g = k::conv3d_backward(px.value, pw.value, has_bias, self.grad, stride, pad);
    accumulate(px, g.dx);
    accumulate(pw, g.dw);
    if (has_bias) accumulate(*self.parents[2], g.db);
  });
}

template <class T>
Var<T> transpose_conv3d(Tape<T>& tape, const Var<T>& x, const Var<T>& w, const Var<T>* bias, Triple stride) {
  const BasicTensor<T>* b = bias ? &bias->value() : nullptr;
  auto y = k::transpose_conv3d(x.value(), w.value(), b, stride);
  std::vector<Var<T>> inputs{x, w};
  if (bias) inputs.push_back(*bias);
  const bool has_bias = bias != nullptr;
  return tape.record(std::move(y), inputs, [stride, has_bias](Node<T>& self) {
    auto& px = *self.parents[0];
    auto& pw = *self.parents[1];
    auto g = k::transpose_conv3d_backward(px.value, pw.value, has_bias, self.grad, stride);
    accumulate(px, g.dx);
    accumulate(pw, g.dw);
    if (has_bias) accumulate(*self.parents[2], g.db);
  });
}

template <class T>
Var<T> instance_norm(Tape<T>& tape, const Var<T>& x, const Var<T>& gamma, const Var<T>& beta, double eps) {
  auto fwd = std::make_shared<k::NormForward<T>>(k::instance_norm(x.value(), gamma.value(), beta.value(), eps));
  BasicTensor<T> y = tape.recording() ? fwd->y : std::move(fwd->y);
  return tape.record(std::move(y), {x, gamma, beta}, [fwd](Node<T>& self) {
    auto g = k::instance_norm_backward(*fwd, self.parents[1]->value, self.grad);
    accumulate(*self.parents[0], g.dx);
    accumulate(*self.parents[1], g.dgamma);
    accumulate(*self.parents[2], g.dbeta);
  });
}

template <class T>
Var<T> leaky_relu(Tape<T>& tape, const Var<T>& x, double slope) {
  return tape.record(k::leaky_relu(x.value(), slope), {x}, [slope](Node<T>& self) {
    auto& px = *self.parents[0];
    accumulate(px, k::leaky_relu_backward(px.value, self.grad, slope));
  });
}

template <class T>
Var<T> add(Tape<T>& tape, const Var<T>& a, const Var<T>& b) {
  return tape.record(k::add(a.value(), b.value()), {a, b}, [](Node<T>& self) {
    accumulate(*self.parents[0], self.grad);
    accumulate(*self.parents[1], self.grad);
  });
}

template <class T>
Var<T> mul(Tape<T>& tape, const Var<T>& a, const Var<T>& b) {
  return tape.record(k::mul(a.value(), b.value()), {a, b}, [](Node<T>& self) {
    auto& pa = *self.parents[0];
    auto& pb = *self.parents[1];
    if (pa.requires_grad) accumulate(pa, k::mul(self.grad, pb.value));
    if (pb.requires_grad) accumulate(pb, k::mul(self.grad, pa.value));
  });
}

template <class T>
Var<T> scale(Tape<T>& tape, const Var<T>& x, double factor) {
  BasicTensor<T> y = x.value();
  for (auto& v : y.data()) v = static_cast<T>(v * factor);
  return tape.record(std::move(y), {x}, [factor](Node<T>& self) {
    BasicTensor<T> g = self.grad;
    for (auto& v : g.data()) v = static_cast<T>(v * factor);
    accumulate(*self.parents[0], g);
  });
}

template <class T>
Var<T> sum(Tape<T>& tape, const Var<T>& x) {
  double acc = 0.0;
  for (auto v : x.value().data()) acc += v;
  return tape.record(BasicTensor<T>::scalar(static_cast<T>(acc)), {x}, [](Node<T>& self) {
    auto& px = *self.parents[0];
    accumulate(px, BasicTensor<T>(px.value.shape(), self.grad[0]));
  });
}

template <class T>
Var<T> upsample_nearest(Tape<T>& tape, const Var<T>& x, Triple factors) {
  return tape.record(k::upsample_nearest(x.value(), factors), {x}, [factors](Node<T>& self) {
    accumulate(*self.parents[0], k::upsample_nearest_backward(self.grad, factors));
  });
}

template <class T>
Var<T> upsample_trilinear(Tape<T>& tape, const Var<T>& x, Triple factors) {
  return tape.record(k::upsample_trilinear(x.value(), factors), {x}, [factors](Node<T>& self) {
    auto& px = *self.parents[0];
    accumulate(px, k::upsample_trilinear_backward(self.grad, px.value.shape(), factors));
  });
}

template <class T>
Var<T> concat_channels(Tape<T>& tape, const Var<T>& a, const Var<T>& b) {
  const int64_t ca = a.value().dim(1);
  return tape.record(k::concat_channels(a.value(), b.value()), {a, b}, [ca](Node<T>& self) {
    const int64_t total = self.grad.dim(1);
    auto& pa = *self.parents[0];
    auto& pb = *self.parents[1];
    if (pa.requires_grad) accumulate(pa, k::slice_channels(self.grad, 0, ca));
    if (pb.requires_grad) accumulate(pb, k::slice_channels(self.grad, ca, total - ca));
  });
}

template <class T>
Var<T> softmax_channels(Tape<T>& tape, const Var<T>& logits) {
  return tape.record(k::softmax_channels(logits.value()), {logits}, [](Node<T>& self) {
    accumulate(*self.parents[0], k::softmax_channels_backward(self.value, self.grad));
  });
}

template <class T>
Var<T> soft_dice_loss(Tape<T>& tape, const Var<T>& probs, const BasicTensor<T>& onehot, double smooth) {
  const double loss = k::soft_dice_loss(probs.value(), onehot, smooth);
  auto target = std::make_shared<BasicTensor<T>>(onehot);
  return tape.record(BasicTensor<T>::scalar(static_cast<T>(loss)), {probs}, [target, smooth](Node<T>& self) {
    auto& pp = *self.parents[0];
    accumulate(pp, k::soft_dice_loss_backward(pp.value, *target, smooth, static_cast<double>(self.grad[0])));
  });
}

template <class T>
Var<T> cross_entropy(Tape<T>& tape, const Var<T>& logits, const std::vector<int32_t>& labels) {
  const double loss = k::cross_entropy(logits.value(), labels);
  auto target = std::make_shared<std::vector<int32_t>>(labels);
  return tape.record(BasicTensor<T>::scalar(static_cast<T>(loss)), {logits}, [target](Node<T>& self) {
    auto& pl = *self.parents[0];
    accumulate(pl, k::cross_entropy_backward(pl.value, *target, static_cast<double>(self.grad[0])));
  });
}

template <class T>
Var<T> dice_ce_loss(Tape<T>& tape, const Var<T>& logits, const std::vector<int32_t>& labels) {
  auto probs = softmax_channels(tape, logits);
  auto dice = soft_dice_loss(tape, probs, k::one_hot<T>(labels, logits.shape()));
  auto ce = cross_entropy(tape, logits, labels);
  return add(tape, dice, ce);
}

#define STUNET_INSTANTIATE(T)                                                                            \
  template class Tape<T>;                                                                                \
  template void accumulate(Node<T>&, const BasicTensor<T>&);                                             \
  template Var<T> conv3d(Tape<T>&, const Var<T>&, const Var<T>&, const Var<T>*, Triple, Triple);         \
  template Var<T> transpose_conv3d(Tape<T>&, const Var<T>&, const Var<T>&, const Var<T>*, Triple);       \
  template Var<T> instance_norm(Tape<T>&, const Var<T>&, const Var<T>&, const Var<T>&, double);          \
  template Var<T> leaky_relu(Tape<T>&, const Var<T>&, double);                                           \
  template Var<T> add(Tape<T>&, const Var<T>&, const Var<T>&);                                           \
  template Var<T> mul(Tape<T>&, const Var<T>&, const Var<T>&);                                           \
  template Var<T> scale(Tape<T>&, const Var<T>&, double);                                                \
  template Var<T> sum(Tape<T>&, const Var<T>&);                                                          \
  template Var<T> upsample_nearest(Tape<T>&, const Var<T>&, Triple);                                     \
  template Var<T> upsample_trilinear(Tape<T>&, const Var<T>&, Triple);                                   \
  template Var<T> concat_channels(Tape<T>&, const Var<T>&, const Var<T>&);                               \
  template Var<T> softmax_channels(Tape<T>&, const Var<T>&);                                             \
  template Var<T> soft_dice_loss(Tape<T>&, const Var<T>&, const BasicTensor<T>&, double);                \
  template Var<T> cross_entropy(Tape<T>&, const Var<T>&, const std::vector<int32_t>&);                   \
  template Var<T> dice_ce_loss(Tape<T>&, const Var<T>&, const std::vector<int32_t>&);

STUNET_INSTANTIATE(float)
STUNET_INSTANTIATE(double)

#undef STUNET_INSTANTIATE

}  // namespace stunet::ad
