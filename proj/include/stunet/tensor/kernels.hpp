#pragma once

// Raw forward/backward kernels. Everything here is a pure function of its
// arguments; the tape in autograd.hpp wires them together. Every kernel is
// instantiated for float (production) and double (gradient-check shadow).

#include <cstdint>

#include "stunet/common/triple.hpp"
#include "stunet/tensor/tensor.hpp"

namespace stunet::kernels {

inline constexpr double kDefaultSlope = 0.01;
inline constexpr double kNormEps = 1e-5;
inline constexpr double kDiceSmooth = 1e-5;

// Output extent of a padded strided convolution along one axis.
int conv_out_extent(int in, int kernel, int stride, int pad);

// ---- conv3d ----------------------------------------------------------------

template <class T>
BasicTensor<T> conv3d(const BasicTensor<T>& x, const BasicTensor<T>& w, const BasicTensor<T>* bias,
                      Triple stride, Triple pad);

template <class T>
struct Conv3dGrads {
  BasicTensor<T> dx;
  BasicTensor<T> dw;
  BasicTensor<T> db;  // empty when there is no bias
};

template <class T>
Conv3dGrads<T> conv3d_backward(const BasicTensor<T>& x, const BasicTensor<T>& w, bool has_bias,
                               const BasicTensor<T>& dy, Triple stride, Triple pad);

// ---- transpose conv3d (kernel == stride, weight Cin, Cout, kD, kH, kW) -----

template <class T>
BasicTensor<T> transpose_conv3d(const BasicTensor<T>& x, const BasicTensor<T>& w,
                                const BasicTensor<T>* bias, Triple stride);

template <class T>
Conv3dGrads<T> transpose_conv3d_backward(const BasicTensor<T>& x, const BasicTensor<T>& w,
                                         bool has_bias, const BasicTensor<T>& dy, Triple stride);

// ---- instance norm ---------------------------------------------------------

template <class T>
struct NormForward {
  BasicTensor<T> y;
  BasicTensor<T> xhat;          // normalized input, kept for backward
  std::vector<double> inv_std;  // per (n, c)
};

template <class T>
NormForward<T> instance_norm(const BasicTensor<T>& x, const BasicTensor<T>& gamma,
                             const BasicTensor<T>& beta, double eps);

template <class T>
struct NormGrads {
  BasicTensor<T> dx;
  BasicTensor<T> dgamma;
  BasicTensor<T> dbeta;
};

template <class T>
NormGrads<T> instance_norm_backward(const NormForward<T>& fwd, const BasicTensor<T>& gamma,
                                    const BasicTensor<T>& dy);

// ---- pointwise -------------------------------------------------------------

template <class T>
BasicTensor<T> leaky_relu(const BasicTensor<T>& x, double slope);
template <class T>
BasicTensor<T> leaky_relu_backward(const BasicTensor<T>& x, const BasicTensor<T>& dy, double slope);

template <class T>
BasicTensor<T> add(const BasicTensor<T>& a, const BasicTensor<T>& b);
template <class T>
BasicTensor<T> mul(const BasicTensor<T>& a, const BasicTensor<T>& b);

// ---- resampling ------------------------------------------------------------

template <class T>
BasicTensor<T> upsample_nearest(const BasicTensor<T>& x, Triple factors);
template <class T>
BasicTensor<T> upsample_nearest_backward(const BasicTensor<T>& dy, Triple factors);

// Half-pixel (align_corners = false) linear interpolation per axis.
template <class T>
BasicTensor<T> upsample_trilinear(const BasicTensor<T>& x, Triple factors);
template <class T>
BasicTensor<T> upsample_trilinear_backward(const BasicTensor<T>& dy, const Shape& x_shape,
                                           Triple factors);

// ---- channel ops -----------------------------------------------------------

template <class T>
BasicTensor<T> concat_channels(const BasicTensor<T>& a, const BasicTensor<T>& b);

// Copies channels [begin, begin + count) of x.
template <class T>
BasicTensor<T> slice_channels(const BasicTensor<T>& x, int64_t begin, int64_t count);

template <class T>
BasicTensor<T> softmax_channels(const BasicTensor<T>& logits);

// ---- losses ----------------------------------------------------------------

// Labels are class ids stored per voxel, shape (N, D, H, W) flattened to
// match the logits' spatial layout.
template <class T>
BasicTensor<T> one_hot(const std::vector<int32_t>& labels, const Shape& logits_shape);

// Batch soft Dice over foreground classes (1..K-1), pooled across the batch:
// 1 - mean_k (2 sum(p_k y_k) + s) / (sum p_k + sum y_k + s).
template <class T>
double soft_dice_loss(const BasicTensor<T>& probs, const BasicTensor<T>& onehot, double smooth);
template <class T>
BasicTensor<T> soft_dice_loss_backward(const BasicTensor<T>& probs, const BasicTensor<T>& onehot,
                                       double smooth, double upstream);

// Backward of softmax given dL/dp, returns dL/dlogits.
template <class T>
BasicTensor<T> softmax_channels_backward(const BasicTensor<T>& probs, const BasicTensor<T>& dprobs);

// Mean voxel-wise cross entropy from raw logits.
template <class T>
double cross_entropy(const BasicTensor<T>& logits, const std::vector<int32_t>& labels);
template <class T>
BasicTensor<T> cross_entropy_backward(const BasicTensor<T>& logits,
                                      const std::vector<int32_t>& labels, double upstream);

}  // namespace stunet::kernels
