#pragma once

#include <functional>
#include <vector>

#include "stunet/arch/graph.hpp"
#include "stunet/harness/volume.hpp"
#include "stunet/weights/store.hpp"

namespace stunet {

struct InferOptions {
  double overlap = 0.5;
  bool gaussian = true;  // false: every window voxel weighs 1
  double sigma_scale = 1.0 / 8.0;
};

// Window start positions along one axis (nnU-Net's step rule): the first
// window starts at 0, the last ends at `size`, intermediate starts are evenly
// spaced with a target step of patch * (1 - overlap).
std::vector<int> window_starts(int size, int patch, double overlap);

// Separable Gaussian centred on the patch (sigma = patch * sigma_scale per
// axis), scaled to a maximum of 1; zeros are lifted to the smallest nonzero
// value. Shape D x H x W.
Tensor importance_map(Triple patch, double sigma_scale);

// Maps a 1 x C x patch image to 1 x K x patch logits.
using PatchPredictor = std::function<Tensor(const Tensor&)>;

// Weighted average of per-window logits over a C x D x H x W image,
// returned as K x D x H x W. Extents smaller than the patch are zero-padded
// symmetrically and cropped back afterwards.
Tensor sliding_window_logits(const Tensor& image, Triple patch, int num_classes, const PatchPredictor& predictor,
                             const InferOptions& options = {});

// Runs the network on every window and takes the per-voxel argmax.
// Throws InvalidInput when the patch is not divisible by the network's
// cumulative down-sampling factor.
LabelMap sliding_window_infer(const NetworkGraph& graph, const WeightStore& store, const Tensor& image, Triple patch,
                              const InferOptions& options = {});

}  // namespace stunet
