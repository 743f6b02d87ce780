#pragma once

#include <array>
#include <cstdint>
#include <vector>

#include "stunet/common/triple.hpp"
#include "stunet/tensor/tensor.hpp"

namespace stunet {

// Integer label map in D x H x W order.
struct LabelMap {
  Triple extent{0, 0, 0};
  std::vector<int32_t> data;

  LabelMap() = default;
  explicit LabelMap(Triple e, int32_t fill = 0) : extent(e), data(static_cast<size_t>(volume_of(e)), fill) {}

  int64_t index(int d, int h, int w) const {
    return (static_cast<int64_t>(d) * extent[1] + h) * extent[2] + w;
  }
  int32_t& at(int d, int h, int w) { return data[static_cast<size_t>(index(d, h, w))]; }
  int32_t at(int d, int h, int w) const { return data[static_cast<size_t>(index(d, h, w))]; }
  int64_t count(int32_t label) const;

  bool operator==(const LabelMap&) const = default;
};

struct Volume {
  Tensor image;  // C x D x H x W
  LabelMap labels;
  std::array<double, 3> spacing{1.5, 1.5, 1.5};
  int num_classes = 2;

  int channels() const { return static_cast<int>(image.dim(0)); }
  Triple extent() const { return labels.extent; }

  // Throws InvalidInput when image and labels disagree or a label is out of range.
  void validate() const;
};

// Channel-wise crop of `image` (C x D x H x W) starting at `origin`; voxels
// outside the source are zero.
Tensor crop_image(const Tensor& image, Triple origin, Triple size);
LabelMap crop_labels(const LabelMap& labels, Triple origin, Triple size);

// Per-voxel argmax over the class axis of K x D x H x W logits
// (ties go to the lower class).
LabelMap argmax_labels(const Tensor& logits);

// Every `factor`-th voxel per axis, as used to supervise low-resolution heads.
LabelMap subsample_labels(const LabelMap& labels, Triple factor);

}  // namespace stunet
