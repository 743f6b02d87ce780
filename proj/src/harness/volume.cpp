#include "stunet/harness/volume.hpp"

#include <algorithm>

#include "stunet/common/error.hpp"

namespace stunet {

int64_t LabelMap::count(int32_t label) const {
  return std::count(data.begin(), data.end(), label);
}

void Volume::validate() const {
  if (image.rank() != 4) throw InvalidInput("volume image must be C x D x H x W, got " + shape_to_string(image.shape()));
  for (int a = 0; a < 3; ++a) {
    if (image.dim(1 + a) != labels.extent[a]) {
      throw InvalidInput("image " + shape_to_string(image.shape()) + " and labels " + to_string(labels.extent) +
                         " differ in spatial extent");
    }
  }
  if (static_cast<int64_t>(labels.data.size()) != volume_of(labels.extent)) {
    throw InvalidInput("label map size does not match its extent");
  }
  if (num_classes < 2) throw InvalidInput("a volume needs at least 2 classes");
  for (int32_t v : labels.data) {
    if (v < 0 || v >= num_classes) {
      throw InvalidInput("label " + std::to_string(v) + " outside [0, " + std::to_string(num_classes) + ")");
    }
  }
}

Tensor crop_image(const Tensor& image, Triple origin, Triple size) {
  const int64_t C = image.dim(0);
  const int64_t D = image.dim(1), H = image.dim(2), W = image.dim(3);
  Tensor out({C, size[0], size[1], size[2]});
  for (int64_t c = 0; c < C; ++c)
    for (int d = 0; d < size[0]; ++d) {
      const int64_t sd = origin[0] + d;
      if (sd < 0 || sd >= D) continue;
      for (int h = 0; h < size[1]; ++h) {
        const int64_t sh = origin[1] + h;
        if (sh < 0 || sh >= H) continue;
        for (int w = 0; w < size[2]; ++w) {
          const int64_t sw = origin[2] + w;
          if (sw < 0 || sw >= W) continue;
          out[((c * size[0] + d) * size[1] + h) * size[2] + w] = image[((c * D + sd) * H + sh) * W + sw];
        }
      }
    }
  return out;
}

LabelMap crop_labels(const LabelMap& labels, Triple origin, Triple size) {
  LabelMap out(size);
  for (int d = 0; d < size[0]; ++d) {
    const int sd = origin[0] + d;
    if (sd < 0 || sd >= labels.extent[0]) continue;
    for (int h = 0; h < size[1]; ++h) {
      const int sh = origin[1] + h;
      if (sh < 0 || sh >= labels.extent[1]) continue;
      for (int w = 0; w < size[2]; ++w) {
        const int sw = origin[2] + w;
        if (sw < 0 || sw >= labels.extent[2]) continue;
        out.at(d, h, w) = labels.at(sd, sh, sw);
      }
    }
  }
  return out;
}

LabelMap argmax_labels(const Tensor& logits) {
  if (logits.rank() != 4) throw InvalidInput("argmax expects K x D x H x W logits");
  const int64_t K = logits.dim(0);
  LabelMap out({static_cast<int>(logits.dim(1)), static_cast<int>(logits.dim(2)), static_cast<int>(logits.dim(3))});
  const int64_t V = volume_of(out.extent);
  for (int64_t v = 0; v < V; ++v) {
    int32_t best = 0;
    float best_val = logits[v];
    for (int64_t k = 1; k < K; ++k) {
      const float val = logits[k * V + v];
      if (val > best_val) {
        best_val = val;
        best = static_cast<int32_t>(k);
      }
    }
    out.data[static_cast<size_t>(v)] = best;
  }
  return out;
}

LabelMap subsample_labels(const LabelMap& labels, Triple factor) {
  Triple e;
  for (int a = 0; a < 3; ++a) {
    if (factor[a] < 1 || labels.extent[a] % factor[a] != 0) {
      throw InvalidInput("label extent " + to_string(labels.extent) + " not divisible by " + to_string(factor));
    }
    e[a] = labels.extent[a] / factor[a];
  }
  LabelMap out(e);
  for (int d = 0; d < e[0]; ++d)
    for (int h = 0; h < e[1]; ++h)
      for (int w = 0; w < e[2]; ++w) out.at(d, h, w) = labels.at(d * factor[0], h * factor[1], w * factor[2]);
  return out;
}

}  // namespace stunet
