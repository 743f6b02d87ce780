#include "stunet/harness/sampling.hpp"

#include <algorithm>
#include <cstring>

#include "stunet/common/error.hpp"

namespace stunet {

Triple random_origin(Triple extent, Triple patch, Rng& rng) {
  Triple o;
  for (int a = 0; a < 3; ++a) {
    if (extent[a] <= patch[a]) {
      o[a] = -(patch[a] - extent[a]) / 2;
    } else {
      o[a] = std::uniform_int_distribution<int>(0, extent[a] - patch[a])(rng);
    }
  }
  return o;
}

Triple foreground_origin(const LabelMap& labels, Triple patch, Rng& rng) {
  const int64_t fg = static_cast<int64_t>(labels.data.size()) - labels.count(0);
  if (fg == 0) return random_origin(labels.extent, patch, rng);
  int64_t pick = std::uniform_int_distribution<int64_t>(0, fg - 1)(rng);
  int64_t index = 0;
  for (size_t i = 0; i < labels.data.size(); ++i) {
    if (labels.data[i] != 0 && pick-- == 0) {
      index = static_cast<int64_t>(i);
      break;
    }
  }
  const int64_t hw = static_cast<int64_t>(labels.extent[1]) * labels.extent[2];
  const Triple voxel{static_cast<int>(index / hw), static_cast<int>((index / labels.extent[2]) % labels.extent[1]),
                     static_cast<int>(index % labels.extent[2])};
  Triple o;
  for (int a = 0; a < 3; ++a) {
    if (labels.extent[a] <= patch[a]) {
      o[a] = -(patch[a] - labels.extent[a]) / 2;
      continue;
    }
    const int offset = std::uniform_int_distribution<int>(0, patch[a] - 1)(rng);
    o[a] = std::clamp(voxel[a] - offset, 0, labels.extent[a] - patch[a]);
  }
  return o;
}

Batch sample_batch(const std::vector<Volume>& dataset, Triple patch, int batch_size, Rng& rng,
                   const AugmentOptions* augment) {
  if (dataset.empty()) throw InvalidInput("cannot sample from an empty dataset");
  if (batch_size < 1) throw InvalidInput("batch size must be positive");
  const int64_t C = dataset.front().channels();
  const int64_t P = volume_of(patch);
  Batch batch;
  batch.image = Tensor({batch_size, C, patch[0], patch[1], patch[2]});
  for (int b = 0; b < batch_size; ++b) {
    const size_t pick = std::uniform_int_distribution<size_t>(0, dataset.size() - 1)(rng);
    const Volume& v = dataset[pick];
    if (v.channels() != C) throw InvalidInput("volumes in one dataset must share the channel count");
    const Triple origin = b == 0 ? foreground_origin(v.labels, patch, rng) : random_origin(v.extent(), patch, rng);
    Tensor img = crop_image(v.image, origin, patch);
    LabelMap lab = crop_labels(v.labels, origin, patch);
    if (augment) stunet::augment(img, lab, rng, *augment);
    std::memcpy(batch.image.ptr() + b * C * P, img.ptr(), sizeof(float) * static_cast<size_t>(C * P));
    batch.labels.push_back(std::move(lab));
  }
  return batch;
}

}  // namespace stunet
