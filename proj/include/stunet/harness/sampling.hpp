#pragma once

#include <vector>

#include "stunet/harness/augment.hpp"
#include "stunet/harness/volume.hpp"

namespace stunet {

struct Batch {
  Tensor image;                  // N x C x patch
  std::vector<LabelMap> labels;  // one per batch element
};

// Random patch origin inside `extent` (centred when the volume is smaller).
Triple random_origin(Triple extent, Triple patch, Rng& rng);

// Origin of a patch containing a randomly chosen foreground voxel of
// `labels`; falls back to random_origin when there is no foreground.
Triple foreground_origin(const LabelMap& labels, Triple patch, Rng& rng);

// Draws batch_size patches from random volumes. Element 0 is forced to
// contain foreground (before augmentation). With `augment` null, patches are
// returned as cropped.
Batch sample_batch(const std::vector<Volume>& dataset, Triple patch, int batch_size, Rng& rng,
                   const AugmentOptions* augment);

}  // namespace stunet
