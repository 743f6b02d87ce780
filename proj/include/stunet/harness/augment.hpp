#pragma once

#include <random>

#include "stunet/harness/volume.hpp"

namespace stunet {

using Rng = std::mt19937_64;

struct AugmentOptions {
  bool mirror = true;
  bool brightness = true;
  bool gamma = true;
  bool scaling = true;

  double mirror_prob = 0.5;  // per axis
  double brightness_prob = 0.15;
  double brightness_sigma = 0.1;
  double gamma_prob = 0.3;
  double gamma_min = 0.7;
  double gamma_max = 1.5;
  double scaling_prob = 0.2;
  double scale_min = 0.85;
  double scale_max = 1.25;
};

// Flips image (C x D x H x W) and labels together along spatial axis 0..2.
void mirror(Tensor& image, LabelMap& labels, int axis);
void mirror_aug(Tensor& image, LabelMap& labels, Rng& rng, double prob = 0.5);

// image += delta for every element.
void brightness_shift(Tensor& image, float delta);
void brightness_aug(Tensor& image, Rng& rng, double prob, double sigma);

// Per channel: rescale to [0, 1] by the channel's range, raise to `gamma`,
// map back to the original range.
void apply_gamma(Tensor& image, double gamma);
void gamma_aug(Tensor& image, Rng& rng, double prob, double lo, double hi);

// Zooms about the centre by `factor` (> 1 enlarges), keeping the extent:
// trilinear for the image, nearest for labels, zero / background outside.
void apply_scaling(Tensor& image, LabelMap& labels, double factor);
void scaling_aug(Tensor& image, LabelMap& labels, Rng& rng, double prob, double lo, double hi);

// Applies every enabled augmentation in a fixed order.
void augment(Tensor& image, LabelMap& labels, Rng& rng, const AugmentOptions& options);

}  // namespace stunet
