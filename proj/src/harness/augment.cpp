#include "stunet/harness/augment.hpp"

#include <algorithm>
#include <cmath>

#include "stunet/common/error.hpp"

namespace stunet {

namespace {

Triple spatial(const Tensor& image) {
  if (image.rank() != 4) throw InvalidInput("augmentations expect C x D x H x W images");
  return {static_cast<int>(image.dim(1)), static_cast<int>(image.dim(2)), static_cast<int>(image.dim(3))};
}

bool draw(Rng& rng, double prob) { return std::uniform_real_distribution<double>(0.0, 1.0)(rng) < prob; }

}  // namespace

void mirror(Tensor& image, LabelMap& labels, int axis) {
  const Triple e = spatial(image);
  if (e != labels.extent) throw InvalidInput("image and labels differ in extent");
  if (axis < 0 || axis > 2) throw InvalidInput("mirror axis must be 0, 1 or 2");
  const int64_t C = image.dim(0);
  const int64_t V = volume_of(e);
  for (int d = 0; d < e[0]; ++d)
    for (int h = 0; h < e[1]; ++h)
      for (int w = 0; w < e[2]; ++w) {
        int md = d, mh = h, mw = w;
        if (axis == 0) md = e[0] - 1 - d;
        if (axis == 1) mh = e[1] - 1 - h;
        if (axis == 2) mw = e[2] - 1 - w;
        const int64_t a = labels.index(d, h, w);
        const int64_t b = labels.index(md, mh, mw);
        if (a >= b) continue;
        std::swap(labels.data[static_cast<size_t>(a)], labels.data[static_cast<size_t>(b)]);
        for (int64_t c = 0; c < C; ++c) std::swap(image[c * V + a], image[c * V + b]);
      }
}

void mirror_aug(Tensor& image, LabelMap& labels, Rng& rng, double prob) {
  for (int axis = 0; axis < 3; ++axis) {
    if (draw(rng, prob)) mirror(image, labels, axis);
  }
}

void brightness_shift(Tensor& image, float delta) {
  for (auto& v : image.data()) v += delta;
}

void brightness_aug(Tensor& image, Rng& rng, double prob, double sigma) {
  const int64_t C = image.dim(0);
  const int64_t V = image.numel() / C;
  for (int64_t c = 0; c < C; ++c) {
    if (!draw(rng, prob)) continue;
    const float delta = static_cast<float>(std::normal_distribution<double>(0.0, sigma)(rng));
    float* p = image.ptr() + c * V;
    for (int64_t i = 0; i < V; ++i) p[i] += delta;
  }
}

void apply_gamma(Tensor& image, double gamma) {
  if (gamma <= 0) throw InvalidInput("gamma must be positive");
  const int64_t C = image.dim(0);
  const int64_t V = image.numel() / C;
  for (int64_t c = 0; c < C; ++c) {
    float* p = image.ptr() + c * V;
    const auto [lo_it, hi_it] = std::minmax_element(p, p + V);
    const double lo = *lo_it;
    const double range = static_cast<double>(*hi_it) - lo;
    if (range <= 0) continue;
    for (int64_t i = 0; i < V; ++i) {
      const double u = (p[i] - lo) / range;
      p[i] = static_cast<float>(std::pow(u, gamma) * range + lo);
    }
  }
}

void gamma_aug(Tensor& image, Rng& rng, double prob, double lo, double hi) {
  if (!draw(rng, prob)) return;
  std::uniform_real_distribution<double> u(0.0, 1.0);
  const double mid = std::max(lo, 1.0);
  const double g = (u(rng) < 0.5 && lo < 1.0) ? lo + (1.0 - lo) * u(rng) : mid + (hi - mid) * u(rng);
  apply_gamma(image, g);
}

void apply_scaling(Tensor& image, LabelMap& labels, double factor) {
  if (factor <= 0) throw InvalidInput("scale factor must be positive");
  const Triple e = spatial(image);
  if (e != labels.extent) throw InvalidInput("image and labels differ in extent");
  const int64_t C = image.dim(0);
  const int64_t V = volume_of(e);
  Tensor out(image.shape());
  LabelMap lab(e);
  double centre[3];
  for (int a = 0; a < 3; ++a) centre[a] = (e[a] - 1) / 2.0;
  for (int d = 0; d < e[0]; ++d)
    for (int h = 0; h < e[1]; ++h)
      for (int w = 0; w < e[2]; ++w) {
        const double src[3] = {centre[0] + (d - centre[0]) / factor, centre[1] + (h - centre[1]) / factor,
                               centre[2] + (w - centre[2]) / factor};
        const int64_t o = labels.index(d, h, w);
        int nearest[3];
        bool inside = true;
        for (int a = 0; a < 3; ++a) {
          nearest[a] = static_cast<int>(std::lround(src[a]));
          if (nearest[a] < 0 || nearest[a] >= e[a]) inside = false;
        }
        if (inside) lab.data[static_cast<size_t>(o)] = labels.at(nearest[0], nearest[1], nearest[2]);
        int i0[3];
        double t[3];
        for (int a = 0; a < 3; ++a) {
          i0[a] = static_cast<int>(std::floor(src[a]));
          t[a] = src[a] - i0[a];
        }
        for (int64_t c = 0; c < C; ++c) {
          double acc = 0.0;
          for (int corner = 0; corner < 8; ++corner) {
            int idx[3];
            double wgt = 1.0;
            bool ok = true;
            for (int a = 0; a < 3; ++a) {
              const int bit = (corner >> a) & 1;
              idx[a] = i0[a] + bit;
              wgt *= bit ? t[a] : 1.0 - t[a];
              if (idx[a] < 0 || idx[a] >= e[a]) ok = false;
            }
            if (ok && wgt != 0.0) acc += wgt * image[c * V + labels.index(idx[0], idx[1], idx[2])];
          }
          out[c * V + o] = static_cast<float>(acc);
        }
      }
  image = std::move(out);
  labels = std::move(lab);
}

void scaling_aug(Tensor& image, LabelMap& labels, Rng& rng, double prob, double lo, double hi) {
  if (!draw(rng, prob)) return;
  apply_scaling(image, labels, std::uniform_real_distribution<double>(lo, hi)(rng));
}

void augment(Tensor& image, LabelMap& labels, Rng& rng, const AugmentOptions& o) {
  if (o.scaling) scaling_aug(image, labels, rng, o.scaling_prob, o.scale_min, o.scale_max);
  if (o.brightness) brightness_aug(image, rng, o.brightness_prob, o.brightness_sigma);
  if (o.gamma) gamma_aug(image, rng, o.gamma_prob, o.gamma_min, o.gamma_max);
  if (o.mirror) mirror_aug(image, labels, rng, o.mirror_prob);
}

}  // namespace stunet
