#include "stunet/harness/infer.hpp"

#include <cmath>

#include "stunet/arch/forward.hpp"
#include "stunet/common/error.hpp"

namespace stunet {

std::vector<int> window_starts(int size, int patch, double overlap) {
  if (patch < 1 || size < patch) throw InvalidInput("window patch must lie within the volume");
  if (overlap < 0.0 || overlap >= 1.0) throw InvalidInput("overlap must lie in [0, 1)");
  const double target_step = patch * (1.0 - overlap);
  const int num = static_cast<int>(std::ceil((size - patch) / target_step)) + 1;
  std::vector<int> starts;
  if (num == 1) return {0};
  const double step = static_cast<double>(size - patch) / (num - 1);
  for (int i = 0; i < num; ++i) starts.push_back(static_cast<int>(std::nearbyint(step * i)));
  return starts;
}

Tensor importance_map(Triple patch, double sigma_scale) {
  std::vector<double> axis[3];
  for (int a = 0; a < 3; ++a) {
    const double c = patch[a] / 2;
    const double sigma = patch[a] * sigma_scale;
    for (int i = 0; i < patch[a]; ++i) {
      const double x = i - c;
      axis[a].push_back(std::exp(-x * x / (2.0 * sigma * sigma)));
    }
  }
  Tensor m({patch[0], patch[1], patch[2]});
  float peak = 0.0f;
  int64_t n = 0;
  for (int d = 0; d < patch[0]; ++d)
    for (int h = 0; h < patch[1]; ++h)
      for (int w = 0; w < patch[2]; ++w) {
        m[n] = static_cast<float>(axis[0][d] * axis[1][h] * axis[2][w]);
        peak = std::max(peak, m[n]);
        ++n;
      }
  float smallest = 1.0f;
  for (auto& v : m.data()) {
    v /= peak;
    if (v > 0.0f) smallest = std::min(smallest, v);
  }
  for (auto& v : m.data()) {
    if (v == 0.0f) v = smallest;
  }
  return m;
}

Tensor sliding_window_logits(const Tensor& image, Triple patch, int num_classes, const PatchPredictor& predictor,
                             const InferOptions& options) {
  if (image.rank() != 4) throw InvalidInput("sliding-window input must be C x D x H x W");
  if (num_classes < 1) throw InvalidInput("num_classes must be positive");
  const int64_t C = image.dim(0);
  const Triple extent{static_cast<int>(image.dim(1)), static_cast<int>(image.dim(2)), static_cast<int>(image.dim(3))};
  Triple padded, before;
  for (int a = 0; a < 3; ++a) {
    if (patch[a] < 1) throw InvalidInput("patch extents must be positive");
    padded[a] = std::max(extent[a], patch[a]);
    before[a] = (padded[a] - extent[a]) / 2;
  }
  const Triple neg{-before[0], -before[1], -before[2]};
  const Tensor work = padded == extent ? image : crop_image(image, neg, padded);

  const Tensor weight = options.gaussian ? importance_map(patch, options.sigma_scale)
                                         : Tensor({patch[0], patch[1], patch[2]}, 1.0f);
  const int64_t V = volume_of(padded);
  const int64_t P = volume_of(patch);
  std::vector<double> acc(static_cast<size_t>(num_classes * V), 0.0);
  std::vector<double> norm(static_cast<size_t>(V), 0.0);

  const auto sd = window_starts(padded[0], patch[0], options.overlap);
  const auto sh = window_starts(padded[1], patch[1], options.overlap);
  const auto sw = window_starts(padded[2], patch[2], options.overlap);
  for (int z : sd)
    for (int y : sh)
      for (int x : sw) {
        Tensor window = crop_image(work, {z, y, x}, patch).reshaped({1, C, patch[0], patch[1], patch[2]});
        const Tensor logits = predictor(window);
        if (logits.shape() != Shape{1, num_classes, patch[0], patch[1], patch[2]}) {
          throw InvalidInput("predictor returned " + shape_to_string(logits.shape()) + " for a window of " +
                             to_string(patch));
        }
        int64_t p = 0;
        for (int d = 0; d < patch[0]; ++d)
          for (int h = 0; h < patch[1]; ++h)
            for (int w = 0; w < patch[2]; ++w, ++p) {
              const int64_t v = (static_cast<int64_t>(z + d) * padded[1] + (y + h)) * padded[2] + (x + w);
              const double wt = weight[p];
              norm[static_cast<size_t>(v)] += wt;
              for (int k = 0; k < num_classes; ++k) acc[static_cast<size_t>(k * V + v)] += wt * logits[k * P + p];
            }
      }

  Tensor out({num_classes, extent[0], extent[1], extent[2]});
  const int64_t E = volume_of(extent);
  for (int k = 0; k < num_classes; ++k)
    for (int d = 0; d < extent[0]; ++d)
      for (int h = 0; h < extent[1]; ++h)
        for (int w = 0; w < extent[2]; ++w) {
          const int64_t v = (static_cast<int64_t>(d + before[0]) * padded[1] + (h + before[1])) * padded[2] +
                            (w + before[2]);
          const int64_t o = (static_cast<int64_t>(d) * extent[1] + h) * extent[2] + w;
          out[k * E + o] = static_cast<float>(acc[static_cast<size_t>(k * V + v)] / norm[static_cast<size_t>(v)]);
        }
  return out;
}

LabelMap sliding_window_infer(const NetworkGraph& graph, const WeightStore& store, const Tensor& image, Triple patch,
                              const InferOptions& options) {
  check_input(graph, {1, image.rank() == 4 ? image.dim(0) : 0, patch[0], patch[1], patch[2]});
  ad::Tape<float> tape(false);
  const ParamVars<float> params = register_parameters(tape, graph, store);
  PatchPredictor predictor = [&](const Tensor& x) {
    return forward_on_tape(graph, tape, params, tape.constant(x), true).front().value();
  };
  return argmax_labels(sliding_window_logits(image, patch, graph.config().num_classes, predictor, options));
}

}  // namespace stunet
