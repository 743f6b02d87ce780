#include <gtest/gtest.h>

#include <cmath>
#include <filesystem>
#include <nlohmann/json.hpp>
#include <numeric>
#include <random>

#include "stunet/arch/forward.hpp"
#include "stunet/common/error.hpp"
#include "stunet/harness/augment.hpp"
#include "stunet/harness/dataset_io.hpp"
#include "stunet/harness/infer.hpp"
#include "stunet/harness/metrics.hpp"
#include "stunet/harness/sampling.hpp"
#include "stunet/harness/scenario.hpp"
#include "stunet/harness/synth.hpp"
#include "stunet/harness/train.hpp"
#include "stunet/weights/transfer.hpp"

using namespace stunet;
namespace fs = std::filesystem;

namespace {

LabelMap random_labels(Triple extent, int num_classes, std::mt19937_64& rng) {
  LabelMap m(extent);
  std::uniform_int_distribution<int> pick(0, num_classes - 1);
  for (auto& v : m.data) v = pick(rng);
  return m;
}

SynthSpec small_spec() {
  SynthSpec s = fixture_task_a();
  s.extent = {32, 32, 32};
  return s;
}

}  // namespace

TEST(Synth, DeterministicPerIndex) {
  const SynthSpec spec = fixture_task_b();
  const auto a = gen_dataset(spec, 3, 5);
  const auto b = gen_dataset(spec, 3, 5);
  for (int i = 0; i < 3; ++i) {
    EXPECT_EQ(a[i].image, b[i].image);
    EXPECT_EQ(a[i].labels, b[i].labels);
    EXPECT_EQ(gen_volume(spec, 5, i).labels, a[i].labels);
  }
  EXPECT_FALSE(gen_volume(spec, 6, 0).labels == a[0].labels);
  EXPECT_FALSE(a[1].labels == a[0].labels);
}

TEST(Synth, EveryClassPresentAndZScored) {
  for (const auto& spec : {fixture_task_a(), fixture_task_b()}) {
    const Volume v = gen_volume(spec, 1, 0);
    EXPECT_NO_THROW(v.validate());
    EXPECT_EQ(v.channels(), spec.channels);
    for (int c = 0; c < spec.num_classes; ++c) EXPECT_GT(v.labels.count(c), 0) << c;
    const int64_t n = volume_of(spec.extent);
    for (int ch = 0; ch < spec.channels; ++ch) {
      double sum = 0, sq = 0;
      for (int64_t i = 0; i < n; ++i) {
        const double x = v.image[ch * n + i];
        sum += x;
        sq += x * x;
      }
      EXPECT_NEAR(sum / n, 0.0, 1e-4);
      EXPECT_NEAR(sq / n, 1.0, 1e-3);
    }
  }
}

TEST(Synth, SpecValidationAndJson) {
  SynthSpec s = fixture_task_b();
  EXPECT_EQ(synth_spec_from_json(to_json(s)), s);
  s.num_classes = 7;
  EXPECT_THROW(s.validate(), ConfigError);
  s = fixture_task_b();
  s.classes[0].intensity.pop_back();
  EXPECT_THROW(s.validate(), ConfigError);
}

TEST(Synth, Rasterizers) {
  LabelMap m({11, 11, 11});
  paint_sphere(m, {5, 5, 5}, 2.0, 1);
  int64_t expected = 0;
  for (int d = -5; d <= 5; ++d)
    for (int h = -5; h <= 5; ++h)
      for (int w = -5; w <= 5; ++w) expected += d * d + h * h + w * w <= 4;
  EXPECT_EQ(m.count(1), expected);
  LabelMap b({11, 11, 11});
  paint_box(b, {5, 5, 5}, {1, 2, 3}, 2);
  EXPECT_EQ(b.count(2), 3 * 5 * 7);
  LabelMap s({21, 21, 21});
  paint_shell(s, {10, 10, 10}, 8, 5, 3);
  EXPECT_EQ(s.at(10, 10, 10), 0);
  EXPECT_EQ(s.at(10, 10, 17), 3);
}

TEST(Augment, MirrorIsInvolution) {
  const Volume v = gen_volume(small_spec(), 2, 0);
  for (int axis = 0; axis < 3; ++axis) {
    Tensor img = v.image;
    LabelMap lab = v.labels;
    mirror(img, lab, axis);
    EXPECT_FALSE(lab == v.labels);
    mirror(img, lab, axis);
    EXPECT_EQ(img, v.image);
    EXPECT_EQ(lab, v.labels);
  }
}

TEST(Augment, IntensityTransformsKeepLabels) {
  const Volume v = gen_volume(small_spec(), 2, 0);
  Tensor img = v.image;
  brightness_shift(img, 0.5f);
  for (int64_t i = 0; i < img.numel(); ++i) EXPECT_FLOAT_EQ(img[i], v.image[i] + 0.5f);
  img = v.image;
  apply_gamma(img, 1.0);
  for (int64_t i = 0; i < img.numel(); ++i) EXPECT_NEAR(img[i], v.image[i], 1e-5);
  img = v.image;
  apply_gamma(img, 2.0);
  const auto [lo, hi] = std::minmax_element(v.image.data().begin(), v.image.data().end());
  const auto [lo2, hi2] = std::minmax_element(img.data().begin(), img.data().end());
  EXPECT_NEAR(*lo2, *lo, 1e-5);
  EXPECT_NEAR(*hi2, *hi, 1e-5);
  LabelMap lab = v.labels;
  img = v.image;
  apply_scaling(img, lab, 1.0);
  EXPECT_EQ(lab, v.labels);
}

TEST(Augment, DisabledOptionsAreIdentity) {
  const Volume v = gen_volume(small_spec(), 2, 0);
  Tensor img = v.image;
  LabelMap lab = v.labels;
  Rng rng(1);
  augment(img, lab, rng, {false, false, false, false});
  EXPECT_EQ(img, v.image);
  EXPECT_EQ(lab, v.labels);
}

TEST(Sampling, ForegroundPatchAndShapes) {
  const std::vector<Volume> data = gen_dataset(small_spec(), 2, 3);
  Rng rng(4);
  for (int i = 0; i < 20; ++i) {
    const Batch b = sample_batch(data, {16, 16, 16}, 2, rng, nullptr);
    EXPECT_EQ(b.image.shape(), (Shape{2, 1, 16, 16, 16}));
    ASSERT_EQ(b.labels.size(), 2u);
    EXPECT_LT(b.labels[0].count(0), volume_of({16, 16, 16}));
  }
  EXPECT_EQ(random_origin({8, 8, 8}, {16, 16, 16}, rng), (Triple{-4, -4, -4}));
}

TEST(Metrics, Dsc) {
  LabelMap p({1, 1, 4}), g({1, 1, 4});
  p.data = {1, 1, 0, 2};
  g.data = {1, 0, 0, 2};
  EXPECT_DOUBLE_EQ(dsc(p, g, 1), 2.0 / 3.0);
  EXPECT_DOUBLE_EQ(dsc(p, g, 2), 1.0);
  EXPECT_DOUBLE_EQ(dsc(p, g, 3), 1.0);
  EXPECT_DOUBLE_EQ(mean_foreground_dsc(p, g, 3), (2.0 / 3.0 + 1.0) / 2.0);
}

TEST(Metrics, MergeParsingAndConflicts) {
  const MergeSpec s = parse_merge_spec(" 1,2 -> 1 ; 5,6,7->5");
  EXPECT_EQ(s, (MergeSpec{{{1, 2}, 1}, {{5, 6, 7}, 5}}));
  EXPECT_EQ(parse_merge_spec(format_merge_spec(s)), s);
  EXPECT_TRUE(parse_merge_spec("").empty());
  EXPECT_THROW(parse_merge_spec("1,2"), ConfigError);
  LabelMap m({1, 1, 1});
  EXPECT_THROW(merge_labels(m, parse_merge_spec("1,2->1;2,3->3")), InvalidInput);
  EXPECT_THROW(merge_labels(m, parse_merge_spec("1->2;2->3")), InvalidInput);
  EXPECT_EQ(merged_class_ids(s, 8), (std::vector<int>{0, 1, 3, 4, 5}));
}

TEST(Metrics, MergeIdempotentAndConsistent) {
  std::mt19937_64 rng(21);
  for (int t = 0; t < 30; ++t) {
    const int k = std::uniform_int_distribution<int>(3, 8)(rng);
    const LabelMap pred = random_labels({4, 5, 6}, k, rng);
    const LabelMap gt = random_labels({4, 5, 6}, k, rng);
    std::vector<int> ids(static_cast<size_t>(k - 1));
    std::iota(ids.begin(), ids.end(), 1);
    std::shuffle(ids.begin(), ids.end(), rng);
    const std::vector<int> group(ids.begin(), ids.begin() + 2);
    const MergeSpec spec{{group, group[0]}};
    const LabelMap once = merge_labels(pred, spec);
    EXPECT_EQ(merge_labels(once, spec), once);
    EXPECT_EQ(once.count(group[1]), 0);
    double manual = 0;
    const auto kept = merged_class_ids(spec, k);
    const LabelMap gm = merge_labels(gt, spec);
    for (int id : kept)
      if (id != 0) manual += dsc(once, gm, id);
    EXPECT_DOUBLE_EQ(merged_mean_dsc(pred, gt, k, spec), manual / double(kept.size() - 1));
  }
  LabelMap a({2, 2, 2});
  EXPECT_DOUBLE_EQ(merged_mean_dsc(a, a, 3, {}), mean_foreground_dsc(a, a, 3));
}

TEST(Infer, WindowStarts) {
  EXPECT_EQ(window_starts(32, 32, 0.5), (std::vector<int>{0}));
  EXPECT_EQ(window_starts(64, 32, 0.5), (std::vector<int>{0, 16, 32}));
  EXPECT_EQ(window_starts(48, 32, 0.5), (std::vector<int>{0, 16}));
  const auto s = window_starts(100, 32, 0.5);
  EXPECT_EQ(s.front(), 0);
  EXPECT_EQ(s.back(), 68);
  for (size_t i = 1; i < s.size(); ++i) EXPECT_LE(s[i] - s[i - 1], 16);
}

TEST(Infer, ImportanceMap) {
  const Tensor m = importance_map({8, 8, 8}, 0.125);
  EXPECT_EQ(m.shape(), (Shape{8, 8, 8}));
  float mx = 0, mn = 1;
  for (float v : m.data()) {
    mx = std::max(mx, v);
    mn = std::min(mn, v);
  }
  EXPECT_FLOAT_EQ(mx, 1.0f);
  EXPECT_GT(mn, 0.0f);
  EXPECT_FLOAT_EQ(m[(3 * 8 + 4) * 8 + 5], m[(5 * 8 + 4) * 8 + 3]);
  EXPECT_FLOAT_EQ(m[(3 * 8 + 4) * 8 + 5], m[(4 * 8 + 5) * 8 + 3]);
}

TEST(Infer, ConstantPredictorIsReproduced) {
  const Tensor image({1, 20, 40, 24}, 1.0f);
  const PatchPredictor pred = [](const Tensor& x) {
    Tensor y({1, 2, x.dim(2), x.dim(3), x.dim(4)});
    for (int64_t i = 0; i < y.numel() / 2; ++i) y[i] = 0.25f;
    return y;
  };
  const Tensor out = sliding_window_logits(image, {16, 16, 16}, 2, pred);
  EXPECT_EQ(out.shape(), (Shape{2, 20, 40, 24}));
  for (int64_t i = 0; i < out.numel() / 2; ++i) ASSERT_NEAR(out[i], 0.25f, 1e-6);
  for (int64_t i = out.numel() / 2; i < out.numel(); ++i) ASSERT_EQ(out[i], 0.0f);
}

TEST(Infer, SingleWindowEqualsDirectForward) {
  const NetworkGraph g = build(toy_config(1, 4));
  const WeightStore s = init_weights(g, 3);
  const Volume v = gen_volume(small_spec(), 1, 0);
  const Tensor logits = predict_logits(g, s, v.image.reshaped({1, 1, 32, 32, 32}));
  const LabelMap direct = argmax_labels(logits.reshaped({4, 32, 32, 32}));
  EXPECT_EQ(sliding_window_infer(g, s, v.image, {32, 32, 32}), direct);
  EXPECT_THROW(sliding_window_infer(g, s, v.image, {24, 32, 32}), InvalidInput);
}

TEST(Train, DeepSupervisionWeights) {
  const auto w = deep_supervision_weights(build(toy_config(1, 2)));
  ASSERT_EQ(w.size(), 5u);
  const double z = 1 + 0.5 + 0.25 + 0.125;
  EXPECT_DOUBLE_EQ(w[0], 1 / z);
  EXPECT_DOUBLE_EQ(w[3], 0.125 / z);
  EXPECT_EQ(w[4], 0.0);
}

TEST(Train, ZeroMultipliersFreezeWeights) {
  const NetworkGraph g = build(toy_config(1, 4));
  const WeightStore s = init_weights(g, 1);
  const auto data = gen_dataset(small_spec(), 2, 1);
  const LrMultiplierMap frozen = uniform_multipliers(g, 0.0);
  const TrainResult r = train(g, s, data, toy_plan(1, 2, 1), &frozen);
  EXPECT_EQ(r.store, s);
  ASSERT_EQ(r.history.size(), 1u);
  EXPECT_TRUE(std::isfinite(r.history[0].mean_loss));
}

TEST(Train, ReproducibleAndLossDecreases) {
  const NetworkGraph g = build(toy_config(1, 4));
  const WeightStore s = init_weights(g, 1);
  const auto data = gen_dataset(small_spec(), 2, 1);
  const TrainPlan plan = toy_plan(3, 6, 2);
  const TrainResult a = train(g, s, data, plan);
  ASSERT_EQ(a.history.size(), 3u);
  EXPECT_LT(a.history.back().mean_loss, a.history.front().mean_loss);
  EXPECT_GT(a.history[1].lr, a.history[2].lr);
  const TrainResult b = train(g, s, data, toy_plan(1, 6, 2));
  EXPECT_EQ(b.history[0].mean_loss, a.history[0].mean_loss);
  TrainPlan bad = plan;
  bad.patch = {24, 24, 24};
  EXPECT_THROW(train(g, s, data, bad), ConfigError);
}

TEST(Io, DatasetRoundTrip) {
  const fs::path root = fs::temp_directory_path() / ("stunet_io_" + std::to_string(std::random_device{}()));
  const auto data = gen_dataset(fixture_task_b(), 2, 9);
  save_dataset(root.string(), data);
  EXPECT_EQ(case_names(root.string()), (std::vector<std::string>{"case_000", "case_001"}));
  const auto back = load_dataset(root.string());
  ASSERT_EQ(back.size(), 2u);
  for (size_t i = 0; i < 2; ++i) {
    EXPECT_EQ(back[i].image, data[i].image);
    EXPECT_EQ(back[i].labels, data[i].labels);
    EXPECT_EQ(back[i].num_classes, data[i].num_classes);
    EXPECT_EQ(back[i].spacing, data[i].spacing);
  }
  save_label_map((root / "l.stuw").string(), data[0].labels);
  EXPECT_EQ(load_label_map((root / "l.stuw").string()), data[0].labels);
  EXPECT_THROW(load_case((root / "nope").string()), IoError);
  fs::remove_all(root);
}

TEST(Io, HistoryCsv) {
  std::vector<EpochRecord> h(2);
  h[0] = {0, 0.01, 1.5, std::nullopt};
  h[1] = {1, 0.005, 1.25, 0.5};
  const std::string csv = history_csv(h);
  EXPECT_EQ(csv.substr(0, csv.find('\n')), "epoch,lr,mean_loss,val_dsc");
  EXPECT_EQ(std::count(csv.begin(), csv.end(), '\n'), 3);
}

TEST(Scenario, EpochsToReach) {
  std::vector<EpochRecord> h(3);
  h[0].val_dsc = 0.2;
  h[1] = {1, 0, 0, 0.7};
  h[2] = {2, 0, 0, 0.9};
  EXPECT_EQ(epochs_to_reach(h, 0.7), 2);
  EXPECT_EQ(epochs_to_reach(h, 0.95), std::nullopt);
}
