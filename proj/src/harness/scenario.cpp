#include "stunet/harness/scenario.hpp"

#include "stunet/common/error.hpp"
#include "stunet/harness/infer.hpp"
#include "stunet/weights/transfer.hpp"

namespace stunet {

SynthSpec fixture_task_a() {
  SynthSpec s;
  s.extent = {48, 48, 48};
  s.num_classes = 4;
  s.channels = 1;
  s.background = {0.0};
  s.noise = 0.3;
  s.classes = {{ShapeFamily::sphere, 5, 9, 1, 2, {1.0}},
               {ShapeFamily::box, 4, 8, 1, 2, {-1.0}},
               {ShapeFamily::shell, 6, 10, 1, 1, {2.0}}};
  return s;
}

SynthSpec fixture_task_b() {
  SynthSpec s;
  s.extent = {48, 48, 48};
  s.num_classes = 4;
  s.channels = 2;
  s.background = {0.0, 0.0};
  s.noise = 0.4;
  s.classes = {{ShapeFamily::shell, 7, 10, 1, 1, {2.0, 1.2}},
               {ShapeFamily::sphere, 4, 7, 1, 2, {1.0, 0.6}},
               {ShapeFamily::box, 3, 6, 1, 2, {-1.0, -0.6}}};
  return s;
}

ArchConfig toy_config(int in_channels, int num_classes) {
  ArchConfig c = presets::stunet_small();
  for (auto& w : c.widths) w /= 4;
  c.in_channels = in_channels;
  c.num_classes = num_classes;
  return c;
}

TaskData make_task_data(const SynthSpec& spec, uint64_t seed, const ScenarioSizes& sizes) {
  TaskData d;
  d.train = gen_dataset(spec, sizes.train_cases, seed);
  for (int i = 0; i < sizes.val_cases; ++i) d.val.push_back(gen_volume(spec, seed, sizes.train_cases + i));
  return d;
}

TrainPlan toy_plan(int epochs, int iters_per_epoch, uint64_t seed) {
  TrainPlan p;
  p.epochs = epochs;
  p.iters_per_epoch = iters_per_epoch;
  p.patch = kToyPatch;
  p.seed = seed;
  return p;
}

double evaluate_dataset(const NetworkGraph& graph, const WeightStore& store, const std::vector<Volume>& volumes,
                        Triple patch, const MergeSpec& merge) {
  if (volumes.empty()) throw InvalidInput("no volumes to evaluate");
  double sum = 0.0;
  for (const auto& v : volumes) {
    const LabelMap pred = sliding_window_infer(graph, store, v.image, patch);
    sum += merged_mean_dsc(pred, v.labels, v.num_classes, merge);
  }
  return sum / static_cast<double>(volumes.size());
}

std::optional<int> epochs_to_reach(const std::vector<EpochRecord>& history, double threshold) {
  for (const auto& r : history) {
    if (r.val_dsc && *r.val_dsc >= threshold) return r.epoch + 1;
  }
  return std::nullopt;
}

ScenarioResult run_transfer_scenario(const ScenarioSeeds& seeds, const ScenarioSizes& sizes,
                                     const ScenarioProgress& progress) {
  const SynthSpec spec_a = fixture_task_a();
  const SynthSpec spec_b = fixture_task_b();
  const TaskData a = make_task_data(spec_a, seeds.data_a, sizes);
  const TaskData b = make_task_data(spec_b, seeds.data_b, sizes);

  auto validate_on = [&progress](const std::string& phase, const NetworkGraph& g,
                                 const std::vector<Volume>& val) -> EpochHook {
    return [&progress, phase, &g, &val](int epoch, const WeightStore& st) -> std::optional<double> {
      const double dsc = evaluate_dataset(g, st, val, kToyPatch);
      if (progress) {
        EpochRecord r;
        r.epoch = epoch;
        r.val_dsc = dsc;
        progress(phase, r);
      }
      return dsc;
    };
  };

  ScenarioResult out;
  const NetworkGraph graph_a = build(toy_config(spec_a.channels, spec_a.num_classes));
  TrainResult pre = train(graph_a, init_weights(graph_a, seeds.init), a.train,
                          toy_plan(sizes.pretrain_epochs, sizes.iters_per_epoch, seeds.train), nullptr,
                          validate_on("pretrain", graph_a, a.val));
  out.pretrain = pre.history;
  out.pretrain_dsc = out.pretrain.empty() || !out.pretrain.back().val_dsc
                         ? evaluate_dataset(graph_a, pre.store, a.val, kToyPatch)
                         : *out.pretrain.back().val_dsc;

  const NetworkGraph graph_b = build(toy_config(spec_b.channels, spec_b.num_classes));
  const TrainPlan plan_b = toy_plan(sizes.transfer_epochs, sizes.iters_per_epoch, seeds.train);
  TransferResult moved = transfer(pre.store, graph_b, seeds.init);
  out.finetune =
      train(graph_b, moved.store, b.train, plan_b, &moved.multipliers, validate_on("finetune", graph_b, b.val))
          .history;
  out.scratch =
      train(graph_b, init_weights(graph_b, seeds.init), b.train, plan_b, nullptr, validate_on("scratch", graph_b, b.val))
          .history;
  return out;
}

}  // namespace stunet
