#pragma once

#include <functional>
#include <optional>
#include <string>
#include <vector>

#include "stunet/arch/config.hpp"
#include "stunet/arch/graph.hpp"
#include "stunet/harness/metrics.hpp"
#include "stunet/harness/synth.hpp"
#include "stunet/harness/train.hpp"
#include "stunet/weights/store.hpp"

namespace stunet {

// The built-in two-task transfer scenario. Task A: background plus sphere,
// box and shell in one channel. Task B: a second modality pair (two
// correlated channels) with its own label ids, size ranges and counts.
SynthSpec fixture_task_a();
SynthSpec fixture_task_b();

// STU-Net-S with every width divided by 4.
ArchConfig toy_config(int in_channels, int num_classes);

inline constexpr Triple kToyPatch{32, 32, 32};

struct ScenarioSeeds {
  uint64_t data_a = 11;
  uint64_t data_b = 12;
  uint64_t init = 7;
  uint64_t train = 3;
};

struct ScenarioSizes {
  int train_cases = 8;
  int val_cases = 4;
  int pretrain_epochs = 20;
  int transfer_epochs = 10;
  int iters_per_epoch = 50;
};

// Train and held-out volumes of one task; held-out volumes use an
// independent index range of the same seed.
struct TaskData {
  std::vector<Volume> train;
  std::vector<Volume> val;
};
TaskData make_task_data(const SynthSpec& spec, uint64_t seed, const ScenarioSizes& sizes);

TrainPlan toy_plan(int epochs, int iters_per_epoch, uint64_t seed);

// Mean over volumes of merged_mean_dsc of the sliding-window prediction.
double evaluate_dataset(const NetworkGraph& graph, const WeightStore& store, const std::vector<Volume>& volumes,
                        Triple patch, const MergeSpec& merge = {});

// First epoch (1-based) whose validation DSC reaches `threshold`.
std::optional<int> epochs_to_reach(const std::vector<EpochRecord>& history, double threshold);

struct ScenarioResult {
  std::vector<EpochRecord> pretrain;  // val DSC on task A every epoch
  double pretrain_dsc = 0.0;          // final, task A held-out
  std::vector<EpochRecord> finetune;  // val DSC on task B every epoch
  std::vector<EpochRecord> scratch;
};

// Pretrains on A, then trains on B twice for the same number of epochs:
// once from the transferred A store with 0.1 / 1.0 multipliers, once from
// a fresh initialization.
using ScenarioProgress = std::function<void(const std::string& phase, const EpochRecord& record)>;
ScenarioResult run_transfer_scenario(const ScenarioSeeds& seeds = {}, const ScenarioSizes& sizes = {},
                                     const ScenarioProgress& progress = {});

}  // namespace stunet
