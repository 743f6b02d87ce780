#pragma once

#include <cstdint>
#include <functional>
#include <optional>
#include <string>
#include <vector>

#include "stunet/arch/graph.hpp"
#include "stunet/harness/augment.hpp"
#include "stunet/harness/volume.hpp"
#include "stunet/weights/store.hpp"
#include "stunet/weights/transfer.hpp"

namespace stunet {

struct TrainPlan {
  int epochs = 1;
  int iters_per_epoch = 250;
  int batch_size = 2;
  double base_lr = 0.01;
  double momentum = 0.99;
  double weight_decay = 1e-3;
  Triple patch{128, 128, 128};
  bool mirror = true;
  bool brightness = true;
  bool gamma_aug = true;
  bool scaling_aug = true;
  uint64_t seed = 0;

  // Throws ConfigError for non-positive fields or a patch the graph cannot take.
  void validate(const NetworkGraph& graph) const;
  AugmentOptions augment_options() const;
};

struct EpochRecord {
  int epoch = 0;
  double lr = 0.0;
  double mean_loss = 0.0;
  std::optional<double> val_dsc;
};

struct TrainResult {
  WeightStore store;
  std::vector<EpochRecord> history;
};

// Called after every epoch with the current weights; a returned value is
// recorded as that epoch's validation DSC.
using EpochHook = std::function<std::optional<double>(int epoch, const WeightStore& store)>;

// Loss weights of the heads in graph.heads() order: 1/2^stage, the deepest
// head weighted 0, normalized to sum 1. A single head gets weight 1.
std::vector<double> deep_supervision_weights(const NetworkGraph& graph);

// Patch-based SGD training with dice + cross-entropy. The effective learning
// rate of a parameter is poly_lr(epoch) times its multiplier (1 when no map
// is given). Throws NumericError on a non-finite loss.
TrainResult train(const NetworkGraph& graph, const WeightStore& store, const std::vector<Volume>& dataset,
                  const TrainPlan& plan, const LrMultiplierMap* multipliers = nullptr, const EpochHook& hook = {});

std::string history_csv(const std::vector<EpochRecord>& history);
void save_history(const std::vector<EpochRecord>& history, const std::string& path);

}  // namespace stunet
