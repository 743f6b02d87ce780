#include "stunet/harness/train.hpp"

#include <cmath>
#include <fstream>
#include <sstream>

#include "stunet/arch/forward.hpp"
#include "stunet/common/error.hpp"
#include "stunet/harness/sampling.hpp"
#include "stunet/tensor/optim.hpp"

namespace stunet {

void TrainPlan::validate(const NetworkGraph& graph) const {
  if (epochs < 0) throw ConfigError("epochs", "must be non-negative");
  if (iters_per_epoch < 1) throw ConfigError("iters_per_epoch", "must be positive");
  if (batch_size < 1) throw ConfigError("batch_size", "must be positive");
  if (!(base_lr >= 0)) throw ConfigError("base_lr", "must be non-negative");
  if (!(momentum >= 0 && momentum < 1)) throw ConfigError("momentum", "must lie in [0, 1)");
  if (!(weight_decay >= 0)) throw ConfigError("weight_decay", "must be non-negative");
  const Triple f = graph.downsample_factor();
  for (int a = 0; a < 3; ++a) {
    if (patch[a] < 1 || patch[a] % f[a] != 0) {
      throw ConfigError("patch", to_string(patch) + " is not divisible by the cumulative down-sampling factor " +
                                     to_string(f));
    }
  }
}

AugmentOptions TrainPlan::augment_options() const {
  AugmentOptions o;
  o.mirror = mirror;
  o.brightness = brightness;
  o.gamma = gamma_aug;
  o.scaling = scaling_aug;
  return o;
}

std::vector<double> deep_supervision_weights(const NetworkGraph& graph) {
  const auto& heads = graph.heads();
  if (heads.size() <= 1) return std::vector<double>(heads.size(), 1.0);
  std::vector<double> w;
  for (const auto& h : heads) w.push_back(std::ldexp(1.0, -h.stage));
  w.back() = 0.0;
  double total = 0.0;
  for (double v : w) total += v;
  for (double& v : w) v /= total;
  return w;
}

namespace {

std::vector<int32_t> flatten_labels(const std::vector<LabelMap>& maps) {
  std::vector<int32_t> out;
  for (const auto& m : maps) out.insert(out.end(), m.data.begin(), m.data.end());
  return out;
}

}  // namespace

TrainResult train(const NetworkGraph& graph, const WeightStore& store, const std::vector<Volume>& dataset,
                  const TrainPlan& plan, const LrMultiplierMap* multipliers, const EpochHook& hook) {
  plan.validate(graph);
  check_store(graph, store);
  TrainResult result{store, {}};
  if (plan.epochs == 0) return result;
  if (dataset.empty()) throw InvalidInput("training needs at least one volume");
  for (const auto& v : dataset) {
    v.validate();
    if (v.channels() != graph.config().in_channels) {
      throw InvalidInput("volume has " + std::to_string(v.channels()) + " channels, network expects " +
                         std::to_string(graph.config().in_channels));
    }
    if (v.num_classes > graph.config().num_classes) {
      throw InvalidInput("volume uses " + std::to_string(v.num_classes) + " classes, network predicts " +
                         std::to_string(graph.config().num_classes));
    }
  }

  const std::vector<double> head_weights = deep_supervision_weights(graph);
  const AugmentOptions aug = plan.augment_options();
  const SgdOptions sgd{plan.momentum, plan.weight_decay};
  SgdState<float> state;
  Rng rng(plan.seed);
  const auto param_specs = graph.parameters();

  for (int epoch = 0; epoch < plan.epochs; ++epoch) {
    const double lr = poly_lr(epoch, plan.epochs, plan.base_lr);
    double loss_sum = 0.0;
    for (int it = 0; it < plan.iters_per_epoch; ++it) {
      Batch batch = sample_batch(dataset, plan.patch, plan.batch_size, rng, &aug);

      ad::Tape<float> tape(true);
      const ParamVars<float> params = register_parameters(tape, graph, result.store);
      const auto heads = forward_on_tape(graph, tape, params, tape.constant(batch.image));

      ad::Var<float> loss;
      double dice_total = 0.0, ce_total = 0.0;
      for (size_t h = 0; h < heads.size(); ++h) {
        if (head_weights[h] == 0.0) continue;
        const Shape& s = heads[h].shape();
        const Triple factor{plan.patch[0] / static_cast<int>(s[2]), plan.patch[1] / static_cast<int>(s[3]),
                            plan.patch[2] / static_cast<int>(s[4])};
        std::vector<LabelMap> maps;
        for (const auto& m : batch.labels) maps.push_back(subsample_labels(m, factor));
        const std::vector<int32_t> labels = flatten_labels(maps);
        auto probs = ad::softmax_channels(tape, heads[h]);
        auto dice = ad::soft_dice_loss(tape, probs, kernels::one_hot<float>(labels, s));
        auto ce = ad::cross_entropy(tape, heads[h], labels);
        dice_total += head_weights[h] * dice.value()[0];
        ce_total += head_weights[h] * ce.value()[0];
        auto term = ad::scale(tape, ad::add(tape, dice, ce), head_weights[h]);
        loss = loss.valid() ? ad::add(tape, loss, term) : term;
      }
      const double value = loss.value()[0];
      if (!std::isfinite(value)) {
        std::ostringstream os;
        os << "non-finite loss at epoch " << epoch << ", iteration " << it << ": lr " << lr << ", dice term "
           << dice_total << ", cross-entropy term " << ce_total;
        throw NumericError(os.str());
      }
      loss_sum += value;

      const ad::GradMap<float> grads = tape.backward(loss);
      for (const auto& p : param_specs) {
        double mult = 1.0;
        if (multipliers) {
          auto m = multipliers->find(p.name);
          if (m == multipliers->end()) throw MissingParameter({p.name});
          mult = m->second;
        }
        sgd_nesterov_step(p.name, result.store.mutable_at(p.name), grads.at(p.name), lr * mult, sgd, state);
      }
    }
    EpochRecord rec{epoch, lr, loss_sum / plan.iters_per_epoch, std::nullopt};
    if (hook) rec.val_dsc = hook(epoch, result.store);
    result.history.push_back(rec);
  }
  return result;
}

std::string history_csv(const std::vector<EpochRecord>& history) {
  std::ostringstream os;
  os << "epoch,lr,mean_loss,val_dsc\n";
  os.precision(8);
  for (const auto& r : history) {
    os << r.epoch << "," << r.lr << "," << r.mean_loss << ",";
    if (r.val_dsc) os << *r.val_dsc;
    os << "\n";
  }
  return os.str();
}

void save_history(const std::vector<EpochRecord>& history, const std::string& path) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw IoError("cannot open '" + path + "' for writing");
  out << history_csv(history);
  if (!out) throw IoError("failed writing '" + path + "'");
}

}  // namespace stunet
