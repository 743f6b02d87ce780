#include "cli.hpp"

#include <CLI11.hpp>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <nlohmann/json.hpp>
#include <sstream>

#include "stunet/accounting/calibrate.hpp"
#include "stunet/accounting/convention.hpp"
#include "stunet/accounting/cost.hpp"
#include "stunet/accounting/golden.hpp"
#include "stunet/accounting/table.hpp"
#include "stunet/arch/config.hpp"
#include "stunet/arch/graph.hpp"
#include "stunet/common/error.hpp"
#include "stunet/harness/dataset_io.hpp"
#include "stunet/harness/infer.hpp"
#include "stunet/harness/metrics.hpp"
#include "stunet/harness/scenario.hpp"
#include "stunet/harness/synth.hpp"
#include "stunet/harness/train.hpp"
#include "stunet/weights/serialize.hpp"
#include "stunet/weights/transfer.hpp"

namespace fs = std::filesystem;

namespace stunet::cli {

namespace {

std::string read_text(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot read '" + path + "'");
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

void write_text(const std::string& path, const std::string& text) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw IoError("cannot write '" + path + "'");
  out << text;
}

Triple patch_option(const std::string& text) {
  try {
    return parse_triple(text);
  } catch (const Error& e) {
    throw ConfigError("patch", e.what());
  }
}

Convention convention_option(const std::string& path) {
  return path.empty() ? frozen_convention() : load_convention(path);
}

std::string style_summary(const ArchConfig& c) {
  std::ostringstream os;
  os << "blocks " << to_string(c.block_style) << ", downsample " << to_string(c.downsample_style) << ", upsample "
     << to_string(c.upsample_style) << ", deep supervision " << (c.deep_supervision ? "on" : "off");
  return os.str();
}

std::string ratios_summary(const ArchConfig& c) {
  std::string s;
  for (size_t i = 0; i < c.updown_ratios.size(); ++i) s += (i ? " " : "") + to_string(c.updown_ratios[i]);
  return s;
}

// Shared training flags of pretrain / finetune.
struct TrainFlags {
  std::string config;
  std::string data;
  std::string val;
  std::string output;
  std::string history;
  int epochs = 1;
  int iters = 250;
  int batch = 2;
  double lr = 0.01;
  std::string patch = "128,128,128";
  uint64_t seed = 0;
  bool no_mirror = false;
  bool no_brightness = false;
  bool no_gamma = false;
  bool no_scaling = false;

  void attach(CLI::App* app) {
    app->add_option("--config", config, "Architecture config (JSON)")->required();
    app->add_option("--data", data, "Training dataset directory")->required();
    app->add_option("--val", val, "Held-out dataset evaluated after every epoch");
    app->add_option("-o,--output", output, "Output weight file")->required();
    app->add_option("--history", history, "Per-epoch history CSV");
    app->add_option("--epochs", epochs, "Epochs")->capture_default_str();
    app->add_option("--iters", iters, "Iterations per epoch")->capture_default_str();
    app->add_option("--batch", batch, "Batch size")->capture_default_str();
    app->add_option("--lr", lr, "Base learning rate")->capture_default_str();
    app->add_option("--patch", patch, "Patch size D,H,W")->capture_default_str();
    app->add_option("--seed", seed, "Seed for initialization, sampling and augmentation")->capture_default_str();
    app->add_flag("--no-mirror", no_mirror, "Disable mirror augmentation");
    app->add_flag("--no-brightness", no_brightness, "Disable brightness augmentation");
    app->add_flag("--no-gamma", no_gamma, "Disable gamma augmentation");
    app->add_flag("--no-scaling", no_scaling, "Disable scaling augmentation");
  }

  TrainPlan plan() const {
    TrainPlan p;
    p.epochs = epochs;
    p.iters_per_epoch = iters;
    p.batch_size = batch;
    p.base_lr = lr;
    p.patch = patch_option(patch);
    p.seed = seed;
    p.mirror = !no_mirror;
    p.brightness = !no_brightness;
    p.gamma_aug = !no_gamma;
    p.scaling_aug = !no_scaling;
    return p;
  }
};

void check_dataset(const ArchConfig& config, const std::vector<Volume>& volumes, const std::string& what) {
  for (const auto& v : volumes) {
    if (v.channels() != config.in_channels) {
      throw ConfigError("in_channels", what + " volumes have " + std::to_string(v.channels()) +
                                           " channels, the config expects " + std::to_string(config.in_channels));
    }
    if (v.num_classes != config.num_classes) {
      throw ConfigError("num_classes", what + " volumes have " + std::to_string(v.num_classes) +
                                           " classes, the config expects " + std::to_string(config.num_classes));
    }
  }
}

int run_training(const TrainFlags& flags, const NetworkGraph& graph, const WeightStore& start,
                 const LrMultiplierMap* multipliers, std::ostream& out) {
  const TrainPlan plan = flags.plan();
  plan.validate(graph);
  const auto dataset = load_dataset(flags.data);
  check_dataset(graph.config(), dataset, "training");
  std::vector<Volume> val;
  if (!flags.val.empty()) {
    val = load_dataset(flags.val);
    check_dataset(graph.config(), val, "validation");
  }
  EpochHook hook = [&](int epoch, const WeightStore& st) -> std::optional<double> {
    if (val.empty()) return std::nullopt;
    const double d = evaluate_dataset(graph, st, val, plan.patch);
    out << "epoch " << epoch + 1 << " val_dsc " << std::fixed << std::setprecision(4) << d << "\n";
    return d;
  };
  const TrainResult result = train(graph, start, dataset, plan, multipliers, hook);
  save(result.store, flags.output);
  if (!flags.history.empty()) save_history(result.history, flags.history);
  if (!result.history.empty()) {
    out << "final loss " << std::fixed << std::setprecision(4) << result.history.back().mean_loss << "\n";
  }
  out << "wrote " << flags.output << "\n";
  return kExitOk;
}

std::string multiplier_summary(const NetworkGraph& graph, const LrMultiplierMap& multipliers) {
  std::map<double, std::pair<int, int64_t>> groups;
  for (const auto& p : graph.parameters()) {
    auto& g = groups[multipliers.at(p.name)];
    g.first += 1;
    g.second += shape_numel(p.shape);
  }
  std::ostringstream os;
  os << "lr multipliers:\n";
  for (auto it = groups.rbegin(); it != groups.rend(); ++it) {
    os << "  x" << std::fixed << std::setprecision(1) << it->first << "  " << it->second.first << " tensors, "
       << it->second.second << " parameters" << (it->first == kHeadLrMultiplier ? " (heads)" : " (backbone)")
       << "\n";
  }
  return os.str();
}

int cmd_describe(const std::string& config_path, const std::string& patch_text, const std::string& csv,
                 const std::string& label, const std::string& convention_path, std::ostream& out) {
  const ArchConfig config = load_config(config_path);
  const Triple patch = patch_option(patch_text);
  const Convention conv = convention_option(convention_path);
  const NetworkGraph graph = build(config, conv.build_options());
  infer_extents(graph, patch);
  out << "stages       " << config.num_stages << "\n"
      << "depths       " << format_tuple(config.depths) << "\n"
      << "widths       " << format_tuple(config.widths) << "\n"
      << "ratios       " << ratios_summary(config) << "\n"
      << "channels     " << config.in_channels << " in, " << config.num_classes << " classes\n"
      << "style        " << style_summary(config) << "\n"
      << "layers       " << graph.layers().size() << ", parameter tensors " << graph.parameters().size() << "\n"
      << "patch        " << to_string(patch) << "\n";
  const CostReport cost = cost_of(config, patch, conv);
  out << "params       " << cost.params << "\n"
      << "flops        " << cost.flops << "\n\n";
  const std::string name = label.empty() ? fs::path(config_path).stem().string() : label;
  out << emit_table({{name, config}}, patch, conv);
  if (!csv.empty()) write_text(csv, emit_table_csv({{name, config}}, patch, conv));
  return kExitOk;
}

int cmd_tables(const std::string& which, const std::string& patch_text, const std::string& csv,
               const std::string& convention_path, std::ostream& out) {
  const auto rows = golden_rows(which);
  const Evaluation ev = evaluate(convention_option(convention_path), rows, patch_option(patch_text));
  out << render_reproduction(ev);
  if (!csv.empty()) write_text(csv, render_reproduction_csv(ev));
  return ev.misses == 0 ? kExitOk : kExitTolerance;
}

SynthSpec synth_option(const std::string& spec_path, const std::string& fixture) {
  if (!spec_path.empty() && !fixture.empty()) throw ConfigError("spec", "give either --spec or --fixture");
  if (fixture == "task_a") return fixture_task_a();
  if (fixture == "task_b") return fixture_task_b();
  if (!fixture.empty()) throw ConfigError("fixture", "unknown fixture '" + fixture + "' (task_a, task_b)");
  if (spec_path.empty()) throw ConfigError("spec", "one of --spec or --fixture is required");
  try {
    return synth_spec_from_json(nlohmann::json::parse(read_text(spec_path)));
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError("spec", e.what());
  }
}

}  // namespace

int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  CLI::App app{"STU-Net architecture, accounting and training toolkit", "stunet"};
  app.require_subcommand(1);

  std::string config, patch = "128,128,128", csv, label, convention;
  auto* describe = app.add_subcommand("describe", "Architecture summary and cost report of a config");
  describe->add_option("--config", config, "Architecture config (JSON)")->required();
  describe->add_option("--patch", patch, "Patch size D,H,W")->capture_default_str();
  describe->add_option("--csv", csv, "Also write the cost row as CSV");
  describe->add_option("--label", label, "Row label (default: config file name)");
  describe->add_option("--convention", convention, "Counting convention (default: frozen)");

  std::string base, output;
  double depth = 1.0, width = 1.0;
  auto* scale_cmd = app.add_subcommand("scale", "Compound-scale a config");
  scale_cmd->add_option("--base", base, "Base config (JSON)")->required();
  scale_cmd->add_option("--depth", depth, "Depth coefficient")->required();
  scale_cmd->add_option("--width", width, "Width coefficient")->required();
  scale_cmd->add_option("-o,--output", output, "Output config")->required();

  std::string which;
  auto* tables = app.add_subcommand("tables", "Reproduce a published cost table; exits 3 on any miss");
  tables->add_option("--which", which, "table2, table5 or table6")->required();
  tables->add_option("--patch", patch, "Patch size D,H,W")->capture_default_str();
  tables->add_option("--csv", csv, "Also write the cells as CSV");
  tables->add_option("--convention", convention, "Counting convention (default: frozen)");

  std::string report;
  auto* calib = app.add_subcommand("calibrate", "Search the counting conventions against every published table");
  calib->add_option("-o,--output", output, "Write the chosen convention (JSON)");
  calib->add_option("--report", report, "Write the calibration report");

  std::string spec_path, fixture;
  int count = 1, start_index = 0;
  uint64_t seed = 0;
  auto* gen = app.add_subcommand("gen-data", "Generate a synthetic dataset");
  gen->add_option("--spec", spec_path, "Synthetic dataset spec (JSON)");
  gen->add_option("--fixture", fixture, "Built-in spec: task_a or task_b");
  gen->add_option("-n,--count", count, "Number of cases")->capture_default_str();
  gen->add_option("--start-index", start_index, "Index of the first generated case")->capture_default_str();
  gen->add_option("--seed", seed, "Dataset seed")->capture_default_str();
  gen->add_option("-o,--output", output, "Output dataset directory")->required();

  TrainFlags pre_flags;
  auto* pretrain = app.add_subcommand("pretrain", "Train from a fresh initialization");
  pre_flags.attach(pretrain);

  TrainFlags ft_flags;
  std::string from;
  int replicate = 0;
  auto* finetune = app.add_subcommand("finetune", "Transfer a pretrained store and fine-tune it");
  ft_flags.attach(finetune);
  finetune->add_option("--from", from, "Pretrained weight file")->required();
  finetune->add_option("--replicate-channels", replicate, "Input channels of the target (replicates the stem)");

  std::string weights, data;
  double overlap = 0.5;
  bool no_gaussian = false;
  auto* infer = app.add_subcommand("infer", "Sliding-window prediction for every case of a dataset");
  infer->add_option("--config", config, "Architecture config (JSON)")->required();
  infer->add_option("--weights", weights, "Weight file")->required();
  infer->add_option("--data", data, "Dataset directory")->required();
  infer->add_option("-o,--output", output, "Prediction directory")->required();
  infer->add_option("--patch", patch, "Patch size D,H,W")->capture_default_str();
  infer->add_option("--overlap", overlap, "Window overlap in [0, 1)")->capture_default_str();
  infer->add_flag("--no-gaussian", no_gaussian, "Uniform window weighting");

  std::string pred, merge;
  auto* eval = app.add_subcommand("eval", "Dice of predictions against a dataset's labels");
  eval->add_option("--pred", pred, "Prediction directory (from infer)")->required();
  eval->add_option("--data", data, "Dataset directory")->required();
  eval->add_option("--merge", merge, "Label merges, e.g. \"2,3->2\"");
  eval->add_option("-o,--output", output, "Write metrics (JSON)");

  std::vector<std::string> reversed(args.rbegin(), args.rend());
  try {
    app.parse(reversed);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e, out, err);
    return code == 0 ? kExitOk : kExitUsage;
  }

  try {
    if (*describe) return cmd_describe(config, patch, csv, label, convention, out);

    if (*scale_cmd) {
      save_config(scale(load_config(base), ScalePlan{depth, width}), output);
      out << "wrote " << output << "\n";
      return kExitOk;
    }

    if (*tables) return cmd_tables(which, patch, csv, convention, out);

    if (*calib) {
      const CalibrationResult r = calibrate(candidate_conventions(), golden_rows());
      const std::string text = render_calibration_report(r);
      out << text;
      if (!report.empty()) write_text(report, text);
      if (!output.empty()) save_convention(r.chosen, output);
      return r.unique ? kExitOk : kExitTolerance;
    }

    if (*gen) {
      const SynthSpec spec = synth_option(spec_path, fixture);
      spec.validate();
      if (count < 1) throw ConfigError("count", "must be >= 1");
      if (start_index < 0) throw ConfigError("start-index", "must be >= 0");
      std::vector<Volume> volumes;
      for (int i = 0; i < count; ++i) volumes.push_back(gen_volume(spec, seed, start_index + i));
      save_dataset(output, volumes);
      out << "wrote " << count << " cases to " << output << "\n";
      return kExitOk;
    }

    if (*pretrain) {
      const NetworkGraph graph = build(load_config(pre_flags.config));
      return run_training(pre_flags, graph, init_weights(graph, pre_flags.seed), nullptr, out);
    }

    if (*finetune) {
      ArchConfig target = load_config(ft_flags.config);
      if (replicate > 0) target.in_channels = replicate;
      else if (*finetune->get_option("--replicate-channels")) {
        throw ConfigError("replicate-channels", "must be >= 1");
      }
      validate(target);
      const NetworkGraph graph = build(target);
      const TransferResult moved = transfer(load(from), graph, ft_flags.seed);
      out << multiplier_summary(graph, moved.multipliers);
      return run_training(ft_flags, graph, moved.store, &moved.multipliers, out);
    }

    if (*infer) {
      const NetworkGraph graph = build(load_config(config));
      const WeightStore store = load_for_graph(weights, graph);
      const Triple p = patch_option(patch);
      InferOptions options;
      options.overlap = overlap;
      options.gaussian = !no_gaussian;
      fs::create_directories(output);
      const auto names = case_names(data);
      if (names.empty()) throw IoError("no case_* directories under '" + data + "'");
      for (const auto& name : names) {
        const Volume v = load_case((fs::path(data) / name).string());
        check_dataset(graph.config(), {v}, "input");
        save_label_map((fs::path(output) / (name + ".stuw")).string(),
                       sliding_window_infer(graph, store, v.image, p, options));
      }
      out << "wrote " << names.size() << " predictions to " << output << "\n";
      return kExitOk;
    }

    if (*eval) {
      const MergeSpec spec = parse_merge_spec(merge);
      const auto names = case_names(data);
      if (names.empty()) throw IoError("no case_* directories under '" + data + "'");
      nlohmann::json doc{{"merge", format_merge_spec(spec)}, {"cases", nlohmann::json::array()}};
      double sum = 0.0;
      out << std::fixed << std::setprecision(4);
      for (const auto& name : names) {
        const Volume v = load_case((fs::path(data) / name).string());
        const LabelMap p = load_label_map((fs::path(pred) / (name + ".stuw")).string());
        const auto per_class = merged_foreground_dsc(p, v.labels, v.num_classes, spec);
        const double mean = merged_mean_dsc(p, v.labels, v.num_classes, spec);
        sum += mean;
        nlohmann::json entry{{"case", name}, {"mean_dsc", mean}, {"dsc", nlohmann::json::object()}};
        out << name << "  mean " << mean;
        for (const auto& [id, d] : per_class) {
          entry["dsc"][std::to_string(id)] = d;
          out << "  " << id << ":" << d;
        }
        out << "\n";
        doc["cases"].push_back(entry);
      }
      const double mean = sum / static_cast<double>(names.size());
      doc["mean_dsc"] = mean;
      out << "mean foreground DSC " << mean << "\n";
      if (!output.empty()) write_text(output, doc.dump(2) + "\n");
      return kExitOk;
    }
  } catch (const ConfigError& e) {
    err << "config error: " << e.what() << "\n";
    return kExitUsage;
  } catch (const InvalidInput& e) {
    err << "invalid input: " << e.what() << "\n";
    return kExitUsage;
  } catch (const MissingParameter& e) {
    err << "weights do not fit the config: " << e.what() << "\n";
    return kExitUsage;
  } catch (const ShapeMismatch& e) {
    err << "weights do not fit the config: " << e.what() << "\n";
    return kExitUsage;
  } catch (const IoError& e) {
    err << "i/o error: " << e.what() << "\n";
    return kExitIo;
  } catch (const FormatError& e) {
    err << "format error: " << e.what() << "\n";
    return kExitIo;
  } catch (const fs::filesystem_error& e) {
    err << "i/o error: " << e.what() << "\n";
    return kExitIo;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << "\n";
    return kExitFailure;
  }
  return kExitUsage;
}

}  // namespace stunet::cli
