// Acceptance run: one PASS/FAIL line per criterion. Optional arguments select
// criteria by number, e.g. `acceptance 1 2 3`.

#include <chrono>
#include <cmath>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iomanip>
#include <iostream>
#include <nlohmann/json.hpp>
#include <numeric>
#include <random>
#include <set>
#include <sstream>

#include "cli.hpp"
#include "stunet/accounting/calibrate.hpp"
#include "stunet/accounting/convention.hpp"
#include "stunet/accounting/golden.hpp"
#include "stunet/arch/forward.hpp"
#include "stunet/harness/dataset_io.hpp"
#include "stunet/harness/metrics.hpp"
#include "stunet/harness/scenario.hpp"
#include "stunet/tensor/kernels.hpp"
#include "stunet/weights/serialize.hpp"
#include "stunet/weights/transfer.hpp"
#include "support/gradcheck.hpp"

using namespace stunet;
namespace fs = std::filesystem;
using Clock = std::chrono::steady_clock;

namespace {

constexpr double kCountingSeconds = 1.0;
constexpr int kGradCasesPerOp = 20;
constexpr double kGradTol = 1e-3;
constexpr double kGradSeconds = 120.0;
constexpr int kConvInstances = 100;
constexpr double kConvTol = 1e-5;
constexpr int kTransferInputs = 10;
constexpr int kRandomStores = 50;
constexpr double kPretrainDsc = 0.80;
constexpr double kTransferDsc = 0.70;
constexpr double kScenarioSeconds = 30 * 60;
constexpr int kMergeInstances = 100;
constexpr double kMergeTol = 1e-12;

struct Outcome {
  bool pass = false;
  std::string detail;
};

double seconds_since(Clock::time_point t0) {
  return std::chrono::duration<double>(Clock::now() - t0).count();
}

std::string fmt(double v, int digits = 4) {
  std::ostringstream os;
  os << std::fixed << std::setprecision(digits) << v;
  return os.str();
}

std::string sci(double v) {
  std::ostringstream os;
  os << std::scientific << std::setprecision(2) << v;
  return os.str();
}

long peak_rss_kb() {
  std::ifstream in("/proc/self/status");
  std::string line;
  while (std::getline(in, line)) {
    if (line.rfind("VmHWM:", 0) == 0) return std::stol(line.substr(6));
  }
  return -1;
}

fs::path scratch_dir(const std::string& tag) {
  const fs::path p = fs::temp_directory_path() / ("stunet_accept_" + tag + "_" + std::to_string(std::random_device{}()));
  fs::create_directories(p);
  return p;
}

Outcome table_criterion(const std::string& table, size_t expected_rows) {
  const auto t0 = Clock::now();
  const std::vector<GoldenRow> rows = golden_rows(table);
  const Evaluation ev = evaluate(frozen_convention(), rows);
  const double secs = seconds_since(t0);
  double worst_p = 0.0, worst_f = 0.0;
  std::string misses;
  for (const auto& c : ev.cells) {
    (c.column == "params" ? worst_p : worst_f) = std::max(c.column == "params" ? worst_p : worst_f, std::abs(c.delta()));
    if (!c.ok) misses += " " + c.label + "/" + c.column;
  }
  Outcome o;
  o.pass = rows.size() == expected_rows && ev.misses == 0 && worst_p <= kParamsTolM && worst_f <= kFlopsTolT &&
           secs < kCountingSeconds;
  o.detail = std::to_string(ev.cells.size()) + " cells, max |dParams| " + fmt(worst_p) + " M, max |dFLOPs| " +
             fmt(worst_f) + " T, " + fmt(secs, 3) + " s" + (misses.empty() ? "" : ", misses:" + misses);
  return o;
}

Outcome criterion1() {
  Outcome o = table_criterion("table2", 4);
  const Convention stored = load_convention(std::string(STUNET_DATA_DIR) + "/convention.json");
  if (!(stored == frozen_convention())) {
    o.pass = false;
    o.detail += ", committed convention differs from the frozen one";
  }
  return o;
}

Outcome criterion4() {
  const auto t0 = Clock::now();
  testkit::Rng rng(2024);
  double worst = 0.0;
  std::string worst_op;
  int total = 0;
  bool enough = true;
  for (const auto& op : testkit::differentiable_ops()) {
    const auto cases = testkit::gradient_cases(op, kGradCasesPerOp, rng);
    enough = enough && static_cast<int>(cases.size()) >= kGradCasesPerOp;
    for (const auto& c : cases) {
      const double e = testkit::check_gradients(c).max_rel_error;
      if (!(e <= worst)) {
        worst = e;
        worst_op = op;
      }
      ++total;
    }
  }
  const double secs = seconds_since(t0);
  return {enough && worst < kGradTol && secs < kGradSeconds,
          std::to_string(testkit::differentiable_ops().size()) + " ops, " + std::to_string(total) +
              " cases, worst rel. error " + sci(worst) + " (" + worst_op + "), " + fmt(secs, 1) + " s"};
}

Outcome criterion5() {
  testkit::Rng rng(55);
  std::uniform_int_distribution<int> ext(1, 5), kern(1, 3), st(1, 2), ch(1, 3);
  auto random_float = [&](const Shape& s) { return testkit::random_tensor(s, rng).cast<float>(); };
  double worst = 0.0;
  int checked = 0;
  while (checked < kConvInstances) {
    const Triple k{kern(rng), kern(rng), kern(rng)};
    const Triple s{st(rng), st(rng), st(rng)};
    Triple p;
    Shape xs{ch(rng), ch(rng), ext(rng), ext(rng), ext(rng)};
    bool ok = true;
    for (int a = 0; a < 3; ++a) {
      p[a] = std::uniform_int_distribution<int>(0, k[a] / 2 + 1)(rng);
      ok = ok && kernels::conv_out_extent(static_cast<int>(xs[2 + a]), k[a], s[a], p[a]) >= 1;
    }
    if (!ok) continue;
    const Tensor x = random_float(xs);
    const Tensor w = random_float({ch(rng), xs[1], k[0], k[1], k[2]});
    const Tensor b = random_float({w.dim(0)});
    const Tensor fast = kernels::conv3d(x, w, &b, s, p);
    const Tensor slow = testkit::naive_conv3d(x, w, &b, s, p);
    if (fast.shape() != slow.shape()) return {false, "shape disagreement at instance " + std::to_string(checked)};
    for (int64_t i = 0; i < fast.numel(); ++i) worst = std::max(worst, double(std::abs(fast[i] - slow[i])));
    ++checked;
  }
  return {worst < kConvTol, std::to_string(checked) + " instances, max |diff| " + sci(worst)};
}

Outcome criterion6() {
  const NetworkGraph src = build(toy_config(1, 4));
  const WeightStore pre = init_weights(src, 61);
  const NetworkGraph dst = build(toy_config(1, 9));
  const WeightStore moved = transfer(pre, dst, 62).store;
  testkit::Rng rng(63);
  size_t compared = 0;
  for (int i = 0; i < kTransferInputs; ++i) {
    const Tensor x = testkit::random_tensor({1, 1, 32, 32, 32}, rng, -3.0, 3.0).cast<float>();
    const auto a = forward(src, pre, x, {false, true}).activations;
    const auto b = forward(dst, moved, x, {false, true}).activations;
    if (a.size() != b.size()) return {false, "activation sets differ"};
    for (const auto& [name, t] : a) {
      if (!(b.at(name) == t)) return {false, "input " + std::to_string(i) + ": " + name + " differs"};
      ++compared;
    }
  }

  size_t replicated = 0;
  for (int channels : {2, 3, 4}) {
    const NetworkGraph wide = build(toy_config(channels, 4));
    const WeightStore rep = transfer(pre, wide, 64).store;
    for (int i = 0; i < 3; ++i) {
      const Tensor x = testkit::random_tensor({1, 1, 32, 32, 32}, rng, -3.0, 3.0).cast<float>();
      Tensor padded({1, channels, 32, 32, 32});
      std::copy(x.data().begin(), x.data().end(), padded.data().begin());
      const auto a = forward(src, pre, x, {false, true}).activations;
      const auto b = forward(wide, rep, padded, {false, true}).activations;
      for (const auto& [name, t] : a) {
        if (!(b.at(name) == t)) {
          return {false, std::to_string(channels) + "-channel replication: " + name + " differs"};
        }
        ++replicated;
      }
    }
  }
  return {true, std::to_string(kTransferInputs) + " inputs, " + std::to_string(compared) +
                    " pre-head activations bit-identical; replication (2,3,4 channels, zero-padded) " +
                    std::to_string(replicated) + " activations bit-identical"};
}

Outcome criterion7() {
  const fs::path dir = scratch_dir("serialize");
  std::mt19937_64 rng(77);
  for (int i = 0; i < kRandomStores; ++i) {
    WeightStore s;
    const int n = std::uniform_int_distribution<int>(0, 16)(rng);
    for (int j = 0; j < n; ++j) {
      Shape shape;
      const int rank = std::uniform_int_distribution<int>(1, 5)(rng);
      for (int r = 0; r < rank; ++r) shape.push_back(std::uniform_int_distribution<int>(1, 6)(rng));
      Tensor t(shape);
      for (auto& v : t.data()) {
        const uint32_t bits = static_cast<uint32_t>(rng());
        std::memcpy(&v, &bits, sizeof v);
      }
      s.insert("t" + std::to_string(j), std::move(t));
    }
    save(s, (dir / "r.stuw").string());
    const WeightStore back = load((dir / "r.stuw").string());
    bool same = back.names() == s.names();
    for (size_t j = 0; same && j < s.names().size(); ++j) {
      const Tensor& a = s.at(s.names()[j]);
      const Tensor& b = back.at(s.names()[j]);
      same = a.shape() == b.shape() &&
             std::memcmp(a.ptr(), b.ptr(), sizeof(float) * static_cast<size_t>(a.numel())) == 0;
    }
    if (!same) {
      fs::remove_all(dir);
      return {false, "random store " + std::to_string(i) + " changed in the round trip"};
    }
  }

  // The L config is generated and verified one tensor at a time.
  const auto t0 = Clock::now();
  const NetworkGraph large = build(presets::stunet_large());
  std::vector<std::pair<std::string, Shape>> layout;
  int64_t elements = 0;
  for (const auto& p : large.parameters()) {
    layout.emplace_back(p.name, p.shape);
    elements += shape_numel(p.shape);
  }
  const std::string path = (dir / "large.stuw").string();
  {
    WeightFileWriter writer(path, layout);
    for (const auto& [name, shape] : layout) writer.write(name, init_parameter(large, name, 78));
    writer.finish();
  }
  const uint64_t file_bytes = fs::file_size(path);
  WeightFileReader reader(path);
  ManifestEntry e;
  Tensor t;
  size_t k = 0;
  bool same = true;
  while (same && reader.next(e, t)) {
    const Tensor expected = init_parameter(large, layout[k].first, 78);
    same = e.name == layout[k].first && t.shape() == expected.shape() &&
           std::memcmp(t.ptr(), expected.ptr(), sizeof(float) * static_cast<size_t>(t.numel())) == 0;
    ++k;
  }
  if (same) reader.verify_checksum();
  const double secs = seconds_since(t0);
  fs::remove_all(dir);
  same = same && k == layout.size();
  const bool params_ok = std::abs(static_cast<double>(elements) / 1e6 - 440.30) <= kParamsTolM;
  return {same && params_ok,
          std::to_string(kRandomStores) + " random stores bit-exact; L config " + fmt(elements / 1e6, 2) + " M params, " +
              fmt(static_cast<double>(file_bytes) / (1 << 20), 1) + " MiB file streamed in " + fmt(secs, 1) +
              " s, peak RSS " + fmt(static_cast<double>(peak_rss_kb()) / 1024.0, 1) + " MiB"};
}

Outcome criterion8() {
  const auto t0 = Clock::now();
  const ScenarioResult r = run_transfer_scenario({}, {}, [&](const std::string& phase, const EpochRecord& e) {
    std::cerr << "  " << phase << " epoch " << e.epoch + 1 << " val DSC " << fmt(*e.val_dsc) << " ("
              << fmt(seconds_since(t0), 0) << " s)\n";
  });
  const double secs = seconds_since(t0);
  const auto ft = epochs_to_reach(r.finetune, kTransferDsc);
  const auto sc = epochs_to_reach(r.scratch, kTransferDsc);
  auto epochs = [](const std::optional<int>& v) { return v ? std::to_string(*v) : std::string("never"); };
  const bool transfer_ok = ft && (!sc || *ft <= *sc);
  return {r.pretrain_dsc >= kPretrainDsc && transfer_ok && secs <= kScenarioSeconds,
          "pretrain held-out DSC " + fmt(r.pretrain_dsc) + " (need " + fmt(kPretrainDsc, 2) + "); epochs to DSC " +
              fmt(kTransferDsc, 2) + ": fine-tune " + epochs(ft) + ", scratch " + epochs(sc) + "; " +
              fmt(secs / 60.0, 1) + " min"};
}

LabelMap random_label_map(Triple extent, int num_classes, std::mt19937_64& rng) {
  LabelMap m(extent);
  // blocky maps so that classes overlap partially
  std::uniform_int_distribution<int> pick(0, num_classes - 1);
  for (int d = 0; d < extent[0]; ++d)
    for (int h = 0; h < extent[1]; ++h)
      for (int w = 0; w < extent[2]; ++w) m.at(d, h, w) = (rng() % 4 == 0) ? pick(rng) : (d / 2 + h / 3 + w) % num_classes;
  return m;
}

MergeSpec random_merge(int num_classes, std::mt19937_64& rng) {
  std::vector<int> ids(static_cast<size_t>(num_classes));
  std::iota(ids.begin(), ids.end(), 0);
  std::shuffle(ids.begin(), ids.end(), rng);
  MergeSpec spec;
  size_t i = 0;
  while (i + 1 < ids.size()) {
    const size_t n = std::uniform_int_distribution<size_t>(1, std::min<size_t>(3, ids.size() - i))(rng);
    if (n >= 2 && rng() % 3 != 0) {
      std::vector<int> group(ids.begin() + long(i), ids.begin() + long(i + n));
      const int target = group[std::uniform_int_distribution<size_t>(0, n - 1)(rng)];
      spec.emplace_back(group, target);
    }
    i += n;
  }
  return spec;
}

double oracle_merged_dsc(const LabelMap& pred, const LabelMap& gt, int num_classes, const MergeSpec& spec) {
  std::vector<int> to(static_cast<size_t>(num_classes));
  std::iota(to.begin(), to.end(), 0);
  for (const auto& [sources, target] : spec)
    for (int s : sources) to[static_cast<size_t>(s)] = target;
  std::set<int> ids(to.begin(), to.end());
  ids.erase(0);
  double sum = 0.0;
  for (int id : ids) {
    int64_t p = 0, g = 0, both = 0;
    for (size_t i = 0; i < pred.data.size(); ++i) {
      const bool in_p = to[static_cast<size_t>(pred.data[i])] == id;
      const bool in_g = to[static_cast<size_t>(gt.data[i])] == id;
      p += in_p;
      g += in_g;
      both += in_p && in_g;
    }
    sum += p + g == 0 ? 1.0 : 2.0 * double(both) / double(p + g);
  }
  return sum / double(ids.size());
}

double eval_mean(const fs::path& pred, const fs::path& data, const std::string& merge, const fs::path& json) {
  std::ostringstream out, err;
  const int code = cli::run({"eval", "--pred", pred.string(), "--data", data.string(), "--merge", merge, "-o",
                             json.string()},
                            out, err);
  if (code != 0) throw std::runtime_error("eval exited " + std::to_string(code) + ": " + err.str());
  std::ifstream in(json);
  return nlohmann::json::parse(in).at("mean_dsc").get<double>();
}

Outcome criterion9() {
  const fs::path dir = scratch_dir("merge");
  std::mt19937_64 rng(99);
  double worst = 0.0;
  int merges = 0;
  for (int i = 0; i < kMergeInstances; ++i) {
    const int k = std::uniform_int_distribution<int>(3, 9)(rng);
    const Triple ext{std::uniform_int_distribution<int>(2, 8)(rng), std::uniform_int_distribution<int>(2, 8)(rng),
                     std::uniform_int_distribution<int>(2, 8)(rng)};
    Volume v;
    v.image = Tensor({1, ext[0], ext[1], ext[2]});
    v.labels = random_label_map(ext, k, rng);
    v.num_classes = k;
    const LabelMap pred = random_label_map(ext, k, rng);
    const MergeSpec spec = random_merge(k, rng);
    merges += !spec.empty();
    const std::string text = format_merge_spec(spec);

    fs::remove_all(dir / "raw");
    fs::remove_all(dir / "merged");
    fs::create_directories(dir / "raw_pred");
    fs::create_directories(dir / "merged_pred");
    save_dataset((dir / "raw").string(), {v});
    save_label_map((dir / "raw_pred" / "case_000.stuw").string(), pred);
    Volume mv = v;
    mv.labels = merge_labels(v.labels, spec);
    save_dataset((dir / "merged").string(), {mv});
    save_label_map((dir / "merged_pred" / "case_000.stuw").string(), merge_labels(pred, spec));

    const double via_cli = eval_mean(dir / "raw_pred", dir / "raw", text, dir / "a.json");
    const double pre_merged = eval_mean(dir / "merged_pred", dir / "merged", text, dir / "b.json");
    const double oracle = oracle_merged_dsc(pred, v.labels, k, spec);
    worst = std::max({worst, std::abs(via_cli - pre_merged), std::abs(via_cli - oracle)});
  }
  fs::remove_all(dir);
  return {worst <= kMergeTol, std::to_string(kMergeInstances) + " instances (" + std::to_string(merges) +
                                  " with merges), max |diff| " + sci(worst)};
}

}  // namespace

int main(int argc, char** argv) {
  const std::vector<std::pair<std::string, std::function<Outcome()>>> criteria{
      {"Table 2 reproduction", criterion1},
      {"Table 5 reproduction", [] { return table_criterion("table5", 6); }},
      {"Table 6 reproduction", [] { return table_criterion("table6", 16); }},
      {"Gradient suite", criterion4},
      {"Conv oracle equivalence", criterion5},
      {"Transfer bit-exactness", criterion6},
      {"Serialization round-trip", criterion7},
      {"End-to-end smoke", criterion8},
      {"Label-merge correctness", criterion9},
  };
  std::set<int> selected;
  for (int i = 1; i < argc; ++i) selected.insert(std::atoi(argv[i]));

  bool all = true;
  for (size_t i = 0; i < criteria.size(); ++i) {
    const int id = static_cast<int>(i) + 1;
    if (!selected.empty() && !selected.count(id)) continue;
    Outcome o;
    try {
      o = criteria[i].second();
    } catch (const std::exception& e) {
      o = {false, std::string("exception: ") + e.what()};
    }
    all = all && o.pass;
    std::cout << (o.pass ? "PASS" : "FAIL") << "  " << id << ". " << criteria[i].first << ": " << o.detail
              << std::endl;
  }
  return all ? 0 : 1;
}
