#include "stunet/accounting/golden.hpp"

#include "stunet/common/error.hpp"

namespace stunet {

namespace {

ArchConfig scaled(const ArchConfig& base, double d, double w) { return scale(base, {d, w}); }

std::vector<GoldenRow> table2() {
  // Scales of the proposed model, 1 input channel, 105 classes, 128^3 patch.
  return {
      {"table2", "STU-Net-S", presets::stunet_small(), 14.60, 0.13},
      {"table2", "STU-Net-B", presets::stunet_base(), 58.26, 0.51},
      {"table2", "STU-Net-L", presets::stunet_large(), 440.30, 3.81},
      {"table2", "STU-Net-H", presets::stunet_huge(), 1457.33, 12.60},
  };
}

std::vector<GoldenRow> table5() {
  // Architectural variants of the base model.
  const ArchConfig b = presets::stunet_base();
  return {
      {"table5", "nnU-Net", presets::nnunet(), 31.28, 0.54},
      {"table5", "nnU-Net*", presets::nnunet_wide(), 60.18, 0.55},
      {"table5", "STU-Net-B", b, 58.26, 0.51},
      {"table5", "STU-Net-B (Conv DS)", variant(b, Variant::conv_downsample), 66.02, 0.54},
      {"table5", "STU-Net-B (Transpose Conv US)", variant(b, Variant::transpose_up), 61.32, 0.56},
      {"table5", "STU-Net-B (Trilinear US)", variant(b, Variant::trilinear_up), 58.26, 0.51},
  };
}

std::vector<GoldenRow> table6() {
  // Scaling dimensions; nnU-Net* is the 512-capped plain network.
  const ArchConfig n = presets::nnunet_wide();
  const ArchConfig s = presets::stunet_base();
  return {
      {"table6", "nnU-Net* w=2", scaled(n, 1, 2), 240.47, 2.19},
      {"table6", "STU-Net w=2", scaled(s, 1, 2), 232.80, 2.00},
      {"table6", "nnU-Net* w=3", scaled(n, 1, 3), 540.88, 4.92},
      {"table6", "STU-Net w=3", scaled(s, 1, 3), 523.62, 4.49},
      {"table6", "nnU-Net* w=4", scaled(n, 1, 4), 961.40, 8.73},
      {"table6", "STU-Net w=4", scaled(s, 1, 4), 930.71, 7.97},
      {"table6", "nnU-Net* d=2", scaled(n, 2, 1), 112.06, 1.01},
      {"table6", "STU-Net d=2", scaled(s, 2, 1), 110.15, 0.96},
      {"table6", "nnU-Net* d=3", scaled(n, 3, 1), 163.94, 1.46},
      {"table6", "STU-Net d=3", scaled(s, 3, 1), 162.03, 1.41},
      {"table6", "nnU-Net* d=4", scaled(n, 4, 1), 215.83, 1.91},
      {"table6", "STU-Net d=4", scaled(s, 4, 1), 213.91, 1.86},
      {"table6", "nnU-Net* d=2,w=2", scaled(n, 2, 2), 447.97, 4.00},
      {"table6", "STU-Net d=2,w=2", scaled(s, 2, 2), 440.30, 3.81},
      {"table6", "nnU-Net* d=3,w=3", scaled(n, 3, 3), 1474.59, 13.03},
      {"table6", "STU-Net d=3,w=3", scaled(s, 3, 3), 1457.33, 12.60},
  };
}

}  // namespace

const std::vector<std::string>& golden_table_names() {
  static const std::vector<std::string> names{"table2", "table5", "table6"};
  return names;
}

std::vector<GoldenRow> golden_rows(const std::string& table) {
  if (table == "table2") return table2();
  if (table == "table5") return table5();
  if (table == "table6") return table6();
  if (table.empty()) {
    std::vector<GoldenRow> all = table2();
    for (auto& r : table5()) all.push_back(std::move(r));
    for (auto& r : table6()) all.push_back(std::move(r));
    return all;
  }
  throw ConfigError("which", "unknown table '" + table + "' (expected table2, table5 or table6)");
}

}  // namespace stunet
