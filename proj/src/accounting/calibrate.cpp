#include "stunet/accounting/calibrate.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <sstream>

#include "stunet/accounting/cost.hpp"

namespace stunet {

namespace {

// Absorbs binary rounding of values like 58.255 so the published half-unit
// boundary is honoured.
constexpr double kSlack = 1e-9;

}  // namespace

Evaluation evaluate(const Convention& convention, const std::vector<GoldenRow>& rows, Triple patch) {
  Evaluation ev;
  ev.convention = convention;
  for (const auto& row : rows) {
    const CostReport r = cost_of(row.config, patch, convention);
    CellResult p{row.table, row.label, "params", row.params_M, r.params_M(), false};
    p.ok = std::abs(p.delta()) <= kParamsTolM + kSlack;
    CellResult f{row.table, row.label, "flops", row.flops_T, r.flops_T(), false};
    f.ok = std::abs(f.delta()) <= kFlopsTolT + kSlack;
    for (CellResult* c : {&p, &f}) {
      if (!c->ok) ++ev.misses;
      ev.total_rel_error += std::abs(c->delta()) / c->published;
      ev.cells.push_back(*c);
    }
  }
  return ev;
}

std::vector<Convention> candidate_conventions() {
  std::vector<Convention> out;
  for (int mac : {1, 2})
    for (bool norm_act : {false, true})
      for (bool bias : {true, false})
        for (bool ds : {true, false})
          for (ShortcutNorm sn : {ShortcutNorm::none, ShortcutNorm::instance})
            for (bool bias_ops : {true, false})
              for (StridePosition sp : {StridePosition::first_conv, StridePosition::second_conv})
                for (StemVariant stem : {StemVariant::residual_projection, StemVariant::conv_norm_act})
                  for (TransposeCost tc : {TransposeCost::per_output_voxel, TransposeCost::per_input_voxel})
                    for (SeparateDownKernel k : {SeparateDownKernel::ratio, SeparateDownKernel::cube3})
                      for (bool plain_bias : {false, true}) {
                        Convention c;
                        c.mac_factor = mac;
                        c.include_norm_act = norm_act;
                        c.conv_bias = bias;
                        c.deep_supervision = ds;
                        c.downsample_norm_variant = sn;
                        c.bias_ops = bias_ops;
                        c.downsample_stride_position = sp;
                        c.stem_variant = stem;
                        c.transpose_cost = tc;
                        c.separate_downsample_kernel = k;
                        c.plain_up_head_bias = plain_bias;
                        out.push_back(c);
                      }
  return out;
}

CalibrationResult calibrate(const std::vector<Convention>& candidates, const std::vector<GoldenRow>& rows,
                            std::size_t keep_near_misses) {
  CalibrationResult result;
  result.candidates = candidates.size();
  std::vector<Evaluation> failing;
  for (const auto& c : candidates) {
    Evaluation ev = evaluate(c, rows);
    (ev.misses == 0 ? result.survivors : failing).push_back(std::move(ev));
  }
  auto by_error = [](const Evaluation& a, const Evaluation& b) {
    if (a.misses != b.misses) return a.misses < b.misses;
    return a.total_rel_error < b.total_rel_error;
  };
  std::stable_sort(result.survivors.begin(), result.survivors.end(), by_error);
  std::stable_sort(failing.begin(), failing.end(), by_error);
  result.unique = result.survivors.size() == 1;
  if (!result.survivors.empty()) {
    result.chosen = result.survivors.front().convention;
  } else if (!failing.empty()) {
    result.chosen = failing.front().convention;
  }
  failing.resize(std::min(failing.size(), keep_near_misses));
  result.near_misses = std::move(failing);
  return result;
}

namespace {

void render_cells(std::ostringstream& os, const Evaluation& ev, bool misses_only) {
  char line[256];
  for (const auto& c : ev.cells) {
    if (misses_only && c.ok) continue;
    std::snprintf(line, sizeof line, "    %-7s %-32s %-6s published %9.2f  computed %11.4f  delta %+9.4f  %s\n",
                  c.table.c_str(), c.label.c_str(), c.column.c_str(), c.published, c.computed, c.delta(),
                  c.ok ? "ok" : "MISS");
    os << line;
  }
}

}  // namespace

std::string render_calibration_report(const CalibrationResult& r) {
  std::ostringstream os;
  os << "candidates: " << r.candidates << "\n";
  os << "survivors: " << r.survivors.size() << (r.unique ? " (unique)" : "") << "\n";
  os << "chosen: " << describe(r.chosen) << "\n";
  for (const auto& s : r.survivors) {
    os << "  survivor: " << describe(s.convention) << "  total relative error " << s.total_rel_error << "\n";
  }
  if (!r.survivors.empty()) {
    os << "cells under the chosen convention:\n";
    render_cells(os, r.survivors.front(), false);
  }
  for (const auto& n : r.near_misses) {
    os << "  near miss (" << n.misses << " cells): " << describe(n.convention) << "\n";
    render_cells(os, n, true);
  }
  return os.str();
}

}  // namespace stunet
