#pragma once

#include <cstddef>
#include <string>
#include <vector>

#include "stunet/accounting/convention.hpp"
#include "stunet/accounting/golden.hpp"
#include "stunet/common/triple.hpp"

namespace stunet {

struct CellResult {
  std::string table;
  std::string label;
  std::string column;  // "params" or "flops"
  double published = 0.0;
  double computed = 0.0;
  bool ok = false;

  double delta() const { return computed - published; }
};

struct Evaluation {
  Convention convention;
  std::vector<CellResult> cells;
  int misses = 0;
  double total_rel_error = 0.0;  // sum of |delta| / published over all cells
};

Evaluation evaluate(const Convention& convention, const std::vector<GoldenRow>& rows,
                    Triple patch = {128, 128, 128});

// Every combination of mac_factor, norm/act charging, conv bias, deep
// supervision, shortcut norm, bias ops, stride position, stem variant,
// transpose costing, separate down-sampling kernel and plain-network up/head
// bias (2048 in total).
std::vector<Convention> candidate_conventions();

struct CalibrationResult {
  Convention chosen;
  bool unique = false;                 // exactly one candidate reproduces every cell
  std::size_t candidates = 0;
  std::vector<Evaluation> survivors;   // candidates with zero misses
  std::vector<Evaluation> near_misses; // best failing candidates, lowest error first
};

// Picks the single candidate that reproduces all rows. Without a unique
// survivor the lowest-error candidate (among survivors if any) is chosen.
CalibrationResult calibrate(const std::vector<Convention>& candidates, const std::vector<GoldenRow>& rows,
                            std::size_t keep_near_misses = 5);

std::string render_calibration_report(const CalibrationResult& result);

}  // namespace stunet
