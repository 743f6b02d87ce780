#pragma once

#include <string>
#include <vector>

#include "stunet/arch/config.hpp"

namespace stunet {

struct GoldenRow {
  std::string table;  // "table2", "table5" or "table6"
  std::string label;
  ArchConfig config;
  double params_M = 0.0;
  double flops_T = 0.0;
};

// Published values are given to two decimals; a computed value matches when
// it lies within half a unit of the last digit.
inline constexpr double kParamsTolM = 0.005;
inline constexpr double kFlopsTolT = 0.005;

// Reference rows of one table, or of all three when `table` is empty.
// Throws ConfigError for an unknown table name.
std::vector<GoldenRow> golden_rows(const std::string& table = "");

const std::vector<std::string>& golden_table_names();

}  // namespace stunet
