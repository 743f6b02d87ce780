#pragma once

#include <string>
#include <utility>
#include <vector>

#include "stunet/accounting/calibrate.hpp"
#include "stunet/accounting/convention.hpp"
#include "stunet/arch/config.hpp"

namespace stunet {

using LabeledConfig = std::pair<std::string, ArchConfig>;

// Columns: Model, depth, width, Params (M), FLOPs (T); two decimals.
// Configs are counted as given (their own deep-supervision flag).
std::string emit_table(const std::vector<LabeledConfig>& rows, Triple patch, const Convention& convention);
std::string emit_table_csv(const std::vector<LabeledConfig>& rows, Triple patch, const Convention& convention);

// Published value, computed value and delta for every cell of an evaluation,
// followed by a "N/M cells within tolerance" summary line.
std::string render_reproduction(const Evaluation& ev);
std::string render_reproduction_csv(const Evaluation& ev);

std::string format_tuple(const std::vector<int>& v);

}  // namespace stunet
