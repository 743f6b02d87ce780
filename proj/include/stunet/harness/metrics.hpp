#pragma once

#include <string>
#include <utility>
#include <vector>

#include "stunet/harness/volume.hpp"

namespace stunet {

// 2|P & G| / (|P| + |G|) for one class; 1 when both are empty.
double dsc(const LabelMap& pred, const LabelMap& gt, int class_id);

// Per-class DSC for classes 1..num_classes-1.
std::vector<double> foreground_dsc(const LabelMap& pred, const LabelMap& gt, int num_classes);
double mean_foreground_dsc(const LabelMap& pred, const LabelMap& gt, int num_classes);

// Each entry rewrites every listed source id to its target id.
using MergeSpec = std::vector<std::pair<std::vector<int>, int>>;

// Unlisted ids are left alone. Throws InvalidInput when one source id is
// claimed by two entries or a target is remapped elsewhere, so merging is
// idempotent.
LabelMap merge_labels(const LabelMap& labels, const MergeSpec& spec);

// "1,2->1;5,6,7->5" (whitespace ignored, empty string = no merges).
MergeSpec parse_merge_spec(const std::string& text);
std::string format_merge_spec(const MergeSpec& spec);

// Class ids that still occur after merging classes 0..num_classes-1.
std::vector<int> merged_class_ids(const MergeSpec& spec, int num_classes);

// Merges both maps with `spec`, then averages DSC over the surviving
// foreground ids. An empty spec gives mean_foreground_dsc.
std::vector<std::pair<int, double>> merged_foreground_dsc(const LabelMap& pred, const LabelMap& gt, int num_classes,
                                                          const MergeSpec& spec);
double merged_mean_dsc(const LabelMap& pred, const LabelMap& gt, int num_classes, const MergeSpec& spec);

}  // namespace stunet
