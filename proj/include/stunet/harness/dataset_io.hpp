#pragma once

#include <string>
#include <vector>

#include "stunet/harness/volume.hpp"

namespace stunet {

// A case directory holds volume.stuw (tensors "image", C x D x H x W, and
// "labels", D x H x W stored as f32) and meta.json {spacing, classes}.
inline constexpr const char* kCaseTensorFile = "volume.stuw";
inline constexpr const char* kCaseMetaFile = "meta.json";

void save_case(const std::string& dir, const Volume& volume);
Volume load_case(const std::string& dir);

// Cases are written as <root>/case_000, case_001, ...
void save_dataset(const std::string& root, const std::vector<Volume>& volumes);
// Loads every case_* directory under root in name order.
std::vector<Volume> load_dataset(const std::string& root);
std::vector<std::string> case_names(const std::string& root);

// Single label map in the weight container (tensor "labels").
void save_label_map(const std::string& path, const LabelMap& labels);
LabelMap load_label_map(const std::string& path);

}  // namespace stunet
