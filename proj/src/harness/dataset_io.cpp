#include "stunet/harness/dataset_io.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <nlohmann/json.hpp>

#include "stunet/common/error.hpp"
#include "stunet/weights/serialize.hpp"

namespace fs = std::filesystem;

namespace stunet {

namespace {

Tensor labels_to_tensor(const LabelMap& labels) {
  Tensor t({labels.extent[0], labels.extent[1], labels.extent[2]});
  for (size_t i = 0; i < labels.data.size(); ++i) t[static_cast<int64_t>(i)] = static_cast<float>(labels.data[i]);
  return t;
}

LabelMap tensor_to_labels(const Tensor& t, const std::string& where) {
  if (t.rank() != 3) throw FormatError("payload", where + ": labels must be D x H x W");
  LabelMap m({static_cast<int>(t.dim(0)), static_cast<int>(t.dim(1)), static_cast<int>(t.dim(2))});
  for (size_t i = 0; i < m.data.size(); ++i) {
    const float v = t[static_cast<int64_t>(i)];
    if (!(v >= 0.0f) || v != std::floor(v) || v > 1e7f) {
      throw FormatError("payload", where + ": label values must be non-negative integers");
    }
    m.data[i] = static_cast<int32_t>(v);
  }
  return m;
}

void ensure_dir(const std::string& dir) {
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec) throw IoError("cannot create directory '" + dir + "': " + ec.message());
}

}  // namespace

void save_case(const std::string& dir, const Volume& volume) {
  volume.validate();
  ensure_dir(dir);
  WeightStore store;
  store.insert("image", volume.image);
  store.insert("labels", labels_to_tensor(volume.labels));
  save(store, (fs::path(dir) / kCaseTensorFile).string());
  const nlohmann::json meta{{"spacing", volume.spacing}, {"classes", volume.num_classes}};
  std::ofstream out(fs::path(dir) / kCaseMetaFile, std::ios::trunc);
  if (!out) throw IoError("cannot write metadata in '" + dir + "'");
  out << meta.dump(2) << "\n";
}

Volume load_case(const std::string& dir) {
  const WeightStore store = load((fs::path(dir) / kCaseTensorFile).string());
  std::ifstream in(fs::path(dir) / kCaseMetaFile);
  if (!in) throw IoError("missing " + std::string(kCaseMetaFile) + " in '" + dir + "'");
  nlohmann::json meta;
  Volume v;
  try {
    in >> meta;
    v.spacing = meta.at("spacing").get<std::array<double, 3>>();
    v.num_classes = meta.at("classes").get<int>();
  } catch (const nlohmann::json::exception& e) {
    throw FormatError("meta", dir + ": " + e.what());
  }
  v.image = store.at("image");
  v.labels = tensor_to_labels(store.at("labels"), dir);
  v.validate();
  return v;
}

void save_dataset(const std::string& root, const std::vector<Volume>& volumes) {
  ensure_dir(root);
  char name[32];
  for (size_t i = 0; i < volumes.size(); ++i) {
    std::snprintf(name, sizeof name, "case_%03zu", i);
    save_case((fs::path(root) / name).string(), volumes[i]);
  }
}

std::vector<std::string> case_names(const std::string& root) {
  std::error_code ec;
  if (!fs::is_directory(root, ec)) throw IoError("dataset directory '" + root + "' does not exist");
  std::vector<std::string> names;
  for (const auto& entry : fs::directory_iterator(root)) {
    const std::string n = entry.path().filename().string();
    if (entry.is_directory() && n.rfind("case_", 0) == 0) names.push_back(n);
  }
  std::sort(names.begin(), names.end());
  return names;
}

std::vector<Volume> load_dataset(const std::string& root) {
  std::vector<Volume> out;
  for (const auto& n : case_names(root)) out.push_back(load_case((fs::path(root) / n).string()));
  if (out.empty()) throw IoError("no case_* directories under '" + root + "'");
  return out;
}

void save_label_map(const std::string& path, const LabelMap& labels) {
  WeightStore store;
  store.insert("labels", labels_to_tensor(labels));
  save(store, path);
}

LabelMap load_label_map(const std::string& path) {
  const WeightStore store = load(path);
  return tensor_to_labels(store.at("labels"), path);
}

}  // namespace stunet
