#include "stunet/harness/metrics.hpp"

#include <cctype>
#include <map>
#include <numeric>
#include <set>

#include "stunet/common/error.hpp"

namespace stunet {

double dsc(const LabelMap& pred, const LabelMap& gt, int class_id) {
  if (pred.extent != gt.extent || pred.data.size() != gt.data.size()) {
    throw InvalidInput("prediction " + to_string(pred.extent) + " and ground truth " + to_string(gt.extent) +
                       " differ in extent");
  }
  int64_t p = 0, g = 0, both = 0;
  for (size_t i = 0; i < pred.data.size(); ++i) {
    const bool in_p = pred.data[i] == class_id;
    const bool in_g = gt.data[i] == class_id;
    p += in_p;
    g += in_g;
    both += in_p && in_g;
  }
  if (p + g == 0) return 1.0;
  return 2.0 * static_cast<double>(both) / static_cast<double>(p + g);
}

std::vector<double> foreground_dsc(const LabelMap& pred, const LabelMap& gt, int num_classes) {
  std::vector<double> out;
  for (int k = 1; k < num_classes; ++k) out.push_back(dsc(pred, gt, k));
  return out;
}

double mean_foreground_dsc(const LabelMap& pred, const LabelMap& gt, int num_classes) {
  const auto v = foreground_dsc(pred, gt, num_classes);
  if (v.empty()) throw InvalidInput("no foreground classes to evaluate");
  return std::accumulate(v.begin(), v.end(), 0.0) / static_cast<double>(v.size());
}

LabelMap merge_labels(const LabelMap& labels, const MergeSpec& spec) {
  std::map<int32_t, int32_t> table;
  for (const auto& [sources, target] : spec) {
    for (int s : sources) {
      auto [it, inserted] = table.emplace(s, target);
      if (!inserted && it->second != target) {
        throw InvalidInput("label " + std::to_string(s) + " is merged into two different targets");
      }
    }
  }
  for (const auto& [sources, target] : spec) {
    auto it = table.find(target);
    if (it != table.end() && it->second != target) {
      throw InvalidInput("merge target " + std::to_string(target) + " is itself merged into " +
                         std::to_string(it->second));
    }
  }
  LabelMap out = labels;
  if (table.empty()) return out;
  for (auto& v : out.data) {
    auto it = table.find(v);
    if (it != table.end()) v = it->second;
  }
  return out;
}

namespace {

std::string strip(const std::string& s) {
  std::string out;
  for (char c : s) {
    if (!std::isspace(static_cast<unsigned char>(c))) out += c;
  }
  return out;
}

int parse_id(const std::string& s) {
  size_t used = 0;
  int v = 0;
  try {
    v = std::stoi(s, &used);
  } catch (const std::exception&) {
    used = 0;
  }
  if (used == 0 || used != s.size() || v < 0) throw ConfigError("merge", "bad label id '" + s + "'");
  return v;
}

}  // namespace

MergeSpec parse_merge_spec(const std::string& text) {
  MergeSpec spec;
  const std::string t = strip(text);
  size_t start = 0;
  while (start < t.size()) {
    size_t end = t.find(';', start);
    if (end == std::string::npos) end = t.size();
    const std::string entry = t.substr(start, end - start);
    start = end + 1;
    if (entry.empty()) continue;
    const size_t arrow = entry.find("->");
    if (arrow == std::string::npos) throw ConfigError("merge", "entry '" + entry + "' lacks '->'");
    std::vector<int> sources;
    const std::string lhs = entry.substr(0, arrow);
    size_t s = 0;
    while (s <= lhs.size()) {
      size_t e = lhs.find(',', s);
      if (e == std::string::npos) e = lhs.size();
      sources.push_back(parse_id(lhs.substr(s, e - s)));
      s = e + 1;
    }
    spec.emplace_back(std::move(sources), parse_id(entry.substr(arrow + 2)));
  }
  return spec;
}

std::string format_merge_spec(const MergeSpec& spec) {
  std::string out;
  for (size_t i = 0; i < spec.size(); ++i) {
    if (i) out += ';';
    for (size_t j = 0; j < spec[i].first.size(); ++j) out += (j ? "," : "") + std::to_string(spec[i].first[j]);
    out += "->" + std::to_string(spec[i].second);
  }
  return out;
}

std::vector<int> merged_class_ids(const MergeSpec& spec, int num_classes) {
  LabelMap ids({num_classes, 1, 1});
  std::iota(ids.data.begin(), ids.data.end(), 0);
  const LabelMap merged = merge_labels(ids, spec);
  std::set<int> present(merged.data.begin(), merged.data.end());
  return {present.begin(), present.end()};
}

std::vector<std::pair<int, double>> merged_foreground_dsc(const LabelMap& pred, const LabelMap& gt, int num_classes,
                                                          const MergeSpec& spec) {
  const LabelMap p = merge_labels(pred, spec);
  const LabelMap g = merge_labels(gt, spec);
  std::vector<std::pair<int, double>> out;
  for (int id : merged_class_ids(spec, num_classes)) {
    if (id != 0) out.emplace_back(id, dsc(p, g, id));
  }
  return out;
}

double merged_mean_dsc(const LabelMap& pred, const LabelMap& gt, int num_classes, const MergeSpec& spec) {
  const auto per_class = merged_foreground_dsc(pred, gt, num_classes, spec);
  if (per_class.empty()) throw InvalidInput("no foreground classes to evaluate");
  double sum = 0.0;
  for (const auto& [id, v] : per_class) sum += v;
  return sum / static_cast<double>(per_class.size());
}

}  // namespace stunet
