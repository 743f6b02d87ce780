#include "stunet/common/error.hpp"

#include <sstream>

#include "stunet/common/triple.hpp"

namespace stunet {

namespace {

std::string join_names(const std::vector<std::string>& names) {
  std::ostringstream os;
  os << "missing or unknown parameters:";
  for (const auto& n : names) os << ' ' << n;
  return os.str();
}

std::string describe(const std::vector<ShapeMismatch::Entry>& entries) {
  std::ostringstream os;
  os << "shape mismatch on " << entries.size() << " parameter(s):";
  for (const auto& e : entries) {
    os << "\n  " << e.name << ": expected " << e.expected << ", got " << e.actual;
  }
  return os.str();
}

}  // namespace

MissingParameter::MissingParameter(std::vector<std::string> names)
    : Error(join_names(names)), names_(std::move(names)) {}

ShapeMismatch::ShapeMismatch(std::vector<Entry> entries)
    : Error(describe(entries)), entries_(std::move(entries)) {}

std::string to_string(const Triple& t) {
  return std::to_string(t[0]) + "," + std::to_string(t[1]) + "," + std::to_string(t[2]);
}

Triple parse_triple(const std::string& text) {
  Triple out{};
  std::vector<int> parts;
  std::string cur;
  for (char ch : text + ",") {
    if (ch == ',' || ch == 'x') {
      if (cur.empty()) throw InvalidInput("malformed triple '" + text + "'");
      size_t used = 0;
      int v = 0;
      try {
        v = std::stoi(cur, &used);
      } catch (const std::exception&) {
        throw InvalidInput("malformed triple '" + text + "'");
      }
      if (used != cur.size()) throw InvalidInput("malformed triple '" + text + "'");
      parts.push_back(v);
      cur.clear();
    } else if (ch != ' ') {
      cur.push_back(ch);
    }
  }
  if (parts.size() == 1) return filled(parts[0]);
  if (parts.size() != 3) throw InvalidInput("expected 3 comma-separated values, got '" + text + "'");
  for (int i = 0; i < 3; ++i) out[i] = parts[i];
  return out;
}

}  // namespace stunet
