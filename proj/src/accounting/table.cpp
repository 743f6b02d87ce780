#include "stunet/accounting/table.hpp"

#include <algorithm>
#include <cstdio>
#include <sstream>

#include "stunet/accounting/cost.hpp"

namespace stunet {

std::string format_tuple(const std::vector<int>& v) {
  std::string s = "(";
  for (size_t i = 0; i < v.size(); ++i) s += (i ? "," : "") + std::to_string(v[i]);
  return s + ")";
}

namespace {

std::string fixed2(double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.2f", v);
  return buf;
}

struct Row {
  std::vector<std::string> cells;
};

std::string align(const std::vector<std::string>& header, const std::vector<Row>& rows) {
  std::vector<size_t> w(header.size());
  for (size_t c = 0; c < header.size(); ++c) w[c] = header[c].size();
  for (const auto& r : rows)
    for (size_t c = 0; c < r.cells.size(); ++c) w[c] = std::max(w[c], r.cells[c].size());
  std::ostringstream os;
  auto line = [&](const std::vector<std::string>& cells) {
    for (size_t c = 0; c < cells.size(); ++c) {
      if (c) os << " | ";
      // first column left-aligned, the rest right-aligned
      if (c == 0) {
        os << cells[c] << std::string(w[c] - cells[c].size(), ' ');
      } else {
        os << std::string(w[c] - cells[c].size(), ' ') << cells[c];
      }
    }
    os << "\n";
  };
  line(header);
  size_t total = 0;
  for (auto x : w) total += x;
  os << std::string(total + 3 * (w.size() - 1), '-') << "\n";
  for (const auto& r : rows) line(r.cells);
  return os.str();
}

std::string csv_escape(const std::string& s) {
  if (s.find_first_of(",\"") == std::string::npos) return s;
  std::string out = "\"";
  for (char c : s) out += c == '"' ? std::string("\"\"") : std::string(1, c);
  return out + "\"";
}

std::vector<Row> cost_rows(const std::vector<LabeledConfig>& rows, Triple patch, const Convention& convention) {
  std::vector<Row> out;
  for (const auto& [label, config] : rows) {
    const CostReport r = count_flops(build(config, convention.build_options()), patch, convention);
    out.push_back({{label, format_tuple(config.depths), format_tuple(config.widths), fixed2(r.params_M()),
                    fixed2(r.flops_T())}});
  }
  return out;
}

const std::vector<std::string> kCostHeader{"Model", "depth", "width", "Params (M)", "FLOPs (T)"};

}  // namespace

std::string emit_table(const std::vector<LabeledConfig>& rows, Triple patch, const Convention& convention) {
  return align(kCostHeader, cost_rows(rows, patch, convention));
}

std::string emit_table_csv(const std::vector<LabeledConfig>& rows, Triple patch, const Convention& convention) {
  std::ostringstream os;
  auto line = [&](const std::vector<std::string>& cells) {
    for (size_t c = 0; c < cells.size(); ++c) os << (c ? "," : "") << csv_escape(cells[c]);
    os << "\n";
  };
  line(kCostHeader);
  for (const auto& r : cost_rows(rows, patch, convention)) line(r.cells);
  return os.str();
}

std::string render_reproduction(const Evaluation& ev) {
  std::vector<Row> rows;
  int ok = 0;
  char buf[64];
  for (const auto& c : ev.cells) {
    std::snprintf(buf, sizeof buf, "%+.4f", c.delta());
    char full[64];
    std::snprintf(full, sizeof full, "%.4f", c.computed);
    rows.push_back({{c.label, c.column, fixed2(c.published), full, buf, c.ok ? "ok" : "MISS"}});
    ok += c.ok ? 1 : 0;
  }
  std::string out = align({"Model", "column", "published", "computed", "delta", "status"}, rows);
  out += std::to_string(ok) + "/" + std::to_string(ev.cells.size()) + " cells within tolerance\n";
  return out;
}

std::string render_reproduction_csv(const Evaluation& ev) {
  std::ostringstream os;
  os << "table,model,column,published,computed,delta,ok\n";
  char buf[160];
  for (const auto& c : ev.cells) {
    std::snprintf(buf, sizeof buf, ",%s,%.2f,%.6f,%.6f,%d\n", c.column.c_str(), c.published, c.computed, c.delta(),
                  c.ok ? 1 : 0);
    os << c.table << "," << csv_escape(c.label) << buf;
  }
  return os.str();
}

}  // namespace stunet
