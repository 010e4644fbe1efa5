#include "taxonomist/alignment.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <set>

#include "taxonomist/errors.hpp"

namespace taxonomist::alignment {

namespace {

std::vector<std::string> axis(const std::vector<std::string>& declared,
                              const std::map<std::string, std::string>& assign) {
  std::vector<std::string> out = declared;
  std::set<std::string> seen(declared.begin(), declared.end());
  std::set<std::string> extra;
  for (const auto& [doc, label] : assign) {
    if (!seen.count(label)) extra.insert(label);
  }
  out.insert(out.end(), extra.begin(), extra.end());
  return out;
}

std::string csv_field(const std::string& s) {
  if (s.find_first_of(",\"\n") == std::string::npos) return s;
  std::string out = "\"";
  for (char c : s) {
    if (c == '"') out += '"';
    out += c;
  }
  return out + "\"";
}

std::string xml_escape(const std::string& s) {
  std::string out;
  for (char c : s) {
    switch (c) {
      case '&': out += "&amp;"; break;
      case '<': out += "&lt;"; break;
      case '>': out += "&gt;"; break;
      case '"': out += "&quot;"; break;
      default: out += c;
    }
  }
  return out;
}

// Five-stop approximation of viridis, dark purple to yellow.
std::string ramp_color(double t) {
  static const double stops[5][3] = {
      {68, 1, 84}, {59, 82, 139}, {33, 145, 140}, {94, 201, 98}, {253, 231, 37}};
  t = std::clamp(t, 0.0, 1.0) * 4.0;
  auto i = std::min<std::size_t>(static_cast<std::size_t>(t), 3);
  double f = t - double(i);
  char buf[8];
  int rgb[3];
  for (int k = 0; k < 3; ++k) {
    rgb[k] = static_cast<int>(std::lround(stops[i][k] + f * (stops[i + 1][k] - stops[i][k])));
  }
  std::snprintf(buf, sizeof buf, "#%02x%02x%02x", rgb[0], rgb[1], rgb[2]);
  return buf;
}

}  // namespace

std::size_t AlignmentMatrix::total() const {
  std::size_t t = 0;
  for (std::size_t i = 0; i < rows.size(); ++i) t += row_sum(i);
  return t;
}

std::size_t AlignmentMatrix::row_sum(std::size_t i) const {
  std::size_t t = 0;
  for (auto c : counts.at(i)) t += c;
  return t;
}

std::size_t AlignmentMatrix::col_sum(std::size_t j) const {
  std::size_t t = 0;
  for (const auto& row : counts) t += row.at(j);
  return t;
}

AlignmentMatrix build_alignment(const std::map<std::string, std::string>& class_assign,
                                const std::map<std::string, std::string>& topic_assign,
                                const std::vector<std::string>& declared_rows,
                                const std::vector<std::string>& declared_cols) {
  std::vector<std::string> mismatch;
  for (const auto& [doc, c] : class_assign) {
    if (!topic_assign.count(doc)) mismatch.push_back(doc);
  }
  for (const auto& [doc, t] : topic_assign) {
    if (!class_assign.count(doc)) mismatch.push_back(doc);
  }
  if (!mismatch.empty()) {
    std::sort(mismatch.begin(), mismatch.end());
    throw KeyMismatch(std::move(mismatch));
  }
  AlignmentMatrix m;
  m.rows = axis(declared_rows, class_assign);
  m.cols = axis(declared_cols, topic_assign);
  m.counts.assign(m.rows.size(), std::vector<std::size_t>(m.cols.size(), 0));
  std::map<std::string, std::size_t> row_index, col_index;
  for (std::size_t i = 0; i < m.rows.size(); ++i) row_index[m.rows[i]] = i;
  for (std::size_t j = 0; j < m.cols.size(); ++j) col_index[m.cols[j]] = j;
  for (const auto& [doc, c] : class_assign) {
    ++m.counts[row_index.at(c)][col_index.at(topic_assign.at(doc))];
  }
  return m;
}

std::string to_string(Verdict v) {
  switch (v) {
    case Verdict::Validated: return "validated";
    case Verdict::Overlapping: return "overlapping";
    case Verdict::Vague: return "vague";
    case Verdict::Failed: return "failed";
  }
  return "failed";
}

void DiagnosticThresholds::validate() const {
  if (!(failed_share > 0 && failed_share < 1)) {
    throw InvalidConfig("failed_share must lie in (0, 1)");
  }
  if (!(vague_purity > 0 && vague_purity <= validated_purity && validated_purity <= 1)) {
    throw InvalidConfig("thresholds need 0 < vague_purity <= validated_purity <= 1");
  }
}

std::vector<ClassDiagnostic> diagnose(const AlignmentMatrix& matrix,
                                      const DiagnosticThresholds& t) {
  t.validate();
  const auto total = matrix.total();
  std::vector<ClassDiagnostic> out;
  for (std::size_t i = 0; i < matrix.rows.size(); ++i) {
    ClassDiagnostic d;
    d.class_name = matrix.rows[i];
    d.row_sum = matrix.row_sum(i);
    std::size_t peak = 0;
    for (auto c : matrix.counts[i]) peak = std::max(peak, c);
    d.purity = d.row_sum ? double(peak) / double(d.row_sum) : 0.0;
    d.support_share = total ? double(d.row_sum) / double(total) : 0.0;
    if (d.support_share <= t.failed_share) {
      d.verdict = Verdict::Failed;
    } else if (d.purity < t.vague_purity) {
      d.verdict = Verdict::Vague;
    } else if (d.purity >= t.validated_purity) {
      d.verdict = Verdict::Validated;
    } else {
      d.verdict = Verdict::Overlapping;
    }
    out.push_back(d);
  }
  return out;
}

double class_size_variance(const AlignmentMatrix& matrix) {
  if (matrix.rows.empty()) return 0.0;
  double mean = double(matrix.total()) / double(matrix.rows.size());
  double var = 0.0;
  for (std::size_t i = 0; i < matrix.rows.size(); ++i) {
    double d = double(matrix.row_sum(i)) - mean;
    var += d * d;
  }
  return var / double(matrix.rows.size());
}

HeatmapFormat heatmap_format_from_string(std::string_view s) {
  if (s == "csv") return HeatmapFormat::Csv;
  if (s == "svg") return HeatmapFormat::Svg;
  if (s == "json") return HeatmapFormat::Json;
  throw InvalidArgument("unknown heatmap format '" + std::string(s) + "'");
}

std::string render_csv(const AlignmentMatrix& m) {
  std::string out = "class";
  for (const auto& c : m.cols) out += "," + csv_field(c);
  out += "\n";
  for (std::size_t i = 0; i < m.rows.size(); ++i) {
    out += csv_field(m.rows[i]);
    for (auto c : m.counts[i]) out += "," + std::to_string(c);
    out += "\n";
  }
  return out;
}

double ramp_position(const AlignmentMatrix& m, std::size_t count) {
  std::size_t lo = SIZE_MAX, hi = 0;
  for (const auto& row : m.counts) {
    for (auto c : row) {
      lo = std::min(lo, c);
      hi = std::max(hi, c);
    }
  }
  if (lo == SIZE_MAX || lo == hi) return 0.5;
  return double(count - lo) / double(hi - lo);
}

std::string render_svg(const AlignmentMatrix& m) {
  if (m.rows.empty() || m.cols.empty()) {
    throw InvalidArgument("svg heatmap needs at least one row and one column");
  }
  constexpr int cell = 48, left = 160, top = 120;
  const int width = left + cell * int(m.cols.size()) + 10;
  const int height = top + cell * int(m.rows.size()) + 10;
  std::string out = "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" + std::to_string(width) +
                    "\" height=\"" + std::to_string(height) + "\" font-family=\"sans-serif\" font-size=\"11\">\n";
  for (std::size_t j = 0; j < m.cols.size(); ++j) {
    int x = left + cell * int(j) + cell / 2;
    out += "<text transform=\"translate(" + std::to_string(x) + "," + std::to_string(top - 6) +
           ") rotate(-45)\">" + xml_escape(m.cols[j]) + "</text>\n";
  }
  for (std::size_t i = 0; i < m.rows.size(); ++i) {
    int y = top + cell * int(i);
    out += "<text x=\"4\" y=\"" + std::to_string(y + cell / 2 + 4) + "\">" + xml_escape(m.rows[i]) +
           "</text>\n";
    for (std::size_t j = 0; j < m.cols.size(); ++j) {
      int x = left + cell * int(j);
      auto count = m.counts[i][j];
      out += "<rect x=\"" + std::to_string(x) + "\" y=\"" + std::to_string(y) + "\" width=\"" +
             std::to_string(cell) + "\" height=\"" + std::to_string(cell) + "\" fill=\"" +
             ramp_color(ramp_position(m, count)) + "\" data-count=\"" + std::to_string(count) +
             "\"><title>" + std::to_string(count) + "</title></rect>\n";
    }
  }
  return out + "</svg>\n";
}

void export_heatmap(const AlignmentMatrix& m, const std::filesystem::path& out,
                    HeatmapFormat format) {
  std::string body;
  switch (format) {
    case HeatmapFormat::Csv: body = render_csv(m); break;
    case HeatmapFormat::Svg: body = render_svg(m); break;
    case HeatmapFormat::Json: body = matrix_to_json(m).dump(2) + "\n"; break;
  }
  write_text_file_atomic(out, body);
}

Json matrix_to_json(const AlignmentMatrix& m) {
  return Json{{"rows", m.rows}, {"cols", m.cols}, {"counts", m.counts}, {"run_id", m.run_id}};
}

AlignmentMatrix matrix_from_json(const Json& j) {
  AlignmentMatrix m;
  try {
    m.rows = j.at("rows").get<std::vector<std::string>>();
    m.cols = j.at("cols").get<std::vector<std::string>>();
    m.counts = j.at("counts").get<std::vector<std::vector<std::size_t>>>();
    m.run_id = j.value("run_id", std::string{});
  } catch (const Json::exception& e) {
    throw InvalidArgument(std::string("alignment matrix: ") + e.what());
  }
  if (m.counts.size() != m.rows.size()) throw InvalidArgument("alignment matrix row count mismatch");
  for (const auto& row : m.counts) {
    if (row.size() != m.cols.size()) throw InvalidArgument("alignment matrix column count mismatch");
  }
  return m;
}

Json diagnostics_to_json(const std::vector<ClassDiagnostic>& diags) {
  Json out = Json::array();
  for (const auto& d : diags) {
    out.push_back({{"class", d.class_name},
                   {"row_sum", d.row_sum},
                   {"purity", d.purity},
                   {"support_share", d.support_share},
                   {"verdict", to_string(d.verdict)}});
  }
  return out;
}

}  // namespace taxonomist::alignment
