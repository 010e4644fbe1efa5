#pragma once

#include <filesystem>
#include <map>
#include <string>
#include <vector>

#include "taxonomist/util.hpp"

namespace taxonomist::alignment {

/// k x m co-occurrence counts between assigned classes (rows) and
/// discovered topics (columns).
struct AlignmentMatrix {
  std::vector<std::string> rows;
  std::vector<std::string> cols;
  std::vector<std::vector<std::size_t>> counts;
  std::string run_id;

  std::size_t total() const;
  std::size_t row_sum(std::size_t i) const;
  std::size_t col_sum(std::size_t j) const;
  bool operator==(const AlignmentMatrix&) const = default;
};

/// Rows and columns default to the sorted distinct labels seen; declared
/// labels come first, in the given order, so empty classes still get a row.
AlignmentMatrix build_alignment(const std::map<std::string, std::string>& class_assign,
                                const std::map<std::string, std::string>& topic_assign,
                                const std::vector<std::string>& declared_rows = {},
                                const std::vector<std::string>& declared_cols = {});

enum class Verdict { Validated, Overlapping, Vague, Failed };

std::string to_string(Verdict v);

struct DiagnosticThresholds {
  double failed_share = 0.02;
  double vague_purity = 0.5;
  double validated_purity = 0.8;

  void validate() const;
};

struct ClassDiagnostic {
  std::string class_name;
  std::size_t row_sum = 0;
  double purity = 0;
  double support_share = 0;
  Verdict verdict = Verdict::Failed;
};

std::vector<ClassDiagnostic> diagnose(const AlignmentMatrix& matrix,
                                      const DiagnosticThresholds& thresholds = {});

/// Population variance of row sums: the balance measure for the refine loop.
double class_size_variance(const AlignmentMatrix& matrix);

enum class HeatmapFormat { Csv, Svg, Json };

HeatmapFormat heatmap_format_from_string(std::string_view s);
std::string render_csv(const AlignmentMatrix& m);
std::string render_svg(const AlignmentMatrix& m);
/// Ramp position in [0, 1] for a count; all-equal matrices sit at 0.5.
double ramp_position(const AlignmentMatrix& m, std::size_t count);
void export_heatmap(const AlignmentMatrix& m, const std::filesystem::path& out,
                    HeatmapFormat format);

Json matrix_to_json(const AlignmentMatrix& m);
AlignmentMatrix matrix_from_json(const Json& j);
Json diagnostics_to_json(const std::vector<ClassDiagnostic>& d);

}  // namespace taxonomist::alignment
