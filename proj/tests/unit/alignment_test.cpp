#include "helpers.hpp"

#include <fstream>
#include <sstream>

#include "taxonomist/alignment.hpp"
#include "taxonomist/errors.hpp"

using namespace taxonomist;
using namespace taxonomist::alignment;

namespace {

AlignmentMatrix from_rows(const std::vector<std::vector<std::size_t>>& rows) {
  AlignmentMatrix m;
  for (std::size_t i = 0; i < rows.size(); ++i) m.rows.push_back("r" + std::to_string(i));
  for (std::size_t j = 0; j < rows.front().size(); ++j) m.cols.push_back("t" + std::to_string(j));
  m.counts = rows;
  return m;
}

std::string slurp(const std::filesystem::path& p) {
  std::ifstream in(p);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

}  // namespace

TEST_CASE("alignment counts co-occurrences over shared documents") {
  std::map<std::string, std::string> cls{{"1", "A"}, {"2", "A"}, {"3", "B"}, {"4", "B"}};
  std::map<std::string, std::string> top{{"1", "x"}, {"2", "y"}, {"3", "y"}, {"4", "y"}};
  auto m = build_alignment(cls, top);
  CHECK(m.rows == std::vector<std::string>{"A", "B"});
  CHECK(m.cols == std::vector<std::string>{"x", "y"});
  CHECK(m.counts == std::vector<std::vector<std::size_t>>{{1, 1}, {0, 2}});
  CHECK(m.total() == 4);
  CHECK(m.row_sum(1) == 2);
  CHECK(m.col_sum(1) == 3);

  auto declared = build_alignment(cls, top, {"C", "B", "A"});
  CHECK(declared.rows == std::vector<std::string>{"C", "B", "A"});
  CHECK(declared.row_sum(0) == 0);

  top.erase("4");
  top["9"] = "x";
  CHECK_THROWS_AS(build_alignment(cls, top), KeyMismatch);
}

TEST_CASE("verdicts from purity and support") {
  auto m = from_rows({{0, 40, 0}, {12, 28, 0}, {15, 15, 14}, {1, 0, 0}});
  auto d = diagnose(m);
  REQUIRE(d.size() == 4);
  CHECK(d[0].verdict == Verdict::Validated);
  CHECK(d[0].purity == 1.0);
  CHECK(d[1].verdict == Verdict::Overlapping);
  CHECK(d[1].purity == doctest::Approx(0.7));
  CHECK(d[2].verdict == Verdict::Vague);
  CHECK(d[2].purity == doctest::Approx(15.0 / 44));
  CHECK(d[3].verdict == Verdict::Failed);
  CHECK(d[3].support_share == doctest::Approx(1.0 / 125));
}

TEST_CASE("boundary purities") {
  // purity exactly at the validated cut counts as validated
  CHECK(diagnose(from_rows({{8, 2}, {5, 5}}))[0].verdict == Verdict::Validated);
  // exactly at the vague cut is not vague
  CHECK(diagnose(from_rows({{8, 2}, {5, 5}}))[1].verdict == Verdict::Overlapping);
  // an empty row fails
  CHECK(diagnose(from_rows({{8, 2}, {0, 0}}))[1].verdict == Verdict::Failed);
}

TEST_CASE("threshold validation") {
  DiagnosticThresholds t;
  t.failed_share = 0;
  CHECK_THROWS_AS(t.validate(), InvalidConfig);
  t = {};
  t.vague_purity = 0.9;
  CHECK_THROWS_AS(t.validate(), InvalidConfig);
  CHECK_THROWS_AS(diagnose(from_rows({{1}}), t), InvalidConfig);
}

TEST_CASE("class size variance is the population variance of row sums") {
  CHECK(class_size_variance(from_rows({{2, 2}, {6, 0}, {1, 1}})) == doctest::Approx(8.0 / 3));
  CHECK(class_size_variance(from_rows({{3}, {3}})) == 0.0);
}

TEST_CASE("heatmap ramp") {
  auto m = from_rows({{0, 10}, {5, 5}});
  CHECK(ramp_position(m, 0) == 0.0);
  CHECK(ramp_position(m, 10) == 1.0);
  CHECK(ramp_position(m, 5) == doctest::Approx(0.5));
  CHECK(ramp_position(from_rows({{3, 3}}), 3) == 0.5);
}

TEST_CASE("heatmap exports") {
  testing::TempDir tmp;
  auto m = from_rows({{1, 2}, {3, 4}});
  auto csv = render_csv(m);
  CHECK(csv.find("r1,3,4") != std::string::npos);
  auto svg = render_svg(m);
  CHECK(svg.rfind("<svg", 0) == 0);
  CHECK(svg.find("data-count=\"4\"") != std::string::npos);
  export_heatmap(m, tmp / "m.csv", HeatmapFormat::Csv);
  CHECK(slurp(tmp / "m.csv") == csv);
  export_heatmap(m, tmp / "m.json", HeatmapFormat::Json);
  CHECK(matrix_from_json(Json::parse(slurp(tmp / "m.json"))) == m);
  CHECK(heatmap_format_from_string("svg") == HeatmapFormat::Svg);
  CHECK_THROWS_AS(heatmap_format_from_string("png"), InvalidArgument);
}

TEST_CASE("matrix json rejects ragged counts") {
  auto j = matrix_to_json(from_rows({{1, 2}, {3, 4}}));
  j["counts"][1] = Json::array({1});
  CHECK_THROWS(matrix_from_json(j));
}
