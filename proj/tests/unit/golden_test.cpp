#include "helpers.hpp"

#include "taxonomist/errors.hpp"
#include "taxonomist/golden.hpp"

using namespace taxonomist;

TEST_CASE("metrics against a hand-counted confusion") {
  std::vector<HierLabel> gold{{"A", std::nullopt}, {"A", std::nullopt}, {"B", std::nullopt},
                              {"C", std::string("x")}};
  std::vector<std::optional<HierLabel>> pred{HierLabel{"A", std::nullopt}, HierLabel{"B", std::nullopt},
                                             HierLabel{"B", std::nullopt}, HierLabel{"C", std::string("y")}};
  auto m = compute_metrics(gold, pred);
  // A: P 1, R 1/2; B: P 1/2, R 1; C: P 1, R 1
  CHECK(m.per_class.at("A").f1 == doctest::Approx(2.0 / 3));
  CHECK(m.per_class.at("B").fp == 1);
  CHECK(m.macro_f1 == doctest::Approx((2.0 / 3 + 2.0 / 3 + 1.0) / 3));
  CHECK(m.precision == doctest::Approx(2.5 / 3));
  CHECK(m.recall == doctest::Approx(2.5 / 3));
  // the child only counts where gold has one, and C/y misses C/x
  CHECK(m.accuracy == doctest::Approx(0.5));
}

TEST_CASE("missing predictions and classes only predicted") {
  std::vector<HierLabel> gold{{"A", std::nullopt}, {"A", std::nullopt}};
  std::vector<std::optional<HierLabel>> pred{std::nullopt, HierLabel{"Z", std::nullopt}};
  auto m = compute_metrics(gold, pred);
  CHECK(m.failed_predictions == 1);
  CHECK(m.per_class.size() == 2);
  CHECK(m.macro_f1 == 0.0);
  CHECK(m.accuracy == 0.0);
  CHECK_THROWS_AS(compute_metrics({}, {}), EmptyGoldenSet);
  CHECK_THROWS_AS(compute_metrics(gold, {std::nullopt}), InvalidArgument);
}

TEST_CASE("golden files load against the schema") {
  auto s = testing::fixture_schema();
  auto g = load_golden(testing::kFixtures / "golden.jsonl", s, "round-1");
  CHECK(g.entries.size() == 20);
  CHECK(g.provenance == "round-1");
  CHECK(g.documents().size() == 20);
  CHECK(parse_golden(golden_to_jsonl(g), s).entries == g.entries);
  CHECK_THROWS_AS(parse_golden(R"({"doc_id": "x", "text": "t", "parent": "Weather"})", s), UnknownLabel);
  CHECK_THROWS_AS(parse_golden(R"({"doc_id": "x", "text": "t", "parent": "Delivery", "child": "Bruising"})", s),
                  UnknownLabel);
}

TEST_CASE("golden eval with the fixture mock is perfect") {
  auto s = testing::fixture_schema();
  auto g = load_golden(testing::kFixtures / "golden.jsonl", s);
  auto backend = testing::mock(testing::fixture_profile(), s);
  auto prompt = prompting::build_prompt(s, prompting::finalize(s, {}));
  auto m = golden_eval(g, gateway::classifier(prompt, s, *backend));
  CHECK(m.macro_f1 == doctest::Approx(1.0));
  CHECK(m.accuracy == doctest::Approx(1.0));
  CHECK(metrics_from_json(metrics_to_json(m)).macro_f1 == m.macro_f1);
}

TEST_CASE("unparseable answers count as wrong") {
  auto s = testing::fixture_schema();
  auto g = load_golden(testing::kFixtures / "golden.jsonl", s);
  gateway::ClassifyFn broken = [](const corpus::ProcessedDocument&) -> HierLabel {
    throw UnparseableResponse("??");
  };
  auto m = golden_eval(g, broken);
  CHECK(m.failed_predictions == 20);
  CHECK(m.macro_f1 == 0.0);
  gateway::ClassifyFn down = [](const corpus::ProcessedDocument&) -> HierLabel { throw Timeout("1 ms"); };
  CHECK_THROWS_AS(golden_eval(g, down), Timeout);
}
