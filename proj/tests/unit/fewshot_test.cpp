#include "helpers.hpp"

#include <cmath>

#include "taxonomist/errors.hpp"
#include "taxonomist/fewshot.hpp"
#include "taxonomist/golden.hpp"

using namespace taxonomist;
using namespace taxonomist::fewshot;

namespace {

gateway::EmbeddingVector vec(std::vector<double> v, std::string provider = "p") {
  gateway::EmbeddingVector e;
  e.values = std::move(v);
  e.provider_id = std::move(provider);
  return e;
}

}  // namespace

TEST_CASE("cosine similarity") {
  CHECK(cosine_similarity(vec({1, 0}), vec({0, 1})) == 0.0);
  CHECK(cosine_similarity(vec({1, 2}), vec({2, 4})) == doctest::Approx(1.0));
  CHECK(cosine_similarity(vec({1, 1}), vec({-1, -1})) == doctest::Approx(-1.0));
  CHECK(cosine_similarity(vec({3, 4}), vec({4, 3})) == doctest::Approx(24.0 / 25));
  CHECK_THROWS_AS(cosine_similarity(vec({1}), vec({1, 0})), DimensionMismatch);
  CHECK_THROWS_AS(cosine_similarity(vec({1}), vec({1}, "q")), ProviderMismatch);
  CHECK_THROWS_AS(cosine_similarity(vec({0, 0}), vec({1, 0})), ZeroVector);
}

TEST_CASE("ranking scores against the candidate's own parent") {
  auto s = testing::fixture_schema();
  auto backend = testing::mock(testing::fixture_profile(), s);
  std::map<std::string, std::string> desc{{"Pricing", "expensive prices cost"}, {"Taste", "sweet flavour"}};
  std::vector<Candidate> cands{
      {"c1", "sweet flavour indeed", {"Taste", std::nullopt}},
      {"c2", "nothing related", {"Pricing", std::nullopt}},
      {"c3", "expensive prices cost", {"Pricing", std::nullopt}},
      {"c0", "nothing related", {"Taste", std::nullopt}},
  };
  auto ranked = rank_examples(cands, desc, *backend);
  REQUIRE(ranked.size() == 4);
  CHECK(ranked[0].doc_id == "c3");
  CHECK(ranked[0].similarity == doctest::Approx(1.0));
  CHECK(ranked[1].doc_id == "c1");
  CHECK(ranked[1].class_name == "Taste");
  // equal scores fall back to doc_id
  CHECK(ranked[2].doc_id == "c0");
  CHECK(ranked[3].doc_id == "c2");
  auto ex = to_example(ranked[0]);
  CHECK(ex.text == "expensive prices cost");
  CHECK(ex.expected_parent == "Pricing");

  cands.push_back({"c9", "late", {"Delivery", std::nullopt}});
  CHECK_THROWS_AS(rank_examples(cands, desc, *backend), MissingDescription);
  CHECK(class_descriptions(s).size() == s.parents.size());
}

TEST_CASE("select_k reports every k and respects epsilon") {
  auto s = testing::fixture_schema();
  auto backend = testing::mock(testing::fixture_profile(), s);
  auto golden = load_golden(testing::kFixtures / "golden.jsonl", s);
  auto monitoring = corpus::load_corpus(testing::kFixtures / "fruit_feedback.jsonl", {});
  auto base = prompting::finalize(s, {});
  std::vector<RankedExample> ranked{
      {"e1", "Taste", 0.9, "sweet", {"Taste", std::nullopt}},
      {"e2", "Pricing", 0.8, "expensive", {"Pricing", std::nullopt}},
  };
  std::vector<ClassificationResult> results;
  for (const auto& d : monitoring.documents) {
    results.push_back(gateway::classify(d, prompting::build_prompt(s, base), s, *backend));
  }
  auto baseline = stats::class_distribution(results, s);
  auto r = select_k(ranked, golden, monitoring, baseline, 1e9, s, base, *backend);
  REQUIRE(r.report.size() == 3);
  for (std::size_t k = 0; k < 3; ++k) CHECK(r.report[k].k == k);
  CHECK(r.report[0].kl == doctest::Approx(0.0));
  CHECK(r.chosen.size() == r.k);
  // the keyword mock ignores examples, so every k ties and the smallest wins
  CHECK(r.k == 0);
  CHECK_THROWS(select_k(ranked, golden, monitoring, baseline, -1, s, base, *backend));
}

TEST_CASE("preference validation and duplicates") {
  testing::TempDir tmp;
  auto s = testing::fixture_schema();
  PreferenceStore store(tmp / "prefs.jsonl");
  auto d = testing::doc("fb-001", "x");
  HierLabel taste{"Taste", std::nullopt}, pricing{"Pricing", std::nullopt};
  auto p = record_preference(store, d, taste, pricing, "ana", PreferenceSource::Human, 1, s, "t");
  CHECK(store.load() == std::vector<PreferencePair>{p});
  CHECK_THROWS_AS(record_preference(store, d, taste, taste, "ana", PreferenceSource::Human, 2, s, "t"),
                  LabelEqualsLoser);
  CHECK_THROWS_AS(record_preference(store, d, {"Nope", std::nullopt}, taste, "ana",
                                    PreferenceSource::Human, 2, s, "t"),
                  UnknownLabel);
  CHECK_THROWS_AS(record_preference(store, d, pricing, taste, "ana", PreferenceSource::Human, 1, s, "t"),
                  DuplicateJudgment);
  record_preference(store, d, pricing, taste, "ana", PreferenceSource::Human, 2, s, "t");
  record_preference(store, d, pricing, taste, "ben", PreferenceSource::Human, 1, s, "t");
  CHECK(store.load().size() == 3);
  CHECK(preference_from_json(preference_to_json(p)) == p);
}

TEST_CASE("alias and path helpers") {
  auto s = testing::fixture_schema();
  CHECK(label_from_path("Delivery/Late Arrival") == HierLabel{"Delivery", std::string("Late Arrival")});
  CHECK(label_from_path("Taste") == HierLabel{"Taste", std::nullopt});
  auto late = label_from_path("Delivery/Late Arrival");
  auto alias = alias_of(s, late);
  CHECK(alias.find("Late") == std::string::npos);
  CHECK(label_from_alias(s, alias) == late);
  CHECK_THROWS_AS(label_from_alias(s, "K-99"), UnknownLabel);
  CHECK(schema_has(s, late));
  CHECK_FALSE(schema_has(s, {"Taste", std::string("Late Arrival")}));
}

TEST_CASE("constitution paragraphs and judging") {
  auto c = parse_constitution("First rule\ncontinues here.\n\n\nSecond rule.\n");
  REQUIRE(c.principles.size() == 2);
  CHECK(c.principles[1] == "Second rule.");

  auto s = testing::fixture_schema();
  auto backend = testing::mock(testing::fixture_profile(), s);
  HierLabel taste{"Taste", std::nullopt}, pricing{"Pricing", std::nullopt};
  auto d = testing::doc("d1", "far too expensive");
  auto prompt = build_judge_prompt(d, {taste, pricing}, c, s);
  CHECK(prompt.find("Pricing") == std::string::npos);
  CHECK(prompt.find("Second rule.") != std::string::npos);
  auto p = judge_preference(d, {taste, pricing}, c, s, *backend, 1, "t");
  CHECK(p.y_w == pricing);
  CHECK(p.y_l == taste);
  CHECK(p.source == PreferenceSource::Judge);
  CHECK_THROWS_AS(judge_preference(d, {taste}, c, s, *backend), InvalidArgument);
  // the rule answer is not among the candidates
  auto late = testing::doc("d2", "arrived late");
  CHECK_THROWS_AS(judge_preference(late, {taste, pricing}, c, s, *backend), WinnerNotCandidate);
}

TEST_CASE("cohen kappa against a hand count") {
  LabelMap a, b;
  const char* la = "XXXXXXYYYY";
  const char* lb = "XXXXXYYYYX";
  for (int i = 0; i < 10; ++i) {
    a[std::to_string(i)] = std::string(1, la[i]);
    b[std::to_string(i)] = std::string(1, lb[i]);
  }
  // po = 0.8, pe = 0.6*0.6 + 0.4*0.4
  std::size_t shared = 0;
  CHECK(cohen_kappa(a, b, &shared) == doctest::Approx((0.8 - 0.52) / 0.48));
  CHECK(shared == 10);
  CHECK(cohen_kappa(a, a) == doctest::Approx(1.0));
  LabelMap same{{"1", "X"}, {"2", "X"}};
  CHECK(cohen_kappa(same, same) == 1.0);
}

TEST_CASE("agreement over reviewers and rounds") {
  std::vector<PreferencePair> pairs;
  auto add = [&](std::string doc, std::string w, std::string reviewer, int round) {
    pairs.push_back({doc, {w, std::nullopt}, {"Z", std::nullopt}, reviewer, PreferenceSource::Human, round, ""});
  };
  add("1", "A", "ana", 1);
  add("2", "B", "ana", 1);
  add("1", "A", "ana", 2);
  add("2", "A", "ana", 2);
  add("1", "A", "ben", 1);
  add("2", "B", "ben", 1);
  auto r = agreement(judgments_from_pairs(pairs), rounds_from_pairs(pairs));
  REQUIRE(r.inter.size() == 1);
  // ana's latest round is (A, A) against ben's (A, B): po 0.5, pe 0.5
  CHECK(r.inter[0].kappa == doctest::Approx(0.0));
  CHECK(r.intra.at("ana") == doctest::Approx(0.0));
  CHECK(r.mean_inter.has_value());
  CHECK_FALSE(r.intra.count("ben"));

  std::map<std::string, LabelMap> thin{{"a", {{"1", "A"}}}, {"b", {{"1", "A"}}}};
  CHECK_THROWS_AS(agreement(thin), InsufficientOverlap);
}

TEST_CASE("review queue lists unjudged disagreements by doc id") {
  auto s = testing::fixture_schema();
  auto c = testing::make_corpus({{"a", "one"}, {"b", "two"}, {"c", "three"}});
  auto res = [](std::string id, std::string parent) {
    ClassificationResult r;
    r.doc_id = id;
    r.parent = parent;
    return r;
  };
  std::vector<ClassificationResult> x{res("c", "Taste"), res("a", "Taste"), res("b", "Taste")};
  std::vector<ClassificationResult> y{res("a", "Pricing"), res("b", "Taste"), res("c", "Pricing")};
  auto q = review_queue(c, x, y, {}, s);
  REQUIRE(q.size() == 2);
  CHECK(q[0].doc_id == "a");
  CHECK(q[0].candidate_a == alias_of(s, {"Taste", std::nullopt}));
  CHECK(q[0].candidate_b == alias_of(s, {"Pricing", std::nullopt}));
  PreferencePair judged{"a", {"Taste", std::nullopt}, {"Pricing", std::nullopt}, "ana"};
  q = review_queue(c, x, y, {judged}, s);
  REQUIRE(q.size() == 1);
  CHECK(q[0].doc_id == "c");
  auto j = review_item_to_json(q[0]);
  CHECK(j.dump().find("Pricing") == std::string::npos);
}
