// Acceptance checks. One PASS/FAIL line per criterion; exit status is the
// number of failures.

#include <boost/math/distributions/chi_squared.hpp>

#include <chrono>
#include <cmath>
#include <filesystem>
#include <functional>
#include <iomanip>
#include <iostream>
#include <limits>
#include <map>
#include <random>
#include <set>
#include <sstream>

#include <unistd.h>

#include "taxonomist/alignment.hpp"
#include "taxonomist/cli.hpp"
#include "taxonomist/corpus.hpp"
#include "taxonomist/drift.hpp"
#include "taxonomist/errors.hpp"
#include "taxonomist/fewshot.hpp"
#include "taxonomist/gateway.hpp"
#include "taxonomist/golden.hpp"
#include "taxonomist/optimizer.hpp"
#include "taxonomist/seqval.hpp"
#include "taxonomist/stats.hpp"

namespace fs = std::filesystem;
using namespace taxonomist;

namespace {

const fs::path kFixtures = TAXONOMIST_FIXTURES;

struct Check {
  bool ok = true;
  std::ostringstream notes;

  void expect(bool cond, const std::string& what) {
    if (!cond) {
      ok = false;
      notes << " [" << what << "]";
    }
  }
  template <class T>
  void equal(const T& got, const T& want, const std::string& what) {
    if (!(got == want)) {
      ok = false;
      notes << " [" << what << ": got " << got << ", want " << want << "]";
    }
  }
  void near(double got, double want, double tol, const std::string& what) {
    if (!(std::fabs(got - want) <= tol)) {
      ok = false;
      notes << " [" << what << ": got " << std::setprecision(10) << got << ", want " << want
            << " +/- " << tol << "]";
    }
  }
};

int failures = 0;

void run(int id, const std::string& name, const std::function<void(Check&)>& body) {
  Check c;
  try {
    body(c);
  } catch (const std::exception& e) {
    c.ok = false;
    c.notes << " [threw: " << e.what() << "]";
  }
  if (!c.ok) ++failures;
  std::cout << (c.ok ? "PASS" : "FAIL") << "  " << std::setw(2) << id << "  " << name
            << c.notes.str() << std::endl;
}

double chi2_oracle(double x, double df) {
  return boost::math::cdf(boost::math::complement(boost::math::chi_squared(df), x));
}

schema::ClassSchema flat_schema(const std::vector<std::string>& names) {
  Json parents = Json::array();
  for (const auto& n : names) {
    parents.push_back({{"internal_name", n}, {"definition", "Documents about " + n + "."}});
  }
  return schema::schema_from_json(Json{{"version", 1}, {"parents", parents}});
}

std::unique_ptr<gateway::Backend> mock(gateway::MockProfile p, const schema::ClassSchema& s) {
  p.bind(s);
  return std::make_unique<gateway::MockBackend>(std::move(p));
}

corpus::ProcessedDocument doc(const std::string& id, const std::string& text) {
  corpus::ProcessedDocument d;
  d.id = id;
  d.source_id = id;
  d.text = text;
  d.token_estimate = estimate_tokens(split_words(text).size());
  return d;
}

gateway::BackendConfig fixture_backend() {
  return gateway::backend_config_from_json(load_structured_file(kFixtures / "config.toml"),
                                           kFixtures);
}

schema::ClassSchema fixture_schema() { return schema::load_schema(kFixtures / "schema.toml"); }

corpus::Corpus fixture_corpus() {
  return corpus::load_corpus(kFixtures / "fruit_feedback.jsonl", corpus::PreprocessConfig{});
}

ClassificationResult labelled(const std::string& id, const std::string& parent) {
  ClassificationResult r;
  r.doc_id = id;
  r.parent = parent;
  return r;
}

std::map<std::string, std::string> tree(const fs::path& root) {
  std::map<std::string, std::string> out;
  for (const auto& e : fs::recursive_directory_iterator(root)) {
    if (e.is_regular_file()) out[fs::relative(e.path(), root).string()] = read_text_file(e.path());
  }
  return out;
}

}  // namespace

int main() {
  run(1, "statelessness: I = 0 on a pure mock, I = 3 with three flipping documents", [](Check& c) {
    auto started = std::chrono::steady_clock::now();
    auto s = fixture_schema();
    auto cfg = fixture_backend();
    auto corpus = fixture_corpus();
    c.equal(corpus.size(), std::size_t{200}, "corpus size");
    auto prompt = prompting::build_prompt(s, prompting::finalize(s, {}));

    auto pure = mock(cfg.mock_profile, s);
    auto r0 = seqval::test_statelessness(gateway::classifier(prompt, s, *pure), corpus, 10, 0);
    c.equal(r0.inconsistency_count, std::size_t{0}, "I (pure)");
    c.expect(r0.complete, "pure run complete");

    // Each flipped document gets an alternate label it never earns on its own.
    auto profile = cfg.mock_profile;
    std::set<std::string> flipped;
    for (const char* id : {"fb-010", "fb-020", "fb-030"}) {
      auto base = gateway::classify(*corpus.find(id), prompt, s, *pure).parent;
      auto alt = base == "Pricing" ? "Taste" : "Pricing";
      profile.flip_rules.push_back({id, alt, std::nullopt});
      flipped.insert(id);
    }
    auto flipping = mock(profile, s);
    auto r1 = seqval::test_statelessness(gateway::classifier(prompt, s, *flipping), corpus, 10, 0);
    c.equal(r1.inconsistency_count, std::size_t{3}, "I (flip)");
    std::set<std::string> unstable;
    for (const auto& [id, labels] : r1.unstable_docs) unstable.insert(id);
    c.expect(unstable == flipped, "unstable set is exactly the flipped ids");

    auto secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - started).count();
    c.expect(secs < 5.0, "runtime " + std::to_string(secs) + " s < 5 s");
  });

  run(2, "intra-document bias: prefix-biased mock flags every prefix cut, full window flags none", [](Check& c) {
    auto s = flat_schema({"Fruit", "Delivery", "Pricing", "Other"});
    const std::vector<std::pair<std::string, std::string>> signals = {
        {"bruised", "Fruit"}, {"courier", "Delivery"}, {"expensive", "Pricing"}};
    gateway::MockProfile p;
    for (const auto& [kw, label] : signals) p.keyword_rules.push_back({kw, label, std::nullopt, std::nullopt});
    p.fixed_label = "Other";

    // 80 words: signal, 78 neutral words, signal again.
    corpus::Corpus corpus;
    const std::vector<std::string> filler = {"the", "order", "came", "on", "a", "grey", "tuesday",
                                             "and", "we", "opened", "it", "after", "lunch"};
    for (int i = 0; i < 24; ++i) {
      const auto& kw = signals[i % signals.size()].first;
      std::string text = kw;
      for (int w = 0; w < 78; ++w) text += " " + filler[(w + i) % filler.size()];
      text += " " + kw;
      corpus.documents.push_back(doc("long-" + std::to_string(i), text));
    }

    auto prompt = prompting::build_prompt(s, prompting::finalize(s, {}));
    p.prefix_fraction = 0.3;
    auto biased = mock(p, s);
    auto rb = seqval::test_intradoc(gateway::classifier(prompt, s, *biased), corpus, 0.3);
    c.equal(rb.tested, corpus.size(), "tested (biased)");
    c.equal(rb.i_prefix, corpus.size(), "i_prefix (biased)");
    c.equal(rb.i_suffix, std::size_t{0}, "i_suffix (biased)");
    c.equal(rb.i_middle, std::size_t{0}, "i_middle (biased)");

    p.prefix_fraction = 1.0;
    auto full = mock(p, s);
    auto rf = seqval::test_intradoc(gateway::classifier(prompt, s, *full), corpus, 0.3);
    c.equal(rf.i_prefix + rf.i_suffix + rf.i_middle, std::size_t{0}, "all zero (full)");
  });

  run(3, "in-prompt order: recency fallback flips 10 uncovered docs, 0 covered", [](Check& c) {
    auto s = flat_schema({"Fruit", "Delivery", "Pricing"});
    gateway::MockProfile p;
    p.keyword_rules.push_back({"refund", "Pricing", std::nullopt, std::nullopt});
    p.fallback = gateway::Fallback::LastExampleLabel;
    p.fixed_label = "Fruit";
    auto backend = mock(p, s);

    prompting::PromptSpec spec;
    spec.examples = {{"The plums were mushy.", "Fruit", std::nullopt, prompting::ExampleOrigin::Seed},
                     {"Van turned up at midnight.", "Delivery", std::nullopt, prompting::ExampleOrigin::Seed},
                     {"Costs more than the shop.", "Pricing", std::nullopt, prompting::ExampleOrigin::Seed}};
    spec = prompting::finalize(s, spec);

    corpus::Corpus uncovered, covered;
    for (int i = 0; i < 10; ++i) {
      uncovered.documents.push_back(doc("u" + std::to_string(i), "note number " + std::to_string(i)));
      covered.documents.push_back(doc("c" + std::to_string(i), "please refund order " + std::to_string(i)));
    }
    auto classify = seqval::prompt_classifier(s, *backend);
    auto ru = seqval::test_inprompt(spec, s, uncovered, classify);
    auto rc = seqval::test_inprompt(spec, s, covered, classify);
    c.equal(ru.permutations_tested, std::size_t{6}, "3! orderings");
    c.equal(ru.i_prompt, std::size_t{10}, "i_prompt (uncovered)");
    c.equal(rc.i_prompt, std::size_t{0}, "i_prompt (covered)");
  });

  run(4, "McNemar: (6, 2) gives 2.0 and p = 0.1573; b = c gives 0 and 1", [](Check& c) {
    auto r = stats::mcnemar_counts(6, 2);
    c.equal(r.statistic, 2.0, "statistic");
    c.near(r.p_value, 0.1573, 1e-3, "p");
    c.near(r.p_value, chi2_oracle(2.0, 1), 1e-9, "p vs chi-squared oracle");
    auto tie = stats::mcnemar_counts(5, 5);
    c.equal(tie.statistic, 0.0, "tie statistic");
    c.equal(tie.p_value, 1.0, "tie p");
  });

  run(5, "chi-squared homogeneity: (30,70) vs (50,50) gives 8.3333, p 0.0039", [](Check& c) {
    stats::ClassDistribution a{{"x", "y"}, {30, 70}}, b{{"x", "y"}, {50, 50}};
    auto r = stats::chi2_homogeneity(a, b);
    c.near(r.statistic, 8.3333, 1e-4, "statistic");
    c.near(r.statistic, 25.0 / 3.0, 1e-12, "statistic vs 25/3");
    c.near(r.p_value, 0.0039, 5e-4, "p");
    c.near(r.p_value, chi2_oracle(25.0 / 3.0, 1), 1e-9, "p vs chi-squared oracle");
    c.equal(r.df, 1, "df");
    auto same = stats::chi2_homogeneity(a, a);
    c.equal(same.statistic, 0.0, "identical statistic");
    c.equal(same.p_value, 1.0, "identical p");
  });

  run(6, "KL constraint: 0.368064 nats; k* = 1 when binding, argmax when unconstrained", [](Check& c) {
    double kl = stats::kl_divergence(std::vector<double>{0.9, 0.1}, std::vector<double>{0.5, 0.5});
    c.near(kl, 0.368064, 1e-6, "D_KL");
    c.near(kl, 0.9 * std::log(1.8) + 0.1 * std::log(0.2), 1e-12, "D_KL closed form");

    auto s = flat_schema({"Alpha", "Beta", "Gamma"});
    gateway::MockProfile p;
    p.fixed_label = "Alpha";
    p.example_match = true;
    auto backend = mock(p, s);

    auto ranked_example = [](std::string id, std::string text, std::string label, double sim) {
      fewshot::RankedExample r;
      r.doc_id = std::move(id);
      r.class_name = label;
      r.similarity = sim;
      r.text = std::move(text);
      r.label = {label, std::nullopt};
      return r;
    };
    std::vector<fewshot::RankedExample> ranked = {ranked_example("e1", "alpha signal", "Beta", 0.9),
                                                  ranked_example("e2", "beta signal", "Gamma", 0.8)};
    GoldenSet golden;
    golden.entries = {{"g1", "alpha report", "Beta", std::nullopt},
                      {"g2", "beta report", "Gamma", std::nullopt},
                      {"g3", "nothing here", "Alpha", std::nullopt}};
    corpus::Corpus monitoring;
    monitoring.documents.push_back(doc("m0", "alpha day"));
    for (int i = 1; i < 10; ++i) monitoring.documents.push_back(doc("m" + std::to_string(i), "beta day"));

    auto base = prompting::finalize(s, {});
    auto baseline = stats::class_distribution(
        gateway::classify_batch(monitoring.documents, prompting::build_prompt(s, base), s, *backend), s);

    // Sweep oracle: every k scored independently; smoothed KL by hand.
    auto smoothed_kl = [](const stats::ClassDistribution& pd, const stats::ClassDistribution& qd) {
      double np = 0, nq = 0, d = 0;
      for (auto v : pd.counts) np += v + 0.5;
      for (auto v : qd.counts) nq += v + 0.5;
      for (std::size_t i = 0; i < pd.counts.size(); ++i) {
        double pi = (pd.counts[i] + 0.5) / np, qi = (qd.counts[i] + 0.5) / nq;
        d += pi * std::log(pi / qi);
      }
      return d;
    };
    std::vector<double> v(ranked.size() + 1), kls(ranked.size() + 1);
    for (std::size_t k = 0; k <= ranked.size(); ++k) {
      auto spec = base;
      for (std::size_t i = 0; i < k; ++i) spec.examples.push_back(fewshot::to_example(ranked[i]));
      auto prompt = prompting::build_prompt(s, spec);
      std::vector<HierLabel> gold;
      std::vector<std::optional<HierLabel>> pred;
      for (const auto& e : golden.entries) {
        gold.push_back(e.label());
        pred.push_back(gateway::classify(doc(e.doc_id, e.text), prompt, s, *backend).label());
      }
      v[k] = compute_metrics(gold, pred).macro_f1;
      kls[k] = smoothed_kl(
          stats::class_distribution(gateway::classify_batch(monitoring.documents, prompt, s, *backend), s),
          baseline);
    }
    auto oracle_k = [&](double eps) {
      std::size_t best = 0;
      double bv = -1;
      for (std::size_t k = 0; k < v.size(); ++k) {
        if (kls[k] <= eps && v[k] > bv) bv = v[k], best = k;
      }
      return best;
    };
    c.near(kls[1], (9.5 / 11.5) * std::log(9.5 / 10.5) + (1.5 / 11.5) * std::log(3.0), 1e-12, "KL at k=1");

    auto bound = fewshot::select_k(ranked, golden, monitoring, baseline, 0.1, s, base, *backend);
    c.equal(bound.k, std::size_t{1}, "k* at epsilon 0.1");
    c.equal(bound.k, oracle_k(0.1), "k* vs sweep oracle (0.1)");
    c.expect(!bound.report[2].feasible, "k = 2 infeasible at 0.1");

    auto inf = std::numeric_limits<double>::infinity();
    auto free = fewshot::select_k(ranked, golden, monitoring, baseline, inf, s, base, *backend);
    std::size_t argmax = 0;
    for (std::size_t k = 0; k < v.size(); ++k) if (v[k] > v[argmax]) argmax = k;
    c.equal(free.k, argmax, "k* vs unconstrained argmax");
    c.equal(free.k, oracle_k(inf), "k* vs sweep oracle (inf)");
    for (std::size_t k = 0; k < v.size(); ++k) {
      c.near(free.report[k].validity, v[k], 1e-12, "validity k=" + std::to_string(k));
      c.near(free.report[k].kl, kls[k], 1e-12, "kl k=" + std::to_string(k));
    }
  });

  run(7, "alignment conservation on fixture runs and 1000 random pairs", [](Check& c) {
    auto s = fixture_schema();
    auto backend = gateway::make_backend([&] { auto b = fixture_backend(); b.mock_profile.bind(s); return b; }());
    auto corpus = fixture_corpus();
    auto prompt = prompting::build_prompt(s, prompting::finalize(s, {}));
    auto results = gateway::classify_batch(corpus.documents, prompt, s, *backend, 4);
    auto topics = gateway::discover_topics(corpus, gateway::kDefaultTopicPrompt, 20, *backend);
    std::map<std::string, std::string> classes;
    for (const auto& r : results) classes[r.doc_id] = r.parent;
    auto m = alignment::build_alignment(classes, topics.assignment, s.parent_names());
    c.equal(m.total(), corpus.size(), "fixture total");
    auto dist = stats::class_distribution(results, s);
    for (std::size_t i = 0; i < m.rows.size(); ++i) {
      c.equal(m.row_sum(i), dist.counts[i], "fixture row " + m.rows[i]);
    }

    std::mt19937_64 rng(7);
    std::size_t mismatches = 0;
    for (int trial = 0; trial < 1000; ++trial) {
      std::size_t n = 1 + rng() % 60, k = 1 + rng() % 6, t = 1 + rng() % 6;
      std::map<std::string, std::string> a, b;
      std::map<std::string, std::size_t> row_counts, col_counts;
      for (std::size_t i = 0; i < n; ++i) {
        auto id = "d" + std::to_string(i);
        a[id] = "C" + std::to_string(rng() % k);
        b[id] = "T" + std::to_string(rng() % t);
        ++row_counts[a[id]];
        ++col_counts[b[id]];
      }
      auto mm = alignment::build_alignment(a, b);
      bool ok = mm.total() == n;
      for (std::size_t i = 0; i < mm.rows.size(); ++i) ok = ok && mm.row_sum(i) == row_counts[mm.rows[i]];
      for (std::size_t j = 0; j < mm.cols.size(); ++j) ok = ok && mm.col_sum(j) == col_counts[mm.cols[j]];
      if (!ok) ++mismatches;
    }
    c.equal(mismatches, std::size_t{0}, "random pairs with broken sums");
  });

  run(8, "heatmap diagnosis: pure, two-peak, diffuse, near-empty rows", [](Check& c) {
    alignment::AlignmentMatrix m;
    m.rows = {"pure", "two-peak", "diffuse", "near-empty"};
    m.cols = {"t1", "t2", "t3"};
    m.counts = {{0, 40, 0}, {12, 28, 0}, {15, 15, 14}, {1, 0, 0}};
    auto d = alignment::diagnose(m);
    const std::vector<alignment::Verdict> want = {alignment::Verdict::Validated, alignment::Verdict::Overlapping,
                                                  alignment::Verdict::Vague, alignment::Verdict::Failed};
    for (std::size_t i = 0; i < want.size(); ++i) {
      c.equal(alignment::to_string(d[i].verdict), alignment::to_string(want[i]), m.rows[i]);
    }
  });

  run(9, "optimizer keeps the load-bearing sentence and drops its planted duplicate", [](Check& c) {
    const std::string key = "Refund requests count as pricing.";
    auto s = schema::schema_from_json(Json{
        {"version", 1},
        {"parents",
         {{{"internal_name", "Pricing"}, {"definition", "Mentions of cost or value. " + key + " " + key}},
          {{"internal_name", "Taste"}, {"definition", "Comments about flavour and texture."}}}}});
    gateway::MockProfile p;
    p.keyword_rules.push_back({"refund", "Pricing", std::nullopt, key});
    p.keyword_rules.push_back({"price", "Pricing", std::nullopt, std::nullopt});
    p.fixed_label = "Taste";
    auto backend = mock(p, s);

    GoldenSet golden;
    golden.entries = {{"g1", "I want a refund for the plums", "Pricing", std::nullopt},
                      {"g2", "the price went up again", "Pricing", std::nullopt},
                      {"g3", "lovely crunchy apples", "Taste", std::nullopt},
                      {"g4", "pears were bland", "Taste", std::nullopt}};
    auto spec = prompting::finalize(s, {});
    auto input = prompting::build_prompt(s, spec);
    const double theta = 1.0;
    auto r = prompting::optimize_prompt(s, spec, golden, theta, *backend);
    auto output = prompting::build_prompt(s, r.spec);

    auto count = [&](const std::string& text) {
      std::size_t n = 0;
      for (auto pos = text.find(key); pos != std::string::npos; pos = text.find(key, pos + 1)) ++n;
      return n;
    };
    c.equal(count(input.text), std::size_t{2}, "copies in input");
    c.equal(count(output.text), std::size_t{1}, "copies in output");
    double v = prompting::validity(s, r.spec, golden, *backend);
    c.expect(v >= theta, "V(output) >= theta on re-evaluation");
    c.expect(output.token_estimate <= input.token_estimate, "output no longer than input");
    c.expect(output.text.size() < input.text.size(), "output shorter than input");
  });

  run(10, "drift suite: stable, distribution shift, conceptual gap, cohesion 0.5", [](Check& c) {
    auto s = flat_schema({"x", "y"});
    auto window = [&](const std::string& id, std::size_t nx, std::size_t ny) {
      std::vector<ClassificationResult> rs;
      for (std::size_t i = 0; i < nx + ny; ++i) rs.push_back(labelled(id + std::to_string(i), i < nx ? "x" : "y"));
      return drift::make_window(id, rs, s);
    };
    drift::DriftThresholds t;

    auto ref = window("ref", 50, 50);
    drift::DriftSignals same;
    same.distribution = drift::distributional_drift(ref, ref);
    c.equal(drift::to_string(drift::evaluate_drift(same, t).verdict), std::string("stable"), "identical windows");

    auto cur = window("cur", 30, 70);
    drift::DriftSignals shifted;
    shifted.distribution = drift::distributional_drift(cur, ref);
    auto rs = drift::evaluate_drift(shifted, t);
    c.equal(drift::to_string(rs.verdict), std::string("distribution_shift"), "20-point shift");
    c.near(rs.signals.distribution->chi2.statistic, 8.3333, 1e-4, "shift statistic");
    c.near(rs.signals.distribution->chi2.p_value, 0.0039, 5e-4, "shift p");

    auto fs_schema = fixture_schema();
    gateway::MockProfile p;
    p.fixed_label = "Taste";
    auto backend = mock(p, fs_schema);
    schema::TopicSet topics;
    topics.add({"Quantum", "zeppelin quasar xylophone"});
    auto novelty = drift::score_topics(topics, fs_schema, t.tau, *backend);
    drift::DriftSignals gap;
    gap.novel_topics = novelty.novel;
    c.equal(novelty.novel.size(), std::size_t{1}, "novel topics");
    c.equal(drift::to_string(drift::evaluate_drift(gap, t).verdict), std::string("conceptual_gap"), "gap verdict");

    drift::ClassCentroid centroid;
    centroid.class_name = "x";
    centroid.vector = {{1.0, 0.0}, "unit"};
    drift::EmbeddingMap emb = {{"a", {{1.0, 0.0}, "unit"}}, {"b", {{0.0, 1.0}, "unit"}}};
    auto sj = drift::cohesion({{"a", "x"}, {"b", "x"}}, {{"x", centroid}}, emb);
    c.equal(sj.at("x"), 0.5, "S_j");
  });

  run(11, "golden metrics: TP4 FP1 FN1 TN4 gives 0.8; perfect gives 1.0", [](Check& c) {
    std::vector<HierLabel> gold;
    std::vector<std::optional<HierLabel>> pred;
    auto add = [&](const char* g, const char* p, int n) {
      for (int i = 0; i < n; ++i) {
        gold.push_back({g, std::nullopt});
        pred.push_back(HierLabel{p, std::nullopt});
      }
    };
    add("pos", "pos", 4);
    add("neg", "pos", 1);
    add("pos", "neg", 1);
    add("neg", "neg", 4);
    auto m = compute_metrics(gold, pred);
    c.equal(m.precision, 0.8, "precision");
    c.equal(m.recall, 0.8, "recall");
    c.equal(m.accuracy, 0.8, "accuracy");
    auto perfect = compute_metrics(gold, std::vector<std::optional<HierLabel>>(gold.begin(), gold.end()));
    c.equal(perfect.precision, 1.0, "perfect precision");
    c.equal(perfect.recall, 1.0, "perfect recall");
    c.equal(perfect.accuracy, 1.0, "perfect accuracy");
    c.equal(perfect.macro_f1, 1.0, "perfect macro_f1");
  });

  run(12, "replay: two fresh stores, same commands, byte-identical output and artifacts", [](Check& c) {
    auto base = fs::temp_directory_path() / ("taxonomist-replay-" + std::to_string(::getpid()));
    fs::remove_all(base);

    // A prompt with examples for the permutation suite.
    auto s = fixture_schema();
    prompting::PromptSpec spec;
    spec.examples = {{"Bruised pears again.", "Produce Quality", "Bruising", prompting::ExampleOrigin::Seed},
                     {"Box came crushed.", "Delivery", "Packaging Damage", prompting::ExampleOrigin::Seed},
                     {"Too expensive now.", "Pricing", std::nullopt, prompting::ExampleOrigin::Seed}};
    fs::create_directories(base);
    write_text_file_atomic(base / "prompt.json", prompting::spec_to_json(prompting::finalize(s, spec)).dump(2));

    auto replay = [&](const std::string& tag, std::string& transcript) {
      auto root = base / tag;
      auto cmd = [&](std::vector<std::string> args) {
        std::vector<std::string> full = {"--config", (kFixtures / "config.toml").string(), "--store",
                                         (root / "store").string(), "--seed", "7", "--json"};
        full.insert(full.end(), args.begin(), args.end());
        std::ostringstream out, err;
        auto outcome = cli::dispatch(full, out, err);
        transcript += "$ " + args.front() + " -> " + std::to_string(outcome.exit_code) + "\n" + out.str();
        return out.str().empty() ? Json::object() : Json::parse(out.str());
      };
      auto corpus_file = (kFixtures / "fruit_feedback.jsonl").string();
      auto golden_file = (kFixtures / "golden.jsonl").string();
      auto digest = cmd({"ingest", "--input", corpus_file}).at("corpus_digest").get<std::string>();
      auto run_id = cmd({"classify", "--corpus", digest, "--workers", "4"}).at("run_id").get<std::string>();
      cmd({"topics", "--corpus", digest});
      cmd({"align", "--run", run_id, "--export", (root / "heatmap.svg").string(), "--format", "svg"});
      cmd({"diagnose", "--run", run_id});
      cmd({"golden", "eval", "--golden", golden_file});
      cmd({"validate", "stateless", "--corpus", digest, "--runs", "3"});
      cmd({"validate", "intradoc", "--corpus", digest, "--min-tokens", "5"});
      cmd({"validate", "inprompt", "--corpus", digest, "--prompt", (base / "prompt.json").string()});
      cmd({"validate", "adversarial", "--corpus", digest});
      cmd({"fewshot", "select", "--candidates", (kFixtures / "candidates.jsonl").string(), "--golden",
           golden_file, "--corpus", digest});
      cmd({"optimize", "--golden", golden_file, "--theta", "0.9"});
      cmd({"drift", "window", "--run", run_id});
      cmd({"drift", "freeze", "--window", run_id + "-w0000", "--corpus", digest});
      cmd({"drift", "check", "--corpus", digest});
      cmd({"prefs", "judge", "--corpus", digest, "--doc-id", "fb-001", "--candidates", "K-01-01,K-02",
           "--constitution", (kFixtures / "constitution.txt").string()});
      cmd({"stats", "chisq", "--a", "30,70", "--b", "50,50"});
      cmd({"refine", "--edits", (kFixtures / "edits.json").string()});
      return tree(root);
    };
    std::string ta, tb;
    auto a = replay("a", ta);
    auto b = replay("b", tb);
    c.expect(ta == tb, "stdout transcripts identical");
    c.expect(ta.find(" -> 1\n") == std::string::npos, "no command failed operationally");
    c.expect(a.size() > 20, "artifacts written (" + std::to_string(a.size()) + ")");
    c.expect(a.size() == b.size(), "same artifact set size");
    std::size_t differing = 0;
    for (const auto& [path, bytes] : a) {
      auto it = b.find(path);
      if (it == b.end() || it->second != bytes) {
        ++differing;
        c.expect(false, "differs: " + path);
      }
    }
    c.equal(differing, std::size_t{0}, "differing artifacts");
    fs::remove_all(base);
  });

  std::cout << (failures ? "FAILED " + std::to_string(failures) + " criterion(s)" : std::string("all criteria met"))
            << std::endl;
  return failures;
}
