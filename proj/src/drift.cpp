#include "taxonomist/drift.hpp"

#include <algorithm>
#include <cmath>

#include "taxonomist/errors.hpp"
#include "taxonomist/fewshot.hpp"

namespace taxonomist::drift {

namespace {

TimePoint require_time(const std::string& s) {
  auto tp = parse_rfc3339(s);
  if (!tp) throw InvalidArgument("not an RFC3339 timestamp: " + s);
  return *tp;
}

Json opt(const std::optional<std::string>& s) { return s ? Json(*s) : Json(); }

Json alerts_json(const std::vector<PChartAlert>& alerts) {
  Json out = Json::array();
  for (const auto& a : alerts) {
    out.push_back({{"class", a.class_name}, {"proportion", a.proportion}, {"center", a.center},
                   {"lower", a.lower}, {"upper", a.upper}});
  }
  return out;
}

std::vector<PChartAlert> alerts_from(const Json& j) {
  std::vector<PChartAlert> out;
  for (const auto& a : j) {
    out.push_back({a.at("class").get<std::string>(), a.at("proportion").get<double>(),
                   a.at("center").get<double>(), a.at("lower").get<double>(),
                   a.at("upper").get<double>()});
  }
  return out;
}

}  // namespace

Window make_window(std::string id, std::vector<ClassificationResult> results,
                   const schema::ClassSchema& schema, std::optional<std::string> start,
                   std::optional<std::string> end) {
  std::optional<TimePoint> lo, hi;
  if (start) lo = require_time(*start);
  if (end) hi = require_time(*end);
  for (const auto& r : results) {
    if (!r.timestamp || (!lo && !hi)) continue;
    auto t = require_time(*r.timestamp);
    if ((lo && t < *lo) || (hi && t >= *hi)) {
      throw InvalidArgument("result '" + r.doc_id + "' at " + *r.timestamp +
                            " lies outside window '" + id + "'");
    }
  }
  Window w;
  w.id = std::move(id);
  w.start = std::move(start);
  w.end = std::move(end);
  w.schema_version = schema.version;
  w.distribution = stats::class_distribution(results, schema);
  w.results = std::move(results);
  return w;
}

std::vector<Window> window_results(std::vector<ClassificationResult> results,
                                   const schema::ClassSchema& schema, const WindowPolicy& policy,
                                   const std::string& id_prefix) {
  if (policy.max_count == 0) throw InvalidConfig("window max_count must be positive");
  bool timed = !results.empty() &&
               std::all_of(results.begin(), results.end(), [](const auto& r) { return r.timestamp.has_value(); });
  if (timed) {
    std::stable_sort(results.begin(), results.end(), [](const auto& a, const auto& b) {
      return require_time(*a.timestamp) < require_time(*b.timestamp);
    });
  }
  std::vector<Window> out;
  std::size_t i = 0;
  while (i < results.size()) {
    std::vector<ClassificationResult> batch;
    std::optional<std::string> start, end;
    if (timed) {
      auto t0 = require_time(*results[i].timestamp);
      auto limit = t0 + policy.duration;
      while (i < results.size() && batch.size() < policy.max_count &&
             require_time(*results[i].timestamp) < limit) {
        batch.push_back(results[i++]);
      }
      start = format_rfc3339(t0);
      // A count-closed window ends just after its last member.
      auto last = require_time(*batch.back().timestamp);
      end = format_rfc3339(batch.size() == policy.max_count && i < results.size()
                               ? last + std::chrono::seconds(1)
                               : limit);
    } else {
      while (i < results.size() && batch.size() < policy.max_count) batch.push_back(results[i++]);
    }
    char id[32];
    std::snprintf(id, sizeof id, "%s%04zu", id_prefix.c_str(), out.size());
    out.push_back(make_window(id, std::move(batch), schema, start, end));
  }
  return out;
}

DistributionalDrift distributional_drift(const Window& ref, const Window& cur, double alpha) {
  if (ref.schema_version != cur.schema_version) {
    throw InvalidArgument("windows were classified under different schema versions");
  }
  DistributionalDrift out;
  out.chi2 = stats::chi2_homogeneity(ref.distribution, cur.distribution, alpha);
  auto p_ref = ref.distribution.proportions();
  auto p_cur = cur.distribution.proportions();
  const double n_cur = double(cur.distribution.total());
  for (std::size_t i = 0; i < p_ref.size(); ++i) {
    double center = p_ref[i];
    double sigma = std::sqrt(center * (1.0 - center) / n_cur);
    PChartAlert a{ref.distribution.labels[i], p_cur[i], center, std::max(0.0, center - 3 * sigma),
                  std::min(1.0, center + 3 * sigma)};
    out.limits.push_back(a);
    if (p_cur[i] < center - 3 * sigma || p_cur[i] > center + 3 * sigma) out.alerts.push_back(a);
  }
  return out;
}

double cosine_distance(const gateway::EmbeddingVector& a, const gateway::EmbeddingVector& b) {
  return 1.0 - fewshot::cosine_similarity(a, b);
}

CentroidSet compute_centroids(const Window& stable, const EmbeddingMap& embeddings,
                              std::size_t min_members) {
  std::map<std::string, std::vector<const gateway::EmbeddingVector*>> members;
  std::string provider;
  for (const auto& r : stable.results) {
    auto it = embeddings.find(r.doc_id);
    if (it == embeddings.end()) throw InvalidArgument("no embedding for document '" + r.doc_id + "'");
    if (provider.empty()) provider = it->second.provider_id;
    if (it->second.provider_id != provider) {
      throw ProviderMismatch("centroid members embedded by '" + provider + "' and '" +
                             it->second.provider_id + "'");
    }
    members[r.parent].push_back(&it->second);
  }
  CentroidSet out;
  for (const auto& [name, vecs] : members) {
    if (vecs.size() < min_members) {
      out.omitted.push_back(name);
      continue;
    }
    const auto dim = vecs.front()->dim();
    gateway::EmbeddingVector mean{std::vector<double>(dim, 0.0), provider};
    for (const auto* v : vecs) {
      if (v->dim() != dim) throw DimensionMismatch("centroid members differ in dimension");
      for (std::size_t i = 0; i < dim; ++i) mean.values[i] += v->values[i];
    }
    double norm = 0;
    for (double x : mean.values) norm += x * x;
    norm = std::sqrt(norm);
    if (norm < 1e-12) throw ZeroCentroid(name);
    for (double& x : mean.values) x /= norm;
    ClassCentroid c{name, std::move(mean), vecs.size(), stable.id, 0.0};
    // Leave-one-out: a member's distance to the centroid of the others. The in-sample
    // distance is biased low, most of all for small classes, and would read as erosion.
    std::vector<double> sum(dim, 0.0);
    for (const auto* v : vecs) {
      for (std::size_t i = 0; i < dim; ++i) sum[i] += v->values[i];
    }
    double loo = 0;
    std::size_t counted = 0;
    for (const auto* v : vecs) {
      gateway::EmbeddingVector rest{sum, provider};
      for (std::size_t i = 0; i < dim; ++i) rest.values[i] -= v->values[i];
      try {
        loo += cosine_distance(*v, rest);
        ++counted;
      } catch (const ZeroVector&) {
      }
    }
    if (counted) {
      c.baseline_cohesion = loo / double(counted);
    } else {
      for (const auto* v : vecs) c.baseline_cohesion += cosine_distance(*v, c.vector);
      c.baseline_cohesion /= double(vecs.size());
    }
    out.centroids.emplace(name, std::move(c));
  }
  return out;
}

std::map<std::string, double> cohesion(
    const std::vector<std::pair<std::string, std::string>>& new_docs,
    const std::map<std::string, ClassCentroid>& centroids, const EmbeddingMap& embeddings) {
  std::map<std::string, std::pair<double, std::size_t>> acc;
  for (const auto& [doc, cls] : new_docs) {
    auto c = centroids.find(cls);
    if (c == centroids.end()) throw MissingCentroid(cls);
    auto e = embeddings.find(doc);
    if (e == embeddings.end()) throw InvalidArgument("no embedding for document '" + doc + "'");
    auto& slot = acc[cls];
    slot.first += cosine_distance(e->second, c->second.vector);
    ++slot.second;
  }
  std::map<std::string, double> out;
  for (const auto& [cls, s] : acc) out[cls] = s.first / double(s.second);
  return out;
}

NoveltyResult score_topics(const schema::TopicSet& topics, const schema::ClassSchema& schema,
                           double tau, gateway::Backend& backend) {
  if (!(tau > 0 && tau < 1)) throw InvalidArgument("tau must lie in (0, 1)");
  std::vector<gateway::EmbeddingVector> defs;
  for (const auto& p : schema.parents) {
    defs.push_back(gateway::embed(backend, p.definition));
    for (const auto& c : p.children) defs.push_back(gateway::embed(backend, c.definition));
  }
  NoveltyResult out;
  for (const auto& t : topics.topics()) {
    const auto& text = trim(t.description).empty() ? t.name : t.description;
    auto e = gateway::embed(backend, text);
    double best = 0.0;
    for (const auto& d : defs) {
      try {
        best = std::max(best, fewshot::cosine_similarity(e, d));
      } catch (const ZeroVector&) {
        // A topic or definition with no word tokens resembles nothing.
      }
    }
    out.topics.push_back({t.name, best});
    if (best < tau) out.novel.push_back({t.name, best});
  }
  return out;
}

NoveltyResult novelty_scan(const corpus::Corpus& recent, const schema::ClassSchema& schema,
                           double tau, gateway::Backend& backend, const std::string& topic_prompt,
                           std::size_t max_topics) {
  if (!(tau > 0 && tau < 1)) throw InvalidArgument("tau must lie in (0, 1)");
  auto discovery = gateway::discover_topics(recent, topic_prompt, max_topics, backend);
  return score_topics(discovery.topics, schema, tau, backend);
}

std::string to_string(Verdict v) {
  switch (v) {
    case Verdict::Stable: return "stable";
    case Verdict::DistributionShift: return "distribution_shift";
    case Verdict::CohesionErosion: return "cohesion_erosion";
    case Verdict::ConceptualGap: return "conceptual_gap";
    case Verdict::Degraded: return "degraded";
  }
  return "stable";
}

void DriftThresholds::validate() const {
  if (!(alpha > 0 && alpha < 1)) throw InvalidConfig("alpha must lie in (0, 1)");
  if (!(tau > 0 && tau < 1)) throw InvalidConfig("tau must lie in (0, 1)");
  if (erosion_margin < 0) throw InvalidConfig("erosion_margin must be non-negative");
  if (erosion_windows < 2) throw InvalidConfig("erosion_windows must be at least 2");
  if (degradation_drop < 0) throw InvalidConfig("degradation_drop must be non-negative");
}

Verdict decide(const DriftSignals& s, const DriftThresholds& t, std::vector<std::string>* reasons) {
  std::vector<std::string> local;
  auto& why = reasons ? *reasons : local;
  why.clear();
  bool degraded = false, gap = false, erosion = false, shift = false;

  if (s.golden_trend.size() >= 2) {
    double drop = s.golden_trend.front().macro_f1 - s.golden_trend.back().macro_f1;
    if (drop > t.degradation_drop) {
      degraded = true;
      why.push_back("golden macro_f1 fell by " + std::to_string(drop));
    }
  }
  for (const auto& n : s.novel_topics) {
    gap = true;
    why.push_back("novel topic '" + n.topic + "' (max similarity " +
                  std::to_string(n.max_similarity) + ")");
  }
  for (const auto& [cls, series] : s.cohesion_series) {
    auto base = s.cohesion_baseline.find(cls);
    if (base == s.cohesion_baseline.end() || series.size() < t.erosion_windows) continue;
    bool sustained = std::all_of(series.end() - long(t.erosion_windows), series.end(),
                                 [&](double v) { return v > base->second + t.erosion_margin; });
    if (sustained) {
      erosion = true;
      why.push_back("cohesion of '" + cls + "' above baseline for " +
                    std::to_string(t.erosion_windows) + " windows");
    }
  }
  if (s.distribution) {
    if (s.distribution->chi2.p_value < t.alpha) {
      shift = true;
      why.push_back("chi-squared p = " + std::to_string(s.distribution->chi2.p_value));
    }
    for (const auto& a : s.distribution->alerts) {
      shift = true;
      why.push_back("p-chart alert on '" + a.class_name + "'");
    }
  }
  if (degraded) return Verdict::Degraded;
  if (gap) return Verdict::ConceptualGap;
  if (erosion) return Verdict::CohesionErosion;
  if (shift) return Verdict::DistributionShift;
  return Verdict::Stable;
}

DriftReport evaluate_drift(DriftSignals signals, const DriftThresholds& thresholds) {
  thresholds.validate();
  DriftReport r;
  r.signals = std::move(signals);
  r.thresholds = thresholds;
  r.verdict = decide(r.signals, thresholds, &r.reasons);
  return r;
}

Json window_to_json(const Window& w) {
  Json results = Json::array();
  for (const auto& r : w.results) results.push_back(result_to_json(r));
  return Json{{"id", w.id},
              {"start", opt(w.start)},
              {"end", opt(w.end)},
              {"schema_version", w.schema_version},
              {"distribution", stats::distribution_to_json(w.distribution)},
              {"results", std::move(results)}};
}

Window window_from_json(const Json& j) {
  Window w;
  w.id = j.at("id").get<std::string>();
  if (!j.at("start").is_null()) w.start = j.at("start").get<std::string>();
  if (!j.at("end").is_null()) w.end = j.at("end").get<std::string>();
  w.schema_version = j.value("schema_version", 1);
  w.distribution = stats::distribution_from_json(j.at("distribution"));
  for (const auto& r : j.at("results")) w.results.push_back(result_from_json(r));
  return w;
}

Json centroid_to_json(const ClassCentroid& c) {
  return Json{{"class", c.class_name},
              {"vector", c.vector.values},
              {"provider_id", c.vector.provider_id},
              {"member_count", c.member_count},
              {"frozen_at", c.frozen_at},
              {"baseline_cohesion", c.baseline_cohesion}};
}

ClassCentroid centroid_from_json(const Json& j) {
  ClassCentroid c;
  c.class_name = j.at("class").get<std::string>();
  c.vector = {j.at("vector").get<std::vector<double>>(), j.at("provider_id").get<std::string>()};
  c.member_count = j.at("member_count").get<std::size_t>();
  c.frozen_at = j.value("frozen_at", std::string{});
  c.baseline_cohesion = j.value("baseline_cohesion", 0.0);
  return c;
}

DriftThresholds drift_thresholds_from_json(const Json& j) {
  DriftThresholds t;
  t.alpha = j.value("alpha", t.alpha);
  t.tau = j.value("tau", t.tau);
  t.erosion_margin = j.value("erosion_margin", t.erosion_margin);
  t.erosion_windows = j.value("erosion_windows", t.erosion_windows);
  t.degradation_drop = j.value("degradation_drop", t.degradation_drop);
  t.validate();
  return t;
}

Json drift_report_to_json(const DriftReport& r) {
  const auto& s = r.signals;
  Json signals;
  if (s.distribution) {
    signals["chi2"] = stats::test_result_to_json(s.distribution->chi2);
    signals["pchart_limits"] = alerts_json(s.distribution->limits);
    signals["pchart_alerts"] = alerts_json(s.distribution->alerts);
  } else {
    signals["chi2"] = nullptr;
    signals["pchart_limits"] = Json::array();
    signals["pchart_alerts"] = Json::array();
  }
  signals["cohesion_series"] = s.cohesion_series;
  signals["cohesion_baseline"] = s.cohesion_baseline;
  Json novel = Json::array();
  for (const auto& n : s.novel_topics) {
    novel.push_back({{"topic", n.topic}, {"max_similarity", n.max_similarity}});
  }
  signals["novel_topics"] = std::move(novel);
  Json trend = Json::array();
  for (const auto& g : s.golden_trend) {
    trend.push_back({{"prompt_hash", g.prompt_hash}, {"timestamp", g.timestamp},
                     {"macro_f1", g.macro_f1}});
  }
  signals["golden_trend"] = std::move(trend);
  const auto& t = r.thresholds;
  return Json{{"verdict", to_string(r.verdict)},
              {"reasons", r.reasons},
              {"thresholds",
               {{"alpha", t.alpha},
                {"tau", t.tau},
                {"erosion_margin", t.erosion_margin},
                {"erosion_windows", t.erosion_windows},
                {"degradation_drop", t.degradation_drop}}},
              {"signals", std::move(signals)},
              {"caveat",
               "the homogeneity test treats the two windows as independent samples"}};
}

DriftReport drift_report_from_json(const Json& j) {
  DriftReport r;
  r.thresholds = drift_thresholds_from_json(j.at("thresholds"));
  const auto& s = j.at("signals");
  if (!s.at("chi2").is_null()) {
    DistributionalDrift d;
    d.chi2 = stats::test_result_from_json(s.at("chi2"));
    d.limits = alerts_from(s.at("pchart_limits"));
    d.alerts = alerts_from(s.at("pchart_alerts"));
    r.signals.distribution = std::move(d);
  }
  r.signals.cohesion_series = s.at("cohesion_series").get<std::map<std::string, std::vector<double>>>();
  r.signals.cohesion_baseline = s.at("cohesion_baseline").get<std::map<std::string, double>>();
  for (const auto& n : s.at("novel_topics")) {
    r.signals.novel_topics.push_back({n.at("topic").get<std::string>(), n.at("max_similarity").get<double>()});
  }
  for (const auto& g : s.at("golden_trend")) {
    r.signals.golden_trend.push_back({g.at("prompt_hash").get<std::string>(),
                                      g.at("timestamp").get<std::string>(),
                                      g.at("macro_f1").get<double>()});
  }
  r.verdict = decide(r.signals, r.thresholds, &r.reasons);
  return r;
}

}  // namespace taxonomist::drift
