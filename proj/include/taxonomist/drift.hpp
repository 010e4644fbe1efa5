#pragma once

#include <chrono>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "taxonomist/corpus.hpp"
#include "taxonomist/gateway.hpp"
#include "taxonomist/result.hpp"
#include "taxonomist/schema.hpp"
#include "taxonomist/stats.hpp"

namespace taxonomist::drift {

struct Window {
  std::string id;
  std::optional<std::string> start;  // RFC3339, inclusive
  std::optional<std::string> end;    // RFC3339, exclusive
  int schema_version = 1;
  std::vector<ClassificationResult> results;
  stats::ClassDistribution distribution;
};

/// Builds a window and its distribution. Throws InvalidArgument when a
/// result timestamp falls outside [start, end).
Window make_window(std::string id, std::vector<ClassificationResult> results,
                   const schema::ClassSchema& schema, std::optional<std::string> start = {},
                   std::optional<std::string> end = {});

struct WindowPolicy {
  std::chrono::seconds duration = std::chrono::hours(24 * 7);
  std::size_t max_count = 1000;
};

/// Splits results into consecutive windows that close after `duration` or
/// `max_count` results, whichever comes first. Results are ordered by
/// timestamp; without timestamps only the count applies.
std::vector<Window> window_results(std::vector<ClassificationResult> results,
                                   const schema::ClassSchema& schema,
                                   const WindowPolicy& policy = {},
                                   const std::string& id_prefix = "w");

struct PChartAlert {
  std::string class_name;
  double proportion = 0;
  double center = 0;
  double lower = 0;
  double upper = 0;
};

struct DistributionalDrift {
  stats::TestResult chi2;
  std::vector<PChartAlert> limits;  // every class, alert or not
  std::vector<PChartAlert> alerts;
};

/// chi2_homogeneity between the windows, plus 3-sigma p-chart limits
/// p_ref +/- 3 sqrt(p_ref (1 - p_ref) / n_cur) per class.
DistributionalDrift distributional_drift(const Window& ref, const Window& cur,
                                         double alpha = stats::kDefaultAlpha);

struct ClassCentroid {
  std::string class_name;
  gateway::EmbeddingVector vector;
  std::size_t member_count = 0;
  std::string frozen_at;
  /// Mean leave-one-out member distance at freeze time: each member against
  /// the centroid of the others. Singletons fall back to the in-sample distance.
  double baseline_cohesion = 0;
};

struct CentroidSet {
  std::map<std::string, ClassCentroid> centroids;
  std::vector<std::string> omitted;  // below min_members
};

using EmbeddingMap = std::map<std::string, gateway::EmbeddingVector>;

/// Throws ProviderMismatch, ZeroCentroid, or InvalidArgument for a member
/// without an embedding.
CentroidSet compute_centroids(const Window& stable, const EmbeddingMap& embeddings,
                              std::size_t min_members = 1);

/// 1 - cosine.
double cosine_distance(const gateway::EmbeddingVector& a, const gateway::EmbeddingVector& b);

/// S_j: mean distance of each class's new members from its centroid.
/// Classes without new members are absent. Throws MissingCentroid.
std::map<std::string, double> cohesion(
    const std::vector<std::pair<std::string, std::string>>& new_docs,
    const std::map<std::string, ClassCentroid>& centroids, const EmbeddingMap& embeddings);

struct NovelTopic {
  std::string topic;
  double max_similarity = 0;
};

struct NoveltyResult {
  std::vector<NovelTopic> topics;  // every discovered topic
  std::vector<NovelTopic> novel;   // max_similarity < tau
};

inline constexpr double kDefaultTau = 0.35;

/// Similarities are computed from embeddings of each topic's description
/// against every class definition.
NoveltyResult score_topics(const schema::TopicSet& topics, const schema::ClassSchema& schema,
                           double tau, gateway::Backend& backend);

NoveltyResult novelty_scan(const corpus::Corpus& recent, const schema::ClassSchema& schema,
                           double tau, gateway::Backend& backend,
                           const std::string& topic_prompt = gateway::kDefaultTopicPrompt,
                           std::size_t max_topics = 20);

enum class Verdict { Stable, DistributionShift, CohesionErosion, ConceptualGap, Degraded };

std::string to_string(Verdict v);

struct DriftThresholds {
  double alpha = stats::kDefaultAlpha;
  double tau = kDefaultTau;
  double erosion_margin = 0.1;
  std::size_t erosion_windows = 2;
  double degradation_drop = 0.1;

  void validate() const;
};

struct GoldenPoint {
  std::string prompt_hash;
  std::string timestamp;
  double macro_f1 = 0;
};

/// Everything the verdict depends on. Serialized as part of the report so
/// the verdict can be recomputed.
struct DriftSignals {
  std::optional<DistributionalDrift> distribution;
  /// Per class: S_j over recent windows, oldest first.
  std::map<std::string, std::vector<double>> cohesion_series;
  std::map<std::string, double> cohesion_baseline;
  std::vector<NovelTopic> novel_topics;
  std::vector<GoldenPoint> golden_trend;
};

struct DriftReport {
  DriftSignals signals;
  DriftThresholds thresholds;
  Verdict verdict = Verdict::Stable;
  std::vector<std::string> reasons;
};

/// Precedence: degraded > conceptual_gap > cohesion_erosion >
/// distribution_shift > stable.
Verdict decide(const DriftSignals& signals, const DriftThresholds& t,
               std::vector<std::string>* reasons = nullptr);

DriftReport evaluate_drift(DriftSignals signals, const DriftThresholds& thresholds);

Json window_to_json(const Window& w);
Window window_from_json(const Json& j);
Json centroid_to_json(const ClassCentroid& c);
ClassCentroid centroid_from_json(const Json& j);
Json drift_report_to_json(const DriftReport& r);
DriftReport drift_report_from_json(const Json& j);
DriftThresholds drift_thresholds_from_json(const Json& j);

}  // namespace taxonomist::drift
