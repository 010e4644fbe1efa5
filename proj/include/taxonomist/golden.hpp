#pragma once

#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "taxonomist/corpus.hpp"
#include "taxonomist/gateway.hpp"
#include "taxonomist/result.hpp"
#include "taxonomist/schema.hpp"

namespace taxonomist {

struct GoldenEntry {
  std::string doc_id;
  std::string text;
  std::string parent;
  std::optional<std::string> child;

  bool operator==(const GoldenEntry&) const = default;

  HierLabel label() const { return {parent, child}; }
};

struct GoldenSet {
  std::vector<GoldenEntry> entries;
  std::string provenance;  // labeling round
  int schema_version = 1;

  bool empty() const { return entries.empty(); }
  std::vector<corpus::ProcessedDocument> documents() const;
};

/// JSONL {doc_id, text, parent, child?}. Labels are internal names checked
/// against `schema`; a bad one raises UnknownLabel with its line.
GoldenSet load_golden(const std::filesystem::path& path, const schema::ClassSchema& schema,
                      const std::string& provenance = {});
GoldenSet parse_golden(std::string_view text, const schema::ClassSchema& schema,
                       const std::string& provenance = {});
std::string golden_to_jsonl(const GoldenSet& golden);

struct ClassMetrics {
  std::size_t tp = 0, fp = 0, fn = 0;
  double precision = 0, recall = 0, f1 = 0;
  std::size_t support = 0;
};

struct MetricsReport {
  double precision = 0;  // macro
  double recall = 0;     // macro
  double accuracy = 0;
  double macro_f1 = 0;
  std::size_t n = 0;
  std::size_t failed_predictions = 0;
  std::map<std::string, ClassMetrics> per_class;
};

/// One-vs-rest over parent labels, macro-averaged across every class seen
/// in the gold labels or the predictions. A missing prediction counts as
/// wrong. Accuracy is exact match on (parent, child); the child is compared
/// only where the gold entry has one.
MetricsReport compute_metrics(const std::vector<HierLabel>& gold,
                              const std::vector<std::optional<HierLabel>>& predicted);

/// Labels every golden entry with `classify`. Unparseable or unknown labels
/// count as wrong predictions; backend failures propagate.
MetricsReport golden_eval(const GoldenSet& golden, const gateway::ClassifyFn& classify);

Json metrics_to_json(const MetricsReport& m);
MetricsReport metrics_from_json(const Json& j);

}  // namespace taxonomist
