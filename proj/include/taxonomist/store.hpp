#pragma once

#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "taxonomist/alignment.hpp"
#include "taxonomist/corpus.hpp"
#include "taxonomist/drift.hpp"
#include "taxonomist/fewshot.hpp"
#include "taxonomist/golden.hpp"
#include "taxonomist/prompting.hpp"
#include "taxonomist/result.hpp"
#include "taxonomist/schema.hpp"

namespace taxonomist::store {

struct RunRecord {
  std::string run_id;  // filled by save_run
  std::string kind = "classify";
  std::string prompt_hash;
  int schema_version = 1;
  std::string backend_id;
  std::string corpus_digest;
  std::vector<ClassificationResult> results;
  std::string started;
  std::string finished;

  bool operator==(const RunRecord&) const = default;
};

struct RunSummary {
  std::string run_id;
  std::string kind;
  std::string prompt_hash;
  int schema_version = 1;
  std::string backend_id;
  std::string corpus_digest;
  std::size_t result_count = 0;
  std::string started;
  std::string finished;
};

Json run_summary_to_json(const RunSummary& s);

/// Content address: first 16 hex digits of sha256 over the canonical record
/// with run_id blanked.
std::string compute_run_id(const RunRecord& record);

/// Exclusive advisory lock on <root>/.lock. Non-blocking: a held lock
/// raises LockConflict.
class StoreLock {
 public:
  explicit StoreLock(const std::filesystem::path& root);
  ~StoreLock();
  StoreLock(const StoreLock&) = delete;
  StoreLock& operator=(const StoreLock&) = delete;

 private:
  int fd_ = -1;
};

/// Plain-directory store. Every write goes through a temp file and a rename.
class Store {
 public:
  explicit Store(std::filesystem::path root);

  const std::filesystem::path& root() const { return root_; }
  /// Resolution order: explicit flag, TAXONOMIST_STORE, ./.taxonomist.
  static std::filesystem::path resolve_root(const std::optional<std::string>& flag);

  /// Returns the run id. Saving an identical record again is a no-op.
  std::string save_run(RunRecord record);
  /// Throws NotFound or IntegrityError.
  RunRecord load_run(const std::string& run_id) const;
  std::vector<RunSummary> list_runs() const;
  std::optional<RunSummary> summary(const std::string& run_id) const;

  void save_prompt(const prompting::PromptSpec& spec, const std::string& rendered);
  prompting::PromptSpec load_prompt(const std::string& hash) const;

  void save_schema(const schema::ClassSchema& schema);
  std::optional<schema::ClassSchema> load_schema(int version) const;
  std::optional<schema::ClassSchema> latest_schema() const;

  std::string save_corpus(const corpus::Corpus& corpus);
  corpus::Corpus load_corpus(const std::string& digest) const;

  void save_alignment(const alignment::AlignmentMatrix& matrix);
  alignment::AlignmentMatrix load_alignment(const std::string& run_id) const;

  void save_window(const drift::Window& window);
  drift::Window load_window(const std::string& id) const;
  std::vector<std::string> list_windows() const;

  void save_centroids(const std::vector<drift::ClassCentroid>& centroids);
  std::vector<drift::ClassCentroid> load_centroids() const;

  /// Appends to drift/reports.jsonl.
  void append_drift_report(const Json& report);
  std::optional<Json> latest_drift_report() const;

  void append_golden_trend(const drift::GoldenPoint& point);
  std::vector<drift::GoldenPoint> golden_trend() const;

  void save_golden(const std::string& name, const GoldenSet& golden);

  std::filesystem::path preferences_path() const;

  /// Writes an arbitrary artifact under the root, atomically.
  void write_artifact(const std::filesystem::path& relative, std::string_view contents);

 private:
  std::filesystem::path root_;
};

Json run_to_json(const RunRecord& r);

}  // namespace taxonomist::store
