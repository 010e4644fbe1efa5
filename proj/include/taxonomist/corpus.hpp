#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "taxonomist/result.hpp"
#include "taxonomist/schema.hpp"
#include "taxonomist/util.hpp"

namespace taxonomist::corpus {

struct RawDocument {
  std::string id;
  std::string text;
  std::optional<std::string> timestamp;  // RFC3339
  std::map<std::string, std::string> dimensions;
};

struct ProcessedDocument {
  std::string id;
  std::string source_id;
  std::string text;
  std::size_t segment_index = 0;
  std::size_t token_estimate = 0;
  std::optional<std::string> timestamp;
  std::map<std::string, std::string> dimensions;

  bool operator==(const ProcessedDocument&) const = default;
};

struct Provenance {
  std::string source;
  std::string config_hash;

  bool operator==(const Provenance&) const = default;
};

struct Corpus {
  std::vector<ProcessedDocument> documents;
  Provenance provenance;

  std::size_t size() const { return documents.size(); }
  bool empty() const { return documents.empty(); }
  const ProcessedDocument* find(std::string_view id) const;
};

/// Names accepted in PreprocessConfig::rules, applied in list order.
inline constexpr const char* kStripMarkup = "strip_markup";
inline constexpr const char* kStripControl = "strip_control";
inline constexpr const char* kCollapseUrls = "collapse_urls";
inline constexpr const char* kCollapseWhitespace = "collapse_whitespace";

/// Replacement token emitted by collapse_urls.
inline constexpr const char* kUrlToken = "<URL>";

struct PreprocessConfig {
  std::int64_t max_segment_tokens = 512;
  std::vector<std::string> rules{kStripControl, kStripMarkup, kCollapseUrls, kCollapseWhitespace};

  std::string hash() const;
};

PreprocessConfig preprocess_config_from_json(const Json& j);
Json preprocess_config_to_json(const PreprocessConfig& config);

/// Runs the artifact rules over `text` without segmenting. Throws
/// InvalidConfig on an unknown rule name.
std::string normalize_text(std::string_view text, const std::vector<std::string>& rules);

/// Cleans and segments one document. Segments split at the last sentence
/// terminator (. ! ? or a newline) that keeps the segment within
/// max_segment_tokens; a sentence longer than the limit is hard-split.
std::vector<ProcessedDocument> preprocess(const RawDocument& raw, const PreprocessConfig& config);

/// Reads JSONL {"id", "text", "timestamp"?, "dimensions"?}; blank lines are skipped.
std::vector<RawDocument> read_raw_jsonl(const std::filesystem::path& path);

Corpus load_corpus(const std::filesystem::path& path, const PreprocessConfig& config);

Json document_to_json(const ProcessedDocument& doc);
ProcessedDocument document_from_json(const Json& j);
std::string corpus_to_jsonl(const Corpus& corpus);
/// Reads a corpus previously written by corpus_to_jsonl (already processed).
Corpus corpus_from_jsonl(std::string_view text, const Provenance& provenance);

/// Splits the corpus by assigned parent. Every schema parent gets an entry,
/// possibly empty.
std::map<std::string, Corpus> partition_by_parent(
    const Corpus& corpus, const std::vector<ClassificationResult>& results,
    const schema::ClassSchema& schema);

}  // namespace taxonomist::corpus
