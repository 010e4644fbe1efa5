#pragma once

#include <chrono>
#include <cstdint>
#include <functional>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <string>
#include <vector>

#include "taxonomist/corpus.hpp"
#include "taxonomist/prompting.hpp"
#include "taxonomist/result.hpp"
#include "taxonomist/schema.hpp"

namespace taxonomist::gateway {

struct EmbeddingVector {
  std::vector<double> values;
  std::string provider_id;

  std::size_t dim() const { return values.size(); }
  bool operator==(const EmbeddingVector&) const = default;
};

// ---------------------------------------------------------------------------
// Mock profile
//
// The mock reads the same prompt text a real model would. Rule labels are
// internal names; bind() records the alias for each so responses carry
// aliases just like a real model that only ever saw the aliases.

struct KeywordRule {
  std::string pattern;  // case-insensitive, word-bounded match on the document
  std::string parent;
  std::optional<std::string> child;
  /// When set, the rule only fires if this text appears in the prompt
  /// instructions. Makes a definition sentence load-bearing.
  std::optional<std::string> requires_text;
};

struct TopicRule {
  std::string pattern;
  std::string topic;
  std::string description;
};

/// Makes the mock stateful for one document: on the 1st, 3rd, 5th... call
/// for `doc_id` it answers with the alternate label.
struct FlipRule {
  std::string doc_id;
  std::string parent;
  std::optional<std::string> child;
};

enum class Fallback { FixedLabel, LastExampleLabel, FirstTokenLabel };
enum class JudgeMode { Rules, FirstCandidate };

struct MockProfile {
  std::vector<KeywordRule> keyword_rules;
  Fallback fallback = Fallback::FixedLabel;
  std::string fixed_label;
  std::optional<std::string> fixed_child;
  /// Fraction of leading document words the mock reads; 1.0 reads everything.
  double prefix_fraction = 1.0;
  /// Before falling back, adopt the label of the prompt example sharing the
  /// most words with the document.
  bool example_match = false;
  std::vector<FlipRule> flip_rules;
  std::vector<TopicRule> topic_rules;
  std::string topic_fallback = "Miscellaneous";
  JudgeMode judge_mode = JudgeMode::Rules;
  std::size_t embedding_dim = 256;
  /// Internal path ("Parent" or "Parent/Child") to external alias.
  std::map<std::string, std::string> aliases;

  /// Throws InvalidConfig when a pattern is empty or prefix_fraction is outside (0, 1].
  void validate() const;
  void bind(const schema::ClassSchema& schema);
};

MockProfile mock_profile_from_json(const Json& j);
Json mock_profile_to_json(const MockProfile& p);

enum class BackendKind { Http, Mock };

struct BackendConfig {
  BackendKind kind = BackendKind::Mock;
  std::string endpoint;
  std::string embed_endpoint;
  std::string model_id = "mock";
  double temperature = 0.0;
  std::chrono::milliseconds timeout{30000};
  int retry_limit = 2;
  MockProfile mock_profile;
};

/// Accepts either a bare [backend] table or a document containing one. A
/// `mock_profile` string is resolved relative to `base_dir`.
BackendConfig backend_config_from_json(const Json& j, const std::filesystem::path& base_dir = {});

// ---------------------------------------------------------------------------
// Backends

struct CompletionRequest {
  std::string prompt;
  /// Routing metadata only; never sent over the wire.
  std::optional<std::string> doc_id;
};

class Backend {
 public:
  virtual ~Backend() = default;

  virtual std::string complete(const CompletionRequest& request) = 0;
  virtual EmbeddingVector embed(std::string_view text) = 0;
  virtual std::string id() const = 0;
  /// True when outputs are a pure function of inputs.
  virtual bool deterministic() const = 0;
  /// In-process stand-in for a model. Latency is reported as 0 and the CLI
  /// pins its clock so replays are byte-identical.
  virtual bool simulated() const { return false; }
};

class MockBackend : public Backend {
 public:
  explicit MockBackend(MockProfile profile);

  std::string complete(const CompletionRequest& request) override;
  EmbeddingVector embed(std::string_view text) override;
  std::string id() const override { return "mock"; }
  bool deterministic() const override { return profile_.flip_rules.empty(); }
  bool simulated() const override { return true; }

  const MockProfile& profile() const { return profile_; }

 private:
  std::string classify_response(const CompletionRequest& request) const;
  std::string topic_response(const std::string& prompt) const;
  std::string judge_response(const std::string& prompt) const;
  std::string visible_text(std::string_view document) const;

  MockProfile profile_;
  std::mutex flip_mutex_;
  std::map<std::string, int> flip_calls_;
};

/// POST {endpoint} {"model","temperature","prompt"} -> {"text"}; embeddings
/// POST {embed_endpoint} {"model","input"} -> {"embedding": [...]}. A
/// TAXONOMIST_API_KEY environment variable is sent as a bearer token.
class HttpBackend : public Backend {
 public:
  explicit HttpBackend(BackendConfig config);

  std::string complete(const CompletionRequest& request) override;
  EmbeddingVector embed(std::string_view text) override;
  std::string id() const override { return "http:" + config_.model_id; }
  bool deterministic() const override { return false; }

 private:
  Json post_with_retry(const std::string& url, const Json& body);

  BackendConfig config_;
};

std::unique_ptr<Backend> make_backend(const BackendConfig& config);

// ---------------------------------------------------------------------------
// Operations

/// Throws InvalidArgument on an empty prompt.
std::string complete(Backend& backend, const std::string& prompt);

/// Extracts (parent alias, child alias) from a response: the last JSON object
/// with a "parent" key, or failing that a trailing "label: X" / "parent: X"
/// line. Aliases are mapped to internal names; unknown ones raise UnknownLabel.
HierLabel parse_classification(std::string_view response, const schema::ClassSchema& schema);

/// Last balanced JSON object in `text` that contains `key`.
std::optional<Json> last_json_object_with(std::string_view text, std::string_view key);

ClassificationResult classify(const corpus::ProcessedDocument& doc,
                              const prompting::PromptText& prompt,
                              const schema::ClassSchema& schema, Backend& backend);

ClassificationResult classify(const corpus::ProcessedDocument& doc,
                              const prompting::PromptSpec& spec,
                              const schema::ClassSchema& schema, Backend& backend);

/// Classifies with up to `workers` threads. Output order follows `docs`.
std::vector<ClassificationResult> classify_batch(
    const std::vector<corpus::ProcessedDocument>& docs, const prompting::PromptText& prompt,
    const schema::ClassSchema& schema, Backend& backend, std::size_t workers = 1);

// Task markers that route a completion to topic elicitation or pairwise judging.
inline constexpr const char* kTopicTaskMarker = "TASK: TOPIC DISCOVERY";
inline constexpr const char* kJudgeTaskMarker = "TASK: PREFERENCE JUDGMENT";

/// Non-canonical default instructions for unconstrained topic elicitation.
extern const char* const kDefaultTopicPrompt;

struct TopicDiscovery {
  schema::TopicSet topics;
  std::map<std::string, std::string> assignment;  // doc_id -> topic name
};

/// One call per document. Names are merged by case fold; when more than
/// `max_topics` survive, the least frequent are pooled into "Other".
TopicDiscovery discover_topics(const corpus::Corpus& corpus, const std::string& topic_prompt,
                               std::size_t max_topics, Backend& backend);

EmbeddingVector embed(Backend& backend, std::string_view text);

/// Hashed bag-of-words: lower-cased alphanumeric tokens, FNV-1a buckets,
/// L2-normalized. All-punctuation text yields the zero vector.
EmbeddingVector hashed_bag_of_words(std::string_view text, std::size_t dim);

std::vector<std::string> tokenize_words(std::string_view text);

/// Labels one document. The validation suites are written against this
/// rather than a backend so they can probe any classifier.
using ClassifyFn = std::function<HierLabel(const corpus::ProcessedDocument&)>;

ClassifyFn classifier(const prompting::PromptText& prompt, const schema::ClassSchema& schema,
                      Backend& backend);

}  // namespace taxonomist::gateway
