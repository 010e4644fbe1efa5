#pragma once

#include <filesystem>
#include <limits>
#include <map>
#include <mutex>
#include <optional>
#include <string>
#include <vector>

#include "taxonomist/corpus.hpp"
#include "taxonomist/gateway.hpp"
#include "taxonomist/golden.hpp"
#include "taxonomist/prompting.hpp"
#include "taxonomist/stats.hpp"

namespace taxonomist::fewshot {

/// Throws DimensionMismatch, ProviderMismatch, or ZeroVector.
double cosine_similarity(const gateway::EmbeddingVector& u, const gateway::EmbeddingVector& v);

struct Candidate {
  std::string doc_id;
  std::string text;
  HierLabel label;
  prompting::ExampleOrigin origin = prompting::ExampleOrigin::Seed;
};

struct RankedExample {
  std::string doc_id;
  std::string class_name;  // parent the candidate was scored against
  double similarity = 0;
  std::string text;
  HierLabel label;
  prompting::ExampleOrigin origin = prompting::ExampleOrigin::Seed;
};

/// Scores each candidate against its own parent's description and sorts by
/// similarity descending, then doc_id ascending. Throws MissingDescription.
std::vector<RankedExample> rank_examples(const std::vector<Candidate>& candidates,
                                         const std::map<std::string, std::string>& descriptions,
                                         gateway::Backend& backend);

/// Parent definitions keyed by internal name.
std::map<std::string, std::string> class_descriptions(const schema::ClassSchema& schema);

prompting::FewShotExample to_example(const RankedExample& r);

struct SelectKEntry {
  std::size_t k = 0;
  double validity = 0;
  double kl = 0;
  bool feasible = true;
  stats::ClassDistribution distribution;
};

struct SelectKResult {
  std::size_t k = 0;
  std::vector<prompting::FewShotExample> chosen;
  std::vector<SelectKEntry> report;  // one entry per k in 0..|ranked|
};

inline constexpr double kDefaultEpsilon = 0.1;

/// For every k, the prompt carries the top-k ranked examples on top of
/// `base`. V is macro-F1 on `validation`; N^(k) is the class distribution on
/// `monitoring`. k* maximizes V subject to KL(N^(k) || baseline) <= epsilon;
/// ties go to the smaller k.
SelectKResult select_k(const std::vector<RankedExample>& ranked, const GoldenSet& validation,
                       const corpus::Corpus& monitoring,
                       const stats::ClassDistribution& baseline, double epsilon,
                       const schema::ClassSchema& schema, const prompting::PromptSpec& base,
                       gateway::Backend& backend, double smoothing = stats::kDefaultSmoothing);

Json select_k_to_json(const SelectKResult& r);

// ---------------------------------------------------------------------------
// Preferences

enum class PreferenceSource { Human, Judge };

std::string to_string(PreferenceSource s);

struct PreferencePair {
  std::string doc_id;
  HierLabel y_w;
  HierLabel y_l;
  std::string reviewer;
  PreferenceSource source = PreferenceSource::Human;
  int round = 1;
  std::string created_at;  // RFC3339

  bool operator==(const PreferencePair&) const = default;
};

Json preference_to_json(const PreferencePair& p);
PreferencePair preference_from_json(const Json& j);

/// "Parent" or "Parent/Child".
HierLabel label_from_path(std::string_view path);
bool schema_has(const schema::ClassSchema& schema, const HierLabel& label);
std::string alias_of(const schema::ClassSchema& schema, const HierLabel& label);
/// Resolves a parent or child alias. Throws UnknownLabel.
HierLabel label_from_alias(const schema::ClassSchema& schema, std::string_view alias);

/// Append-only JSONL file. Appends from one process are serialized; the
/// store's lock file guards against other writers.
class PreferenceStore {
 public:
  explicit PreferenceStore(std::filesystem::path path);

  std::vector<PreferencePair> load() const;
  /// Throws DuplicateJudgment when (doc_id, reviewer, round) already exists.
  void append(const PreferencePair& pair);
  const std::filesystem::path& path() const { return path_; }

 private:
  std::filesystem::path path_;
  mutable std::mutex mutex_;
};

/// Validates and appends. Throws LabelEqualsLoser, UnknownLabel, DuplicateJudgment.
PreferencePair record_preference(PreferenceStore& store, const corpus::ProcessedDocument& doc,
                                 const HierLabel& y_w, const HierLabel& y_l,
                                 const std::string& reviewer, PreferenceSource source, int round,
                                 const schema::ClassSchema& schema,
                                 const std::string& created_at);

struct Constitution {
  std::vector<std::string> principles;
  int version = 1;
};

/// One principle per paragraph (blank-line separated).
Constitution parse_constitution(std::string_view text, int version = 1);

std::string build_judge_prompt(const corpus::ProcessedDocument& doc,
                               const std::vector<HierLabel>& candidates,
                               const Constitution& constitution,
                               const schema::ClassSchema& schema);

/// Asks the judge backend to pick one of exactly two candidates. The loser
/// becomes y_l; source is Judge. Throws WinnerNotCandidate or UnparseableResponse.
PreferencePair judge_preference(const corpus::ProcessedDocument& doc,
                                const std::vector<HierLabel>& candidates,
                                const Constitution& constitution,
                                const schema::ClassSchema& schema, gateway::Backend& backend,
                                int round = 1, const std::string& created_at = {});

// ---------------------------------------------------------------------------
// Reviewer agreement

using LabelMap = std::map<std::string, std::string>;  // doc_id -> label

/// Cohen's kappa over shared documents. When chance agreement is 1 (one
/// label used throughout by both), kappa is 1 if they agree and 0 otherwise.
double cohen_kappa(const LabelMap& a, const LabelMap& b, std::size_t* shared = nullptr);

struct PairAgreement {
  std::string reviewer_a;
  std::string reviewer_b;
  std::size_t shared = 0;
  double kappa = 0;
};

struct AgreementReport {
  std::vector<PairAgreement> inter;
  std::map<std::string, double> intra;  // mean kappa over round pairs
  std::optional<double> mean_inter;
  std::optional<double> mean_intra;
};

/// `judgments` gives one label map per reviewer; `rounds` optionally gives
/// repeated rounds per reviewer. Throws InsufficientOverlap below 2 shared docs.
AgreementReport agreement(const std::map<std::string, LabelMap>& judgments,
                          const std::map<std::string, std::vector<LabelMap>>& rounds = {});

/// Builds label maps (reviewer -> doc -> y_w path) and per-round maps from pairs.
std::map<std::string, LabelMap> judgments_from_pairs(const std::vector<PreferencePair>& pairs);
std::map<std::string, std::vector<LabelMap>> rounds_from_pairs(
    const std::vector<PreferencePair>& pairs);

Json agreement_to_json(const AgreementReport& r);

// ---------------------------------------------------------------------------
// Review queue

struct ReviewItem {
  std::string doc_id;
  std::string text;
  std::string candidate_a;  // aliases only
  std::string candidate_b;
  int iteration = 0;
};

/// Documents on which two runs over the same corpus disagree, minus those
/// a reviewer has already judged. Ordered by doc_id.
std::vector<ReviewItem> review_queue(const corpus::Corpus& corpus,
                                     const std::vector<ClassificationResult>& run_a,
                                     const std::vector<ClassificationResult>& run_b,
                                     const std::vector<PreferencePair>& judged,
                                     const schema::ClassSchema& schema, int iteration = 0);

Json review_item_to_json(const ReviewItem& item);

}  // namespace taxonomist::fewshot
