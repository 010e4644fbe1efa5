#pragma once

#include <cstdint>
#include <functional>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include "taxonomist/corpus.hpp"
#include "taxonomist/gateway.hpp"
#include "taxonomist/prompting.hpp"

namespace taxonomist::seqval {

struct ShuffleReport {
  std::size_t inconsistency_count = 0;
  std::map<std::string, std::set<std::string>> unstable_docs;
  int n_iter = 0;
  int iterations_completed = 0;
  bool complete = true;
  std::string error;
};

/// Classifies the test set n_iter times, each in a freshly shuffled order,
/// and counts documents that received more than one label. A backend error
/// stops the run and returns what was observed so far, flagged incomplete.
ShuffleReport test_statelessness(const gateway::ClassifyFn& classify,
                                 const corpus::Corpus& test_set, int n_iter, std::uint64_t seed);

// Truncation helpers over whitespace words. Each removes floor(p * n) words.
std::string truncate_prefix(std::string_view text, double p);
std::string truncate_suffix(std::string_view text, double p);
/// Keeps ceil(kept / 2) leading and the remaining trailing words.
std::string truncate_middle(std::string_view text, double p);

struct TruncationOutcome {
  std::string baseline, prefix, suffix, middle;
};

struct TruncationReport {
  std::size_t i_prefix = 0;
  std::size_t i_suffix = 0;
  std::size_t i_middle = 0;
  double p = 0;
  std::size_t tested = 0;
  std::vector<std::string> skipped;
  std::map<std::string, TruncationOutcome> per_doc;
};

inline constexpr std::size_t kDefaultMinTokens = 60;

TruncationReport test_intradoc(const gateway::ClassifyFn& classify,
                               const corpus::Corpus& long_docs, double p,
                               std::size_t min_tokens = kDefaultMinTokens);

/// Classifies one document under a given rendered prompt.
using PromptClassifyFn =
    std::function<HierLabel(const corpus::ProcessedDocument&, const prompting::PromptText&)>;

PromptClassifyFn prompt_classifier(const schema::ClassSchema& schema, gateway::Backend& backend);

struct PermutationReport {
  std::size_t i_prompt = 0;
  std::size_t permutations_tested = 0;
  std::map<std::string, std::set<std::string>> unstable_docs;
};

inline constexpr std::size_t kDefaultPermutationCap = 120;

/// Re-renders `spec` under every example order from prompting::permutations
/// and counts documents whose label depends on the order.
PermutationReport test_inprompt(const prompting::PromptSpec& spec,
                                const schema::ClassSchema& schema,
                                const corpus::Corpus& test_set, const PromptClassifyFn& classify,
                                std::size_t cap = kDefaultPermutationCap, std::uint64_t seed = 0);

// ---------------------------------------------------------------------------
// Adversarial input filtering

const std::vector<std::string>& default_adversarial_phrases();

struct PhraseMatch {
  std::string pattern;
  std::size_t begin = 0;  // offsets into the normalized text
  std::size_t end = 0;
};

struct FilterOutcome {
  bool flagged = false;
  std::vector<PhraseMatch> matches;
};

/// Normalized text is case-folded with whitespace runs collapsed. Plain
/// phrases match on word boundaries; a "re:" prefix marks an ECMAScript
/// regex, matched case-insensitively.
FilterOutcome filter_adversarial(const corpus::ProcessedDocument& doc,
                                 const std::vector<std::string>& phrases);

struct QuarantineResult {
  corpus::Corpus clean;
  std::vector<std::pair<corpus::ProcessedDocument, FilterOutcome>> flagged;
};

QuarantineResult quarantine(const corpus::Corpus& corpus, const std::vector<std::string>& phrases);
/// JSONL side file: one {doc, matches} object per flagged document.
std::string quarantine_to_jsonl(const QuarantineResult& q);

// ---------------------------------------------------------------------------
// Nomenclature obfuscation audit

struct Artifact {
  std::string name;
  std::string text;
};

struct Leak {
  std::string artifact;
  std::string internal_name;
  std::size_t offset = 0;
  std::size_t line = 0;  // 1-based
};

/// One Leak per case-folded, word-bounded occurrence of any internal class
/// name in any artifact.
std::vector<Leak> obfuscation_audit(const schema::ClassSchema& schema,
                                    const std::vector<Artifact>& artifacts);

Json shuffle_report_to_json(const ShuffleReport& r);
Json truncation_report_to_json(const TruncationReport& r);
Json permutation_report_to_json(const PermutationReport& r);
Json filter_outcome_to_json(const FilterOutcome& f);
Json leaks_to_json(const std::vector<Leak>& leaks);

}  // namespace taxonomist::seqval
