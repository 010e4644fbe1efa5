#pragma once

#include <cstdint>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include "taxonomist/schema.hpp"
#include "taxonomist/util.hpp"

namespace taxonomist::prompting {

enum class ExampleOrigin { Seed, Preference, Judge };

std::string to_string(ExampleOrigin origin);
ExampleOrigin origin_from_string(std::string_view s);

struct FewShotExample {
  std::string text;
  std::string expected_parent;
  std::optional<std::string> expected_child;
  ExampleOrigin origin = ExampleOrigin::Seed;

  bool operator==(const FewShotExample&) const = default;
};

/// One human-authored change to a class. `class_path` is "Parent" or
/// "Parent/Child" in internal names.
struct DefinitionEdit {
  std::string class_path;
  std::optional<std::string> set_definition;
  std::vector<std::string> add_exclusions;
  bool remove = false;

  bool operator==(const DefinitionEdit&) const = default;
};

struct RefineAudit {
  std::vector<DefinitionEdit> edits;
  std::string alignment_snapshot;  // run id of the alignment matrix that motivated the edits

  bool operator==(const RefineAudit&) const = default;
};

struct PromptSpec {
  int schema_version = 1;
  std::vector<FewShotExample> examples;
  std::vector<std::size_t> example_order;  // empty means identity
  bool cot_enabled = false;
  std::string preamble = kDefaultPreamble;
  int iteration = 0;
  std::optional<int> parent_iteration;
  std::optional<std::string> parent_hash;
  /// Segment ids dropped by the length optimizer.
  std::set<std::string> omitted_segments;
  std::optional<RefineAudit> audit;
  std::string hash;

  bool operator==(const PromptSpec&) const = default;

  static constexpr const char* kDefaultPreamble =
      "You are a careful classifier of short text documents. "
      "Assign each document to exactly one parent class from the list below.";
};

/// Smallest ablatable unit of a rendered prompt: a sentence or list item.
struct Segment {
  std::string id;
  std::string text;
  bool removable = false;
  std::size_t tokens = 0;
};

struct PromptText {
  std::string text;
  std::string hash;
  std::size_t token_estimate = 0;
  std::vector<Segment> segments;  // in render order, omitted ones excluded
};

// Markers shared by the renderer, the document wrapper, and the mock backend.
inline constexpr const char* kClassesHeader = "Classes:";
inline constexpr const char* kExamplesHeader = "Examples:";
inline constexpr const char* kDocumentHeader = "Document:";
inline constexpr const char* kDescriptionPrefix = "Description: \"";
inline constexpr const char* kExpectedOutputPrefix = "Expected Output: ";
inline constexpr const char* kClassifyInstruction = "Classify the document.";

/// Splits prose into sentences at . ! ? followed by whitespace, and at newlines.
std::vector<std::string> split_sentences(std::string_view text);

/// Renders the classification instructions (everything except the document).
/// Throws OrphanExample if an example label is missing from the schema and
/// InvalidArgument if example_order is not a permutation.
PromptText build_prompt(const schema::ClassSchema& schema, const PromptSpec& spec);

/// Appends the document block to rendered instructions.
std::string wrap_document(const PromptText& prompt, std::string_view document_text);

/// Recomputes spec.hash from the rendering.
PromptSpec finalize(const schema::ClassSchema& schema, PromptSpec spec);

struct RefineResult {
  schema::ClassSchema schema;
  PromptSpec spec;
};

/// Applies human edits. The spec moves to iteration t+1 with a link to t;
/// the schema version is bumped only when there are edits.
RefineResult refine_prompt(const schema::ClassSchema& schema, const PromptSpec& spec,
                           const std::vector<DefinitionEdit>& edits,
                           const std::string& alignment_snapshot = {});

/// All k! orderings in lexicographic order when k! <= cap; otherwise cap
/// distinct orderings drawn uniformly with `seed`, identity first.
std::vector<std::vector<std::size_t>> permutations(std::size_t k, std::size_t cap,
                                                   std::uint64_t seed = 0);

/// Follows parent_iteration links through `history` (keyed by hash) and
/// returns true when the chain reaches iteration 0 without a cycle.
bool lineage_terminates(const PromptSpec& spec, const std::vector<PromptSpec>& history);

Json spec_to_json(const PromptSpec& spec);
PromptSpec spec_from_json(const Json& j);
Json edit_to_json(const DefinitionEdit& edit);
DefinitionEdit edit_from_json(const Json& j);

}  // namespace taxonomist::prompting
