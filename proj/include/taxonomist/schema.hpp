#pragma once

#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "taxonomist/util.hpp"

namespace taxonomist::schema {

/// One node of the taxonomy. Parents carry children; children are leaves.
struct ClassDef {
  std::string internal_name;
  std::string external_alias;
  std::string definition;
  std::vector<std::string> exclusions;
  std::vector<ClassDef> children;

  bool operator==(const ClassDef&) const = default;
};

struct ClassSchema {
  std::vector<ClassDef> parents;
  int version = 1;
  std::optional<int> created_from;

  bool operator==(const ClassSchema&) const = default;

  const ClassDef* find_parent(std::string_view internal_name) const;
  const ClassDef* find_child(std::string_view parent, std::string_view child) const;
  /// Alias lookups. Child aliases are resolved within a parent.
  const ClassDef* parent_by_alias(std::string_view alias) const;
  const ClassDef* child_by_alias(const ClassDef& parent, std::string_view alias) const;
  std::vector<std::string> parent_names() const;
};

enum class ViolationKind {
  EmptySchema,
  DuplicateName,
  AliasCollision,
  DuplicateAlias,
  EmptyDefinition,
  EmptyName,
};

std::string to_string(ViolationKind kind);

struct SchemaViolation {
  ViolationKind kind;
  std::string path;  // e.g. "Technical Failure/SSO Error"
  std::string message;
};

/// Empty result iff every structural invariant holds.
std::vector<SchemaViolation> validate_schema(const ClassSchema& schema);

struct SchemaDiff {
  std::vector<std::string> added;
  std::vector<std::string> removed;
  std::vector<std::string> changed;

  bool empty() const { return added.empty() && removed.empty() && changed.empty(); }
};

/// Classes are compared by path ("Parent" or "Parent/Child"). A class is
/// "changed" when its definition or exclusions differ.
SchemaDiff diff_schema(const ClassSchema& old_schema, const ClassSchema& new_schema);

/// Fills empty aliases with opaque codes ("K-01", "K-01-02"), skipping codes
/// already in use.
void assign_aliases(ClassSchema& schema);

ClassSchema schema_from_json(const Json& doc);
Json schema_to_json(const ClassSchema& schema);
/// Loads .json or .toml; aliases are auto-assigned where omitted.
ClassSchema load_schema(const std::filesystem::path& path);

struct Topic {
  std::string name;
  std::string description;

  bool operator==(const Topic&) const = default;
};

/// Topic names are unique under case folding; the first spelling seen wins.
class TopicSet {
 public:
  /// Returns the canonical name the topic was stored (or merged) under.
  std::string add(const Topic& topic);
  std::optional<std::string> canonical(std::string_view name) const;

  const std::vector<Topic>& topics() const { return topics_; }
  std::size_t size() const { return topics_.size(); }
  bool empty() const { return topics_.empty(); }

 private:
  std::vector<Topic> topics_;
};

}  // namespace taxonomist::schema
