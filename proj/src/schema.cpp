#include "taxonomist/schema.hpp"

#include <algorithm>
#include <cstdio>
#include <map>
#include <set>

#include "taxonomist/errors.hpp"

namespace taxonomist::schema {

const ClassDef* ClassSchema::find_parent(std::string_view internal_name) const {
  for (const auto& p : parents) {
    if (p.internal_name == internal_name) return &p;
  }
  return nullptr;
}

const ClassDef* ClassSchema::find_child(std::string_view parent, std::string_view child) const {
  const auto* p = find_parent(parent);
  if (!p) return nullptr;
  for (const auto& c : p->children) {
    if (c.internal_name == child) return &c;
  }
  return nullptr;
}

const ClassDef* ClassSchema::parent_by_alias(std::string_view alias) const {
  for (const auto& p : parents) {
    if (p.external_alias == alias) return &p;
  }
  return nullptr;
}

const ClassDef* ClassSchema::child_by_alias(const ClassDef& parent, std::string_view alias) const {
  for (const auto& c : parent.children) {
    if (c.external_alias == alias) return &c;
  }
  return nullptr;
}

std::vector<std::string> ClassSchema::parent_names() const {
  std::vector<std::string> names;
  names.reserve(parents.size());
  for (const auto& p : parents) names.push_back(p.internal_name);
  return names;
}

std::string to_string(ViolationKind kind) {
  switch (kind) {
    case ViolationKind::EmptySchema: return "EmptySchema";
    case ViolationKind::DuplicateName: return "DuplicateName";
    case ViolationKind::AliasCollision: return "AliasCollision";
    case ViolationKind::DuplicateAlias: return "DuplicateAlias";
    case ViolationKind::EmptyDefinition: return "EmptyDefinition";
    case ViolationKind::EmptyName: return "EmptyName";
  }
  return "Unknown";
}

namespace {

void check_siblings(const std::vector<ClassDef>& siblings, const std::string& prefix,
                    std::vector<SchemaViolation>& out) {
  std::set<std::string> names;
  std::set<std::string> aliases;
  for (const auto& c : siblings) {
    std::string path = prefix.empty() ? c.internal_name : prefix + "/" + c.internal_name;
    if (trim(c.internal_name).empty()) {
      out.push_back({ViolationKind::EmptyName, path, "class has an empty internal name"});
    }
    if (!names.insert(c.internal_name).second) {
      out.push_back({ViolationKind::DuplicateName, path,
                     "internal name '" + c.internal_name + "' repeats among siblings"});
    }
    if (!c.external_alias.empty() &&
        case_fold(trim(c.internal_name)) == case_fold(trim(c.external_alias))) {
      out.push_back({ViolationKind::AliasCollision, path,
                     "external alias equals the internal name '" + c.internal_name + "'"});
    }
    if (!c.external_alias.empty() && !aliases.insert(c.external_alias).second) {
      out.push_back({ViolationKind::DuplicateAlias, path,
                     "external alias '" + c.external_alias + "' repeats among siblings"});
    }
    if (trim(c.definition).empty()) {
      out.push_back({ViolationKind::EmptyDefinition, path, "definition is empty"});
    }
    check_siblings(c.children, path, out);
  }
}

void collect_paths(const std::vector<ClassDef>& nodes, const std::string& prefix,
                   std::map<std::string, const ClassDef*>& out) {
  for (const auto& c : nodes) {
    std::string path = prefix.empty() ? c.internal_name : prefix + "/" + c.internal_name;
    out.emplace(path, &c);
    collect_paths(c.children, path, out);
  }
}

ClassDef class_from_json(const Json& j) {
  ClassDef c;
  c.internal_name = j.at("internal_name").get<std::string>();
  c.external_alias = j.value("external_alias", std::string{});
  c.definition = j.value("definition", std::string{});
  if (j.contains("exclusions")) c.exclusions = j.at("exclusions").get<std::vector<std::string>>();
  if (j.contains("children")) {
    for (const auto& child : j.at("children")) c.children.push_back(class_from_json(child));
  }
  return c;
}

Json class_to_json(const ClassDef& c) {
  Json j{{"internal_name", c.internal_name},
         {"external_alias", c.external_alias},
         {"definition", c.definition},
         {"exclusions", c.exclusions}};
  Json children = Json::array();
  for (const auto& child : c.children) children.push_back(class_to_json(child));
  j["children"] = std::move(children);
  return j;
}

}  // namespace

std::vector<SchemaViolation> validate_schema(const ClassSchema& schema) {
  std::vector<SchemaViolation> out;
  if (schema.parents.empty()) {
    out.push_back({ViolationKind::EmptySchema, "", "schema has no parent classes"});
  }
  check_siblings(schema.parents, "", out);
  return out;
}

SchemaDiff diff_schema(const ClassSchema& old_schema, const ClassSchema& new_schema) {
  std::map<std::string, const ClassDef*> before, after;
  collect_paths(old_schema.parents, "", before);
  collect_paths(new_schema.parents, "", after);
  SchemaDiff diff;
  for (const auto& [path, def] : after) {
    auto it = before.find(path);
    if (it == before.end()) {
      diff.added.push_back(path);
    } else if (it->second->definition != def->definition ||
               it->second->exclusions != def->exclusions) {
      diff.changed.push_back(path);
    }
  }
  for (const auto& [path, def] : before) {
    if (!after.count(path)) diff.removed.push_back(path);
  }
  return diff;
}

void assign_aliases(ClassSchema& schema) {
  std::set<std::string> used;
  for (const auto& p : schema.parents) {
    used.insert(p.external_alias);
    for (const auto& c : p.children) used.insert(c.external_alias);
  }
  char buf[32];
  int next_parent = 1;
  for (auto& p : schema.parents) {
    if (p.external_alias.empty()) {
      do {
        std::snprintf(buf, sizeof buf, "K-%02d", next_parent++);
      } while (used.count(buf));
      p.external_alias = buf;
      used.insert(p.external_alias);
    }
    int next_child = 1;
    for (auto& c : p.children) {
      if (!c.external_alias.empty()) continue;
      do {
        std::snprintf(buf, sizeof buf, "%s-%02d", p.external_alias.c_str(), next_child++);
      } while (used.count(buf));
      c.external_alias = buf;
      used.insert(c.external_alias);
    }
  }
}

ClassSchema schema_from_json(const Json& doc) {
  try {
    ClassSchema s;
    s.version = doc.value("version", 1);
    if (doc.contains("created_from") && !doc.at("created_from").is_null()) {
      s.created_from = doc.at("created_from").get<int>();
    }
    for (const auto& p : doc.at("parents")) s.parents.push_back(class_from_json(p));
    assign_aliases(s);
    return s;
  } catch (const Json::exception& e) {
    throw ParseError(1, std::string("schema: ") + e.what());
  }
}

Json schema_to_json(const ClassSchema& schema) {
  Json parents = Json::array();
  for (const auto& p : schema.parents) parents.push_back(class_to_json(p));
  Json j{{"version", schema.version}, {"parents", std::move(parents)}};
  j["created_from"] = schema.created_from ? Json(*schema.created_from) : Json(nullptr);
  return j;
}

ClassSchema load_schema(const std::filesystem::path& path) {
  return schema_from_json(load_structured_file(path));
}

std::string TopicSet::add(const Topic& topic) {
  if (auto existing = canonical(topic.name)) return *existing;
  topics_.push_back(topic);
  return topic.name;
}

std::optional<std::string> TopicSet::canonical(std::string_view name) const {
  auto folded = case_fold(trim(name));
  for (const auto& t : topics_) {
    if (case_fold(trim(t.name)) == folded) return t.name;
  }
  return std::nullopt;
}

}  // namespace taxonomist::schema
