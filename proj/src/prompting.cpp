#include "taxonomist/prompting.hpp"

#include <algorithm>
#include <map>
#include <numeric>
#include <random>

#include "taxonomist/errors.hpp"

namespace taxonomist::prompting {

namespace {

constexpr const char* kCotText =
    "First reason step by step about which parent class best fits the document. "
    "Then, given that parent, reason about the most appropriate child class. "
    "Write the reasoning before the final answer.";

std::string json_quote(std::string_view s) { return Json(std::string(s)).dump(); }

std::string expected_output(const std::string& parent_alias, const std::string* child_alias) {
  std::string out = "{\"parent\": " + json_quote(parent_alias);
  if (child_alias) out += ", \"child\": " + json_quote(*child_alias);
  return out + "}";
}

class Renderer {
 public:
  explicit Renderer(const std::set<std::string>& omitted) : omitted_(omitted) {}

  // Emits the non-omitted sentences of `prose` as removable segments and
  // returns them joined by single spaces.
  std::string prose(const std::string& id_prefix, std::string_view prose) {
    std::string joined;
    auto sentences = split_sentences(prose);
    for (std::size_t i = 0; i < sentences.size(); ++i) {
      std::string id = id_prefix + "/" + std::to_string(i);
      if (omitted_.count(id)) continue;
      add(id, sentences[i], true);
      if (!joined.empty()) joined += ' ';
      joined += sentences[i];
    }
    return joined;
  }

  bool item(const std::string& id, const std::string& text, bool removable) {
    if (removable && omitted_.count(id)) return false;
    add(id, text, removable);
    return true;
  }

  std::vector<Segment> take() { return std::move(segments_); }

 private:
  void add(const std::string& id, const std::string& text, bool removable) {
    segments_.push_back({id, text, removable, estimate_tokens(split_words(text).size())});
  }

  const std::set<std::string>& omitted_;
  std::vector<Segment> segments_;
};

void render_class(const schema::ClassDef& c, const std::string& path, int depth, Renderer& r,
                  std::vector<std::string>& lines) {
  std::string indent(static_cast<std::size_t>(depth) * 2, ' ');
  std::string header = "[" + c.external_alias + "]";
  r.item("class/" + path + "/code", header, false);
  std::string line = indent + header;
  auto defs = r.prose("class/" + path + "/def", c.definition);
  if (!defs.empty()) line += " " + defs;
  lines.push_back(line);
  for (std::size_t i = 0; i < c.exclusions.size(); ++i) {
    std::string text = "Exclude: " + c.exclusions[i];
    if (r.item("class/" + path + "/exclusion/" + std::to_string(i), text, true)) {
      lines.push_back(indent + "  " + text);
    }
  }
  for (const auto& child : c.children) {
    render_class(child, path + "/" + child.internal_name, depth + 1, r, lines);
  }
}

const schema::ClassDef* resolve_path(const schema::ClassSchema& s, std::string_view path) {
  auto slash = path.find('/');
  if (slash == std::string_view::npos) return s.find_parent(path);
  return s.find_child(path.substr(0, slash), path.substr(slash + 1));
}

}  // namespace

std::string to_string(ExampleOrigin origin) {
  switch (origin) {
    case ExampleOrigin::Seed: return "seed";
    case ExampleOrigin::Preference: return "preference";
    case ExampleOrigin::Judge: return "judge";
  }
  return "seed";
}

ExampleOrigin origin_from_string(std::string_view s) {
  if (s == "preference" || s == "preference:y_w") return ExampleOrigin::Preference;
  if (s == "judge") return ExampleOrigin::Judge;
  return ExampleOrigin::Seed;
}

std::vector<std::string> split_sentences(std::string_view text) {
  std::vector<std::string> out;
  std::string current;
  auto flush = [&] {
    auto t = trim(current);
    if (!t.empty()) out.push_back(std::move(t));
    current.clear();
  };
  for (std::size_t i = 0; i < text.size(); ++i) {
    char c = text[i];
    if (c == '\n') {
      flush();
      continue;
    }
    current.push_back(c);
    bool terminator = c == '.' || c == '!' || c == '?';
    bool at_break = i + 1 == text.size() || text[i + 1] == ' ' || text[i + 1] == '\t' ||
                    text[i + 1] == '\n';
    if (terminator && at_break) flush();
  }
  flush();
  return out;
}

PromptText build_prompt(const schema::ClassSchema& schema, const PromptSpec& spec) {
  std::vector<std::size_t> order = spec.example_order;
  if (order.empty()) {
    order.resize(spec.examples.size());
    std::iota(order.begin(), order.end(), std::size_t{0});
  }
  {
    auto sorted = order;
    std::sort(sorted.begin(), sorted.end());
    bool is_perm = sorted.size() == spec.examples.size();
    for (std::size_t i = 0; is_perm && i < sorted.size(); ++i) is_perm = sorted[i] == i;
    if (!is_perm) throw InvalidArgument("example_order is not a permutation of the examples");
  }

  Renderer r(spec.omitted_segments);
  std::vector<std::string> lines;

  auto preamble = r.prose("preamble", spec.preamble);
  if (!preamble.empty()) {
    lines.push_back(preamble);
    lines.emplace_back();
  }

  lines.emplace_back(kClassesHeader);
  bool any_children = false;
  for (const auto& p : schema.parents) {
    render_class(p, p.internal_name, 0, r, lines);
    any_children = any_children || !p.children.empty();
  }

  if (!spec.examples.empty()) {
    lines.emplace_back();
    lines.emplace_back(kExamplesHeader);
    for (std::size_t pos = 0; pos < order.size(); ++pos) {
      const auto& ex = spec.examples[order[pos]];
      const auto* parent = schema.find_parent(ex.expected_parent);
      if (!parent) throw OrphanExample(ex.expected_parent);
      const schema::ClassDef* child = nullptr;
      if (ex.expected_child) {
        child = schema.find_child(ex.expected_parent, *ex.expected_child);
        if (!child) throw OrphanExample(ex.expected_parent + "/" + *ex.expected_child);
      }
      if (pos) lines.emplace_back();
      std::string description = std::string(kDescriptionPrefix) + ex.text + "\"";
      std::string output = kExpectedOutputPrefix +
                           expected_output(parent->external_alias,
                                           child ? &child->external_alias : nullptr);
      r.item("example/" + std::to_string(order[pos]), description + "\n" + output, false);
      lines.push_back(description);
      lines.push_back(output);
    }
  }

  if (spec.cot_enabled) {
    auto cot = r.prose("cot", kCotText);
    if (!cot.empty()) {
      lines.emplace_back();
      lines.push_back(cot);
    }
  }

  std::string format =
      any_children || spec.cot_enabled
          ? "Answer with a single-line JSON object {\"parent\": \"<code>\", \"child\": "
            "\"<code>\"} on the last line, using only the bracketed codes above; omit \"child\" "
            "when the parent has no sub-classes."
          : "Answer with a single-line JSON object {\"parent\": \"<code>\"} on the last line, "
            "using only the bracketed codes above.";
  r.item("format", format, false);
  lines.emplace_back();
  lines.push_back(format);

  PromptText out;
  for (std::size_t i = 0; i < lines.size(); ++i) {
    if (i) out.text += '\n';
    out.text += lines[i];
  }
  out.hash = sha256_hex(out.text);
  out.token_estimate = estimate_tokens(split_words(out.text).size());
  out.segments = r.take();
  return out;
}

std::string wrap_document(const PromptText& prompt, std::string_view document_text) {
  std::string out = prompt.text;
  out += "\n\n";
  out += kDocumentHeader;
  out += '\n';
  out += kDescriptionPrefix;
  out += document_text;
  out += "\"\n";
  out += kClassifyInstruction;
  return out;
}

PromptSpec finalize(const schema::ClassSchema& schema, PromptSpec spec) {
  spec.hash = build_prompt(schema, spec).hash;
  return spec;
}

RefineResult refine_prompt(const schema::ClassSchema& schema, const PromptSpec& spec,
                           const std::vector<DefinitionEdit>& edits,
                           const std::string& alignment_snapshot) {
  RefineResult out{schema, spec};
  for (const auto& edit : edits) {
    if (!resolve_path(out.schema, edit.class_path)) throw UnknownClass(edit.class_path);
    auto slash = edit.class_path.find('/');
    std::vector<schema::ClassDef>* siblings = &out.schema.parents;
    std::string name = edit.class_path;
    if (slash != std::string::npos) {
      auto parent_name = edit.class_path.substr(0, slash);
      name = edit.class_path.substr(slash + 1);
      auto it = std::find_if(out.schema.parents.begin(), out.schema.parents.end(),
                             [&](const auto& p) { return p.internal_name == parent_name; });
      siblings = &it->children;
    }
    auto it = std::find_if(siblings->begin(), siblings->end(),
                           [&](const auto& c) { return c.internal_name == name; });
    if (edit.remove) {
      siblings->erase(it);
      continue;
    }
    if (edit.set_definition) it->definition = *edit.set_definition;
    for (const auto& ex : edit.add_exclusions) it->exclusions.push_back(ex);
  }
  if (!edits.empty()) {
    out.schema.created_from = schema.version;
    out.schema.version = schema.version + 1;
  }
  out.spec.schema_version = out.schema.version;
  out.spec.parent_iteration = spec.iteration;
  out.spec.parent_hash = spec.hash.empty() ? std::nullopt : std::optional(spec.hash);
  out.spec.iteration = spec.iteration + 1;
  out.spec.audit = RefineAudit{edits, alignment_snapshot};
  // Removal may orphan examples; callers learn about it from build_prompt.
  try {
    out.spec.hash = build_prompt(out.schema, out.spec).hash;
  } catch (const OrphanExample&) {
    out.spec.hash.clear();
  }
  return out;
}

std::vector<std::vector<std::size_t>> permutations(std::size_t k, std::size_t cap,
                                                   std::uint64_t seed) {
  if (cap == 0) throw InvalidArgument("permutation cap must be at least 1");
  std::vector<std::size_t> identity(k);
  std::iota(identity.begin(), identity.end(), std::size_t{0});

  std::size_t factorial = 1;
  bool exceeds = false;
  for (std::size_t i = 2; i <= k; ++i) {
    if (factorial > cap / i) {
      exceeds = true;
      break;
    }
    factorial *= i;
  }
  std::vector<std::vector<std::size_t>> out;
  if (!exceeds && factorial <= cap) {
    auto p = identity;
    do {
      out.push_back(p);
    } while (std::next_permutation(p.begin(), p.end()));
    return out;
  }
  std::set<std::vector<std::size_t>> seen{identity};
  out.push_back(identity);
  std::mt19937_64 rng(seed);
  while (out.size() < cap) {
    auto p = identity;
    std::shuffle(p.begin(), p.end(), rng);
    if (seen.insert(p).second) out.push_back(std::move(p));
  }
  return out;
}

bool lineage_terminates(const PromptSpec& spec, const std::vector<PromptSpec>& history) {
  // Iterations strictly decrease along the chain, so it cannot cycle. An
  // unchanged rendering keeps its hash across iterations; match on both.
  const PromptSpec* cur = &spec;
  while (cur->iteration != 0) {
    if (!cur->parent_iteration || *cur->parent_iteration >= cur->iteration) return false;
    const PromptSpec* parent = nullptr;
    for (const auto& h : history) {
      if (h.iteration != *cur->parent_iteration) continue;
      if (cur->parent_hash && h.hash != *cur->parent_hash) continue;
      parent = &h;
      break;
    }
    if (!parent) return false;
    cur = parent;
  }
  return true;
}

Json edit_to_json(const DefinitionEdit& edit) {
  Json j{{"class", edit.class_path}, {"add_exclusions", edit.add_exclusions},
         {"remove", edit.remove}};
  j["set_definition"] = edit.set_definition ? Json(*edit.set_definition) : Json(nullptr);
  return j;
}

DefinitionEdit edit_from_json(const Json& j) {
  DefinitionEdit e;
  e.class_path = j.at("class").get<std::string>();
  if (j.contains("set_definition") && !j.at("set_definition").is_null()) {
    e.set_definition = j.at("set_definition").get<std::string>();
  }
  if (j.contains("add_exclusions")) {
    e.add_exclusions = j.at("add_exclusions").get<std::vector<std::string>>();
  }
  e.remove = j.value("remove", false);
  return e;
}

Json spec_to_json(const PromptSpec& spec) {
  Json examples = Json::array();
  for (const auto& ex : spec.examples) {
    Json e{{"text", ex.text}, {"expected_parent", ex.expected_parent},
           {"origin", to_string(ex.origin)}};
    e["expected_child"] = ex.expected_child ? Json(*ex.expected_child) : Json(nullptr);
    examples.push_back(std::move(e));
  }
  Json j{{"schema_version", spec.schema_version},
         {"examples", std::move(examples)},
         {"example_order", spec.example_order},
         {"cot_enabled", spec.cot_enabled},
         {"preamble", spec.preamble},
         {"iteration", spec.iteration},
         {"omitted_segments", spec.omitted_segments},
         {"hash", spec.hash}};
  j["parent_iteration"] = spec.parent_iteration ? Json(*spec.parent_iteration) : Json(nullptr);
  j["parent_hash"] = spec.parent_hash ? Json(*spec.parent_hash) : Json(nullptr);
  if (spec.audit) {
    Json edits = Json::array();
    for (const auto& e : spec.audit->edits) edits.push_back(edit_to_json(e));
    j["audit"] = Json{{"edits", std::move(edits)},
                      {"alignment_snapshot", spec.audit->alignment_snapshot}};
  } else {
    j["audit"] = nullptr;
  }
  return j;
}

PromptSpec spec_from_json(const Json& j) {
  try {
    PromptSpec spec;
    spec.schema_version = j.value("schema_version", 1);
    if (j.contains("examples")) {
      for (const auto& e : j.at("examples")) {
        FewShotExample ex;
        ex.text = e.at("text").get<std::string>();
        ex.expected_parent = e.at("expected_parent").get<std::string>();
        if (e.contains("expected_child") && !e.at("expected_child").is_null()) {
          ex.expected_child = e.at("expected_child").get<std::string>();
        }
        ex.origin = origin_from_string(e.value("origin", std::string("seed")));
        spec.examples.push_back(std::move(ex));
      }
    }
    if (j.contains("example_order")) {
      spec.example_order = j.at("example_order").get<std::vector<std::size_t>>();
    }
    spec.cot_enabled = j.value("cot_enabled", false);
    spec.preamble = j.value("preamble", std::string(PromptSpec::kDefaultPreamble));
    spec.iteration = j.value("iteration", 0);
    if (j.contains("parent_iteration") && !j.at("parent_iteration").is_null()) {
      spec.parent_iteration = j.at("parent_iteration").get<int>();
    }
    if (j.contains("parent_hash") && !j.at("parent_hash").is_null()) {
      spec.parent_hash = j.at("parent_hash").get<std::string>();
    }
    if (j.contains("omitted_segments")) {
      spec.omitted_segments = j.at("omitted_segments").get<std::set<std::string>>();
    }
    if (j.contains("audit") && !j.at("audit").is_null()) {
      RefineAudit audit;
      for (const auto& e : j.at("audit").at("edits")) audit.edits.push_back(edit_from_json(e));
      audit.alignment_snapshot = j.at("audit").value("alignment_snapshot", std::string{});
      spec.audit = std::move(audit);
    }
    spec.hash = j.value("hash", std::string{});
    return spec;
  } catch (const Json::exception& e) {
    throw ParseError(1, std::string("prompt spec: ") + e.what());
  }
}

}  // namespace taxonomist::prompting
