#include "taxonomist/gateway.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstdlib>
#include <exception>
#include <regex>
#include <thread>

#include <httplib.h>

#include "taxonomist/errors.hpp"

namespace taxonomist::gateway {

const char* const kDefaultTopicPrompt =
    "TASK: TOPIC DISCOVERY\n"
    "Read the document below and name the single most salient theme it discusses, in two to "
    "four words. Do not use any predefined category list; describe what the text is about. "
    "Answer with a single-line JSON object {\"topic\": \"<short name>\", \"description\": "
    "\"<one sentence>\"}.";

namespace {

constexpr std::string_view kTopicMarker = kTopicTaskMarker;
constexpr std::string_view kJudgeMarker = kJudgeTaskMarker;

std::uint64_t fnv1a(std::string_view s) {
  std::uint64_t h = 1469598103934665603ULL;
  for (unsigned char c : s) {
    h ^= c;
    h *= 1099511628211ULL;
  }
  return h;
}

struct SplitPrompt {
  std::string instructions;
  std::string document;
};

// The document is the quoted description after the last "Document:" block.
SplitPrompt split_prompt(const std::string& prompt) {
  std::string marker = std::string(prompting::kDocumentHeader) + "\n" +
                       prompting::kDescriptionPrefix;
  auto pos = prompt.rfind(marker);
  if (pos == std::string::npos) return {prompt, {}};
  auto start = pos + marker.size();
  auto end = prompt.rfind("\"\n");
  if (end == std::string::npos || end < start) end = prompt.size();
  return {prompt.substr(0, pos), prompt.substr(start, end - start)};
}

struct PromptExample {
  std::string text;
  std::string parent;
  std::optional<std::string> child;
};

std::vector<PromptExample> parse_examples(const std::string& instructions) {
  std::vector<PromptExample> out;
  const std::string desc = prompting::kDescriptionPrefix;
  const std::string expected = std::string("\"\n") + prompting::kExpectedOutputPrefix;
  std::size_t pos = 0;
  while ((pos = instructions.find(desc, pos)) != std::string::npos) {
    auto text_start = pos + desc.size();
    auto text_end = instructions.find(expected, text_start);
    if (text_end == std::string::npos) break;
    auto json_start = text_end + expected.size();
    auto line_end = instructions.find('\n', json_start);
    auto line = instructions.substr(json_start, line_end == std::string::npos
                                                    ? std::string::npos
                                                    : line_end - json_start);
    try {
      auto j = Json::parse(line);
      PromptExample ex{instructions.substr(text_start, text_end - text_start),
                       j.at("parent").get<std::string>(), std::nullopt};
      if (j.contains("child") && j.at("child").is_string()) {
        ex.child = j.at("child").get<std::string>();
      }
      out.push_back(std::move(ex));
    } catch (const Json::exception&) {
      // Not an example block; keep scanning.
    }
    pos = json_start;
  }
  return out;
}

std::vector<std::string> parent_codes(const std::string& instructions) {
  std::vector<std::string> codes;
  auto start = instructions.find(std::string(prompting::kClassesHeader) + "\n");
  if (start == std::string::npos) return codes;
  std::istringstream in(instructions.substr(start));
  std::string line;
  std::getline(in, line);
  while (std::getline(in, line)) {
    if (line.empty()) break;
    if (line.front() != '[') continue;
    auto close = line.find(']');
    if (close != std::string::npos) codes.push_back(line.substr(1, close - 1));
  }
  return codes;
}

std::string answer(const std::string& reason, const std::string& parent,
                   const std::optional<std::string>& child) {
  Json j{{"parent", parent}};
  if (child) j["child"] = *child;
  return "Reasoning: " + reason + ".\n" + j.dump();
}

std::string trim_url_path(std::string_view url, std::string& path) {
  auto scheme_end = url.find("://");
  auto host_start = scheme_end == std::string_view::npos ? 0 : scheme_end + 3;
  auto slash = url.find('/', host_start);
  if (slash == std::string_view::npos) {
    path = "/";
    return std::string(url);
  }
  path = std::string(url.substr(slash));
  return std::string(url.substr(0, slash));
}

}  // namespace

// ---------------------------------------------------------------------------
// Mock profile

void MockProfile::validate() const {
  for (const auto& r : keyword_rules) {
    if (trim(r.pattern).empty()) throw InvalidConfig("mock keyword rule with an empty pattern");
  }
  for (const auto& r : topic_rules) {
    if (trim(r.pattern).empty()) throw InvalidConfig("mock topic rule with an empty pattern");
  }
  if (!(prefix_fraction > 0.0 && prefix_fraction <= 1.0)) {
    throw InvalidConfig("mock prefix_fraction must lie in (0, 1]");
  }
  if (embedding_dim == 0) throw InvalidConfig("mock embedding_dim must be positive");
}

void MockProfile::bind(const schema::ClassSchema& schema) {
  aliases.clear();
  for (const auto& p : schema.parents) {
    aliases[p.internal_name] = p.external_alias;
    for (const auto& c : p.children) {
      aliases[p.internal_name + "/" + c.internal_name] = c.external_alias;
    }
  }
}

MockProfile mock_profile_from_json(const Json& j) {
  try {
    MockProfile p;
    const Json& m = j.contains("mock") ? j.at("mock") : j;
    auto opt_string = [](const Json& o, const char* key) -> std::optional<std::string> {
      if (o.contains(key) && o.at(key).is_string()) return o.at(key).get<std::string>();
      return std::nullopt;
    };
    if (m.contains("keyword_rules")) {
      for (const auto& r : m.at("keyword_rules")) {
        p.keyword_rules.push_back({r.at("pattern").get<std::string>(),
                                   r.at("parent").get<std::string>(), opt_string(r, "child"),
                                   opt_string(r, "requires")});
      }
    }
    if (m.contains("topic_rules")) {
      for (const auto& r : m.at("topic_rules")) {
        auto topic = r.at("topic").get<std::string>();
        p.topic_rules.push_back(
            {r.at("pattern").get<std::string>(), topic, r.value("description", topic)});
      }
    }
    if (m.contains("flip_rules")) {
      for (const auto& r : m.at("flip_rules")) {
        p.flip_rules.push_back({r.at("doc_id").get<std::string>(),
                                r.at("parent").get<std::string>(), opt_string(r, "child")});
      }
    }
    auto fallback = m.value("fallback", std::string("fixed_label"));
    if (fallback == "fixed_label") {
      p.fallback = Fallback::FixedLabel;
    } else if (fallback == "last_example_label") {
      p.fallback = Fallback::LastExampleLabel;
    } else if (fallback == "first_token_label") {
      p.fallback = Fallback::FirstTokenLabel;
    } else {
      throw InvalidConfig("unknown mock fallback '" + fallback + "'");
    }
    p.fixed_label = m.value("fixed_label", std::string{});
    p.fixed_child = opt_string(m, "fixed_child");
    if (m.contains("read_window")) {
      const auto& w = m.at("read_window");
      if (w.is_string() && w.get<std::string>() == "full") {
        p.prefix_fraction = 1.0;
      } else if (w.is_object()) {
        p.prefix_fraction = w.value("prefix_fraction", 1.0);
      } else if (w.is_number()) {
        p.prefix_fraction = w.get<double>();
      }
    }
    p.example_match = m.value("example_match", false);
    p.topic_fallback = m.value("topic_fallback", p.topic_fallback);
    auto judge = m.value("judge", std::string("rules"));
    p.judge_mode = judge == "first_candidate" ? JudgeMode::FirstCandidate : JudgeMode::Rules;
    p.embedding_dim = m.value("embedding_dim", std::size_t{256});
    p.validate();
    return p;
  } catch (const Json::exception& e) {
    throw InvalidConfig(std::string("mock profile: ") + e.what());
  }
}

Json mock_profile_to_json(const MockProfile& p) {
  auto opt = [](const std::optional<std::string>& s) { return s ? Json(*s) : Json(nullptr); };
  Json rules = Json::array();
  for (const auto& r : p.keyword_rules) {
    rules.push_back({{"pattern", r.pattern}, {"parent", r.parent}, {"child", opt(r.child)},
                     {"requires", opt(r.requires_text)}});
  }
  Json topics = Json::array();
  for (const auto& r : p.topic_rules) {
    topics.push_back({{"pattern", r.pattern}, {"topic", r.topic}, {"description", r.description}});
  }
  Json flips = Json::array();
  for (const auto& r : p.flip_rules) {
    flips.push_back({{"doc_id", r.doc_id}, {"parent", r.parent}, {"child", opt(r.child)}});
  }
  static constexpr const char* kFallbacks[] = {"fixed_label", "last_example_label",
                                               "first_token_label"};
  return Json{{"keyword_rules", std::move(rules)},
              {"topic_rules", std::move(topics)},
              {"flip_rules", std::move(flips)},
              {"fallback", kFallbacks[static_cast<int>(p.fallback)]},
              {"fixed_label", p.fixed_label},
              {"fixed_child", opt(p.fixed_child)},
              {"read_window", Json{{"prefix_fraction", p.prefix_fraction}}},
              {"example_match", p.example_match},
              {"topic_fallback", p.topic_fallback},
              {"judge", p.judge_mode == JudgeMode::Rules ? "rules" : "first_candidate"},
              {"embedding_dim", p.embedding_dim}};
}

BackendConfig backend_config_from_json(const Json& j, const std::filesystem::path& base_dir) {
  const Json& b = j.contains("backend") ? j.at("backend") : j;
  BackendConfig c;
  try {
    auto kind = b.value("kind", std::string("mock"));
    if (kind == "mock") {
      c.kind = BackendKind::Mock;
    } else if (kind == "http") {
      c.kind = BackendKind::Http;
    } else {
      throw InvalidConfig("unknown backend kind '" + kind + "'");
    }
    c.endpoint = b.value("endpoint", std::string{});
    c.embed_endpoint = b.value("embed_endpoint", std::string{});
    c.model_id = b.value("model_id", c.kind == BackendKind::Mock ? std::string("mock")
                                                                 : std::string{});
    c.temperature = b.value("temperature", 0.0);
    c.timeout = std::chrono::milliseconds(b.value("timeout_ms", std::int64_t{30000}));
    c.retry_limit = b.value("retry_limit", 2);
    if (b.contains("mock_profile")) {
      const auto& mp = b.at("mock_profile");
      if (mp.is_string()) {
        std::filesystem::path path = mp.get<std::string>();
        if (path.is_relative() && !base_dir.empty()) path = base_dir / path;
        c.mock_profile = mock_profile_from_json(load_structured_file(path));
      } else {
        c.mock_profile = mock_profile_from_json(mp);
      }
    }
  } catch (const Json::exception& e) {
    throw InvalidConfig(std::string("backend config: ") + e.what());
  }
  if (c.temperature < 0) throw InvalidConfig("temperature must be non-negative");
  if (c.retry_limit < 0) throw InvalidConfig("retry_limit must be non-negative");
  if (c.kind == BackendKind::Http && c.endpoint.empty()) {
    throw InvalidConfig("http backend requires an endpoint");
  }
  return c;
}

// ---------------------------------------------------------------------------
// Mock backend

MockBackend::MockBackend(MockProfile profile) : profile_(std::move(profile)) {
  profile_.validate();
}

std::string MockBackend::visible_text(std::string_view document) const {
  auto words = split_words(document);
  if (words.empty()) return {};
  auto keep = static_cast<std::size_t>(
      std::ceil(profile_.prefix_fraction * static_cast<double>(words.size()) - 1e-9));
  keep = std::clamp<std::size_t>(keep, 1, words.size());
  std::string out;
  for (std::size_t i = 0; i < keep; ++i) {
    if (i) out += ' ';
    out += words[i];
  }
  return out;
}

std::string MockBackend::complete(const CompletionRequest& request) {
  if (request.prompt.find(kTopicMarker) != std::string::npos) {
    return topic_response(request.prompt);
  }
  if (request.prompt.find(kJudgeMarker) != std::string::npos) {
    return judge_response(request.prompt);
  }
  if (request.doc_id) {
    for (const auto& flip : profile_.flip_rules) {
      if (flip.doc_id != *request.doc_id) continue;
      int calls;
      {
        std::lock_guard lock(flip_mutex_);
        calls = ++flip_calls_[flip.doc_id];
      }
      if (calls % 2 == 1) {
        auto alias = [&](const std::string& path) {
          auto it = profile_.aliases.find(path);
          return it == profile_.aliases.end() ? path : it->second;
        };
        std::optional<std::string> child;
        if (flip.child) child = alias(flip.parent + "/" + *flip.child);
        return answer("flip rule", alias(flip.parent), child);
      }
      break;
    }
  }
  return classify_response(request);
}

std::string MockBackend::classify_response(const CompletionRequest& request) const {
  auto alias = [&](const std::string& path) {
    auto it = profile_.aliases.find(path);
    return it == profile_.aliases.end() ? path : it->second;
  };
  auto [instructions, document] = split_prompt(request.prompt);
  auto visible = visible_text(document);
  auto folded_doc = case_fold(visible);
  auto folded_instructions = case_fold(instructions);

  for (const auto& rule : profile_.keyword_rules) {
    if (find_word_bounded(folded_doc, case_fold(rule.pattern)).empty()) continue;
    if (rule.requires_text &&
        folded_instructions.find(case_fold(*rule.requires_text)) == std::string::npos) {
      continue;
    }
    std::optional<std::string> child;
    if (rule.child) child = alias(rule.parent + "/" + *rule.child);
    return answer("matched '" + rule.pattern + "'", alias(rule.parent), child);
  }

  auto examples = parse_examples(instructions);
  if (profile_.example_match && !examples.empty()) {
    auto doc_words = tokenize_words(visible);
    std::set<std::string> doc_set(doc_words.begin(), doc_words.end());
    std::size_t best = 0;
    const PromptExample* chosen = nullptr;
    for (const auto& ex : examples) {
      std::set<std::string> ex_set;
      for (auto& w : tokenize_words(ex.text)) ex_set.insert(std::move(w));
      std::size_t overlap = 0;
      for (const auto& w : ex_set) overlap += doc_set.count(w);
      if (overlap > best) {
        best = overlap;
        chosen = &ex;
      }
    }
    if (chosen) return answer("closest example", chosen->parent, chosen->child);
  }

  switch (profile_.fallback) {
    case Fallback::LastExampleLabel:
      if (!examples.empty()) {
        return answer("last example", examples.back().parent, examples.back().child);
      }
      break;
    case Fallback::FirstTokenLabel: {
      auto codes = parent_codes(instructions);
      if (!codes.empty()) {
        auto words = split_words(visible);
        auto first = words.empty() ? std::string{} : case_fold(words.front());
        return answer("first token", codes[fnv1a(first) % codes.size()], std::nullopt);
      }
      break;
    }
    case Fallback::FixedLabel:
      break;
  }
  std::optional<std::string> child;
  if (profile_.fixed_child) child = alias(profile_.fixed_label + "/" + *profile_.fixed_child);
  return answer("fallback", alias(profile_.fixed_label), child);
}

std::string MockBackend::topic_response(const std::string& prompt) const {
  auto document = split_prompt(prompt).document;
  auto folded = case_fold(visible_text(document));
  for (const auto& rule : profile_.topic_rules) {
    if (!find_word_bounded(folded, case_fold(rule.pattern)).empty()) {
      return Json{{"topic", rule.topic}, {"description", rule.description}}.dump();
    }
  }
  return Json{{"topic", profile_.topic_fallback}, {"description", profile_.topic_fallback}}
      .dump();
}

std::string MockBackend::judge_response(const std::string& prompt) const {
  auto [instructions, document] = split_prompt(prompt);
  std::vector<std::string> candidates;
  std::istringstream in(instructions);
  std::string line;
  while (std::getline(in, line)) {
    if (line.rfind("Candidate ", 0) != 0) continue;
    auto open = line.find('[');
    auto close = line.find(']', open);
    if (open != std::string::npos && close != std::string::npos) {
      candidates.push_back(line.substr(open + 1, close - open - 1));
    }
  }
  auto reply = [](const std::string& winner) {
    return "The principles favour this reading.\n" + Json{{"winner", winner}}.dump();
  };
  if (profile_.judge_mode == JudgeMode::Rules) {
    auto folded = case_fold(visible_text(document));
    for (const auto& rule : profile_.keyword_rules) {
      if (!find_word_bounded(folded, case_fold(rule.pattern)).empty()) {
        auto path = rule.child ? rule.parent + "/" + *rule.child : rule.parent;
        auto it = profile_.aliases.find(path);
        return reply(it == profile_.aliases.end() ? path : it->second);
      }
    }
  }
  return reply(candidates.empty() ? std::string{} : candidates.front());
}

EmbeddingVector MockBackend::embed(std::string_view text) {
  auto v = hashed_bag_of_words(text, profile_.embedding_dim);
  return v;
}

// ---------------------------------------------------------------------------
// HTTP backend

HttpBackend::HttpBackend(BackendConfig config) : config_(std::move(config)) {}

Json HttpBackend::post_with_retry(const std::string& url, const Json& body) {
  std::string path;
  auto base = trim_url_path(url, path);
  httplib::Client client(base);
  auto secs = std::chrono::duration_cast<std::chrono::seconds>(config_.timeout);
  auto usecs = std::chrono::duration_cast<std::chrono::microseconds>(config_.timeout - secs);
  client.set_connection_timeout(secs.count(), usecs.count());
  client.set_read_timeout(secs.count(), usecs.count());
  client.set_write_timeout(secs.count(), usecs.count());
  if (const char* key = std::getenv("TAXONOMIST_API_KEY"); key && *key) {
    client.set_bearer_token_auth(key);
  }
  const int max_attempts = config_.retry_limit + 1;
  enum class Last { Transport, Timeout, RateLimited } last = Last::Transport;
  std::string detail;
  for (int attempt = 1; attempt <= max_attempts; ++attempt) {
    auto started = std::chrono::steady_clock::now();
    auto res = client.Post(path, body.dump(), "application/json");
    if (!res) {
      auto elapsed = std::chrono::steady_clock::now() - started;
      bool timed_out = res.error() == httplib::Error::ConnectionTimeout ||
                       (res.error() == httplib::Error::Read && elapsed >= config_.timeout);
      last = timed_out ? Last::Timeout : Last::Transport;
      detail = httplib::to_string(res.error());
      continue;
    }
    if (res->status == 429) {
      last = Last::RateLimited;
      detail = "HTTP 429";
      continue;
    }
    if (res->status >= 500) {
      last = Last::Transport;
      detail = "HTTP " + std::to_string(res->status);
      continue;
    }
    if (res->status < 200 || res->status >= 300) {
      throw TransportError(attempt, "HTTP " + std::to_string(res->status) + " from " + url);
    }
    try {
      return Json::parse(res->body);
    } catch (const Json::exception&) {
      throw UnparseableResponse(res->body);
    }
  }
  switch (last) {
    case Last::Timeout: throw Timeout("request to " + url + " timed out: " + detail);
    case Last::RateLimited: throw RateLimited("rate limited by " + url);
    case Last::Transport: break;
  }
  throw TransportError(max_attempts, url + ": " + detail);
}

std::string HttpBackend::complete(const CompletionRequest& request) {
  Json body{{"model", config_.model_id},
            {"temperature", config_.temperature},
            {"prompt", request.prompt}};
  auto reply = post_with_retry(config_.endpoint, body);
  if (!reply.contains("text") || !reply.at("text").is_string()) {
    throw UnparseableResponse(reply.dump());
  }
  return reply.at("text").get<std::string>();
}

EmbeddingVector HttpBackend::embed(std::string_view text) {
  if (config_.embed_endpoint.empty()) {
    throw InvalidConfig("http backend has no embed_endpoint configured");
  }
  auto reply = post_with_retry(config_.embed_endpoint,
                               Json{{"model", config_.model_id}, {"input", std::string(text)}});
  if (!reply.contains("embedding") || !reply.at("embedding").is_array()) {
    throw UnparseableResponse(reply.dump());
  }
  return {reply.at("embedding").get<std::vector<double>>(), id()};
}

std::unique_ptr<Backend> make_backend(const BackendConfig& config) {
  if (config.kind == BackendKind::Mock) return std::make_unique<MockBackend>(config.mock_profile);
  return std::make_unique<HttpBackend>(config);
}

// ---------------------------------------------------------------------------
// Operations

std::string complete(Backend& backend, const std::string& prompt) {
  if (prompt.empty()) throw InvalidArgument("prompt must not be empty");
  return backend.complete({prompt, std::nullopt});
}

std::optional<Json> last_json_object_with(std::string_view text, std::string_view key) {
  for (std::size_t start = text.rfind('{'); start != std::string_view::npos;
       start = start == 0 ? std::string_view::npos : text.rfind('{', start - 1)) {
    int depth = 0;
    bool in_string = false;
    std::size_t end = std::string_view::npos;
    for (std::size_t i = start; i < text.size(); ++i) {
      char c = text[i];
      if (in_string) {
        if (c == '\\') {
          ++i;
        } else if (c == '"') {
          in_string = false;
        }
        continue;
      }
      if (c == '"') {
        in_string = true;
      } else if (c == '{') {
        ++depth;
      } else if (c == '}' && --depth == 0) {
        end = i;
        break;
      }
    }
    if (end == std::string_view::npos) continue;
    auto parsed = Json::parse(text.substr(start, end - start + 1), nullptr, false);
    if (parsed.is_object() && parsed.contains(key)) return parsed;
  }
  return std::nullopt;
}

HierLabel parse_classification(std::string_view response, const schema::ClassSchema& schema) {
  std::string parent_alias;
  std::optional<std::string> child_alias;
  if (auto obj = last_json_object_with(response, "parent")) {
    if (!obj->at("parent").is_string()) throw UnparseableResponse(std::string(response));
    parent_alias = obj->at("parent").get<std::string>();
    if (obj->contains("child") && obj->at("child").is_string()) {
      child_alias = obj->at("child").get<std::string>();
      if (trim(*child_alias).empty()) child_alias.reset();
    }
  } else {
    static const std::regex kLine(R"((?:^|\n)\s*(?:label|parent)\s*:\s*([^\n]+?)\s*(?=\n|$))",
                                  std::regex::icase);
    std::string text(response);
    std::smatch last;
    bool found = false;
    for (auto it = std::sregex_iterator(text.begin(), text.end(), kLine);
         it != std::sregex_iterator(); ++it) {
      last = *it;
      found = true;
    }
    if (!found) throw UnparseableResponse(std::string(response));
    parent_alias = last[1].str();
  }
  const auto* parent = schema.parent_by_alias(trim(parent_alias));
  if (!parent) throw UnknownLabel(parent_alias);
  HierLabel label{parent->internal_name, std::nullopt};
  if (child_alias) {
    const auto* child = schema.child_by_alias(*parent, trim(*child_alias));
    if (!child) throw UnknownLabel(*child_alias);
    label.child = child->internal_name;
  }
  return label;
}

ClassificationResult classify(const corpus::ProcessedDocument& doc,
                              const prompting::PromptText& prompt,
                              const schema::ClassSchema& schema, Backend& backend) {
  auto started = std::chrono::steady_clock::now();
  auto raw = backend.complete({prompting::wrap_document(prompt, doc.text), doc.id});
  auto elapsed = std::chrono::steady_clock::now() - started;
  auto label = parse_classification(raw, schema);
  ClassificationResult r;
  r.doc_id = doc.id;
  r.parent = label.parent;
  r.child = label.child;
  r.raw_response = std::move(raw);
  r.prompt_hash = prompt.hash;
  r.backend_id = backend.id();
  r.latency_ms = backend.simulated()
                     ? 0.0
                     : std::chrono::duration<double, std::milli>(elapsed).count();
  r.timestamp = doc.timestamp;
  return r;
}

ClassificationResult classify(const corpus::ProcessedDocument& doc,
                              const prompting::PromptSpec& spec,
                              const schema::ClassSchema& schema, Backend& backend) {
  if (spec.schema_version != schema.version) {
    throw InvalidArgument("prompt was built for schema version " +
                          std::to_string(spec.schema_version) + " but schema is version " +
                          std::to_string(schema.version));
  }
  return classify(doc, prompting::build_prompt(schema, spec), schema, backend);
}

std::vector<ClassificationResult> classify_batch(
    const std::vector<corpus::ProcessedDocument>& docs, const prompting::PromptText& prompt,
    const schema::ClassSchema& schema, Backend& backend, std::size_t workers) {
  std::vector<ClassificationResult> out(docs.size());
  workers = std::clamp<std::size_t>(workers, 1, std::max<std::size_t>(docs.size(), 1));
  if (workers == 1) {
    for (std::size_t i = 0; i < docs.size(); ++i) out[i] = classify(docs[i], prompt, schema, backend);
    return out;
  }
  std::atomic<std::size_t> next{0};
  std::exception_ptr failure;
  std::mutex failure_mutex;
  {
    std::vector<std::jthread> pool;
    for (std::size_t w = 0; w < workers; ++w) {
      pool.emplace_back([&] {
        for (std::size_t i = next++; i < docs.size(); i = next++) {
          try {
            out[i] = classify(docs[i], prompt, schema, backend);
          } catch (...) {
            std::lock_guard lock(failure_mutex);
            if (!failure) failure = std::current_exception();
            next = docs.size();
          }
        }
      });
    }
  }
  if (failure) std::rethrow_exception(failure);
  return out;
}

TopicDiscovery discover_topics(const corpus::Corpus& corpus, const std::string& topic_prompt,
                               std::size_t max_topics, Backend& backend) {
  if (max_topics < 1) throw InvalidArgument("max_topics must be at least 1");
  std::string instructions = topic_prompt;
  if (instructions.find(kTopicMarker) == std::string::npos) {
    instructions = std::string(kTopicMarker) + "\n" + instructions;
  }
  schema::TopicSet proposed;
  std::vector<std::pair<std::string, std::string>> raw_assignment;
  for (const auto& doc : corpus.documents) {
    std::string prompt = instructions + "\n\n" + prompting::kDocumentHeader + "\n" +
                         prompting::kDescriptionPrefix + doc.text + "\"\nName the topic.";
    auto reply = backend.complete({prompt, doc.id});
    auto obj = last_json_object_with(reply, "topic");
    if (!obj || !obj->at("topic").is_string() || trim(obj->at("topic").get<std::string>()).empty()) {
      throw UnparseableResponse(reply);
    }
    auto name = trim(obj->at("topic").get<std::string>());
    std::string description = name;
    if (obj->contains("description") && obj->at("description").is_string()) {
      description = obj->at("description").get<std::string>();
    }
    raw_assignment.emplace_back(doc.id, proposed.add({name, description}));
  }

  TopicDiscovery out;
  if (proposed.size() <= max_topics) {
    out.topics = proposed;
    out.assignment.insert(raw_assignment.begin(), raw_assignment.end());
    return out;
  }
  std::map<std::string, std::size_t> counts;
  for (const auto& [doc, topic] : raw_assignment) ++counts[topic];
  std::vector<const schema::Topic*> ranked;
  for (const auto& t : proposed.topics()) ranked.push_back(&t);
  std::stable_sort(ranked.begin(), ranked.end(), [&](const auto* a, const auto* b) {
    return counts[a->name] > counts[b->name];
  });
  std::set<std::string> kept;
  for (std::size_t i = 0; i + 1 < max_topics && i < ranked.size(); ++i) {
    kept.insert(ranked[i]->name);
  }
  for (const auto& t : proposed.topics()) {
    if (kept.count(t.name)) out.topics.add(t);
  }
  auto other = out.topics.add({"Other", "Documents whose themes fell outside the kept topics."});
  for (const auto& [doc, topic] : raw_assignment) {
    out.assignment[doc] = kept.count(topic) ? topic : other;
  }
  return out;
}

EmbeddingVector embed(Backend& backend, std::string_view text) {
  if (text.empty()) throw InvalidArgument("cannot embed empty text");
  return backend.embed(text);
}

std::vector<std::string> tokenize_words(std::string_view text) {
  std::vector<std::string> out;
  std::string cur;
  for (char c : text) {
    if (std::isalnum(static_cast<unsigned char>(c))) {
      cur.push_back(static_cast<char>(std::tolower(static_cast<unsigned char>(c))));
    } else if (!cur.empty()) {
      out.push_back(std::move(cur));
      cur.clear();
    }
  }
  if (!cur.empty()) out.push_back(std::move(cur));
  return out;
}

ClassifyFn classifier(const prompting::PromptText& prompt, const schema::ClassSchema& schema,
                      Backend& backend) {
  return [prompt, &schema, &backend](const corpus::ProcessedDocument& doc) {
    return classify(doc, prompt, schema, backend).label();
  };
}

EmbeddingVector hashed_bag_of_words(std::string_view text, std::size_t dim) {
  EmbeddingVector v{std::vector<double>(dim, 0.0), "mock-bow-" + std::to_string(dim)};
  for (const auto& token : tokenize_words(text)) v.values[fnv1a(token) % dim] += 1.0;
  double norm = 0.0;
  for (double x : v.values) norm += x * x;
  if (norm > 0) {
    norm = std::sqrt(norm);
    for (double& x : v.values) x /= norm;
  }
  return v;
}

}  // namespace taxonomist::gateway
