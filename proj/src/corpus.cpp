#include "taxonomist/corpus.hpp"

#include <algorithm>
#include <cctype>
#include <regex>
#include <set>
#include <sstream>

#include "taxonomist/errors.hpp"

namespace taxonomist::corpus {

namespace {

bool is_alpha(char c) { return std::isalpha(static_cast<unsigned char>(c)) != 0; }
bool is_space(char c) { return std::isspace(static_cast<unsigned char>(c)) != 0; }

// Length of the tag starting at text[pos] ('<'), or 0 if it is not a tag.
// Grammar: "<!--" ... "-->" | "<" "/"? alpha [alnum:-]* (space [^<>]*)? "/"? ">"
std::size_t tag_length(std::string_view text, std::size_t pos) {
  if (text.compare(pos, 4, "<!--") == 0) {
    auto end = text.find("-->", pos + 4);
    return end == std::string_view::npos ? 0 : end + 3 - pos;
  }
  std::size_t i = pos + 1;
  if (i < text.size() && text[i] == '/') ++i;
  if (i >= text.size() || !is_alpha(text[i])) return 0;
  while (i < text.size() &&
         (std::isalnum(static_cast<unsigned char>(text[i])) || text[i] == ':' || text[i] == '-')) {
    ++i;
  }
  if (i < text.size() && is_space(text[i])) {
    while (i < text.size() && text[i] != '<' && text[i] != '>') ++i;
  }
  if (i < text.size() && text[i] == '/') ++i;
  if (i >= text.size() || text[i] != '>') return 0;
  std::size_t len = i + 1 - pos;
  if (text.substr(pos, len) == kUrlToken) return 0;
  return len;
}

std::string strip_markup(std::string_view text) {
  std::string out;
  out.reserve(text.size());
  for (std::size_t i = 0; i < text.size();) {
    if (text[i] == '<') {
      if (auto len = tag_length(text, i)) {
        out.push_back(' ');
        i += len;
        continue;
      }
    }
    out.push_back(text[i++]);
  }
  return out;
}

std::string strip_control(std::string_view text) {
  std::string out(text);
  for (auto& c : out) {
    auto u = static_cast<unsigned char>(c);
    if ((u < 0x20 && c != '\n' && c != '\t' && c != '\r') || u == 0x7F) c = ' ';
  }
  return out;
}

std::string collapse_urls(std::string_view text) {
  static const std::regex kUrl(R"((https?://|www\.)[^\s<>"]+)", std::regex::icase);
  return std::regex_replace(std::string(text), kUrl, kUrlToken);
}

std::string collapse_whitespace(std::string_view text) {
  std::string out;
  out.reserve(text.size());
  bool pending_space = false;
  for (char c : text) {
    if (is_space(c)) {
      pending_space = !out.empty();
    } else {
      if (pending_space) out.push_back(' ');
      pending_space = false;
      out.push_back(c);
    }
  }
  return out;
}

struct WordSpan {
  std::size_t begin;
  std::size_t end;
  bool ends_sentence;
};

std::vector<WordSpan> word_spans(std::string_view text) {
  std::vector<WordSpan> spans;
  std::size_t i = 0;
  while (i < text.size()) {
    while (i < text.size() && is_space(text[i])) ++i;
    if (i >= text.size()) break;
    std::size_t start = i;
    while (i < text.size() && !is_space(text[i])) ++i;
    std::size_t end = i;
    // Trailing closers do not hide a terminator: `done."` still ends a sentence.
    std::size_t k = end;
    while (k > start && (text[k - 1] == '"' || text[k - 1] == '\'' || text[k - 1] == ')')) --k;
    bool terminator = k > start && (text[k - 1] == '.' || text[k - 1] == '!' || text[k - 1] == '?');
    std::size_t j = end;
    while (j < text.size() && is_space(text[j]) && !terminator) {
      if (text[j] == '\n') terminator = true;
      ++j;
    }
    spans.push_back({start, end, terminator});
  }
  return spans;
}

}  // namespace

const ProcessedDocument* Corpus::find(std::string_view id) const {
  for (const auto& d : documents) {
    if (d.id == id) return &d;
  }
  return nullptr;
}

std::string PreprocessConfig::hash() const {
  return sha256_hex(canonical_json(preprocess_config_to_json(*this)));
}

PreprocessConfig preprocess_config_from_json(const Json& j) {
  PreprocessConfig c;
  const Json& section = j.contains("preprocess") ? j.at("preprocess") : j;
  try {
    if (section.contains("max_segment_tokens")) {
      c.max_segment_tokens = section.at("max_segment_tokens").get<std::int64_t>();
    }
    if (section.contains("rules")) c.rules = section.at("rules").get<std::vector<std::string>>();
  } catch (const Json::exception& e) {
    throw InvalidConfig(std::string("preprocess config: ") + e.what());
  }
  return c;
}

Json preprocess_config_to_json(const PreprocessConfig& config) {
  return Json{{"max_segment_tokens", config.max_segment_tokens}, {"rules", config.rules}};
}

std::string normalize_text(std::string_view text, const std::vector<std::string>& rules) {
  std::string out(text);
  for (const auto& rule : rules) {
    if (rule == kStripMarkup) {
      out = strip_markup(out);
    } else if (rule == kStripControl) {
      out = strip_control(out);
    } else if (rule == kCollapseUrls) {
      out = collapse_urls(out);
    } else if (rule == kCollapseWhitespace) {
      out = collapse_whitespace(out);
    } else {
      throw InvalidConfig("unknown preprocessing rule '" + rule + "'");
    }
  }
  return out;
}

std::vector<ProcessedDocument> preprocess(const RawDocument& raw, const PreprocessConfig& config) {
  if (config.max_segment_tokens <= 0) {
    throw InvalidConfig("max_segment_tokens must be positive");
  }
  const auto max_words = max_words_for_tokens(static_cast<std::size_t>(config.max_segment_tokens));
  if (max_words == 0) {
    throw InvalidConfig("max_segment_tokens " + std::to_string(config.max_segment_tokens) +
                        " cannot hold a single word (estimate is 2 tokens per word minimum)");
  }
  const std::string text = normalize_text(raw.text, config.rules);
  const auto spans = word_spans(text);
  if (spans.empty()) throw EmptyAfterCleaning(raw.id);

  std::vector<std::pair<std::size_t, std::size_t>> segments;
  for (std::size_t s = 0; s < spans.size();) {
    std::size_t limit = std::min(spans.size(), s + max_words);
    std::size_t e = limit;
    if (limit < spans.size()) {
      for (std::size_t j = limit; j > s; --j) {
        if (spans[j - 1].ends_sentence) {
          e = j;
          break;
        }
      }
    }
    segments.emplace_back(s, e);
    s = e;
  }

  std::vector<ProcessedDocument> out;
  out.reserve(segments.size());
  for (std::size_t i = 0; i < segments.size(); ++i) {
    auto [s, e] = segments[i];
    ProcessedDocument doc;
    doc.id = segments.size() == 1 ? raw.id : raw.id + "#" + std::to_string(i);
    doc.source_id = raw.id;
    doc.text = text.substr(spans[s].begin, spans[e - 1].end - spans[s].begin);
    doc.segment_index = i;
    doc.token_estimate = estimate_tokens(e - s);
    doc.timestamp = raw.timestamp;
    doc.dimensions = raw.dimensions;
    out.push_back(std::move(doc));
  }
  return out;
}

std::vector<RawDocument> read_raw_jsonl(const std::filesystem::path& path) {
  const auto contents = read_text_file(path);
  std::istringstream in(contents);
  std::vector<RawDocument> docs;
  std::set<std::string> seen;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (trim(line).empty()) continue;
    RawDocument doc;
    try {
      auto j = Json::parse(line);
      if (!j.is_object()) throw ParseError(line_no, "expected a JSON object");
      doc.id = j.at("id").get<std::string>();
      doc.text = j.at("text").get<std::string>();
      if (j.contains("timestamp") && !j.at("timestamp").is_null()) {
        doc.timestamp = j.at("timestamp").get<std::string>();
        if (!parse_rfc3339(*doc.timestamp)) {
          throw ParseError(line_no, "timestamp is not RFC3339: " + *doc.timestamp);
        }
      }
      if (j.contains("dimensions") && !j.at("dimensions").is_null()) {
        doc.dimensions = j.at("dimensions").get<std::map<std::string, std::string>>();
      }
    } catch (const Json::exception& e) {
      throw ParseError(line_no, e.what());
    }
    if (doc.id.empty()) throw ParseError(line_no, "empty id");
    if (!seen.insert(doc.id).second) throw DuplicateId(doc.id);
    docs.push_back(std::move(doc));
  }
  return docs;
}

Corpus load_corpus(const std::filesystem::path& path, const PreprocessConfig& config) {
  Corpus corpus;
  corpus.provenance = {path.string(), config.hash()};
  std::set<std::string> ids;
  for (const auto& raw : read_raw_jsonl(path)) {
    for (auto& doc : preprocess(raw, config)) {
      if (!ids.insert(doc.id).second) throw DuplicateId(doc.id);
      corpus.documents.push_back(std::move(doc));
    }
  }
  return corpus;
}

Json document_to_json(const ProcessedDocument& doc) {
  Json j{{"id", doc.id},
         {"source_id", doc.source_id},
         {"text", doc.text},
         {"segment_index", doc.segment_index},
         {"token_estimate", doc.token_estimate}};
  if (doc.timestamp) j["timestamp"] = *doc.timestamp;
  if (!doc.dimensions.empty()) j["dimensions"] = doc.dimensions;
  return j;
}

ProcessedDocument document_from_json(const Json& j) {
  ProcessedDocument doc;
  doc.id = j.at("id").get<std::string>();
  doc.text = j.at("text").get<std::string>();
  doc.source_id = j.value("source_id", doc.id);
  doc.segment_index = j.value("segment_index", std::size_t{0});
  doc.token_estimate = j.value("token_estimate", estimate_tokens(split_words(doc.text).size()));
  if (j.contains("timestamp") && !j.at("timestamp").is_null()) {
    doc.timestamp = j.at("timestamp").get<std::string>();
  }
  if (j.contains("dimensions")) {
    doc.dimensions = j.at("dimensions").get<std::map<std::string, std::string>>();
  }
  return doc;
}

std::string corpus_to_jsonl(const Corpus& corpus) {
  std::string out;
  for (const auto& d : corpus.documents) {
    out += canonical_json(document_to_json(d));
    out += '\n';
  }
  return out;
}

Corpus corpus_from_jsonl(std::string_view text, const Provenance& provenance) {
  Corpus corpus;
  corpus.provenance = provenance;
  std::istringstream in{std::string(text)};
  std::set<std::string> ids;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (trim(line).empty()) continue;
    ProcessedDocument doc;
    try {
      doc = document_from_json(Json::parse(line));
    } catch (const Json::exception& e) {
      throw ParseError(line_no, e.what());
    }
    if (!ids.insert(doc.id).second) throw DuplicateId(doc.id);
    corpus.documents.push_back(std::move(doc));
  }
  return corpus;
}

std::map<std::string, Corpus> partition_by_parent(
    const Corpus& corpus, const std::vector<ClassificationResult>& results,
    const schema::ClassSchema& schema) {
  std::map<std::string, const ClassificationResult*> by_doc;
  for (const auto& r : results) {
    if (!by_doc.emplace(r.doc_id, &r).second) throw DuplicateId(r.doc_id);
  }
  std::vector<std::string> missing;
  for (const auto& d : corpus.documents) {
    if (!by_doc.count(d.id)) missing.push_back(d.id);
  }
  if (!missing.empty()) throw MissingAssignment(std::move(missing));

  std::map<std::string, Corpus> parts;
  for (const auto& p : schema.parents) {
    parts[p.internal_name].provenance = corpus.provenance;
  }
  for (const auto& d : corpus.documents) {
    const auto& parent = by_doc.at(d.id)->parent;
    auto it = parts.find(parent);
    if (it == parts.end()) throw UnknownLabel(parent);
    it->second.documents.push_back(d);
  }
  return parts;
}

}  // namespace taxonomist::corpus
