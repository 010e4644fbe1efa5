#include "taxonomist/golden.hpp"

#include <set>
#include <sstream>

#include "taxonomist/errors.hpp"

namespace taxonomist {

std::vector<corpus::ProcessedDocument> GoldenSet::documents() const {
  std::vector<corpus::ProcessedDocument> docs;
  docs.reserve(entries.size());
  for (const auto& e : entries) {
    corpus::ProcessedDocument d;
    d.id = e.doc_id;
    d.source_id = e.doc_id;
    d.text = e.text;
    d.token_estimate = estimate_tokens(split_words(e.text).size());
    docs.push_back(std::move(d));
  }
  return docs;
}

GoldenSet parse_golden(std::string_view text, const schema::ClassSchema& schema,
                       const std::string& provenance) {
  GoldenSet golden;
  golden.provenance = provenance;
  golden.schema_version = schema.version;
  std::istringstream in{std::string(text)};
  std::set<std::string> ids;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (trim(line).empty()) continue;
    GoldenEntry e;
    try {
      auto j = Json::parse(line);
      e.doc_id = j.at("doc_id").get<std::string>();
      e.text = j.at("text").get<std::string>();
      e.parent = j.at("parent").get<std::string>();
      if (j.contains("child") && !j.at("child").is_null()) e.child = j.at("child").get<std::string>();
    } catch (const Json::exception& ex) {
      throw ParseError(line_no, ex.what());
    }
    if (!schema.find_parent(e.parent)) throw UnknownLabel(e.parent, line_no);
    if (e.child && !schema.find_child(e.parent, *e.child)) {
      throw UnknownLabel(e.parent + "/" + *e.child, line_no);
    }
    if (!ids.insert(e.doc_id).second) throw DuplicateId(e.doc_id);
    golden.entries.push_back(std::move(e));
  }
  if (golden.entries.empty()) throw EmptyGoldenSet();
  return golden;
}

GoldenSet load_golden(const std::filesystem::path& path, const schema::ClassSchema& schema,
                      const std::string& provenance) {
  return parse_golden(read_text_file(path), schema,
                      provenance.empty() ? path.filename().string() : provenance);
}

std::string golden_to_jsonl(const GoldenSet& golden) {
  std::string out;
  for (const auto& e : golden.entries) {
    Json j{{"doc_id", e.doc_id}, {"text", e.text}, {"parent", e.parent}};
    if (e.child) j["child"] = *e.child;
    out += canonical_json(j) + "\n";
  }
  return out;
}

MetricsReport compute_metrics(const std::vector<HierLabel>& gold,
                              const std::vector<std::optional<HierLabel>>& predicted) {
  if (gold.size() != predicted.size()) {
    throw InvalidArgument("gold and predicted label lists differ in length");
  }
  if (gold.empty()) throw EmptyGoldenSet();
  MetricsReport m;
  m.n = gold.size();
  std::size_t exact = 0;
  for (std::size_t i = 0; i < gold.size(); ++i) {
    auto& g = m.per_class[gold[i].parent];
    ++g.support;
    if (!predicted[i]) {
      ++m.failed_predictions;
      ++g.fn;
      continue;
    }
    const auto& p = *predicted[i];
    if (p.parent == gold[i].parent) {
      ++g.tp;
      if (!gold[i].child || gold[i].child == p.child) ++exact;
    } else {
      ++g.fn;
      ++m.per_class[p.parent].fp;
    }
  }
  for (auto& [name, c] : m.per_class) {
    c.precision = c.tp + c.fp ? double(c.tp) / double(c.tp + c.fp) : 0.0;
    c.recall = c.tp + c.fn ? double(c.tp) / double(c.tp + c.fn) : 0.0;
    c.f1 = c.precision + c.recall > 0 ? 2 * c.precision * c.recall / (c.precision + c.recall) : 0.0;
    m.precision += c.precision;
    m.recall += c.recall;
    m.macro_f1 += c.f1;
  }
  auto k = static_cast<double>(m.per_class.size());
  m.precision /= k;
  m.recall /= k;
  m.macro_f1 /= k;
  m.accuracy = double(exact) / double(m.n);
  return m;
}

MetricsReport golden_eval(const GoldenSet& golden, const gateway::ClassifyFn& classify) {
  if (golden.empty()) throw EmptyGoldenSet();
  std::vector<HierLabel> gold;
  std::vector<std::optional<HierLabel>> predicted;
  auto docs = golden.documents();
  for (std::size_t i = 0; i < docs.size(); ++i) {
    gold.push_back(golden.entries[i].label());
    try {
      predicted.emplace_back(classify(docs[i]));
    } catch (const UnknownLabel&) {
      predicted.emplace_back(std::nullopt);
    } catch (const UnparseableResponse&) {
      predicted.emplace_back(std::nullopt);
    }
  }
  return compute_metrics(gold, predicted);
}

Json metrics_to_json(const MetricsReport& m) {
  Json per_class = Json::object();
  for (const auto& [name, c] : m.per_class) {
    per_class[name] = {{"tp", c.tp},         {"fp", c.fp},         {"fn", c.fn},
                       {"precision", c.precision}, {"recall", c.recall}, {"f1", c.f1},
                       {"support", c.support}};
  }
  return Json{{"precision", m.precision}, {"recall", m.recall},
              {"accuracy", m.accuracy},   {"macro_f1", m.macro_f1},
              {"n", m.n},                 {"failed_predictions", m.failed_predictions},
              {"per_class", std::move(per_class)}};
}

MetricsReport metrics_from_json(const Json& j) {
  MetricsReport m;
  m.precision = j.at("precision").get<double>();
  m.recall = j.at("recall").get<double>();
  m.accuracy = j.at("accuracy").get<double>();
  m.macro_f1 = j.at("macro_f1").get<double>();
  m.n = j.value("n", std::size_t{0});
  m.failed_predictions = j.value("failed_predictions", std::size_t{0});
  if (j.contains("per_class")) {
    for (const auto& [name, c] : j.at("per_class").items()) {
      ClassMetrics cm;
      cm.tp = c.value("tp", std::size_t{0});
      cm.fp = c.value("fp", std::size_t{0});
      cm.fn = c.value("fn", std::size_t{0});
      cm.precision = c.value("precision", 0.0);
      cm.recall = c.value("recall", 0.0);
      cm.f1 = c.value("f1", 0.0);
      cm.support = c.value("support", std::size_t{0});
      m.per_class[name] = cm;
    }
  }
  return m;
}

}  // namespace taxonomist
