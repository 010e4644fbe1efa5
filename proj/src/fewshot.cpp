#include "taxonomist/fewshot.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <set>
#include <sstream>

#include "taxonomist/errors.hpp"

namespace taxonomist::fewshot {

double cosine_similarity(const gateway::EmbeddingVector& u, const gateway::EmbeddingVector& v) {
  if (u.dim() != v.dim()) {
    throw DimensionMismatch("cannot compare vectors of dimension " + std::to_string(u.dim()) +
                            " and " + std::to_string(v.dim()));
  }
  if (u.provider_id != v.provider_id) {
    throw ProviderMismatch("embeddings from '" + u.provider_id + "' and '" + v.provider_id + "'");
  }
  double dot = 0, nu = 0, nv = 0;
  for (std::size_t i = 0; i < u.dim(); ++i) {
    dot += u.values[i] * v.values[i];
    nu += u.values[i] * u.values[i];
    nv += v.values[i] * v.values[i];
  }
  if (nu == 0 || nv == 0) throw ZeroVector();
  return std::clamp(dot / (std::sqrt(nu) * std::sqrt(nv)), -1.0, 1.0);
}

std::map<std::string, std::string> class_descriptions(const schema::ClassSchema& schema) {
  std::map<std::string, std::string> out;
  for (const auto& p : schema.parents) out[p.internal_name] = p.definition;
  return out;
}

std::vector<RankedExample> rank_examples(const std::vector<Candidate>& candidates,
                                         const std::map<std::string, std::string>& descriptions,
                                         gateway::Backend& backend) {
  std::map<std::string, gateway::EmbeddingVector> desc_cache;
  std::vector<RankedExample> out;
  for (const auto& c : candidates) {
    auto it = descriptions.find(c.label.parent);
    if (it == descriptions.end() || trim(it->second).empty()) {
      throw MissingDescription(c.label.parent);
    }
    auto cached = desc_cache.find(c.label.parent);
    if (cached == desc_cache.end()) {
      cached = desc_cache.emplace(c.label.parent, gateway::embed(backend, it->second)).first;
    }
    auto e = gateway::embed(backend, c.text);
    out.push_back({c.doc_id, c.label.parent, cosine_similarity(e, cached->second), c.text, c.label,
                   c.origin});
  }
  std::stable_sort(out.begin(), out.end(), [](const auto& a, const auto& b) {
    if (a.similarity != b.similarity) return a.similarity > b.similarity;
    return a.doc_id < b.doc_id;
  });
  return out;
}

prompting::FewShotExample to_example(const RankedExample& r) {
  return {r.text, r.label.parent, r.label.child, r.origin};
}

SelectKResult select_k(const std::vector<RankedExample>& ranked, const GoldenSet& validation,
                       const corpus::Corpus& monitoring,
                       const stats::ClassDistribution& baseline, double epsilon,
                       const schema::ClassSchema& schema, const prompting::PromptSpec& base,
                       gateway::Backend& backend, double smoothing) {
  if (validation.empty()) throw EmptyGoldenSet();
  if (epsilon < 0) throw InvalidArgument("epsilon must be non-negative");
  SelectKResult out;
  double best = -1.0;
  for (std::size_t k = 0; k <= ranked.size(); ++k) {
    auto spec = base;
    spec.example_order.clear();
    for (std::size_t i = 0; i < k; ++i) spec.examples.push_back(to_example(ranked[i]));
    auto prompt = prompting::build_prompt(schema, spec);
    SelectKEntry entry;
    entry.k = k;
    entry.validity =
        golden_eval(validation, gateway::classifier(prompt, schema, backend)).macro_f1;
    auto results = gateway::classify_batch(monitoring.documents, prompt, schema, backend);
    entry.distribution = stats::class_distribution(results, schema);
    entry.kl = stats::kl_divergence(entry.distribution, baseline, smoothing);
    entry.feasible = entry.kl <= epsilon;
    if (entry.feasible && entry.validity > best) {
      best = entry.validity;
      out.k = k;
    }
    out.report.push_back(std::move(entry));
  }
  for (std::size_t i = 0; i < out.k; ++i) out.chosen.push_back(to_example(ranked[i]));
  return out;
}

Json select_k_to_json(const SelectKResult& r) {
  Json report = Json::array();
  for (const auto& e : r.report) {
    report.push_back({{"k", e.k},
                      {"validity", e.validity},
                      {"kl", e.kl},
                      {"feasible", e.feasible},
                      {"distribution", stats::distribution_to_json(e.distribution)}});
  }
  Json chosen = Json::array();
  for (const auto& ex : r.chosen) {
    chosen.push_back({{"text", ex.text},
                      {"expected_parent", ex.expected_parent},
                      {"expected_child", ex.expected_child ? Json(*ex.expected_child) : Json()},
                      {"origin", prompting::to_string(ex.origin)}});
  }
  return Json{{"k", r.k}, {"chosen", std::move(chosen)}, {"report", std::move(report)}};
}

// ---------------------------------------------------------------------------
// Preferences

std::string to_string(PreferenceSource s) { return s == PreferenceSource::Human ? "human" : "judge"; }

HierLabel label_from_path(std::string_view path) {
  auto slash = path.find('/');
  if (slash == std::string_view::npos) return {std::string(path), std::nullopt};
  return {std::string(path.substr(0, slash)), std::string(path.substr(slash + 1))};
}

bool schema_has(const schema::ClassSchema& schema, const HierLabel& label) {
  if (label.child) return schema.find_child(label.parent, *label.child) != nullptr;
  return schema.find_parent(label.parent) != nullptr;
}

std::string alias_of(const schema::ClassSchema& schema, const HierLabel& label) {
  const schema::ClassDef* def = label.child ? schema.find_child(label.parent, *label.child)
                                            : schema.find_parent(label.parent);
  if (!def) throw UnknownLabel(label.str());
  return def->external_alias;
}

HierLabel label_from_alias(const schema::ClassSchema& schema, std::string_view alias) {
  for (const auto& p : schema.parents) {
    if (p.external_alias == alias) return {p.internal_name, std::nullopt};
    for (const auto& c : p.children) {
      if (c.external_alias == alias) return {p.internal_name, c.internal_name};
    }
  }
  throw UnknownLabel(std::string(alias));
}

Json preference_to_json(const PreferencePair& p) {
  return Json{{"doc_id", p.doc_id},     {"y_w", p.y_w.str()},          {"y_l", p.y_l.str()},
              {"reviewer", p.reviewer}, {"source", to_string(p.source)}, {"round", p.round},
              {"created_at", p.created_at}};
}

PreferencePair preference_from_json(const Json& j) {
  PreferencePair p;
  p.doc_id = j.at("doc_id").get<std::string>();
  p.y_w = label_from_path(j.at("y_w").get<std::string>());
  p.y_l = label_from_path(j.at("y_l").get<std::string>());
  p.reviewer = j.at("reviewer").get<std::string>();
  p.source = j.value("source", std::string("human")) == "judge" ? PreferenceSource::Judge
                                                                 : PreferenceSource::Human;
  p.round = j.value("round", 1);
  p.created_at = j.value("created_at", std::string{});
  return p;
}

PreferenceStore::PreferenceStore(std::filesystem::path path) : path_(std::move(path)) {}

std::vector<PreferencePair> PreferenceStore::load() const {
  std::lock_guard lock(mutex_);
  std::vector<PreferencePair> out;
  if (!std::filesystem::exists(path_)) return out;
  std::istringstream in(read_text_file(path_));
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (trim(line).empty()) continue;
    try {
      out.push_back(preference_from_json(Json::parse(line)));
    } catch (const Json::exception& e) {
      throw ParseError(line_no, e.what());
    }
  }
  return out;
}

void PreferenceStore::append(const PreferencePair& pair) {
  auto existing = load();
  std::lock_guard lock(mutex_);
  for (const auto& p : existing) {
    if (p.doc_id == pair.doc_id && p.reviewer == pair.reviewer && p.round == pair.round) {
      throw DuplicateJudgment("reviewer '" + pair.reviewer + "' already judged '" + pair.doc_id +
                              "' in round " + std::to_string(pair.round));
    }
  }
  std::filesystem::create_directories(path_.parent_path().empty() ? "." : path_.parent_path());
  std::ofstream out(path_, std::ios::app | std::ios::binary);
  if (!out) throw IoError("cannot open " + path_.string());
  out << canonical_json(preference_to_json(pair)) << '\n';
  out.flush();
  if (!out) throw IoError("write to " + path_.string() + " failed");
}

PreferencePair record_preference(PreferenceStore& store, const corpus::ProcessedDocument& doc,
                                 const HierLabel& y_w, const HierLabel& y_l,
                                 const std::string& reviewer, PreferenceSource source, int round,
                                 const schema::ClassSchema& schema,
                                 const std::string& created_at) {
  if (y_w == y_l) throw LabelEqualsLoser(y_w.str());
  if (!schema_has(schema, y_w)) throw UnknownLabel(y_w.str());
  if (!schema_has(schema, y_l)) throw UnknownLabel(y_l.str());
  if (trim(reviewer).empty()) throw InvalidArgument("reviewer must not be empty");
  if (round < 1) throw InvalidArgument("round must be positive");
  PreferencePair p{doc.id, y_w, y_l, reviewer, source, round, created_at};
  store.append(p);
  return p;
}

Constitution parse_constitution(std::string_view text, int version) {
  Constitution c;
  c.version = version;
  std::istringstream in{std::string(text)};
  std::string line, paragraph;
  auto flush = [&] {
    auto t = trim(paragraph);
    if (!t.empty()) c.principles.push_back(std::move(t));
    paragraph.clear();
  };
  while (std::getline(in, line)) {
    if (trim(line).empty()) {
      flush();
    } else {
      if (!paragraph.empty()) paragraph += ' ';
      paragraph += trim(line);
    }
  }
  flush();
  return c;
}

std::string build_judge_prompt(const corpus::ProcessedDocument& doc,
                               const std::vector<HierLabel>& candidates,
                               const Constitution& constitution,
                               const schema::ClassSchema& schema) {
  std::string out = std::string(gateway::kJudgeTaskMarker) + "\n";
  out += "Two labels have been proposed for the document below. Choose the better one by "
         "applying these principles in order.\nPrinciples:\n";
  for (std::size_t i = 0; i < constitution.principles.size(); ++i) {
    out += std::to_string(i + 1) + ". " + constitution.principles[i] + "\n";
  }
  out += "\n";
  static const char* names[] = {"A", "B"};
  for (std::size_t i = 0; i < candidates.size(); ++i) {
    const auto& l = candidates[i];
    const auto* def = l.child ? schema.find_child(l.parent, *l.child) : schema.find_parent(l.parent);
    if (!def) throw UnknownLabel(l.str());
    out += std::string("Candidate ") + names[i] + ": [" + def->external_alias + "] " +
           def->definition + "\n";
  }
  out += "Answer with a single-line JSON object {\"winner\": \"<code>\"}.\n\n";
  out += prompting::kDocumentHeader;
  out += "\n";
  out += prompting::kDescriptionPrefix + doc.text + "\"\nChoose the preferred label.";
  return out;
}

PreferencePair judge_preference(const corpus::ProcessedDocument& doc,
                                const std::vector<HierLabel>& candidates,
                                const Constitution& constitution,
                                const schema::ClassSchema& schema, gateway::Backend& backend,
                                int round, const std::string& created_at) {
  if (candidates.size() != 2) throw InvalidArgument("the judge takes exactly two candidates");
  if (candidates[0] == candidates[1]) throw LabelEqualsLoser(candidates[0].str());
  if (constitution.principles.empty()) throw InvalidArgument("constitution has no principles");
  auto reply = backend.complete({build_judge_prompt(doc, candidates, constitution, schema), doc.id});
  auto obj = gateway::last_json_object_with(reply, "winner");
  if (!obj || !obj->at("winner").is_string()) throw UnparseableResponse(reply);
  auto winner = trim(obj->at("winner").get<std::string>());
  for (std::size_t i = 0; i < 2; ++i) {
    if (alias_of(schema, candidates[i]) == winner) {
      return {doc.id, candidates[i], candidates[1 - i], "judge:" + backend.id(),
              PreferenceSource::Judge, round, created_at};
    }
  }
  throw WinnerNotCandidate(winner);
}

// ---------------------------------------------------------------------------
// Agreement

double cohen_kappa(const LabelMap& a, const LabelMap& b, std::size_t* shared_out) {
  std::map<std::string, double> ma, mb;
  std::size_t shared = 0, agree = 0;
  for (const auto& [doc, la] : a) {
    auto it = b.find(doc);
    if (it == b.end()) continue;
    ++shared;
    agree += la == it->second;
    ma[la] += 1;
    mb[it->second] += 1;
  }
  if (shared_out) *shared_out = shared;
  if (shared == 0) return 0.0;
  double n = double(shared);
  double po = double(agree) / n;
  double pe = 0;
  for (const auto& [label, count] : ma) {
    auto it = mb.find(label);
    if (it != mb.end()) pe += (count / n) * (it->second / n);
  }
  if (pe >= 1.0) return po >= 1.0 ? 1.0 : 0.0;
  return (po - pe) / (1.0 - pe);
}

AgreementReport agreement(const std::map<std::string, LabelMap>& judgments,
                          const std::map<std::string, std::vector<LabelMap>>& rounds) {
  AgreementReport r;
  for (auto a = judgments.begin(); a != judgments.end(); ++a) {
    for (auto b = std::next(a); b != judgments.end(); ++b) {
      std::size_t shared = 0;
      double k = cohen_kappa(a->second, b->second, &shared);
      if (shared < 2) throw InsufficientOverlap(a->first, b->first, shared);
      r.inter.push_back({a->first, b->first, shared, k});
    }
  }
  for (const auto& [reviewer, maps] : rounds) {
    if (maps.size() < 2) continue;
    double sum = 0;
    std::size_t pairs = 0;
    for (std::size_t i = 0; i < maps.size(); ++i) {
      for (std::size_t j = i + 1; j < maps.size(); ++j) {
        std::size_t shared = 0;
        double k = cohen_kappa(maps[i], maps[j], &shared);
        if (shared < 2) throw InsufficientOverlap(reviewer, reviewer, shared);
        sum += k;
        ++pairs;
      }
    }
    r.intra[reviewer] = sum / double(pairs);
  }
  if (!r.inter.empty()) {
    double s = 0;
    for (const auto& p : r.inter) s += p.kappa;
    r.mean_inter = s / double(r.inter.size());
  }
  if (!r.intra.empty()) {
    double s = 0;
    for (const auto& [name, k] : r.intra) s += k;
    r.mean_intra = s / double(r.intra.size());
  }
  return r;
}

std::map<std::string, LabelMap> judgments_from_pairs(const std::vector<PreferencePair>& pairs) {
  // Latest round wins for the inter-rater view.
  std::map<std::string, std::map<std::string, std::pair<int, std::string>>> latest;
  for (const auto& p : pairs) {
    auto& slot = latest[p.reviewer][p.doc_id];
    if (slot.second.empty() || p.round >= slot.first) slot = {p.round, p.y_w.str()};
  }
  std::map<std::string, LabelMap> out;
  for (const auto& [reviewer, docs] : latest) {
    for (const auto& [doc, v] : docs) out[reviewer][doc] = v.second;
  }
  return out;
}

std::map<std::string, std::vector<LabelMap>> rounds_from_pairs(
    const std::vector<PreferencePair>& pairs) {
  std::map<std::string, std::map<int, LabelMap>> by_round;
  for (const auto& p : pairs) by_round[p.reviewer][p.round][p.doc_id] = p.y_w.str();
  std::map<std::string, std::vector<LabelMap>> out;
  for (auto& [reviewer, rounds] : by_round) {
    for (auto& [round, labels] : rounds) out[reviewer].push_back(std::move(labels));
  }
  return out;
}

Json agreement_to_json(const AgreementReport& r) {
  Json inter = Json::array();
  for (const auto& p : r.inter) {
    inter.push_back({{"reviewer_a", p.reviewer_a},
                     {"reviewer_b", p.reviewer_b},
                     {"shared", p.shared},
                     {"kappa", p.kappa}});
  }
  return Json{{"inter", std::move(inter)},
              {"intra", r.intra},
              {"mean_inter", r.mean_inter ? Json(*r.mean_inter) : Json()},
              {"mean_intra", r.mean_intra ? Json(*r.mean_intra) : Json()}};
}

// ---------------------------------------------------------------------------
// Review queue

std::vector<ReviewItem> review_queue(const corpus::Corpus& corpus,
                                     const std::vector<ClassificationResult>& run_a,
                                     const std::vector<ClassificationResult>& run_b,
                                     const std::vector<PreferencePair>& judged,
                                     const schema::ClassSchema& schema, int iteration) {
  std::map<std::string, HierLabel> a, b;
  for (const auto& r : run_a) a[r.doc_id] = r.label();
  for (const auto& r : run_b) b[r.doc_id] = r.label();
  std::set<std::string> done;
  for (const auto& p : judged) done.insert(p.doc_id);
  std::vector<ReviewItem> out;
  for (const auto& [doc_id, la] : a) {
    auto it = b.find(doc_id);
    if (it == b.end() || it->second == la || done.count(doc_id)) continue;
    const auto* doc = corpus.find(doc_id);
    if (!doc) continue;
    out.push_back({doc_id, doc->text, alias_of(schema, la), alias_of(schema, it->second), iteration});
  }
  return out;
}

Json review_item_to_json(const ReviewItem& item) {
  return Json{{"doc_id", item.doc_id},
              {"text", item.text},
              {"candidate_a", item.candidate_a},
              {"candidate_b", item.candidate_b},
              {"iteration", item.iteration}};
}

}  // namespace taxonomist::fewshot
