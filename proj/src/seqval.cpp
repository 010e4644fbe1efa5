#include "taxonomist/seqval.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>
#include <regex>

#include "taxonomist/errors.hpp"

namespace taxonomist::seqval {

namespace {

std::string join(const std::vector<std::string_view>& words, std::size_t begin, std::size_t end) {
  std::string out;
  for (std::size_t i = begin; i < end; ++i) {
    if (i > begin) out += ' ';
    out += words[i];
  }
  return out;
}

std::size_t removed_words(std::size_t n, double p) {
  if (!(p > 0.0 && p < 1.0)) throw InvalidArgument("truncation proportion must lie in (0, 1)");
  return static_cast<std::size_t>(std::floor(p * double(n) + 1e-9));
}

corpus::ProcessedDocument with_text(const corpus::ProcessedDocument& doc, std::string text) {
  auto out = doc;
  out.token_estimate = estimate_tokens(split_words(text).size());
  out.text = std::move(text);
  return out;
}

// A label, or the error code when the classifier refuses to produce one.
std::string observe(const gateway::ClassifyFn& classify, const corpus::ProcessedDocument& doc) {
  try {
    return classify(doc).str();
  } catch (const UnknownLabel& e) {
    return "!" + e.code();
  } catch (const UnparseableResponse& e) {
    return "!" + e.code();
  }
}

}  // namespace

ShuffleReport test_statelessness(const gateway::ClassifyFn& classify,
                                 const corpus::Corpus& test_set, int n_iter, std::uint64_t seed) {
  if (n_iter < 1) throw InvalidArgument("n_iter must be at least 1");
  ShuffleReport report;
  report.n_iter = n_iter;
  std::map<std::string, std::set<std::string>> seen;
  std::vector<std::size_t> order(test_set.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::mt19937_64 rng(seed);
  try {
    for (int it = 0; it < n_iter; ++it) {
      std::shuffle(order.begin(), order.end(), rng);
      for (auto i : order) {
        const auto& doc = test_set.documents[i];
        seen[doc.id].insert(observe(classify, doc));
      }
      ++report.iterations_completed;
    }
  } catch (const Error& e) {
    report.complete = false;
    report.error = e.code() + ": " + e.what();
  }
  for (auto& [doc, labels] : seen) {
    if (labels.size() > 1) report.unstable_docs[doc] = labels;
  }
  report.inconsistency_count = report.unstable_docs.size();
  return report;
}

std::string truncate_prefix(std::string_view text, double p) {
  auto words = split_words(text);
  return join(words, removed_words(words.size(), p), words.size());
}

std::string truncate_suffix(std::string_view text, double p) {
  auto words = split_words(text);
  return join(words, 0, words.size() - removed_words(words.size(), p));
}

std::string truncate_middle(std::string_view text, double p) {
  auto words = split_words(text);
  auto kept = words.size() - removed_words(words.size(), p);
  auto head = (kept + 1) / 2;
  auto tail = kept - head;
  auto out = join(words, 0, head);
  if (tail) {
    if (!out.empty()) out += ' ';
    out += join(words, words.size() - tail, words.size());
  }
  return out;
}

TruncationReport test_intradoc(const gateway::ClassifyFn& classify,
                               const corpus::Corpus& long_docs, double p,
                               std::size_t min_tokens) {
  if (!(p > 0.0 && p < 1.0)) throw InvalidArgument("truncation proportion must lie in (0, 1)");
  TruncationReport r;
  r.p = p;
  for (const auto& doc : long_docs.documents) {
    auto tokens = estimate_tokens(split_words(doc.text).size());
    if (tokens < min_tokens) {
      r.skipped.push_back(doc.id);
      continue;
    }
    ++r.tested;
    TruncationOutcome o;
    o.baseline = observe(classify, doc);
    o.prefix = observe(classify, with_text(doc, truncate_prefix(doc.text, p)));
    o.suffix = observe(classify, with_text(doc, truncate_suffix(doc.text, p)));
    o.middle = observe(classify, with_text(doc, truncate_middle(doc.text, p)));
    r.i_prefix += o.prefix != o.baseline;
    r.i_suffix += o.suffix != o.baseline;
    r.i_middle += o.middle != o.baseline;
    r.per_doc[doc.id] = std::move(o);
  }
  return r;
}

PromptClassifyFn prompt_classifier(const schema::ClassSchema& schema, gateway::Backend& backend) {
  return [&schema, &backend](const corpus::ProcessedDocument& doc,
                             const prompting::PromptText& prompt) {
    return gateway::classify(doc, prompt, schema, backend).label();
  };
}

PermutationReport test_inprompt(const prompting::PromptSpec& spec,
                                const schema::ClassSchema& schema,
                                const corpus::Corpus& test_set, const PromptClassifyFn& classify,
                                std::size_t cap, std::uint64_t seed) {
  if (spec.examples.empty()) throw InvalidArgument("in-prompt test needs at least one example");
  auto perms = prompting::permutations(spec.examples.size(), cap, seed);
  PermutationReport r;
  r.permutations_tested = perms.size();
  std::map<std::string, std::set<std::string>> seen;
  for (const auto& perm : perms) {
    auto permuted = spec;
    permuted.example_order = perm;
    auto prompt = prompting::build_prompt(schema, permuted);
    gateway::ClassifyFn fn = [&](const corpus::ProcessedDocument& d) { return classify(d, prompt); };
    for (const auto& doc : test_set.documents) seen[doc.id].insert(observe(fn, doc));
  }
  for (auto& [doc, labels] : seen) {
    if (labels.size() > 1) r.unstable_docs[doc] = labels;
  }
  r.i_prompt = r.unstable_docs.size();
  return r;
}

const std::vector<std::string>& default_adversarial_phrases() {
  static const std::vector<std::string> phrases = {
      "ignore previous instructions", "ignore all previous instructions",
      "ignore the above",             "disregard the above",
      "disregard previous instructions", "forget your instructions",
      "forget all previous",          "new instructions",
      "system prompt",                "classify this as",
      "label this as",                "override the classification",
  };
  return phrases;
}

FilterOutcome filter_adversarial(const corpus::ProcessedDocument& doc,
                                 const std::vector<std::string>& phrases) {
  FilterOutcome out;
  std::string normalized;
  const auto folded = case_fold(doc.text);
  for (auto w : split_words(folded)) {
    if (!normalized.empty()) normalized += ' ';
    normalized += w;
  }
  for (const auto& phrase : phrases) {
    if (phrase.rfind("re:", 0) == 0) {
      std::regex re(phrase.substr(3), std::regex::icase | std::regex::ECMAScript);
      for (auto it = std::sregex_iterator(normalized.begin(), normalized.end(), re);
           it != std::sregex_iterator(); ++it) {
        auto pos = static_cast<std::size_t>(it->position());
        out.matches.push_back({phrase, pos, pos + static_cast<std::size_t>(it->length())});
      }
      continue;
    }
    std::string needle;
    const auto folded_phrase = case_fold(phrase);
    for (auto w : split_words(folded_phrase)) {
      if (!needle.empty()) needle += ' ';
      needle += w;
    }
    if (needle.empty()) continue;
    for (auto pos : find_word_bounded(normalized, needle)) {
      out.matches.push_back({phrase, pos, pos + needle.size()});
    }
  }
  std::sort(out.matches.begin(), out.matches.end(),
            [](const auto& a, const auto& b) { return a.begin < b.begin; });
  out.flagged = !out.matches.empty();
  return out;
}

QuarantineResult quarantine(const corpus::Corpus& corpus, const std::vector<std::string>& phrases) {
  QuarantineResult q;
  q.clean.provenance = corpus.provenance;
  for (const auto& doc : corpus.documents) {
    auto outcome = filter_adversarial(doc, phrases);
    if (outcome.flagged) {
      q.flagged.emplace_back(doc, std::move(outcome));
    } else {
      q.clean.documents.push_back(doc);
    }
  }
  return q;
}

std::string quarantine_to_jsonl(const QuarantineResult& q) {
  std::string out;
  for (const auto& [doc, outcome] : q.flagged) {
    Json j{{"doc", corpus::document_to_json(doc)}, {"matches", filter_outcome_to_json(outcome)["matches"]}};
    out += canonical_json(j) + "\n";
  }
  return out;
}

std::vector<Leak> obfuscation_audit(const schema::ClassSchema& schema,
                                    const std::vector<Artifact>& artifacts) {
  std::vector<std::string> names;
  for (const auto& p : schema.parents) {
    names.push_back(p.internal_name);
    for (const auto& c : p.children) names.push_back(c.internal_name);
  }
  std::vector<Leak> leaks;
  for (const auto& a : artifacts) {
    auto folded = case_fold(a.text);
    for (const auto& name : names) {
      auto needle = case_fold(name);
      if (trim(needle).empty()) continue;
      for (auto pos : find_word_bounded(folded, needle)) {
        auto line = 1 + static_cast<std::size_t>(
                            std::count(a.text.begin(), a.text.begin() + long(pos), '\n'));
        leaks.push_back({a.name, name, pos, line});
      }
    }
  }
  std::sort(leaks.begin(), leaks.end(), [](const Leak& x, const Leak& y) {
    return std::tie(x.artifact, x.offset, x.internal_name) <
           std::tie(y.artifact, y.offset, y.internal_name);
  });
  return leaks;
}

namespace {

Json label_sets(const std::map<std::string, std::set<std::string>>& m) {
  Json j = Json::object();
  for (const auto& [doc, labels] : m) j[doc] = labels;
  return j;
}

}  // namespace

Json shuffle_report_to_json(const ShuffleReport& r) {
  return Json{{"inconsistency_count", r.inconsistency_count},
              {"unstable_docs", label_sets(r.unstable_docs)},
              {"n_iter", r.n_iter},
              {"iterations_completed", r.iterations_completed},
              {"complete", r.complete},
              {"error", r.error}};
}

Json truncation_report_to_json(const TruncationReport& r) {
  Json per_doc = Json::object();
  for (const auto& [doc, o] : r.per_doc) {
    per_doc[doc] = {{"baseline", o.baseline}, {"prefix", o.prefix}, {"suffix", o.suffix},
                    {"middle", o.middle}};
  }
  return Json{{"i_prefix", r.i_prefix}, {"i_suffix", r.i_suffix}, {"i_middle", r.i_middle},
              {"p", r.p},               {"tested", r.tested},     {"skipped", r.skipped},
              {"per_doc", std::move(per_doc)}};
}

Json permutation_report_to_json(const PermutationReport& r) {
  return Json{{"i_prompt", r.i_prompt},
              {"permutations_tested", r.permutations_tested},
              {"unstable_docs", label_sets(r.unstable_docs)}};
}

Json filter_outcome_to_json(const FilterOutcome& f) {
  Json matches = Json::array();
  for (const auto& m : f.matches) {
    matches.push_back({{"pattern", m.pattern}, {"begin", m.begin}, {"end", m.end}});
  }
  return Json{{"flagged", f.flagged}, {"matches", std::move(matches)}};
}

Json leaks_to_json(const std::vector<Leak>& leaks) {
  Json out = Json::array();
  for (const auto& l : leaks) {
    out.push_back({{"artifact", l.artifact},
                   {"internal_name", l.internal_name},
                   {"offset", l.offset},
                   {"line", l.line}});
  }
  return out;
}

}  // namespace taxonomist::seqval
