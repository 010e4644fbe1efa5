#include "taxonomist/cli.hpp"

#include <algorithm>
#include <cmath>
#include <chrono>
#include <iostream>
#include <sstream>

#include <CLI11.hpp>

#include "taxonomist/alignment.hpp"
#include "taxonomist/corpus.hpp"
#include "taxonomist/drift.hpp"
#include "taxonomist/errors.hpp"
#include "taxonomist/fewshot.hpp"
#include "taxonomist/gateway.hpp"
#include "taxonomist/golden.hpp"
#include "taxonomist/optimizer.hpp"
#include "taxonomist/prompting.hpp"
#include "taxonomist/schema.hpp"
#include "taxonomist/seqval.hpp"
#include "taxonomist/serve.hpp"
#include "taxonomist/stats.hpp"
#include "taxonomist/store.hpp"

namespace fs = std::filesystem;

namespace taxonomist::cli {

namespace {

constexpr const char* kEpoch = "1970-01-01T00:00:00Z";

/// A validation outcome rather than an operational failure: exit 2.
class Rejected : public Error {
 public:
  explicit Rejected(const std::string& message) : Error("Rejected", message) {}
};

struct Globals {
  std::string config;
  std::string store;
  std::string backend;
  std::string schema;
  std::string timestamp;
  std::uint64_t seed = 0;
  bool json = false;
};

/// What a command produced. `persist` stores `body` as a report artifact.
struct Report {
  Json body;
  std::string summary;
  int exit_code = kExitOk;
  bool persist = true;
};

std::vector<double> parse_numbers(const std::string& csv) {
  std::vector<double> out;
  std::stringstream ss(csv);
  std::string item;
  while (std::getline(ss, item, ',')) {
    auto t = trim(item);
    if (t.empty()) continue;
    try {
      std::size_t used = 0;
      out.push_back(std::stod(t, &used));
      if (used != t.size()) throw std::invalid_argument(t);
    } catch (const std::exception&) {
      throw UsageError("not a number: '" + t + "'");
    }
  }
  return out;
}

std::vector<std::size_t> parse_counts(const std::string& csv) {
  std::vector<std::size_t> out;
  for (double v : parse_numbers(csv)) {
    if (v < 0 || v != std::floor(v)) throw UsageError("counts must be non-negative integers");
    out.push_back(static_cast<std::size_t>(v));
  }
  return out;
}

std::vector<std::string> split_list(const std::string& csv) {
  std::vector<std::string> out;
  std::stringstream ss(csv);
  std::string item;
  while (std::getline(ss, item, ',')) {
    auto t = trim(item);
    if (!t.empty()) out.push_back(t);
  }
  return out;
}

class Context {
 public:
  explicit Context(const Globals& g) : globals_(g), store_(store::Store::resolve_root(
                                                       g.store.empty() ? std::nullopt
                                                                       : std::optional(g.store))) {
    if (!g.config.empty()) {
      config_ = load_structured_file(g.config);
      config_dir_ = fs::path(g.config).parent_path();
    } else {
      config_ = Json::object();
    }
    backend_config_ = gateway::backend_config_from_json(
        config_.contains("backend") ? config_.at("backend") : Json::object(), config_dir_);
    if (!g.backend.empty()) {
      if (g.backend == "mock") {
        backend_config_.kind = gateway::BackendKind::Mock;
      } else if (g.backend == "http") {
        backend_config_.kind = gateway::BackendKind::Http;
        if (backend_config_.endpoint.empty()) throw InvalidConfig("http backend requires an endpoint");
      } else {
        throw UsageError("unknown backend '" + g.backend + "' (expected mock or http)");
      }
    }
    preprocess_ = corpus::preprocess_config_from_json(
        config_.contains("preprocess") ? config_.at("preprocess") : Json::object());
  }

  store::Store& store() { return store_; }
  const Globals& globals() const { return globals_; }
  const corpus::PreprocessConfig& preprocess() const { return preprocess_; }

  Json section(const char* name) const {
    return config_.contains(name) ? config_.at(name) : Json::object();
  }

  const schema::ClassSchema& schema() {
    if (schema_) return *schema_;
    std::string path = globals_.schema;
    fs::path base;
    if (path.empty() && config_.contains("schema")) {
      path = config_.at("schema").get<std::string>();
      base = config_dir_;
    }
    if (!path.empty()) {
      fs::path p = path;
      if (p.is_relative() && !base.empty()) p = base / p;
      schema_ = schema::load_schema(p);
    } else if (auto s = store_.latest_schema()) {
      schema_ = *s;
    } else {
      throw InvalidConfig("no schema: pass --schema or set 'schema' in the config file");
    }
    auto violations = schema::validate_schema(*schema_);
    if (!violations.empty()) {
      std::string msg = "schema is invalid:";
      for (const auto& v : violations) msg += "\n  " + schema::to_string(v.kind) + " at " + v.path + ": " + v.message;
      throw Rejected(msg);
    }
    return *schema_;
  }

  void adopt_schema(const schema::ClassSchema& s) {
    schema_ = s;
    backend_.reset();
  }

  gateway::Backend& backend() {
    if (!backend_) {
      auto cfg = backend_config_;
      if (cfg.kind == gateway::BackendKind::Mock) cfg.mock_profile.bind(schema());
      backend_ = gateway::make_backend(cfg);
    }
    return *backend_;
  }

  /// A backend that does not need a schema (embeddings, topic discovery).
  gateway::Backend& raw_backend() {
    if (backend_) return *backend_;
    if (schema_ || globals_.schema.size() || config_.contains("schema")) return backend();
    backend_ = gateway::make_backend(backend_config_);
    return *backend_;
  }

  bool simulated() const { return backend_config_.kind == gateway::BackendKind::Mock; }

  std::string now() const {
    if (!globals_.timestamp.empty()) {
      if (!parse_rfc3339(globals_.timestamp)) throw UsageError("--timestamp is not RFC3339");
      return globals_.timestamp;
    }
    if (simulated()) return kEpoch;
    return format_rfc3339(std::chrono::floor<std::chrono::seconds>(std::chrono::system_clock::now()));
  }

  /// A JSONL file path (preprocessed with the configured rules) or a stored digest.
  corpus::Corpus corpus(const std::string& arg) {
    if (arg.empty()) throw UsageError("a corpus (file or stored digest) is required");
    if (fs::exists(arg)) return corpus::load_corpus(arg, preprocess_);
    return store_.load_corpus(arg);
  }

  prompting::PromptSpec prompt(const std::string& arg) {
    prompting::PromptSpec spec;
    if (arg.empty()) {
      spec.schema_version = schema().version;
    } else if (fs::exists(arg)) {
      spec = prompting::spec_from_json(load_structured_file(arg));
    } else {
      spec = store_.load_prompt(arg);
    }
    return prompting::finalize(schema(), spec);
  }

  GoldenSet golden(const std::string& path) {
    if (path.empty()) throw UsageError("--golden is required");
    return load_golden(path, schema());
  }

 private:
  Globals globals_;
  store::Store store_;
  Json config_;
  fs::path config_dir_;
  gateway::BackendConfig backend_config_;
  corpus::PreprocessConfig preprocess_;
  std::optional<schema::ClassSchema> schema_;
  std::unique_ptr<gateway::Backend> backend_;
};

std::map<std::string, std::string> parent_assignment(const std::vector<ClassificationResult>& results) {
  std::map<std::string, std::string> out;
  for (const auto& r : results) out[r.doc_id] = r.parent;
  return out;
}

std::string run_classification(Context& ctx, const corpus::Corpus& corpus,
                               const prompting::PromptSpec& spec, std::size_t workers,
                               std::vector<ClassificationResult>* results_out = nullptr) {
  const auto& schema = ctx.schema();
  auto prompt = prompting::build_prompt(schema, spec);
  auto digest = ctx.store().save_corpus(corpus);
  ctx.store().save_schema(schema);
  ctx.store().save_prompt(spec, prompt.text);
  store::RunRecord record;
  record.prompt_hash = prompt.hash;
  record.schema_version = schema.version;
  record.backend_id = ctx.backend().id();
  record.corpus_digest = digest;
  record.started = ctx.now();
  record.results = gateway::classify_batch(corpus.documents, prompt, schema, ctx.backend(), workers);
  record.finished = ctx.now();
  if (results_out) *results_out = record.results;
  return ctx.store().save_run(std::move(record));
}

gateway::TopicDiscovery topics_for(Context& ctx, const corpus::Corpus& corpus,
                                   const std::string& digest, std::size_t max_topics,
                                   const std::string& topic_prompt) {
  auto& backend = ctx.raw_backend();
  auto key = digest + "-" + std::to_string(max_topics) + "-" +
             sha256_hex(topic_prompt + "\n" + backend.id()).substr(0, 12);
  auto path = ctx.store().root() / "topics" / (key + ".json");
  if (fs::exists(path)) {
    auto j = Json::parse(read_text_file(path));
    gateway::TopicDiscovery d;
    for (const auto& t : j.at("topics")) {
      d.topics.add({t.at("name").get<std::string>(), t.at("description").get<std::string>()});
    }
    d.assignment = j.at("assignment").get<std::map<std::string, std::string>>();
    return d;
  }
  auto d = gateway::discover_topics(corpus, topic_prompt, max_topics, backend);
  Json topics = Json::array();
  for (const auto& t : d.topics.topics()) {
    topics.push_back({{"name", t.name}, {"description", t.description}});
  }
  ctx.store().write_artifact(fs::path("topics") / (key + ".json"),
                             Json{{"topics", topics}, {"assignment", d.assignment}}.dump(2) + "\n");
  return d;
}

alignment::DiagnosticThresholds diag_thresholds(const Context& ctx) {
  auto t = ctx.section("thresholds");
  alignment::DiagnosticThresholds d;
  d.failed_share = t.value("failed_share", d.failed_share);
  d.vague_purity = t.value("vague_purity", d.vague_purity);
  d.validated_purity = t.value("validated_purity", d.validated_purity);
  d.validate();
  return d;
}

std::vector<drift::Window> sorted_windows(Context& ctx) {
  std::vector<drift::Window> out;
  for (const auto& id : ctx.store().list_windows()) out.push_back(ctx.store().load_window(id));
  std::stable_sort(out.begin(), out.end(), [](const auto& a, const auto& b) {
    return std::tie(a.start, a.id) < std::tie(b.start, b.id);
  });
  return out;
}

drift::EmbeddingMap embed_docs(Context& ctx, const corpus::Corpus& corpus,
                               const std::vector<ClassificationResult>& results) {
  drift::EmbeddingMap out;
  for (const auto& r : results) {
    if (out.count(r.doc_id)) continue;
    const auto* doc = corpus.find(r.doc_id);
    if (!doc) throw NotFound("document " + r.doc_id + " in the supplied corpus");
    out.emplace(r.doc_id, gateway::embed(ctx.raw_backend(), doc->text));
  }
  return out;
}

HierLabel resolve_label(const schema::ClassSchema& schema, const std::string& s) {
  try {
    return fewshot::label_from_alias(schema, s);
  } catch (const UnknownLabel&) {
    auto l = fewshot::label_from_path(s);
    if (!fewshot::schema_has(schema, l)) throw UnknownLabel(s);
    return l;
  }
}

std::vector<fewshot::Candidate> load_candidates(const std::string& path) {
  if (path.empty()) throw UsageError("--candidates is required");
  std::vector<fewshot::Candidate> out;
  std::istringstream in(read_text_file(path));
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (trim(line).empty()) continue;
    try {
      auto j = Json::parse(line);
      fewshot::Candidate c;
      c.doc_id = j.at("doc_id").get<std::string>();
      c.text = j.at("text").get<std::string>();
      c.label.parent = j.at("parent").get<std::string>();
      if (j.contains("child") && !j.at("child").is_null()) c.label.child = j.at("child").get<std::string>();
      c.origin = prompting::origin_from_string(j.value("origin", std::string("seed")));
      out.push_back(std::move(c));
    } catch (const Json::exception& e) {
      throw ParseError(line_no, e.what());
    }
  }
  return out;
}

void check_budget(Report& r, const std::string& what, std::size_t value, std::size_t budget) {
  if (value > budget) {
    r.exit_code = kExitRejected;
    r.summary += "\n" + what + " = " + std::to_string(value) + " exceeds budget " + std::to_string(budget);
  }
}

std::string fmt(double v) {
  std::ostringstream ss;
  ss.precision(6);
  ss << v;
  return ss.str();
}

}  // namespace

CommandOutcome dispatch(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  CLI::App app{"Build, validate, and monitor LLM-driven hierarchical text classifiers."};
  app.name("taxonomist");
  app.require_subcommand(1);
  app.fallthrough();

  Globals g;
  app.add_option("--config", g.config, "TOML/JSON config with [backend], [preprocess], [thresholds], [drift]");
  app.add_option("--store", g.store, "store root (default: $TAXONOMIST_STORE or ./.taxonomist)");
  app.add_option("--backend", g.backend, "mock or http; overrides the config");
  app.add_option("--schema", g.schema, "schema file; overrides the config");
  app.add_option("--seed", g.seed, "seed for shuffles and permutation sampling");
  app.add_option("--timestamp", g.timestamp, "RFC3339 clock override");
  app.add_flag("--json", g.json, "print one JSON document");

  // Command arguments. One struct keeps the option bindings in one place.
  struct {
    std::string input, corpus, prompt, golden, run, edits, snapshot, export_path, format = "json";
    std::string candidates, doc_id, winner, loser, reviewer = "cli", source = "human", constitution;
    std::string labels_list, phrases, a, b, p_list, q_list, ref, cur, window, topic_prompt;
    std::vector<std::string> artifacts;
    std::size_t workers = 1, max_topics = 20, cap = seqval::kDefaultPermutationCap;
    std::size_t min_tokens = seqval::kDefaultMinTokens, budget = 0, min_members = 1;
    std::size_t b_count = 0, c_count = 0;
    int runs = 10, round = 1, port = 8080;
    double theta = 0.9, epsilon = fewshot::kDefaultEpsilon, p = 0.3, smoothing = stats::kDefaultSmoothing;
    double alpha = stats::kDefaultAlpha;
    bool quarantine = false, correction = false, probabilities = false;
    std::string host = "127.0.0.1";
  } o;

  auto sub = [](CLI::App* parent, const char* name, const char* help) {
    return parent->add_subcommand(name, help);
  };

  auto* ingest = sub(&app, "ingest", "preprocess a JSONL corpus into the store");
  ingest->add_option("--input", o.input)->required();
  ingest->add_flag("--quarantine", o.quarantine, "hold back documents matching adversarial phrases");
  ingest->add_option("--phrases", o.phrases, "phrase list file, one per line");

  auto* classify = sub(&app, "classify", "classify a corpus and record a run");
  classify->add_option("--corpus", o.corpus)->required();
  classify->add_option("--prompt", o.prompt, "prompt spec file or stored hash");
  classify->add_option("--workers", o.workers);

  auto* topics = sub(&app, "topics", "unconstrained topic discovery");
  topics->add_option("--corpus", o.corpus)->required();
  topics->add_option("--max-topics", o.max_topics);
  topics->add_option("--topic-prompt", o.topic_prompt, "instructions file");

  auto* align = sub(&app, "align", "alignment matrix between a run and discovered topics");
  align->add_option("--run", o.run)->required();
  align->add_option("--max-topics", o.max_topics);
  align->add_option("--topic-prompt", o.topic_prompt);
  align->add_option("--export", o.export_path, "heatmap output file");
  align->add_option("--format", o.format, "csv, svg or json");

  auto* diagnose = sub(&app, "diagnose", "per-class verdicts from a stored alignment");
  diagnose->add_option("--run", o.run)->required();

  auto* refine = sub(&app, "refine", "apply definition edits; prompt moves to t+1");
  refine->add_option("--prompt", o.prompt);
  refine->add_option("--edits", o.edits, "JSON array of edits")->required();
  refine->add_option("--snapshot", o.snapshot, "alignment run id that motivated the edits");

  auto* optimize = sub(&app, "optimize", "shortest prompt with V >= theta");
  optimize->add_option("--prompt", o.prompt);
  optimize->add_option("--golden", o.golden)->required();
  optimize->add_option("--theta", o.theta);

  auto* fewshot_cmd = sub(&app, "fewshot", "few-shot example ranking and selection");
  fewshot_cmd->require_subcommand(1);
  auto* rank = sub(fewshot_cmd, "rank", "rank candidates by similarity to their class");
  rank->add_option("--candidates", o.candidates)->required();
  auto* select = sub(fewshot_cmd, "select", "choose k under the KL constraint");
  select->add_option("--candidates", o.candidates)->required();
  select->add_option("--golden", o.golden)->required();
  select->add_option("--corpus", o.corpus, "monitoring corpus")->required();
  select->add_option("--epsilon", o.epsilon);
  select->add_option("--prompt", o.prompt, "base prompt");

  auto* prefs = sub(&app, "prefs", "preference data");
  prefs->require_subcommand(1);
  auto* prefs_add = sub(prefs, "add", "record a reviewer preference");
  prefs_add->add_option("--doc-id", o.doc_id)->required();
  prefs_add->add_option("--winner", o.winner)->required();
  prefs_add->add_option("--loser", o.loser)->required();
  prefs_add->add_option("--reviewer", o.reviewer);
  prefs_add->add_option("--round", o.round);
  prefs_add->add_option("--source", o.source);
  auto* prefs_judge = sub(prefs, "judge", "ask the judge backend to pick between two labels");
  prefs_judge->add_option("--corpus", o.corpus)->required();
  prefs_judge->add_option("--doc-id", o.doc_id)->required();
  prefs_judge->add_option("--candidates", o.labels_list, "two labels, comma separated")->required();
  prefs_judge->add_option("--constitution", o.constitution)->required();
  prefs_judge->add_option("--round", o.round);
  sub(prefs, "agreement", "inter- and intra-rater kappa over stored preferences");

  auto* validate = sub(&app, "validate", "robustness suite");
  validate->require_subcommand(1);
  auto* stateless = sub(validate, "stateless", "repeated shuffled classification");
  stateless->add_option("--corpus", o.corpus)->required();
  stateless->add_option("--runs", o.runs);
  stateless->add_option("--prompt", o.prompt);
  stateless->add_option("--budget", o.budget);
  auto* intradoc = sub(validate, "intradoc", "prefix, suffix and middle truncation");
  intradoc->add_option("--corpus", o.corpus)->required();
  intradoc->add_option("--p", o.p);
  intradoc->add_option("--min-tokens", o.min_tokens);
  intradoc->add_option("--prompt", o.prompt);
  intradoc->add_option("--budget", o.budget);
  auto* inprompt = sub(validate, "inprompt", "few-shot order permutations");
  inprompt->add_option("--corpus", o.corpus)->required();
  inprompt->add_option("--prompt", o.prompt)->required();
  inprompt->add_option("--cap", o.cap);
  inprompt->add_option("--budget", o.budget);
  auto* adversarial = sub(validate, "adversarial", "scan for injection phrases");
  adversarial->add_option("--corpus", o.corpus)->required();
  adversarial->add_option("--phrases", o.phrases);
  auto* obfuscation = sub(validate, "obfuscation", "look for internal class names in outputs");
  obfuscation->add_option("--artifact", o.artifacts, "user-facing files to audit");
  obfuscation->add_option("--prompt", o.prompt);

  auto* stats_cmd = sub(&app, "stats", "statistical tests");
  stats_cmd->require_subcommand(1);
  auto* mcnemar = sub(stats_cmd, "mcnemar", "paired test from discordant counts");
  mcnemar->add_option("--b", o.b_count, "A right, B wrong")->required();
  mcnemar->add_option("--c", o.c_count, "A wrong, B right")->required();
  mcnemar->add_flag("--correction", o.correction, "continuity correction");
  mcnemar->add_option("--alpha", o.alpha);
  auto* chisq = sub(stats_cmd, "chisq", "homogeneity of two class distributions");
  chisq->add_option("--a", o.a, "comma-separated counts")->required();
  chisq->add_option("--b", o.b, "comma-separated counts")->required();
  chisq->add_option("--labels", o.labels_list);
  chisq->add_option("--alpha", o.alpha);
  auto* kl = sub(stats_cmd, "kl", "Kullback-Leibler divergence in nats");
  kl->add_option("--p", o.p_list)->required();
  kl->add_option("--q", o.q_list)->required();
  kl->add_option("--smoothing", o.smoothing);
  kl->add_flag("--probabilities", o.probabilities, "inputs are probabilities; no smoothing");

  auto* drift_cmd = sub(&app, "drift", "post-deployment monitoring");
  drift_cmd->require_subcommand(1);
  auto* drift_window = sub(drift_cmd, "window", "cut a run into monitoring windows");
  drift_window->add_option("--run", o.run)->required();
  auto* drift_freeze = sub(drift_cmd, "freeze", "freeze class centroids from a stable window");
  drift_freeze->add_option("--window", o.window)->required();
  drift_freeze->add_option("--corpus", o.corpus)->required();
  drift_freeze->add_option("--min-members", o.min_members);
  auto* drift_check = sub(drift_cmd, "check", "evaluate drift between two windows");
  drift_check->add_option("--ref", o.ref);
  drift_check->add_option("--cur", o.cur);
  drift_check->add_option("--corpus", o.corpus, "texts for cohesion and novelty");
  drift_check->add_option("--max-topics", o.max_topics);

  auto* golden_cmd = sub(&app, "golden", "golden-set evaluation");
  golden_cmd->require_subcommand(1);
  auto* golden_eval_cmd = sub(golden_cmd, "eval", "metrics on a golden set");
  golden_eval_cmd->add_option("--golden", o.golden)->required();
  golden_eval_cmd->add_option("--prompt", o.prompt);

  auto* serve_cmd = sub(&app, "serve", "JSON API for the review companion");
  serve_cmd->add_option("--port", o.port);
  serve_cmd->add_option("--host", o.host);

  try {
    std::vector<std::string> reversed(args.rbegin(), args.rend());
    app.parse(reversed);
  } catch (const CLI::CallForHelp&) {
    out << app.help();
    return {kExitOk, "help", std::nullopt};
  } catch (const CLI::CallForAllHelp&) {
    out << app.help("", CLI::AppFormatMode::All);
    return {kExitOk, "help", std::nullopt};
  } catch (const CLI::ParseError& e) {
    err << "error: " << e.what() << "\n\n" << app.help();
    return {kExitError, e.what(), std::nullopt};
  }

  std::string command;
  for (CLI::App* node = &app;;) {
    auto chosen = node->get_subcommands();
    if (chosen.empty()) break;
    node = chosen.front();
    command += (command.empty() ? "" : " ") + node->get_name();
  }

  Report report;
  try {
    Context ctx(g);

    if (command == "ingest") {
      auto c = corpus::load_corpus(o.input, ctx.preprocess());
      Json body{{"documents", c.size()}};
      if (o.quarantine) {
        std::vector<std::string> phrases = seqval::default_adversarial_phrases();
        if (!o.phrases.empty()) phrases = split_list(read_text_file(o.phrases));
        auto q = seqval::quarantine(c, phrases);
        auto side = seqval::quarantine_to_jsonl(q);
        c = q.clean;
        if (!q.flagged.empty()) {
          auto name = sha256_hex(side).substr(0, 16) + ".jsonl";
          ctx.store().write_artifact(fs::path("quarantine") / name, side);
          body["quarantine_file"] = "quarantine/" + name;
        }
        body["quarantined"] = q.flagged.size();
        body["documents"] = c.size();
      }
      auto digest = ctx.store().save_corpus(c);
      body["corpus_digest"] = digest;
      body["config_hash"] = c.provenance.config_hash;
      report.body = body;
      report.summary = "ingested " + std::to_string(c.size()) + " documents as " + digest;
    } else if (command == "classify") {
      auto c = ctx.corpus(o.corpus);
      auto spec = ctx.prompt(o.prompt);
      std::vector<ClassificationResult> results;
      auto run_id = run_classification(ctx, c, spec, o.workers, &results);
      auto dist = stats::class_distribution(results, ctx.schema());
      report.body = {{"run_id", run_id},
                     {"prompt_hash", spec.hash},
                     {"results", results.size()},
                     {"distribution", stats::distribution_to_json(dist)}};
      report.summary = "run " + run_id + ": " + std::to_string(results.size()) + " documents classified";
    } else if (command == "topics") {
      auto c = ctx.corpus(o.corpus);
      auto digest = ctx.store().save_corpus(c);
      auto prompt = o.topic_prompt.empty() ? std::string(gateway::kDefaultTopicPrompt)
                                           : read_text_file(o.topic_prompt);
      auto d = topics_for(ctx, c, digest, o.max_topics, prompt);
      Json topics_json = Json::array();
      for (const auto& t : d.topics.topics()) {
        topics_json.push_back({{"name", t.name}, {"description", t.description}});
      }
      report.body = {{"corpus_digest", digest}, {"topics", topics_json}, {"assignment", d.assignment}};
      report.summary = std::to_string(d.topics.size()) + " topics over " + std::to_string(c.size()) + " documents";
    } else if (command == "align") {
      auto run = ctx.store().load_run(o.run);
      auto c = ctx.store().load_corpus(run.corpus_digest);
      auto prompt = o.topic_prompt.empty() ? std::string(gateway::kDefaultTopicPrompt)
                                           : read_text_file(o.topic_prompt);
      auto d = topics_for(ctx, c, run.corpus_digest, o.max_topics, prompt);
      std::vector<std::string> cols;
      for (const auto& t : d.topics.topics()) cols.push_back(t.name);
      auto m = alignment::build_alignment(parent_assignment(run.results), d.assignment,
                                          ctx.schema().parent_names(), cols);
      m.run_id = run.run_id;
      ctx.store().save_alignment(m);
      if (!o.export_path.empty()) {
        alignment::export_heatmap(m, o.export_path, alignment::heatmap_format_from_string(o.format));
      }
      auto diags = alignment::diagnose(m, diag_thresholds(ctx));
      report.body = {{"matrix", alignment::matrix_to_json(m)},
                     {"diagnostics", alignment::diagnostics_to_json(diags)},
                     {"class_size_variance", alignment::class_size_variance(m)}};
      report.summary = "alignment " + std::to_string(m.rows.size()) + "x" + std::to_string(m.cols.size()) +
                       " for run " + run.run_id;
    } else if (command == "diagnose") {
      auto m = ctx.store().load_alignment(o.run);
      auto diags = alignment::diagnose(m, diag_thresholds(ctx));
      report.body = {{"run_id", o.run},
                     {"diagnostics", alignment::diagnostics_to_json(diags)},
                     {"class_size_variance", alignment::class_size_variance(m)}};
      for (const auto& d : diags) {
        report.summary += d.class_name + ": " + alignment::to_string(d.verdict) + " (purity " +
                          fmt(d.purity) + ", share " + fmt(d.support_share) + ")\n";
      }
    } else if (command == "refine") {
      auto spec = ctx.prompt(o.prompt);
      std::vector<prompting::DefinitionEdit> edits;
      for (const auto& e : load_structured_file(o.edits)) edits.push_back(prompting::edit_from_json(e));
      const auto old_schema = ctx.schema();
      auto result = prompting::refine_prompt(old_schema, spec, edits, o.snapshot);
      auto violations = schema::validate_schema(result.schema);
      if (!violations.empty()) throw Rejected("refined schema is invalid: " + violations.front().message);
      auto rendered = prompting::build_prompt(result.schema, result.spec);
      ctx.store().save_schema(old_schema);
      ctx.store().save_schema(result.schema);
      ctx.store().save_prompt(result.spec, rendered.text);
      auto diff = schema::diff_schema(old_schema, result.schema);
      report.body = {{"spec", prompting::spec_to_json(result.spec)},
                     {"schema", schema::schema_to_json(result.schema)},
                     {"diff", {{"added", diff.added}, {"removed", diff.removed}, {"changed", diff.changed}}}};
      if (!o.snapshot.empty()) {
        // Balance of the snapshot that motivated the edits; the loop itself never stops on it.
        report.body["class_size_variance"] = alignment::class_size_variance(ctx.store().load_alignment(o.snapshot));
      }
      report.summary = "prompt iteration " + std::to_string(result.spec.iteration) + " (" +
                       result.spec.hash.substr(0, 12) + "), schema v" +
                       std::to_string(result.schema.version);
    } else if (command == "optimize") {
      auto spec = ctx.prompt(o.prompt);
      auto golden = ctx.golden(o.golden);
      try {
        auto r = prompting::optimize_prompt(ctx.schema(), spec, golden, o.theta, ctx.backend());
        ctx.store().save_prompt(r.spec, prompting::build_prompt(ctx.schema(), r.spec).text);
        report.body = prompting::optimize_result_to_json(r);
        report.summary = "tokens " + std::to_string(r.input_tokens) + " -> " + std::to_string(r.output_tokens) +
                         ", V = " + fmt(r.score) + " (" + std::to_string(r.steps.size()) + " segments removed)";
      } catch (const ThresholdUnreachable& e) {
        throw Rejected(e.what());
      }
    } else if (command == "fewshot rank") {
      auto ranked = fewshot::rank_examples(load_candidates(o.candidates),
                                           fewshot::class_descriptions(ctx.schema()), ctx.backend());
      Json arr = Json::array();
      for (const auto& r : ranked) {
        arr.push_back({{"doc_id", r.doc_id}, {"class", r.class_name}, {"similarity", r.similarity}});
        report.summary += r.doc_id + "  " + r.class_name + "  " + fmt(r.similarity) + "\n";
      }
      report.body = {{"ranked", arr}};
    } else if (command == "fewshot select") {
      auto ranked = fewshot::rank_examples(load_candidates(o.candidates),
                                           fewshot::class_descriptions(ctx.schema()), ctx.backend());
      auto base = ctx.prompt(o.prompt);
      auto golden = ctx.golden(o.golden);
      auto monitoring = ctx.corpus(o.corpus);
      auto zero_shot = base;
      auto baseline_results = gateway::classify_batch(
          monitoring.documents, prompting::build_prompt(ctx.schema(), zero_shot), ctx.schema(), ctx.backend());
      auto baseline = stats::class_distribution(baseline_results, ctx.schema());
      auto r = fewshot::select_k(ranked, golden, monitoring, baseline, o.epsilon, ctx.schema(), base,
                                 ctx.backend());
      auto chosen = base;
      for (const auto& ex : r.chosen) chosen.examples.push_back(ex);
      chosen = prompting::finalize(ctx.schema(), chosen);
      ctx.store().save_prompt(chosen, prompting::build_prompt(ctx.schema(), chosen).text);
      report.body = fewshot::select_k_to_json(r);
      report.body["prompt_hash"] = chosen.hash;
      report.summary = "k* = " + std::to_string(r.k) + " (prompt " + chosen.hash.substr(0, 12) + ")";
    } else if (command == "prefs add") {
      const auto& schema = ctx.schema();
      corpus::ProcessedDocument doc;
      doc.id = o.doc_id;
      auto source = o.source == "judge" ? fewshot::PreferenceSource::Judge : fewshot::PreferenceSource::Human;
      fewshot::PreferenceStore prefs(ctx.store().preferences_path());
      store::StoreLock lock(ctx.store().root());
      auto pair = fewshot::record_preference(prefs, doc, resolve_label(schema, o.winner),
                                             resolve_label(schema, o.loser), o.reviewer, source,
                                             o.round, schema, ctx.now());
      report.body = fewshot::preference_to_json(pair);
      report.persist = false;
      report.summary = "recorded " + pair.y_w.str() + " over " + pair.y_l.str() + " for " + pair.doc_id;
    } else if (command == "prefs judge") {
      const auto& schema = ctx.schema();
      auto c = ctx.corpus(o.corpus);
      const auto* doc = c.find(o.doc_id);
      if (!doc) throw NotFound("document " + o.doc_id);
      std::vector<HierLabel> candidates;
      for (const auto& s : split_list(o.labels_list)) candidates.push_back(resolve_label(schema, s));
      auto constitution = fewshot::parse_constitution(read_text_file(o.constitution));
      auto pair = fewshot::judge_preference(*doc, candidates, constitution, schema, ctx.backend(),
                                            o.round, ctx.now());
      fewshot::PreferenceStore prefs(ctx.store().preferences_path());
      store::StoreLock lock(ctx.store().root());
      prefs.append(pair);
      report.body = fewshot::preference_to_json(pair);
      report.persist = false;
      report.summary = "judge preferred " + pair.y_w.str() + " over " + pair.y_l.str();
    } else if (command == "prefs agreement") {
      fewshot::PreferenceStore prefs(ctx.store().preferences_path());
      auto pairs = prefs.load();
      auto r = fewshot::agreement(fewshot::judgments_from_pairs(pairs), fewshot::rounds_from_pairs(pairs));
      report.body = fewshot::agreement_to_json(r);
      report.summary = "inter-rater kappa " + (r.mean_inter ? fmt(*r.mean_inter) : std::string("n/a")) +
                       ", intra-rater kappa " + (r.mean_intra ? fmt(*r.mean_intra) : std::string("n/a"));
    } else if (command == "validate stateless") {
      auto c = ctx.corpus(o.corpus);
      auto prompt = prompting::build_prompt(ctx.schema(), ctx.prompt(o.prompt));
      auto r = seqval::test_statelessness(gateway::classifier(prompt, ctx.schema(), ctx.backend()), c,
                                          o.runs, g.seed);
      report.body = seqval::shuffle_report_to_json(r);
      report.summary = "I = " + std::to_string(r.inconsistency_count) + " over " + std::to_string(o.runs) + " runs";
      if (!r.complete) {
        report.exit_code = kExitError;
        report.summary += " (incomplete: " + r.error + ")";
      }
      check_budget(report, "I", r.inconsistency_count, o.budget);
    } else if (command == "validate intradoc") {
      auto c = ctx.corpus(o.corpus);
      auto prompt = prompting::build_prompt(ctx.schema(), ctx.prompt(o.prompt));
      auto r = seqval::test_intradoc(gateway::classifier(prompt, ctx.schema(), ctx.backend()), c, o.p,
                                     o.min_tokens);
      report.body = seqval::truncation_report_to_json(r);
      report.summary = "i_prefix = " + std::to_string(r.i_prefix) + ", i_suffix = " + std::to_string(r.i_suffix) +
                       ", i_middle = " + std::to_string(r.i_middle) + " (" + std::to_string(r.tested) +
                       " tested, " + std::to_string(r.skipped.size()) + " skipped)";
      check_budget(report, "i_prefix", r.i_prefix, o.budget);
      check_budget(report, "i_suffix", r.i_suffix, o.budget);
      check_budget(report, "i_middle", r.i_middle, o.budget);
    } else if (command == "validate inprompt") {
      auto c = ctx.corpus(o.corpus);
      auto spec = ctx.prompt(o.prompt);
      auto r = seqval::test_inprompt(spec, ctx.schema(), c, seqval::prompt_classifier(ctx.schema(), ctx.backend()),
                                     o.cap, g.seed);
      report.body = seqval::permutation_report_to_json(r);
      report.summary = "i_prompt = " + std::to_string(r.i_prompt) + " over " +
                       std::to_string(r.permutations_tested) + " orderings";
      check_budget(report, "i_prompt", r.i_prompt, o.budget);
    } else if (command == "validate adversarial") {
      auto c = ctx.corpus(o.corpus);
      std::vector<std::string> phrases = seqval::default_adversarial_phrases();
      if (!o.phrases.empty()) {
        phrases.clear();
        std::istringstream in(read_text_file(o.phrases));
        for (std::string line; std::getline(in, line);) {
          if (!trim(line).empty()) phrases.push_back(trim(line));
        }
      }
      auto q = seqval::quarantine(c, phrases);
      Json flagged = Json::array();
      for (const auto& [doc, outcome] : q.flagged) {
        flagged.push_back({{"doc_id", doc.id}, {"matches", seqval::filter_outcome_to_json(outcome)["matches"]}});
      }
      report.body = {{"checked", c.size()}, {"flagged", flagged}};
      report.summary = std::to_string(q.flagged.size()) + " of " + std::to_string(c.size()) + " documents flagged";
    } else if (command == "validate obfuscation") {
      std::vector<seqval::Artifact> artifacts;
      for (const auto& path : o.artifacts) artifacts.push_back({path, read_text_file(path)});
      auto spec = ctx.prompt(o.prompt);
      artifacts.push_back({"prompt:" + spec.hash.substr(0, 12), prompting::build_prompt(ctx.schema(), spec).text});
      auto leaks = seqval::obfuscation_audit(ctx.schema(), artifacts);
      report.body = {{"leaks", seqval::leaks_to_json(leaks)}, {"artifacts", artifacts.size()}};
      report.summary = std::to_string(leaks.size()) + " leak(s) across " + std::to_string(artifacts.size()) + " artifacts";
      for (const auto& l : leaks) {
        report.summary += "\n  " + l.artifact + ":" + std::to_string(l.line) + " " + l.internal_name;
      }
      if (!leaks.empty()) report.exit_code = kExitRejected;
    } else if (command == "stats mcnemar") {
      auto r = stats::mcnemar_counts(o.b_count, o.c_count, o.correction, o.alpha);
      report.body = stats::test_result_to_json(r);
      report.body["b"] = o.b_count;
      report.body["c"] = o.c_count;
      report.body["continuity_correction"] = o.correction;
      report.persist = false;
      report.summary = "chi2 = " + fmt(r.statistic) + ", df = 1, p = " + fmt(r.p_value);
    } else if (command == "stats chisq") {
      stats::ClassDistribution a, b;
      a.counts = parse_counts(o.a);
      b.counts = parse_counts(o.b);
      auto labels = split_list(o.labels_list);
      if (labels.empty()) {
        for (std::size_t i = 0; i < a.counts.size(); ++i) labels.push_back("c" + std::to_string(i + 1));
      }
      a.labels = b.labels = labels;
      auto r = stats::chi2_homogeneity(a, b, o.alpha);
      report.body = stats::test_result_to_json(r);
      report.body["caveat"] = "treats the two sets of classifications as independent samples";
      report.persist = false;
      report.summary = "chi2 = " + fmt(r.statistic) + ", df = " + std::to_string(r.df) + ", p = " + fmt(r.p_value);
    } else if (command == "stats kl") {
      double d;
      if (o.probabilities) {
        d = stats::kl_divergence(parse_numbers(o.p_list), parse_numbers(o.q_list));
      } else {
        stats::ClassDistribution p, q;
        p.counts = parse_counts(o.p_list);
        q.counts = parse_counts(o.q_list);
        for (std::size_t i = 0; i < p.counts.size(); ++i) p.labels.push_back("c" + std::to_string(i + 1));
        q.labels = p.labels;
        d = stats::kl_divergence(p, q, o.smoothing);
      }
      report.body = {{"kl", d}, {"unit", "nats"}};
      report.persist = false;
      report.summary = "D_KL = " + fmt(d) + " nats";
    } else if (command == "drift window") {
      auto run = ctx.store().load_run(o.run);
      auto cfg = ctx.section("drift");
      drift::WindowPolicy policy;
      policy.duration = std::chrono::seconds(
          static_cast<std::int64_t>(cfg.value("window_days", 7.0) * 86400));
      policy.max_count = cfg.value("window_count", std::size_t{1000});
      auto windows = drift::window_results(run.results, ctx.schema(), policy, run.run_id + "-w");
      Json ids = Json::array();
      store::StoreLock lock(ctx.store().root());
      for (const auto& w : windows) {
        ctx.store().save_window(w);
        ids.push_back({{"id", w.id}, {"documents", w.results.size()},
                       {"distribution", stats::distribution_to_json(w.distribution)}});
      }
      report.body = {{"windows", ids}};
      report.summary = std::to_string(windows.size()) + " window(s) from run " + run.run_id;
    } else if (command == "drift freeze") {
      auto w = ctx.store().load_window(o.window);
      auto c = ctx.corpus(o.corpus);
      auto set = drift::compute_centroids(w, embed_docs(ctx, c, w.results), o.min_members);
      std::vector<drift::ClassCentroid> list;
      for (const auto& [name, centroid] : set.centroids) list.push_back(centroid);
      store::StoreLock lock(ctx.store().root());
      ctx.store().save_centroids(list);
      Json classes = Json::array();
      for (const auto& cc : list) {
        classes.push_back({{"class", cc.class_name}, {"members", cc.member_count},
                           {"baseline_cohesion", cc.baseline_cohesion}});
      }
      report.body = {{"window", w.id}, {"centroids", classes}, {"omitted", set.omitted}};
      report.summary = std::to_string(list.size()) + " centroid(s) frozen at " + w.id;
    } else if (command == "drift check") {
      auto windows = sorted_windows(ctx);
      if (windows.size() < 2 && (o.ref.empty() || o.cur.empty())) {
        throw UsageError("drift check needs two windows (--ref and --cur)");
      }
      auto ref = o.ref.empty() ? windows.front() : ctx.store().load_window(o.ref);
      auto cur = o.cur.empty() ? windows.back() : ctx.store().load_window(o.cur);
      auto t = drift::drift_thresholds_from_json(ctx.section("drift"));
      drift::DriftSignals signals;
      signals.distribution = drift::distributional_drift(ref, cur, t.alpha);
      signals.golden_trend = ctx.store().golden_trend();
      if (!o.corpus.empty()) {
        auto c = ctx.corpus(o.corpus);
        std::vector<drift::ClassCentroid> centroids;
        try {
          centroids = ctx.store().load_centroids();
        } catch (const NotFound&) {
        }
        if (!centroids.empty()) {
          std::map<std::string, drift::ClassCentroid> by_class;
          for (auto& cc : centroids) {
            signals.cohesion_baseline[cc.class_name] = cc.baseline_cohesion;
            by_class.emplace(cc.class_name, cc);
          }
          const auto frozen = centroids.front().frozen_at;
          bool after = false;
          for (const auto& w : windows) {
            if (after) {
              std::vector<std::pair<std::string, std::string>> members;
              for (const auto& r : w.results) {
                if (by_class.count(r.parent)) members.emplace_back(r.doc_id, r.parent);
              }
              auto s = drift::cohesion(members, by_class, embed_docs(ctx, c, w.results));
              for (const auto& [cls, v] : s) signals.cohesion_series[cls].push_back(v);
            }
            if (w.id == frozen) after = true;
            if (w.id == cur.id) break;
          }
        }
        corpus::Corpus recent;
        for (const auto& r : cur.results) {
          if (const auto* d = c.find(r.doc_id)) recent.documents.push_back(*d);
        }
        auto novelty = drift::novelty_scan(recent, ctx.schema(), t.tau, ctx.backend(),
                                           gateway::kDefaultTopicPrompt, o.max_topics);
        signals.novel_topics = novelty.novel;
      }
      auto r = drift::evaluate_drift(std::move(signals), t);
      auto json = drift::drift_report_to_json(r);
      json["reference"] = ref.id;
      json["current"] = cur.id;
      json["generated_at"] = ctx.now();
      {
        store::StoreLock lock(ctx.store().root());
        ctx.store().append_drift_report(json);
      }
      report.body = json;
      report.summary = "verdict: " + drift::to_string(r.verdict);
      for (const auto& why : r.reasons) report.summary += "\n  " + why;
      if (r.verdict != drift::Verdict::Stable) report.exit_code = kExitRejected;
    } else if (command == "golden eval") {
      auto spec = ctx.prompt(o.prompt);
      auto golden = ctx.golden(o.golden);
      auto prompt = prompting::build_prompt(ctx.schema(), spec);
      auto m = golden_eval(golden, gateway::classifier(prompt, ctx.schema(), ctx.backend()));
      {
        store::StoreLock lock(ctx.store().root());
        ctx.store().append_golden_trend({spec.hash, ctx.now(), m.macro_f1});
      }
      report.body = metrics_to_json(m);
      report.body["prompt_hash"] = spec.hash;
      report.summary = "precision " + fmt(m.precision) + ", recall " + fmt(m.recall) + ", accuracy " +
                       fmt(m.accuracy) + ", macro-F1 " + fmt(m.macro_f1);
    } else if (command == "serve") {
      serve::ServeOptions opts;
      opts.root = ctx.store().root();
      if (!fs::exists(opts.root)) throw NotFound("store root " + opts.root.string());
      opts.host = o.host;
      opts.port = o.port;
      opts.thresholds = diag_thresholds(ctx);
      opts.clock = [&ctx] { return ctx.now(); };
      serve::ReviewServer server(opts);
      int port = server.bind();
      err << "serving " << opts.root.string() << " on http://" << o.host << ":" << port << "\n";
      server.run();
      return {kExitOk, "server stopped", std::nullopt};
    } else {
      throw UsageError("unknown command '" + command + "'");
    }

    CommandOutcome outcome{report.exit_code, report.summary, std::nullopt};
    if (report.persist) {
      auto bytes = report.body.dump(2) + "\n";
      auto slug = command;
      std::replace(slug.begin(), slug.end(), ' ', '-');
      auto rel = fs::path("reports") / slug / (sha256_hex(bytes).substr(0, 16) + ".json");
      ctx.store().write_artifact(rel, bytes);
      outcome.json_path = (ctx.store().root() / rel).string();
    }
    if (g.json) {
      out << report.body.dump(2) << "\n";
    } else {
      auto text = report.summary;
      while (!text.empty() && text.back() == '\n') text.pop_back();
      out << text << "\n";
    }
    return outcome;
  } catch (const Rejected& e) {
    err << e.what() << "\n";
    return {kExitRejected, e.what(), std::nullopt};
  } catch (const UsageError& e) {
    err << "error: " << e.what() << "\n\n" << app.help();
    return {kExitError, e.what(), std::nullopt};
  } catch (const Error& e) {
    err << "error [" << e.code() << "]: " << e.what() << "\n";
    if (g.json) out << Json{{"error", e.code()}, {"message", e.what()}}.dump(2) << "\n";
    return {kExitError, e.what(), std::nullopt};
  } catch (const std::exception& e) {
    err << "error: " << e.what() << "\n";
    return {kExitError, e.what(), std::nullopt};
  }
}

}  // namespace taxonomist::cli
