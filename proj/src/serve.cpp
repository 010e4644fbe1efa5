#include "taxonomist/serve.hpp"

#include <httplib.h>

#include <map>

#include "taxonomist/errors.hpp"
#include "taxonomist/fewshot.hpp"
#include "taxonomist/store.hpp"

namespace taxonomist::serve {

namespace {

using NameMap = std::map<std::string, std::string>;

NameMap alias_map(const schema::ClassSchema& schema) {
  NameMap m;
  for (const auto& p : schema.parents) {
    m.emplace(p.internal_name, p.external_alias);
    for (const auto& c : p.children) {
      m.emplace(p.internal_name + "/" + c.internal_name, p.external_alias + "/" + c.external_alias);
      m.emplace(c.internal_name, c.external_alias);
    }
  }
  return m;
}

// Rewrites every key or string value that is exactly an internal name.
Json aliased(const Json& j, const NameMap& names) {
  auto swap = [&](const std::string& s) {
    auto it = names.find(s);
    return it == names.end() ? s : it->second;
  };
  if (j.is_string()) return swap(j.get<std::string>());
  if (j.is_array()) {
    Json out = Json::array();
    for (const auto& v : j) out.push_back(aliased(v, names));
    return out;
  }
  if (j.is_object()) {
    Json out = Json::object();
    for (const auto& [k, v] : j.items()) out[swap(k)] = aliased(v, names);
    return out;
  }
  return j;
}

void reply(httplib::Response& res, int status, const Json& body) {
  res.status = status;
  res.set_content(body.dump(2) + "\n", "application/json");
}

void fail(httplib::Response& res, int status, const std::string& code, const std::string& message) {
  reply(res, status, Json{{"error", code}, {"message", message}});
}

}  // namespace

struct ReviewServer::Impl {
  ServeOptions options;
  store::Store store;
  httplib::Server http;
  int port = -1;

  explicit Impl(ServeOptions o) : options(std::move(o)), store(options.root) {}

  schema::ClassSchema schema_for(int version) const {
    if (auto s = store.load_schema(version)) return *s;
    if (auto s = store.latest_schema()) return *s;
    throw NotFound("schema");
  }

  schema::ClassSchema latest() const {
    if (auto s = store.latest_schema()) return *s;
    throw NotFound("schema");
  }

  Json run_json(const store::RunRecord& run) const {
    auto schema = schema_for(run.schema_version);
    Json results = Json::array();
    for (const auto& r : run.results) {
      Json item{{"doc_id", r.doc_id}, {"label", fewshot::alias_of(schema, r.label())}};
      if (r.timestamp) item["timestamp"] = *r.timestamp;
      results.push_back(item);
    }
    auto summary = run_summary_to_json(*store.summary(run.run_id));
    summary["results"] = results;
    return aliased(summary, alias_map(schema));
  }

  /// Latest two runs over one corpus that used different prompts.
  std::optional<std::pair<store::RunRecord, store::RunRecord>> review_pair() const {
    auto runs = store.list_runs();
    for (auto b = runs.rbegin(); b != runs.rend(); ++b) {
      for (auto a = std::next(b); a != runs.rend(); ++a) {
        if (a->corpus_digest == b->corpus_digest && a->prompt_hash != b->prompt_hash) {
          return std::make_pair(store.load_run(a->run_id), store.load_run(b->run_id));
        }
      }
    }
    return std::nullopt;
  }

  void routes() {
    // httplib defaults to SO_REUSEPORT, which lets a second server share the port silently.
    http.set_socket_options([](socket_t sock) {
      int yes = 1;
      setsockopt(sock, SOL_SOCKET, SO_REUSEADDR, reinterpret_cast<const void*>(&yes), sizeof(yes));
    });
    http.set_exception_handler([](const httplib::Request&, httplib::Response& res, std::exception_ptr ep) {
      try {
        std::rethrow_exception(ep);
      } catch (const NotFound& e) {
        fail(res, 404, e.code(), e.what());
      } catch (const Error& e) {
        fail(res, 500, e.code(), e.what());
      } catch (const std::exception& e) {
        fail(res, 500, "InternalError", e.what());
      }
    });

    http.Get("/api/runs", [this](const httplib::Request&, httplib::Response& res) {
      Json arr = Json::array();
      for (const auto& s : store.list_runs()) arr.push_back(run_summary_to_json(s));
      reply(res, 200, Json{{"runs", arr}});
    });

    http.Get(R"(/api/runs/([A-Za-z0-9_.-]+))", [this](const httplib::Request& req, httplib::Response& res) {
      reply(res, 200, run_json(store.load_run(req.matches[1])));
    });

    http.Get(R"(/api/alignment/([A-Za-z0-9_.-]+))", [this](const httplib::Request& req, httplib::Response& res) {
      auto m = store.load_alignment(req.matches[1]);
      auto schema = schema_for(store.load_run(m.run_id).schema_version);
      reply(res, 200, aliased(alignment::matrix_to_json(m), alias_map(schema)));
    });

    http.Get(R"(/api/diagnostics/([A-Za-z0-9_.-]+))", [this](const httplib::Request& req, httplib::Response& res) {
      auto m = store.load_alignment(req.matches[1]);
      auto schema = schema_for(store.load_run(m.run_id).schema_version);
      auto d = alignment::diagnose(m, options.thresholds);
      Json body{{"run_id", m.run_id},
                {"diagnostics", alignment::diagnostics_to_json(d)},
                {"class_size_variance", alignment::class_size_variance(m)}};
      reply(res, 200, aliased(body, alias_map(schema)));
    });

    http.Get("/api/review/queue", [this](const httplib::Request&, httplib::Response& res) {
      Json items = Json::array();
      auto pair = review_pair();
      if (pair) {
        auto schema = latest();
        auto corpus = store.load_corpus(pair->first.corpus_digest);
        fewshot::PreferenceStore prefs(store.preferences_path());
        auto queue = fewshot::review_queue(corpus, pair->first.results, pair->second.results,
                                           prefs.load(), schema);
        for (const auto& item : queue) items.push_back(fewshot::review_item_to_json(item));
      }
      Json body{{"items", items}};
      if (pair) body["runs"] = {pair->first.run_id, pair->second.run_id};
      reply(res, 200, body);
    });

    http.Post("/api/preferences", [this](const httplib::Request& req, httplib::Response& res) {
      Json in;
      try {
        in = Json::parse(req.body);
      } catch (const Json::exception& e) {
        return fail(res, 400, "ParseError", e.what());
      }
      auto schema = latest();
      fewshot::PreferencePair pair;
      try {
        corpus::ProcessedDocument doc;
        doc.id = in.at("doc_id").get<std::string>();
        auto y_w = fewshot::label_from_alias(schema, in.at("y_w").get<std::string>());
        auto y_l = fewshot::label_from_alias(schema, in.at("y_l").get<std::string>());
        auto reviewer = in.at("reviewer").get<std::string>();
        int round = in.value("round", 1);
        fewshot::PreferenceStore prefs(store.preferences_path());
        store::StoreLock lock(options.root);
        pair = fewshot::record_preference(prefs, doc, y_w, y_l, reviewer, fewshot::PreferenceSource::Human,
                                          round, schema, options.clock ? options.clock() : std::string{});
      } catch (const Json::exception& e) {
        return fail(res, 422, "InvalidArgument", e.what());
      } catch (const DuplicateJudgment& e) {
        return fail(res, 409, e.code(), e.what());
      } catch (const LockConflict& e) {
        return fail(res, 409, e.code(), e.what());
      } catch (const IoError&) {
        throw;
      } catch (const Error& e) {
        return fail(res, 422, e.code(), e.what());
      }
      Json out = fewshot::preference_to_json(pair);
      out["y_w"] = fewshot::alias_of(schema, pair.y_w);
      out["y_l"] = fewshot::alias_of(schema, pair.y_l);
      reply(res, 201, aliased(out, alias_map(schema)));
    });

    http.Get("/api/drift/latest", [this](const httplib::Request&, httplib::Response& res) {
      auto report = store.latest_drift_report();
      if (!report) return fail(res, 404, "NotFound", "no drift report");
      reply(res, 200, aliased(*report, alias_map(latest())));
    });
  }
};

ReviewServer::ReviewServer(ServeOptions options) : impl_(std::make_unique<Impl>(std::move(options))) {
  impl_->routes();
}

ReviewServer::~ReviewServer() { stop(); }

int ReviewServer::bind() {
  auto& o = impl_->options;
  int port = o.port == 0 ? impl_->http.bind_to_any_port(o.host) : (impl_->http.bind_to_port(o.host, o.port) ? o.port : -1);
  if (port < 0) throw PortInUse(o.port);
  impl_->port = port;
  return port;
}

void ReviewServer::run() {
  if (impl_->port < 0) bind();
  impl_->http.listen_after_bind();
}

void ReviewServer::stop() {
  if (impl_ && impl_->http.is_running()) impl_->http.stop();
}

}  // namespace taxonomist::serve
