#include "helpers.hpp"

#include <httplib.h>

#include <thread>

#include "taxonomist/errors.hpp"
#include "taxonomist/fewshot.hpp"
#include "taxonomist/serve.hpp"
#include "taxonomist/store.hpp"

using namespace taxonomist;

namespace {

store::RunRecord run_with(const std::string& hash, const std::vector<std::string>& parents) {
  store::RunRecord r;
  r.prompt_hash = hash;
  r.backend_id = "mock";
  r.started = r.finished = "1970-01-01T00:00:00Z";
  for (std::size_t i = 0; i < parents.size(); ++i) {
    ClassificationResult res;
    res.doc_id = "d" + std::to_string(i);
    res.parent = parents[i];
    if (parents[i] == "Delivery") res.child = "Late Arrival";
    res.prompt_hash = hash;
    res.timestamp = "2024-03-04T00:00:00Z";
    r.results.push_back(res);
  }
  return r;
}

// Every internal class name, as it would appear in a response body.
std::vector<std::string> internal_names(const schema::ClassSchema& s) {
  std::vector<std::string> out;
  for (const auto& p : s.parents) {
    out.push_back("\"" + p.internal_name + "\"");
    for (const auto& c : p.children) out.push_back("\"" + c.internal_name + "\"");
  }
  return out;
}

struct Fixture {
  testing::TempDir tmp;
  schema::ClassSchema schema = testing::fixture_schema();
  std::string run_a, run_b;
  std::unique_ptr<serve::ReviewServer> server;
  std::thread thread;
  std::unique_ptr<httplib::Client> client;

  Fixture() {
    store::Store s(tmp.path());
    s.save_schema(schema);
    auto corpus = testing::make_corpus({{"d0", "sweet"}, {"d1", "late"}, {"d2", "pricey"}});
    auto digest = s.save_corpus(corpus);
    auto a = run_with("hash-a", {"Taste", "Delivery", "Pricing"});
    auto b = run_with("hash-b", {"Taste", "Taste", "Taste"});
    a.corpus_digest = b.corpus_digest = digest;
    run_a = s.save_run(a);
    run_b = s.save_run(b);

    alignment::AlignmentMatrix m;
    m.run_id = run_a;
    m.rows = {"Delivery", "Pricing", "Taste"};
    m.cols = {"Shipping"};
    m.counts = {{1}, {1}, {1}};
    s.save_alignment(m);

    serve::ServeOptions o;
    o.root = tmp.path();
    o.port = 0;
    o.clock = [] { return std::string("2024-03-04T00:00:00Z"); };
    server = std::make_unique<serve::ReviewServer>(o);
    int port = server->bind();
    thread = std::thread([this] { server->run(); });
    client = std::make_unique<httplib::Client>("127.0.0.1", port);
    for (int i = 0; i < 100 && !client->Get("/api/runs"); ++i) std::this_thread::sleep_for(std::chrono::milliseconds(10));
  }
  ~Fixture() {
    server->stop();
    thread.join();
  }

  void no_leaks(const std::string& body) {
    for (const auto& name : internal_names(schema)) {
      CAPTURE(name);
      CHECK(body.find(name) == std::string::npos);
    }
  }

  httplib::Result post(const Json& body) {
    return client->Post("/api/preferences", body.dump(), "application/json");
  }
};

}  // namespace

TEST_CASE("runs are listed and served with aliases only") {
  Fixture f;
  auto list = f.client->Get("/api/runs");
  REQUIRE(list);
  CHECK(list->status == 200);
  CHECK(Json::parse(list->body).at("runs").size() == 2);

  auto run = f.client->Get("/api/runs/" + f.run_a);
  REQUIRE(run);
  CHECK(run->status == 200);
  auto j = Json::parse(run->body);
  REQUIRE(j.at("results").size() == 3);
  CHECK(j.at("results")[1].at("label") == fewshot::alias_of(f.schema, {"Delivery", std::string("Late Arrival")}));
  CHECK(j.at("results")[1].at("timestamp") == "2024-03-04T00:00:00Z");
  f.no_leaks(run->body);

  auto missing = f.client->Get("/api/runs/0000000000000000");
  REQUIRE(missing);
  CHECK(missing->status == 404);
}

TEST_CASE("alignment and diagnostics are aliased") {
  Fixture f;
  auto a = f.client->Get("/api/alignment/" + f.run_a);
  REQUIRE(a);
  CHECK(a->status == 200);
  f.no_leaks(a->body);
  CHECK(a->body.find("Shipping") != std::string::npos);

  auto d = f.client->Get("/api/diagnostics/" + f.run_a);
  REQUIRE(d);
  CHECK(d->status == 200);
  auto j = Json::parse(d->body);
  CHECK(j.at("diagnostics").size() == 3);
  CHECK(j.at("class_size_variance") == 0.0);
  f.no_leaks(d->body);
}

TEST_CASE("review queue pairs the latest disagreeing runs") {
  Fixture f;
  auto q = f.client->Get("/api/review/queue");
  REQUIRE(q);
  CHECK(q->status == 200);
  auto j = Json::parse(q->body);
  REQUIRE(j.at("items").size() == 2);
  CHECK(j.at("items")[0].at("doc_id") == "d1");
  CHECK(j.at("runs").size() == 2);
  f.no_leaks(q->body);
}

TEST_CASE("preference submissions") {
  Fixture f;
  auto taste = fewshot::alias_of(f.schema, {"Taste", std::nullopt});
  auto late = fewshot::alias_of(f.schema, {"Delivery", std::string("Late Arrival")});

  auto ok = f.post({{"doc_id", "d1"}, {"y_w", late}, {"y_l", taste}, {"reviewer", "ana"}});
  REQUIRE(ok);
  CHECK(ok->status == 201);
  auto j = Json::parse(ok->body);
  CHECK(j.at("y_w") == late);
  CHECK(j.at("created_at") == "2024-03-04T00:00:00Z");
  f.no_leaks(ok->body);

  auto again = f.post({{"doc_id", "d1"}, {"y_w", late}, {"y_l", taste}, {"reviewer", "ana"}});
  REQUIRE(again);
  CHECK(again->status == 409);

  auto same = f.post({{"doc_id", "d2"}, {"y_w", taste}, {"y_l", taste}, {"reviewer", "ana"}});
  REQUIRE(same);
  CHECK(same->status == 422);
  CHECK(Json::parse(same->body).at("error") == "LabelEqualsLoser");

  auto internal = f.post({{"doc_id", "d2"}, {"y_w", "Taste"}, {"y_l", late}, {"reviewer", "ana"}});
  REQUIRE(internal);
  CHECK(internal->status == 422);

  auto missing = f.post({{"doc_id", "d2"}, {"y_w", taste}});
  REQUIRE(missing);
  CHECK(missing->status == 422);

  auto garbage = f.client->Post("/api/preferences", "{nope", "application/json");
  REQUIRE(garbage);
  CHECK(garbage->status == 400);

  // the judged document leaves the queue
  auto q = Json::parse(f.client->Get("/api/review/queue")->body);
  REQUIRE(q.at("items").size() == 1);
  CHECK(q.at("items")[0].at("doc_id") == "d2");

  {
    store::StoreLock held(f.tmp.path());
    auto locked = f.post({{"doc_id", "d2"}, {"y_w", late}, {"y_l", taste}, {"reviewer", "ben"}});
    REQUIRE(locked);
    CHECK(locked->status == 409);
  }
}

TEST_CASE("drift report endpoint") {
  Fixture f;
  auto none = f.client->Get("/api/drift/latest");
  REQUIRE(none);
  CHECK(none->status == 404);
  store::Store(f.tmp.path()).append_drift_report(
      Json{{"verdict", "cohesion_erosion"}, {"classes", {{"Taste", 0.4}}}, {"worst", "Taste"}});
  auto r = f.client->Get("/api/drift/latest");
  REQUIRE(r);
  CHECK(r->status == 200);
  auto j = Json::parse(r->body);
  auto alias = fewshot::alias_of(f.schema, {"Taste", std::nullopt});
  CHECK(j.at("worst") == alias);
  CHECK(j.at("classes").contains(alias));
  f.no_leaks(r->body);
}

TEST_CASE("a taken port is reported") {
  testing::TempDir tmp;
  httplib::Server holder;
  int port = holder.bind_to_any_port("127.0.0.1");
  std::thread listening([&] { holder.listen_after_bind(); });
  holder.wait_until_ready();
  serve::ServeOptions o;
  o.root = tmp.path();
  o.port = port;
  serve::ReviewServer server(o);
  CHECK_THROWS_AS(server.bind(), PortInUse);
  holder.stop();
  listening.join();
}
