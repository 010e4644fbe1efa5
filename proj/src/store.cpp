#include "taxonomist/store.hpp"

#include <fcntl.h>
#include <sys/file.h>
#include <unistd.h>

#include <algorithm>
#include <cstdlib>
#include <fstream>
#include <sstream>

#include "taxonomist/errors.hpp"

namespace fs = std::filesystem;

namespace taxonomist::store {

namespace {

Json record_meta(const RunRecord& r, const std::string& results_digest) {
  return Json{{"run_id", r.run_id},
              {"kind", r.kind},
              {"prompt_hash", r.prompt_hash},
              {"schema_version", r.schema_version},
              {"backend_id", r.backend_id},
              {"corpus_digest", r.corpus_digest},
              {"result_count", r.results.size()},
              {"results_digest", results_digest},
              {"started", r.started},
              {"finished", r.finished}};
}

std::string results_jsonl(const std::vector<ClassificationResult>& results) {
  std::string out;
  for (const auto& r : results) out += canonical_json(result_to_json(r)) + "\n";
  return out;
}

RunSummary summary_from_meta(const Json& m) {
  return {m.at("run_id").get<std::string>(),     m.value("kind", std::string("classify")),
          m.at("prompt_hash").get<std::string>(), m.at("schema_version").get<int>(),
          m.at("backend_id").get<std::string>(),  m.value("corpus_digest", std::string{}),
          m.at("result_count").get<std::size_t>(), m.at("started").get<std::string>(),
          m.at("finished").get<std::string>()};
}

std::vector<std::string> read_lines(const fs::path& path) {
  std::vector<std::string> out;
  if (!fs::exists(path)) return out;
  std::istringstream in(read_text_file(path));
  std::string line;
  while (std::getline(in, line)) {
    if (!trim(line).empty()) out.push_back(line);
  }
  return out;
}

void append_line(const fs::path& path, const std::string& line) {
  fs::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::app | std::ios::binary);
  if (!out) throw IoError("cannot open " + path.string());
  out << line << '\n';
  if (!out.flush()) throw IoError("write to " + path.string() + " failed");
}

// Ids become path components; keep them to a safe alphabet.
void check_component(const std::string& id) {
  bool ok = !id.empty() && id != "." && id != ".." &&
            std::all_of(id.begin(), id.end(), [](char c) {
              return std::isalnum(static_cast<unsigned char>(c)) || c == '-' || c == '_' || c == '.';
            });
  if (!ok) throw NotFound(id);
}

}  // namespace

Json run_summary_to_json(const RunSummary& s) {
  return Json{{"run_id", s.run_id},
              {"kind", s.kind},
              {"prompt_hash", s.prompt_hash},
              {"schema_version", s.schema_version},
              {"backend_id", s.backend_id},
              {"corpus_digest", s.corpus_digest},
              {"result_count", s.result_count},
              {"started", s.started},
              {"finished", s.finished}};
}

Json run_to_json(const RunRecord& r) {
  Json results = Json::array();
  for (const auto& res : r.results) results.push_back(result_to_json(res));
  auto j = record_meta(r, sha256_hex(results_jsonl(r.results)));
  j["results"] = std::move(results);
  return j;
}

std::string compute_run_id(const RunRecord& record) {
  auto copy = record;
  copy.run_id.clear();
  return sha256_hex(canonical_json(run_to_json(copy))).substr(0, 16);
}

StoreLock::StoreLock(const fs::path& root) {
  fs::create_directories(root);
  auto path = root / ".lock";
  fd_ = ::open(path.c_str(), O_RDWR | O_CREAT | O_CLOEXEC, 0644);
  if (fd_ < 0) throw IoError("cannot open lock file " + path.string());
  if (::flock(fd_, LOCK_EX | LOCK_NB) != 0) {
    ::close(fd_);
    fd_ = -1;
    throw LockConflict("store " + root.string() + " is locked by another writer");
  }
}

StoreLock::~StoreLock() {
  if (fd_ >= 0) {
    ::flock(fd_, LOCK_UN);
    ::close(fd_);
  }
}

Store::Store(fs::path root) : root_(std::move(root)) {}

fs::path Store::resolve_root(const std::optional<std::string>& flag) {
  if (flag && !flag->empty()) return *flag;
  if (const char* env = std::getenv("TAXONOMIST_STORE"); env && *env) return env;
  return ".taxonomist";
}

std::string Store::save_run(RunRecord record) {
  for (const auto& r : record.results) {
    if (r.prompt_hash != record.prompt_hash) {
      throw InvalidArgument("result '" + r.doc_id + "' carries a different prompt hash than its run");
    }
  }
  record.run_id = compute_run_id(record);
  auto dir = root_ / "runs" / record.run_id;
  if (fs::exists(dir / "record.json")) return record.run_id;

  auto body = results_jsonl(record.results);
  auto tmp = root_ / "runs" / (".tmp-" + record.run_id + "-" + std::to_string(::getpid()));
  fs::create_directories(tmp);
  write_text_file_atomic(tmp / "results.jsonl", body);
  write_text_file_atomic(tmp / "record.json",
                         record_meta(record, sha256_hex(body)).dump(2) + "\n");
  std::error_code ec;
  fs::rename(tmp, dir, ec);
  if (ec) {
    fs::remove_all(tmp);
    if (!fs::exists(dir / "record.json")) throw IoError("cannot publish run " + record.run_id);
  }
  return record.run_id;
}

RunRecord Store::load_run(const std::string& run_id) const {
  check_component(run_id);
  auto dir = root_ / "runs" / run_id;
  if (!fs::exists(dir / "record.json")) throw NotFound("run " + run_id);
  Json meta;
  try {
    meta = Json::parse(read_text_file(dir / "record.json"));
  } catch (const Json::exception& e) {
    throw IntegrityError("run " + run_id, e.what());
  }
  auto body = read_text_file(dir / "results.jsonl");
  if (sha256_hex(body) != meta.at("results_digest").get<std::string>()) {
    throw IntegrityError("run " + run_id, "results.jsonl digest mismatch");
  }
  RunRecord r;
  r.run_id = run_id;
  r.kind = meta.value("kind", std::string("classify"));
  r.prompt_hash = meta.at("prompt_hash").get<std::string>();
  r.schema_version = meta.at("schema_version").get<int>();
  r.backend_id = meta.at("backend_id").get<std::string>();
  r.corpus_digest = meta.value("corpus_digest", std::string{});
  r.started = meta.at("started").get<std::string>();
  r.finished = meta.at("finished").get<std::string>();
  std::istringstream in(body);
  std::string line;
  while (std::getline(in, line)) {
    if (!trim(line).empty()) r.results.push_back(result_from_json(Json::parse(line)));
  }
  if (compute_run_id(r) != run_id) throw IntegrityError("run " + run_id, "content does not match id");
  return r;
}

std::vector<RunSummary> Store::list_runs() const {
  std::vector<RunSummary> out;
  auto dir = root_ / "runs";
  if (!fs::exists(dir)) return out;
  for (const auto& entry : fs::directory_iterator(dir)) {
    auto meta_path = entry.path() / "record.json";
    if (entry.path().filename().string().rfind(".tmp-", 0) == 0 || !fs::exists(meta_path)) continue;
    out.push_back(summary_from_meta(Json::parse(read_text_file(meta_path))));
  }
  std::sort(out.begin(), out.end(), [](const RunSummary& a, const RunSummary& b) {
    return std::tie(a.started, a.run_id) < std::tie(b.started, b.run_id);
  });
  return out;
}

std::optional<RunSummary> Store::summary(const std::string& run_id) const {
  check_component(run_id);
  auto meta_path = root_ / "runs" / run_id / "record.json";
  if (!fs::exists(meta_path)) return std::nullopt;
  return summary_from_meta(Json::parse(read_text_file(meta_path)));
}

void Store::save_prompt(const prompting::PromptSpec& spec, const std::string& rendered) {
  check_component(spec.hash);
  auto dir = root_ / "prompts";
  if (fs::exists(dir / (spec.hash + ".json"))) return;
  write_text_file_atomic(dir / (spec.hash + ".txt"), rendered);
  write_text_file_atomic(dir / (spec.hash + ".json"), prompting::spec_to_json(spec).dump(2) + "\n");
}

prompting::PromptSpec Store::load_prompt(const std::string& hash) const {
  check_component(hash);
  auto path = root_ / "prompts" / (hash + ".json");
  if (!fs::exists(path)) throw NotFound("prompt " + hash);
  return prompting::spec_from_json(Json::parse(read_text_file(path)));
}

void Store::save_schema(const schema::ClassSchema& schema) {
  auto path = root_ / "schemas" / ("v" + std::to_string(schema.version) + ".json");
  auto body = schema::schema_to_json(schema).dump(2) + "\n";
  if (fs::exists(path)) {
    if (read_text_file(path) != body) {
      throw IntegrityError("schema v" + std::to_string(schema.version),
                           "a different schema is already stored under this version");
    }
    return;
  }
  write_text_file_atomic(path, body);
}

std::optional<schema::ClassSchema> Store::load_schema(int version) const {
  auto path = root_ / "schemas" / ("v" + std::to_string(version) + ".json");
  if (!fs::exists(path)) return std::nullopt;
  return schema::schema_from_json(Json::parse(read_text_file(path)));
}

std::optional<schema::ClassSchema> Store::latest_schema() const {
  auto dir = root_ / "schemas";
  if (!fs::exists(dir)) return std::nullopt;
  int best = -1;
  for (const auto& e : fs::directory_iterator(dir)) {
    auto name = e.path().stem().string();
    if (name.size() > 1 && name[0] == 'v') best = std::max(best, std::atoi(name.c_str() + 1));
  }
  if (best < 0) return std::nullopt;
  return load_schema(best);
}

std::string Store::save_corpus(const corpus::Corpus& corpus) {
  auto body = corpus::corpus_to_jsonl(corpus);
  auto digest = sha256_hex(body);
  auto path = root_ / "corpora" / (digest + ".jsonl");
  if (!fs::exists(path)) {
    write_text_file_atomic(path, body);
    write_text_file_atomic(root_ / "corpora" / (digest + ".provenance.json"),
                           Json{{"source", corpus.provenance.source},
                                {"config_hash", corpus.provenance.config_hash}}
                                   .dump(2) + "\n");
  }
  return digest;
}

corpus::Corpus Store::load_corpus(const std::string& digest) const {
  check_component(digest);
  auto path = root_ / "corpora" / (digest + ".jsonl");
  if (!fs::exists(path)) throw NotFound("corpus " + digest);
  auto body = read_text_file(path);
  if (sha256_hex(body) != digest) throw IntegrityError("corpus " + digest, "digest mismatch");
  corpus::Provenance prov;
  auto prov_path = root_ / "corpora" / (digest + ".provenance.json");
  if (fs::exists(prov_path)) {
    auto j = Json::parse(read_text_file(prov_path));
    prov = {j.value("source", std::string{}), j.value("config_hash", std::string{})};
  }
  return corpus::corpus_from_jsonl(body, prov);
}

void Store::save_alignment(const alignment::AlignmentMatrix& matrix) {
  check_component(matrix.run_id);
  auto path = root_ / "alignment" / (matrix.run_id + ".json");
  if (fs::exists(path)) return;
  write_text_file_atomic(path, alignment::matrix_to_json(matrix).dump(2) + "\n");
}

alignment::AlignmentMatrix Store::load_alignment(const std::string& run_id) const {
  check_component(run_id);
  auto path = root_ / "alignment" / (run_id + ".json");
  if (!fs::exists(path)) throw NotFound("alignment " + run_id);
  return alignment::matrix_from_json(Json::parse(read_text_file(path)));
}

void Store::save_window(const drift::Window& window) {
  check_component(window.id);
  auto path = root_ / "windows" / (window.id + ".json");
  auto body = drift::window_to_json(window).dump(2) + "\n";
  if (fs::exists(path)) {
    if (read_text_file(path) != body) {
      throw IntegrityError("window " + window.id, "a different window already has this id");
    }
    return;
  }
  write_text_file_atomic(path, body);
}

drift::Window Store::load_window(const std::string& id) const {
  check_component(id);
  auto path = root_ / "windows" / (id + ".json");
  if (!fs::exists(path)) throw NotFound("window " + id);
  return drift::window_from_json(Json::parse(read_text_file(path)));
}

std::vector<std::string> Store::list_windows() const {
  std::vector<std::string> out;
  auto dir = root_ / "windows";
  if (!fs::exists(dir)) return out;
  for (const auto& e : fs::directory_iterator(dir)) {
    if (e.path().extension() == ".json") out.push_back(e.path().stem().string());
  }
  std::sort(out.begin(), out.end());
  return out;
}

void Store::save_centroids(const std::vector<drift::ClassCentroid>& centroids) {
  if (centroids.empty()) return;
  Json arr = Json::array();
  for (const auto& c : centroids) arr.push_back(drift::centroid_to_json(c));
  auto frozen = centroids.front().frozen_at;
  check_component(frozen);
  auto path = root_ / "drift" / ("centroids-" + frozen + ".json");
  if (!fs::exists(path)) write_text_file_atomic(path, arr.dump(2) + "\n");
  append_line(root_ / "drift" / "centroids.jsonl", canonical_json(Json{{"frozen_at", frozen}}));
}

std::vector<drift::ClassCentroid> Store::load_centroids() const {
  auto lines = read_lines(root_ / "drift" / "centroids.jsonl");
  if (lines.empty()) throw NotFound("centroids");
  auto frozen = Json::parse(lines.back()).at("frozen_at").get<std::string>();
  auto arr = Json::parse(read_text_file(root_ / "drift" / ("centroids-" + frozen + ".json")));
  std::vector<drift::ClassCentroid> out;
  for (const auto& c : arr) out.push_back(drift::centroid_from_json(c));
  return out;
}

void Store::append_drift_report(const Json& report) {
  append_line(root_ / "drift" / "reports.jsonl", canonical_json(report));
}

std::optional<Json> Store::latest_drift_report() const {
  auto lines = read_lines(root_ / "drift" / "reports.jsonl");
  if (lines.empty()) return std::nullopt;
  return Json::parse(lines.back());
}

void Store::append_golden_trend(const drift::GoldenPoint& p) {
  append_line(root_ / "metrics" / "golden_trend.jsonl",
              canonical_json(Json{{"prompt_hash", p.prompt_hash},
                                  {"timestamp", p.timestamp},
                                  {"macro_f1", p.macro_f1}}));
}

std::vector<drift::GoldenPoint> Store::golden_trend() const {
  std::vector<drift::GoldenPoint> out;
  for (const auto& line : read_lines(root_ / "metrics" / "golden_trend.jsonl")) {
    auto j = Json::parse(line);
    out.push_back({j.at("prompt_hash").get<std::string>(), j.at("timestamp").get<std::string>(),
                   j.at("macro_f1").get<double>()});
  }
  return out;
}

void Store::save_golden(const std::string& name, const GoldenSet& golden) {
  check_component(name);
  write_text_file_atomic(root_ / "golden" / (name + ".jsonl"), golden_to_jsonl(golden));
}

fs::path Store::preferences_path() const { return root_ / "prefs" / "preferences.jsonl"; }

void Store::write_artifact(const fs::path& relative, std::string_view contents) {
  if (relative.is_absolute()) throw InvalidArgument("artifact path must be relative to the store");
  write_text_file_atomic(root_ / relative, contents);
}

}  // namespace taxonomist::store
