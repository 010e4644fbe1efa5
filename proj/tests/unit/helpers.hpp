#pragma once

#include <doctest.h>

#include <atomic>
#include <filesystem>
#include <memory>
#include <string>
#include <vector>

#include <unistd.h>

#include "taxonomist/corpus.hpp"
#include "taxonomist/gateway.hpp"
#include "taxonomist/schema.hpp"

namespace testing {

namespace fs = std::filesystem;
using taxonomist::Json;

inline const fs::path kFixtures = TAXONOMIST_FIXTURES;

class TempDir {
 public:
  TempDir() {
    static std::atomic<int> counter{0};
    path_ = fs::temp_directory_path() /
            ("taxonomist-unit-" + std::to_string(::getpid()) + "-" + std::to_string(counter++));
    fs::remove_all(path_);
    fs::create_directories(path_);
  }
  ~TempDir() { fs::remove_all(path_); }
  const fs::path& path() const { return path_; }
  fs::path operator/(const std::string& name) const { return path_ / name; }

 private:
  fs::path path_;
};

inline taxonomist::schema::ClassSchema flat_schema(const std::vector<std::string>& names) {
  Json parents = Json::array();
  for (const auto& n : names) {
    parents.push_back({{"internal_name", n}, {"definition", "Documents about " + n + "."}});
  }
  return taxonomist::schema::schema_from_json(Json{{"version", 1}, {"parents", parents}});
}

inline taxonomist::schema::ClassSchema fixture_schema() {
  return taxonomist::schema::load_schema(kFixtures / "schema.toml");
}

inline std::unique_ptr<taxonomist::gateway::MockBackend> mock(taxonomist::gateway::MockProfile p,
                                                             const taxonomist::schema::ClassSchema& s) {
  p.bind(s);
  return std::make_unique<taxonomist::gateway::MockBackend>(std::move(p));
}

inline taxonomist::gateway::MockProfile fixture_profile() {
  return taxonomist::gateway::backend_config_from_json(
             taxonomist::load_structured_file(kFixtures / "config.toml"), kFixtures)
      .mock_profile;
}

inline taxonomist::corpus::ProcessedDocument doc(const std::string& id, const std::string& text) {
  taxonomist::corpus::ProcessedDocument d;
  d.id = id;
  d.source_id = id;
  d.text = text;
  d.token_estimate = taxonomist::estimate_tokens(taxonomist::split_words(text).size());
  return d;
}

inline taxonomist::corpus::Corpus make_corpus(const std::vector<std::pair<std::string, std::string>>& docs) {
  taxonomist::corpus::Corpus c;
  for (const auto& [id, text] : docs) c.documents.push_back(doc(id, text));
  return c;
}

}  // namespace testing
