#pragma once

#include <filesystem>
#include <functional>
#include <memory>
#include <string>

#include "taxonomist/alignment.hpp"

namespace taxonomist::serve {

struct ServeOptions {
  std::filesystem::path root;
  std::string host = "127.0.0.1";
  int port = 8080;  // 0 picks a free port
  alignment::DiagnosticThresholds thresholds;
  /// RFC3339 "now" for created_at stamps.
  std::function<std::string()> clock;
};

/// JSON API over a store. Every class label leaves the server as an
/// external alias; preference submissions are accepted as aliases too.
///
///   GET  /api/runs                 GET  /api/review/queue
///   GET  /api/runs/{id}            POST /api/preferences
///   GET  /api/alignment/{run}      GET  /api/drift/latest
///   GET  /api/diagnostics/{run}
class ReviewServer {
 public:
  explicit ReviewServer(ServeOptions options);
  ~ReviewServer();
  ReviewServer(const ReviewServer&) = delete;
  ReviewServer& operator=(const ReviewServer&) = delete;

  /// Binds the listening socket and returns the port. Throws PortInUse.
  int bind();
  /// Serves until stop(). Call bind() first.
  void run();
  void stop();

 private:
  struct Impl;
  std::unique_ptr<Impl> impl_;
};

}  // namespace taxonomist::serve
