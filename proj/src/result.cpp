#include "taxonomist/result.hpp"

namespace taxonomist {

Json result_to_json(const ClassificationResult& r) {
  Json j{{"doc_id", r.doc_id},
         {"parent", r.parent},
         {"raw_response", r.raw_response},
         {"prompt_hash", r.prompt_hash},
         {"backend_id", r.backend_id},
         {"latency_ms", r.latency_ms}};
  j["child"] = r.child ? Json(*r.child) : Json(nullptr);
  j["timestamp"] = r.timestamp ? Json(*r.timestamp) : Json(nullptr);
  return j;
}

ClassificationResult result_from_json(const Json& j) {
  ClassificationResult r;
  r.doc_id = j.at("doc_id").get<std::string>();
  r.parent = j.at("parent").get<std::string>();
  if (j.contains("child") && !j.at("child").is_null()) r.child = j.at("child").get<std::string>();
  r.raw_response = j.value("raw_response", std::string{});
  r.prompt_hash = j.value("prompt_hash", std::string{});
  r.backend_id = j.value("backend_id", std::string{});
  r.latency_ms = j.value("latency_ms", 0.0);
  if (j.contains("timestamp") && !j.at("timestamp").is_null()) {
    r.timestamp = j.at("timestamp").get<std::string>();
  }
  return r;
}

}  // namespace taxonomist
