#pragma once

#include <compare>
#include <optional>
#include <string>

#include "taxonomist/util.hpp"

namespace taxonomist {

/// A hierarchical label (c, s) in internal names.
struct HierLabel {
  std::string parent;
  std::optional<std::string> child;

  auto operator<=>(const HierLabel&) const = default;

  std::string str() const { return child ? parent + "/" + *child : parent; }
};

struct ClassificationResult {
  std::string doc_id;
  std::string parent;
  std::optional<std::string> child;
  std::string raw_response;
  std::string prompt_hash;
  std::string backend_id;
  double latency_ms = 0.0;
  /// Copied from the source document when it carried one; drives windowing.
  std::optional<std::string> timestamp;

  bool operator==(const ClassificationResult&) const = default;

  HierLabel label() const { return {parent, child}; }
};

Json result_to_json(const ClassificationResult& r);
ClassificationResult result_from_json(const Json& j);

}  // namespace taxonomist
