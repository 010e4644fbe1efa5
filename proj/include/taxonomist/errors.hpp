#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>
#include <vector>

namespace taxonomist {

/// Base of every failure raised by the workbench. `code()` is a stable
/// machine-readable name (e.g. "UnknownLabel") used in JSON error payloads.
class Error : public std::runtime_error {
 public:
  Error(std::string code, const std::string& message)
      : std::runtime_error(message), code_(std::move(code)) {}

  const std::string& code() const noexcept { return code_; }

 private:
  std::string code_;
};

class InvalidArgument : public Error {
 public:
  explicit InvalidArgument(const std::string& message) : Error("InvalidArgument", message) {}
};

class InvalidConfig : public Error {
 public:
  explicit InvalidConfig(const std::string& message) : Error("InvalidConfig", message) {}
};

class IoError : public Error {
 public:
  explicit IoError(const std::string& message) : Error("IoError", message) {}
};

class ParseError : public Error {
 public:
  ParseError(std::size_t line, const std::string& message)
      : Error("ParseError", "line " + std::to_string(line) + ": " + message), line_(line) {}

  std::size_t line() const noexcept { return line_; }

 private:
  std::size_t line_;
};

/// Carries one offending identifier (document id, label, class name).
class KeyedError : public Error {
 public:
  KeyedError(std::string code, std::string key, const std::string& message)
      : Error(std::move(code), message), key_(std::move(key)) {}

  const std::string& key() const noexcept { return key_; }

 private:
  std::string key_;
};

/// Carries a list of offending identifiers.
class ListError : public Error {
 public:
  ListError(std::string code, std::vector<std::string> ids, const std::string& prefix)
      : Error(std::move(code), prefix + join(ids)), ids_(std::move(ids)) {}

  const std::vector<std::string>& ids() const noexcept { return ids_; }

 private:
  static std::string join(const std::vector<std::string>& ids) {
    std::string out;
    for (std::size_t i = 0; i < ids.size(); ++i) {
      if (i) out += ", ";
      out += ids[i];
    }
    return out;
  }

  std::vector<std::string> ids_;
};

class EmptyAfterCleaning : public KeyedError {
 public:
  explicit EmptyAfterCleaning(std::string id)
      : KeyedError("EmptyAfterCleaning", id, "document '" + id + "' is empty after cleaning") {}
};

class DuplicateId : public KeyedError {
 public:
  explicit DuplicateId(std::string id)
      : KeyedError("DuplicateId", id, "duplicate document id '" + id + "'") {}
};

class MissingAssignment : public ListError {
 public:
  explicit MissingAssignment(std::vector<std::string> ids)
      : ListError("MissingAssignment", std::move(ids), "documents without a classification: ") {}
};

class KeyMismatch : public ListError {
 public:
  explicit KeyMismatch(std::vector<std::string> ids)
      : ListError("KeyMismatch", std::move(ids), "ids present in only one assignment map: ") {}
};

class UnknownLabel : public KeyedError {
 public:
  explicit UnknownLabel(std::string label, std::size_t line = 0)
      : KeyedError("UnknownLabel", label,
                   (line ? "line " + std::to_string(line) + ": " : std::string{}) +
                       "unknown label '" + label + "'"),
        line_(line) {}

  std::size_t line() const noexcept { return line_; }

 private:
  std::size_t line_;
};

class UnknownClass : public KeyedError {
 public:
  explicit UnknownClass(std::string name)
      : KeyedError("UnknownClass", name, "unknown class '" + name + "'") {}
};

class OrphanExample : public KeyedError {
 public:
  explicit OrphanExample(std::string label)
      : KeyedError("OrphanExample", label,
                   "few-shot example references class '" + label + "' which is not in the schema") {}
};

class UnparseableResponse : public Error {
 public:
  explicit UnparseableResponse(std::string raw)
      : Error("UnparseableResponse", "could not parse model response: " + raw.substr(0, 200)),
        raw_(std::move(raw)) {}

  const std::string& raw() const noexcept { return raw_; }

 private:
  std::string raw_;
};

class TransportError : public Error {
 public:
  TransportError(int attempts, const std::string& message)
      : Error("TransportError",
              message + " (after " + std::to_string(attempts) + " attempts)"),
        attempts_(attempts) {}

  int attempts() const noexcept { return attempts_; }

 private:
  int attempts_;
};

class Timeout : public Error {
 public:
  explicit Timeout(const std::string& message) : Error("Timeout", message) {}
};

class RateLimited : public Error {
 public:
  explicit RateLimited(const std::string& message) : Error("RateLimited", message) {}
};

class ThresholdUnreachable : public Error {
 public:
  ThresholdUnreachable(double score, double threshold)
      : Error("ThresholdUnreachable", "input prompt scores " + std::to_string(score) +
                                          " which is below the threshold " +
                                          std::to_string(threshold)) {}
};

class NoDiscordantPairs : public Error {
 public:
  NoDiscordantPairs()
      : Error("NoDiscordantPairs", "McNemar test undefined: no discordant pairs (b + c = 0)") {}
};

class DegenerateTest : public Error {
 public:
  explicit DegenerateTest(const std::string& message) : Error("DegenerateTest", message) {}
};

class UnsmoothedZero : public KeyedError {
 public:
  explicit UnsmoothedZero(std::string label)
      : KeyedError("UnsmoothedZero", label,
                   "reference probability of '" + label + "' is zero and smoothing is disabled") {}
};

class DimensionMismatch : public Error {
 public:
  explicit DimensionMismatch(const std::string& message) : Error("DimensionMismatch", message) {}
};

class ZeroVector : public Error {
 public:
  ZeroVector() : Error("ZeroVector", "cosine similarity undefined for a zero vector") {}
};

class ProviderMismatch : public Error {
 public:
  explicit ProviderMismatch(const std::string& message) : Error("ProviderMismatch", message) {}
};

class ZeroCentroid : public KeyedError {
 public:
  explicit ZeroCentroid(std::string class_name)
      : KeyedError("ZeroCentroid", class_name,
                   "member embeddings of '" + class_name + "' cancel to a zero centroid") {}
};

class MissingCentroid : public KeyedError {
 public:
  explicit MissingCentroid(std::string class_name)
      : KeyedError("MissingCentroid", class_name, "no centroid for class '" + class_name + "'") {}
};

class MissingDescription : public KeyedError {
 public:
  explicit MissingDescription(std::string class_name)
      : KeyedError("MissingDescription", class_name,
                   "no description for class '" + class_name + "'") {}
};

class DuplicateJudgment : public Error {
 public:
  explicit DuplicateJudgment(const std::string& message) : Error("DuplicateJudgment", message) {}
};

class LabelEqualsLoser : public KeyedError {
 public:
  explicit LabelEqualsLoser(std::string label)
      : KeyedError("LabelEqualsLoser", label,
                   "winning and losing labels are both '" + label + "'") {}
};

class WinnerNotCandidate : public KeyedError {
 public:
  explicit WinnerNotCandidate(std::string label)
      : KeyedError("WinnerNotCandidate", label,
                   "judge picked '" + label + "' which was not offered") {}
};

class InsufficientOverlap : public Error {
 public:
  InsufficientOverlap(const std::string& a, const std::string& b, std::size_t shared)
      : Error("InsufficientOverlap", "reviewers '" + a + "' and '" + b + "' share only " +
                                         std::to_string(shared) + " document(s)") {}
};

class EmptyGoldenSet : public Error {
 public:
  EmptyGoldenSet() : Error("EmptyGoldenSet", "golden set has no entries") {}
};

class NotFound : public KeyedError {
 public:
  explicit NotFound(std::string what)
      : KeyedError("NotFound", what, "not found: " + what) {}
};

class IntegrityError : public KeyedError {
 public:
  IntegrityError(std::string what, const std::string& detail)
      : KeyedError("IntegrityError", what, "integrity check failed for " + what + ": " + detail) {}
};

class LockConflict : public Error {
 public:
  explicit LockConflict(const std::string& message) : Error("LockConflict", message) {}
};

class UsageError : public Error {
 public:
  explicit UsageError(const std::string& message) : Error("UsageError", message) {}
};

class PortInUse : public Error {
 public:
  explicit PortInUse(int port)
      : Error("PortInUse", "cannot bind port " + std::to_string(port)) {}
};

}  // namespace taxonomist
