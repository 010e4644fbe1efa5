#pragma once

#include <set>
#include <string>
#include <vector>

#include "taxonomist/gateway.hpp"
#include "taxonomist/golden.hpp"
#include "taxonomist/prompting.hpp"

namespace taxonomist::prompting {

struct AblationStep {
  std::string segment_id;
  std::size_t tokens_saved = 0;
  double score = 0;
};

struct OptimizeResult {
  PromptSpec spec;
  double initial_score = 0;
  double score = 0;
  std::size_t input_tokens = 0;
  std::size_t output_tokens = 0;
  std::vector<AblationStep> steps;
  /// Segments whose removal dropped V below the threshold.
  std::set<std::string> critical;
};

/// V(P): macro-F1 of the rendered prompt on the validation set.
double validity(const schema::ClassSchema& schema, const PromptSpec& spec,
                const GoldenSet& validation, gateway::Backend& backend);

/// Greedy segment ablation. Each pass tries removable segments in order of
/// token saving (ties: earliest first) and keeps the first removal with
/// V >= theta; it stops when a pass keeps nothing. Throws
/// ThresholdUnreachable if the input already scores below theta.
OptimizeResult optimize_prompt(const schema::ClassSchema& schema, const PromptSpec& spec,
                               const GoldenSet& validation, double theta,
                               gateway::Backend& backend);

Json optimize_result_to_json(const OptimizeResult& r);

}  // namespace taxonomist::prompting
