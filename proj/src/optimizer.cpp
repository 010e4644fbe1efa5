#include "taxonomist/optimizer.hpp"

#include <algorithm>

#include "taxonomist/errors.hpp"

namespace taxonomist::prompting {

double validity(const schema::ClassSchema& schema, const PromptSpec& spec,
                const GoldenSet& validation, gateway::Backend& backend) {
  auto prompt = build_prompt(schema, spec);
  return golden_eval(validation, gateway::classifier(prompt, schema, backend)).macro_f1;
}

OptimizeResult optimize_prompt(const schema::ClassSchema& schema, const PromptSpec& spec,
                               const GoldenSet& validation, double theta,
                               gateway::Backend& backend) {
  if (validation.empty()) throw EmptyGoldenSet();
  if (!(theta >= 0.0 && theta <= 1.0)) throw InvalidArgument("theta must lie in [0, 1]");

  OptimizeResult out;
  out.spec = spec;
  out.input_tokens = build_prompt(schema, spec).token_estimate;
  out.initial_score = validity(schema, spec, validation, backend);
  if (out.initial_score < theta) throw ThresholdUnreachable(out.initial_score, theta);
  out.score = out.initial_score;

  for (bool changed = true; changed;) {
    changed = false;
    auto segments = build_prompt(schema, out.spec).segments;
    std::vector<std::size_t> order;
    for (std::size_t i = 0; i < segments.size(); ++i) {
      if (segments[i].removable && !out.critical.count(segments[i].id)) order.push_back(i);
    }
    std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
      return segments[a].tokens > segments[b].tokens;
    });
    for (auto i : order) {
      auto candidate = out.spec;
      candidate.omitted_segments.insert(segments[i].id);
      double v = validity(schema, candidate, validation, backend);
      if (v >= theta) {
        out.spec = std::move(candidate);
        out.score = v;
        out.steps.push_back({segments[i].id, segments[i].tokens, v});
        changed = true;
        break;
      }
      out.critical.insert(segments[i].id);
    }
  }
  auto rendered = build_prompt(schema, out.spec);
  out.spec.hash = rendered.hash;
  out.output_tokens = rendered.token_estimate;
  return out;
}

Json optimize_result_to_json(const OptimizeResult& r) {
  Json steps = Json::array();
  for (const auto& s : r.steps) {
    steps.push_back({{"segment", s.segment_id}, {"tokens_saved", s.tokens_saved}, {"score", s.score}});
  }
  return Json{{"spec", spec_to_json(r.spec)},   {"initial_score", r.initial_score},
              {"score", r.score},               {"input_tokens", r.input_tokens},
              {"output_tokens", r.output_tokens}, {"steps", std::move(steps)},
              {"critical", r.critical}};
}

}  // namespace taxonomist::prompting
