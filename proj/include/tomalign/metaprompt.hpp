#ifndef TOMALIGN_METAPROMPT_HPP
#define TOMALIGN_METAPROMPT_HPP

// LLM-as-an-editor. Score deltas against an editor's targets become
// templated feedback lines; the lines, the source facts and the previous
// paragraph form the meta prompt that asks the editor model for a rewrite.

#include <cmath>
#include <fstream>
#include <sstream>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include <json.hpp>

#include "tomalign/error.hpp"
#include "tomalign/gateway.hpp"
#include "tomalign/geometry.hpp"
#include "tomalign/judgement.hpp"

namespace tomalign {

inline constexpr double kPerfectBand = 0.5;

/// Kept byte-identical to assets/editor_system_prompt.txt.
inline constexpr std::string_view kEditorSystemPrompt =
    "You are an Editor who re-writes the given paragraph based on the feedback to get it "
    "approved. Using the context and previously generated paragraph, write a new paragraph to "
    "improve the scores to meet the quality requirements. \n\n\n the parameters are based out "
    "of 0-100, \n\n\n Parameters: \n\n 1. Factualness - Full score if all the facts like "
    "numbers, names, gender pronouns etc. in paragraph are matching the context. \n 2. Novelty "
    "- Higher score if the individual sentence structure is changed, order is changed or new "
    "content is added. \n 3. Topic Alignment - High score if the paragraph tells the story of "
    "the context without missing any important facts. \n 4. Repetitiveness - Higher score if "
    "the paragraph has repetitive stats or talks about the same point again and again.";

inline std::string load_system_prompt(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IOError("cannot open system prompt '" + path + "'");
  std::ostringstream text;
  text << in.rdbuf();
  return text.str();
}

enum class Direction { above, below, perfect };

NLOHMANN_JSON_SERIALIZE_ENUM(Direction, {
                                            {Direction::above, "above"},
                                            {Direction::below, "below"},
                                            {Direction::perfect, "perfect"},
                                        })

struct DimensionDelta {
  DimensionSpec dimension;
  /// current - target, in points of the 0-100 scale.
  double delta_points = 0.0;
  Direction direction = Direction::perfect;

  friend bool operator==(const DimensionDelta&, const DimensionDelta&) = default;
};

inline Direction classify_delta(double delta_points, double band = kPerfectBand) {
  if (std::abs(delta_points) <= band) return Direction::perfect;
  return delta_points > 0.0 ? Direction::above : Direction::below;
}

inline std::vector<DimensionDelta> compute_deltas(std::span<const double> current,
                                                  std::span<const double> targets,
                                                  std::span<const DimensionSpec> dims,
                                                  double band = kPerfectBand) {
  if (current.size() != targets.size() || current.size() != dims.size()) {
    throw ShapeError("deltas need equally many scores (" + std::to_string(current.size()) +
                     "), targets (" + std::to_string(targets.size()) + ") and dimensions (" +
                     std::to_string(dims.size()) + ")");
  }
  std::vector<DimensionDelta> out;
  out.reserve(dims.size());
  for (std::size_t n = 0; n < dims.size(); ++n) {
    const double delta = current[n] - targets[n];
    out.push_back({dims[n], delta, classify_delta(delta, band)});
  }
  return out;
}

inline std::vector<DimensionDelta> compute_deltas(const JudgeResult& result,
                                                  std::span<const double> targets,
                                                  std::span<const DimensionSpec> dims,
                                                  double band = kPerfectBand) {
  return compute_deltas(std::span<const double>(result.raw_scores), targets, dims, band);
}

inline std::string render_feedback(const DimensionDelta& delta) {
  const auto& d = delta.dimension;
  if (delta.direction == Direction::perfect) {
    return '"' + d.label() + "\" has perfect expectation score. Do not change \"" +
           d.lower_name() + '"';
  }
  const bool above = delta.direction == Direction::above;
  return '"' + d.label() + "\" is " + std::to_string(std::lround(std::abs(delta.delta_points))) +
         "% " + (above ? "above" : "below") + " expectations. Please improve by " +
         (above ? "decreasing " : "increasing ") + d.lower_name() + ".";
}

inline void to_json(nlohmann::json& j, const DimensionDelta& d) {
  j = {{"dimension", d.dimension.key()},
       {"delta_points", d.delta_points},
       {"direction", d.direction},
       {"feedback", render_feedback(d)}};
}

struct MetaPrompt {
  std::string system_prompt{kEditorSystemPrompt};
  std::vector<std::string> feedback_lines;
  std::string context;
  std::string previous_text;
  std::string instruction;

  /// The full prompt text sent to the editor model.
  std::string render() const {
    std::ostringstream out;
    out << system_prompt << "\n\nFeedback:\n";
    for (const auto& line : feedback_lines) out << line << "\n";
    out << "\nContext:\n" << context << "\n\nPreviously generated paragraph:\n" << previous_text;
    if (!instruction.empty()) out << "\n\nInstruction:\n" << instruction;
    out << "\n\nNew paragraph:\n";
    return out.str();
  }

  friend bool operator==(const MetaPrompt&, const MetaPrompt&) = default;
};

NLOHMANN_DEFINE_TYPE_NON_INTRUSIVE(MetaPrompt, system_prompt, feedback_lines, context,
                                   previous_text, instruction)

inline MetaPrompt build_meta_prompt(std::span<const DimensionDelta> deltas, std::string context,
                                    std::string previous_text, std::string instruction,
                                    std::string system_prompt = std::string(kEditorSystemPrompt)) {
  if (previous_text.empty()) throw EmptyInput("meta prompt needs the previous paragraph");
  MetaPrompt meta;
  meta.system_prompt = std::move(system_prompt);
  meta.feedback_lines.reserve(deltas.size());
  for (const auto& d : deltas) meta.feedback_lines.push_back(render_feedback(d));
  meta.context = std::move(context);
  meta.previous_text = std::move(previous_text);
  meta.instruction = std::move(instruction);
  return meta;
}

struct RewriteResult {
  std::string prompt;
  std::string text;
};

inline RewriteResult rewrite_content(const Gateway& editor, const MetaPrompt& meta,
                                     const GenerationParams& params) {
  RewriteResult out{meta.render(), {}};
  out.text = editor.generate(out.prompt, params);
  return out;
}

}  // namespace tomalign

#endif  // TOMALIGN_METAPROMPT_HPP
