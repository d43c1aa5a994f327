#ifndef TOMALIGN_JUDGEMENT_HPP
#define TOMALIGN_JUDGEMENT_HPP

// LLM-as-a-judge: prompt construction, response parsing and the retrying
// judge call. Judges answer with one JSON object holding a 0-100 score per
// dimension (keyed by DimensionSpec::key()) and an optional "rationale".

#include <algorithm>
#include <optional>
#include <span>
#include <sstream>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include <json.hpp>

#include "tomalign/error.hpp"
#include "tomalign/gateway.hpp"
#include "tomalign/geometry.hpp"

namespace tomalign {

struct FewShotExample {
  std::string content;
  std::string context;
  std::string expected_json;

  friend bool operator==(const FewShotExample&, const FewShotExample&) = default;
};

NLOHMANN_DEFINE_TYPE_NON_INTRUSIVE(FewShotExample, content, context, expected_json)

struct JudgeResult {
  ScoreVector scores;
  std::vector<double> raw_scores;
  std::optional<std::string> rationale;
  /// Set when an out-of-range judge value was coerced into [0,100].
  bool clamped = false;
  /// Number of unparseable responses before this one.
  int parse_retries = 0;

  static JudgeResult from_raw(std::vector<double> raw, bool clamped = false) {
    JudgeResult r;
    r.scores = normalize_scores(raw);
    r.raw_scores = std::move(raw);
    r.clamped = clamped;
    return r;
  }

  friend bool operator==(const JudgeResult&, const JudgeResult&) = default;
};

inline void to_json(nlohmann::json& j, const JudgeResult& r) {
  j = {{"scores", r.scores},
       {"raw_scores", r.raw_scores},
       {"rationale", r.rationale ? nlohmann::json(*r.rationale) : nlohmann::json(nullptr)},
       {"clamped", r.clamped},
       {"parse_retries", r.parse_retries}};
}

inline void from_json(const nlohmann::json& j, JudgeResult& r) {
  r = JudgeResult::from_raw(j.at("raw_scores").get<std::vector<double>>(),
                            j.value("clamped", false));
  if (j.contains("rationale") && j["rationale"].is_string()) {
    r.rationale = j["rationale"].get<std::string>();
  }
  r.parse_retries = j.value("parse_retries", 0);
}

namespace detail {

/// Returns the first balanced {...} span in `text` that parses as a JSON
/// object, skipping braces inside string literals.
inline std::optional<nlohmann::json> first_json_object(std::string_view text) {
  for (auto start = text.find('{'); start != std::string_view::npos;
       start = text.find('{', start + 1)) {
    int depth = 0;
    bool in_string = false;
    bool escaped = false;
    for (std::size_t i = start; i < text.size(); ++i) {
      const char ch = text[i];
      if (in_string) {
        if (escaped) {
          escaped = false;
        } else if (ch == '\\') {
          escaped = true;
        } else if (ch == '"') {
          in_string = false;
        }
        continue;
      }
      if (ch == '"') {
        in_string = true;
      } else if (ch == '{') {
        ++depth;
      } else if (ch == '}' && --depth == 0) {
        auto parsed = nlohmann::json::parse(text.substr(start, i - start + 1), nullptr, false);
        if (!parsed.is_discarded() && parsed.is_object()) return parsed;
        break;
      }
    }
  }
  return std::nullopt;
}

}  // namespace detail

inline JudgeResult parse_judge_response(std::string_view text,
                                        std::span<const DimensionSpec> dims) {
  auto object = detail::first_json_object(text);
  if (!object) throw ParseError("judge response contains no JSON object");

  std::vector<double> raw;
  raw.reserve(dims.size());
  bool clamped = false;
  for (const auto& d : dims) {
    const auto key = d.key();
    auto it = object->find(key);
    if (it == object->end()) throw MissingDimension(key);
    if (!it->is_number()) throw ParseError("judge value for '" + key + "' is not a number");
    const double value = it->get<double>();
    const double bounded = std::clamp(value, 0.0, kMaxRawScore);
    clamped = clamped || bounded != value;
    raw.push_back(bounded);
  }
  auto result = JudgeResult::from_raw(std::move(raw), clamped);
  if (auto it = object->find("rationale"); it != object->end() && it->is_string()) {
    result.rationale = it->get<std::string>();
  }
  return result;
}

struct JudgeRequest {
  std::string content;
  std::string context;
  std::vector<DimensionSpec> dimensions;
  std::vector<FewShotExample> few_shot_examples;

  void validate() const {
    validate_dimensions(dimensions);
    for (std::size_t i = 0; i < few_shot_examples.size(); ++i) {
      try {
        parse_judge_response(few_shot_examples[i].expected_json, dimensions);
      } catch (const Error& e) {
        throw ValidationError("few-shot example " + std::to_string(i) +
                              " does not hold valid score JSON: " + e.what());
      }
    }
  }
};

inline std::string build_judge_prompt(const JudgeRequest& request) {
  request.validate();
  std::ostringstream out;
  out << "You are a judge of tennis match reports. Score the content on each dimension "
         "below with a numerical score between 0 and 100.\n\nDimensions:\n";
  for (const auto& d : request.dimensions) {
    out << "- " << d.key() << " (" << d.name << "): " << d.definition << "\n";
  }
  out << "\nRespond with a single JSON object containing exactly these numeric fields: ";
  for (std::size_t n = 0; n < request.dimensions.size(); ++n) {
    out << (n ? ", " : "") << '"' << request.dimensions[n].key() << '"';
  }
  out << ". An optional \"rationale\" string field may explain the scores. "
         "Do not write anything outside the JSON object.\n";

  for (std::size_t i = 0; i < request.few_shot_examples.size(); ++i) {
    const auto& ex = request.few_shot_examples[i];
    out << "\n### Example " << (i + 1) << "\nContext:\n"
        << ex.context << "\n\nContent:\n"
        << ex.content << "\n\nScores:\n"
        << ex.expected_json << "\n";
  }
  out << "\n### Task\nContext:\n"
      << request.context << "\n\nContent:\n"
      << request.content << "\n\nScores:\n";
  return out.str();
}

struct JudgeConfig {
  std::vector<DimensionSpec> dimensions = default_dimensions();
  std::vector<FewShotExample> few_shot;
  /// Extra attempts after an unparseable response.
  int retries = 2;
  GenerationParams params{"", 0.2, 0.9, 50, 512};
};

/// Builds the prompt, calls the judge, parses. Unparseable answers are
/// retried up to `config.retries` times; backend errors propagate as-is.
inline JudgeResult judge_content(const Gateway& gateway, const std::string& content,
                                 const std::string& context, const JudgeConfig& config) {
  const JudgeRequest request{content, context, config.dimensions, config.few_shot};
  const auto prompt = build_judge_prompt(request);
  std::string last_error;
  for (int attempt = 0; attempt <= config.retries; ++attempt) {
    const auto text = gateway.generate(prompt, config.params);
    try {
      auto result = parse_judge_response(text, config.dimensions);
      result.parse_retries = attempt;
      return result;
    } catch (const ParseError& e) {
      last_error = e.what();
    } catch (const MissingDimension& e) {
      last_error = e.what();
    }
  }
  throw JudgeUnparseable("judge gave no usable scores after " +
                         std::to_string(config.retries + 1) + " attempts: " + last_error);
}

}  // namespace tomalign

#endif  // TOMALIGN_JUDGEMENT_HPP
