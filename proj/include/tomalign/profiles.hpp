#ifndef TOMALIGN_PROFILES_HPP
#define TOMALIGN_PROFILES_HPP

// Editor expectation profiles learned from accepted human edits. Each edit
// contributes the judge scores of the edited text as one sample row; the
// targets are the running column means, and the samples also feed the
// covariance that weights the profile graph's edges.

#include <cctype>
#include <cmath>
#include <cstdint>
#include <map>
#include <set>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include <json.hpp>

#include "tomalign/error.hpp"
#include "tomalign/geometry.hpp"
#include "tomalign/judgement.hpp"

namespace tomalign {

struct EditorProfile {
  std::string editor_id;
  /// Per-dimension targets on the 0-100 scale.
  std::vector<double> targets;
  std::size_t sample_count = 0;
  /// Judge scores (0-100) of every accepted edit, one row per edit.
  std::vector<std::vector<double>> samples;

  /// A profile with no edits; targets default to the dimension ideals.
  static EditorProfile cold_start(std::string editor_id, std::span<const DimensionSpec> dims) {
    return {std::move(editor_id), ideal_scores(dims), 0, {}};
  }

  std::size_t dimension_count() const noexcept { return targets.size(); }

  /// Samples on the unit scale; the targets stand in as one row when empty.
  SampleMatrix sample_matrix() const {
    SampleMatrix m;
    if (samples.empty()) {
      m.append(normalize_scores(targets));
    } else {
      for (const auto& row : samples) m.append(normalize_scores(row));
    }
    return m;
  }

  friend bool operator==(const EditorProfile&, const EditorProfile&) = default;
};

NLOHMANN_DEFINE_TYPE_NON_INTRUSIVE(EditorProfile, editor_id, targets, sample_count, samples)

struct EditEvent {
  std::string editor_id;
  std::string content_id;
  std::string text_before;
  std::string text_after;
  JudgeResult judge_result_after;
  std::int64_t timestamp_ms = 0;
};

NLOHMANN_DEFINE_TYPE_NON_INTRUSIVE(EditEvent, editor_id, content_id, text_before, text_after,
                                   judge_result_after, timestamp_ms)

inline EditorProfile record_edit(EditorProfile profile, const EditEvent& event) {
  if (event.text_after.empty()) throw ValidationError("edited text is empty");
  const auto& row = event.judge_result_after.raw_scores;
  if (row.size() != profile.dimension_count()) {
    throw ShapeError("edit has " + std::to_string(row.size()) + " scores but profile '" +
                     profile.editor_id + "' tracks " +
                     std::to_string(profile.dimension_count()) + " dimensions");
  }
  normalize_scores(row);  // range check
  profile.samples.push_back(row);
  profile.sample_count = profile.samples.size();
  for (std::size_t c = 0; c < profile.targets.size(); ++c) {
    std::vector<double> column;
    column.reserve(profile.samples.size());
    for (const auto& r : profile.samples) column.push_back(r[c]);
    profile.targets[c] = detail::mean(std::move(column));
  }
  return profile;
}

/// The editor's expectation graph: column means as vertices, scaled
/// covariance of the samples as edge weights.
inline TomGraph profile_graph(const EditorProfile& profile) {
  const auto samples = profile.sample_matrix();
  return build_graph(build_expectation(samples), scaled_covariance(samples));
}

namespace detail {

inline std::map<std::string, double> term_frequencies(std::string_view text,
                                                      const std::set<std::string>& stopwords) {
  std::map<std::string, double> tf;
  std::string word;
  auto flush = [&] {
    if (!word.empty() && !stopwords.contains(word)) tf[word] += 1.0;
    word.clear();
  };
  for (unsigned char ch : text) {
    if (std::isalnum(ch)) {
      word.push_back(static_cast<char>(std::tolower(ch)));
    } else {
      flush();
    }
  }
  flush();
  return tf;
}

}  // namespace detail

/// Cosine similarity of lowercase word term-frequency vectors.
inline double context_similarity(std::string_view content, std::string_view facts,
                                 const std::set<std::string>& stopwords = {}) {
  if (content.empty() || facts.empty()) throw EmptyInput("context similarity needs two texts");
  const auto a = detail::term_frequencies(content, stopwords);
  const auto b = detail::term_frequencies(facts, stopwords);
  if (a.empty() || b.empty()) return 0.0;

  // Walk both maps in key order so the sum is the same for (a,b) and (b,a).
  double dot = 0.0;
  auto ia = a.begin();
  auto ib = b.begin();
  while (ia != a.end() && ib != b.end()) {
    if (ia->first < ib->first) {
      ++ia;
    } else if (ib->first < ia->first) {
      ++ib;
    } else {
      dot += ia->second * ib->second;
      ++ia;
      ++ib;
    }
  }
  auto norm = [](const std::map<std::string, double>& v) {
    double sq = 0.0;
    for (const auto& [term, count] : v) sq += count * count;
    return std::sqrt(sq);
  };
  return std::clamp(dot / (norm(a) * norm(b)), 0.0, 1.0);
}

}  // namespace tomalign

#endif  // TOMALIGN_PROFILES_HPP
