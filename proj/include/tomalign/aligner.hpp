#ifndef TOMALIGN_ALIGNER_HPP
#define TOMALIGN_ALIGNER_HPP

// The alignment loop: judge the content, compare its graph with the
// editor's expectation graph, stop on convergence or budget, otherwise turn
// the score deltas into a meta prompt, step the search parameters and ask
// the editor model for a rewrite.
//
// Search: an instruction is held while the loss keeps improving. After
// `stall_window` judged iterations without a new best, the next instruction
// candidate is selected and top_p / top_k move one step of eta * range.
// The step direction starts negative and flips whenever the mean loss of
// the segment just finished exceeds that of the segment before it.

#include <algorithm>
#include <chrono>
#include <cmath>
#include <functional>
#include <memory>
#include <span>
#include <sstream>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include <json.hpp>

#include "tomalign/error.hpp"
#include "tomalign/gateway.hpp"
#include "tomalign/generation_params.hpp"
#include "tomalign/geometry.hpp"
#include "tomalign/judgement.hpp"
#include "tomalign/metaprompt.hpp"
#include "tomalign/profiles.hpp"

namespace tomalign {

struct IterationRecord {
  std::size_t index = 0;
  /// Parameters of the rewrite that produced `content` (the initial
  /// parameters for iteration 0).
  GenerationParams params;
  std::string content;
  /// Meta prompt that produced `content`; empty for iteration 0.
  std::string prompt;
  JudgeResult judge_result;
  AlignmentMetrics metrics;
  std::chrono::duration<double> elapsed{0.0};

  friend bool operator==(const IterationRecord&, const IterationRecord&) = default;
};

inline void to_json(nlohmann::json& j, const IterationRecord& r) {
  j = {{"index", r.index},
       {"params", r.params},
       {"content", r.content},
       {"prompt", r.prompt},
       {"judge_result", r.judge_result},
       {"metrics", r.metrics},
       {"elapsed_seconds", r.elapsed.count()}};
}

inline void from_json(const nlohmann::json& j, IterationRecord& r) {
  j.at("index").get_to(r.index);
  j.at("params").get_to(r.params);
  j.at("content").get_to(r.content);
  r.prompt = j.value("prompt", std::string{});
  j.at("judge_result").get_to(r.judge_result);
  j.at("metrics").get_to(r.metrics);
  r.elapsed = std::chrono::duration<double>(j.value("elapsed_seconds", 0.0));
}

struct Budget {
  /// Judge calls, the initial judging included.
  std::size_t max_iterations = 21;
  std::chrono::duration<double> max_wall_time{120.0};

  void validate() const {
    if (max_iterations == 0) throw ConfigError("budget needs at least one iteration");
    if (!(max_wall_time.count() > 0.0)) throw ConfigError("budget wall time must be positive");
  }
};

struct SearchPolicy {
  std::vector<std::string> instruction_candidates{
      "Rewrite the paragraph so it meets the editor's expectations while keeping every fact "
      "from the context.",
      "Rewrite the paragraph in a livelier, more vivid tone while keeping every fact from the "
      "context.",
      "Rewrite the paragraph in a concise, matter-of-fact tone while keeping every fact from the "
      "context.",
  };
  std::size_t stall_window = 3;
  double eta = 0.1;
  double tp_min = 0.5;
  double tp_max = 1.0;
  int tk_min = 10;
  int tk_max = 100;

  void validate() const {
    if (instruction_candidates.empty()) throw ConfigError("need at least one instruction");
    if (stall_window == 0) throw ConfigError("stall window must be positive");
    if (!(eta > 0.0)) throw ConfigError("eta must be positive");
    if (!(tp_min > 0.0 && tp_min <= tp_max && tp_max <= 1.0)) {
      throw ConfigError("top_p range must lie in (0,1]");
    }
    if (!(tk_min >= 1 && tk_min <= tk_max)) throw ConfigError("top_k range is invalid");
  }

  double tp_step() const { return eta * (tp_max - tp_min); }
  int tk_step() const {
    return std::max(1, static_cast<int>(std::lround(eta * (tk_max - tk_min))));
  }
};

enum class AlignmentStatus { converged, budget_exhausted };

NLOHMANN_JSON_SERIALIZE_ENUM(AlignmentStatus,
                             {
                                 {AlignmentStatus::converged, "converged"},
                                 {AlignmentStatus::budget_exhausted, "budget_exhausted"},
                             })

struct AlignmentOutcome {
  AlignmentStatus status = AlignmentStatus::budget_exhausted;
  IterationRecord best;
  std::vector<IterationRecord> history;
};

inline void to_json(nlohmann::json& j, const AlignmentOutcome& o) {
  j = {{"status", o.status}, {"best", o.best}, {"history", o.history}};
}

inline void from_json(const nlohmann::json& j, AlignmentOutcome& o) {
  j.at("status").get_to(o.status);
  j.at("best").get_to(o.best);
  j.at("history").get_to(o.history);
}

/// Thrown when a backend (or an unparseable judge) ends a session early.
/// Carries every iteration completed before the failure.
class AlignmentAborted : public BackendError {
 public:
  AlignmentAborted(const std::string& message, std::vector<IterationRecord> history,
                   ErrorKind cause)
      : BackendError(message), history_(std::move(history)), cause_(cause) {}

  const std::vector<IterationRecord>& history() const noexcept { return history_; }
  ErrorKind cause() const noexcept { return cause_; }

 private:
  std::vector<IterationRecord> history_;
  ErrorKind cause_;
};

/// Minimal loss; ties resolve to the earliest index.
inline IterationRecord select_best(std::span<const IterationRecord> history) {
  if (history.empty()) throw EmptyInput("cannot select from an empty history");
  const auto it = std::min_element(history.begin(), history.end(),
                                   [](const IterationRecord& a, const IterationRecord& b) {
                                     return a.metrics.loss < b.metrics.loss;
                                   });
  return *it;
}

/// Empirical risk: mean loss over the given records.
inline double empirical_risk(std::span<const IterationRecord> records) {
  if (records.empty()) throw EmptyInput("empirical risk of no records");
  double total = 0.0;
  for (const auto& r : records) total += r.metrics.loss;
  return total / static_cast<double>(records.size());
}

namespace detail {

/// First index of the trailing run of records sharing the same params.
inline std::size_t segment_start(std::span<const IterationRecord> history) {
  std::size_t s = history.size() - 1;
  while (s > 0 && history[s - 1].params == history[s].params) --s;
  return s;
}

/// Direction of the perturbation that opened the segment at `start`.
inline int opening_direction(std::span<const IterationRecord> history, std::size_t start,
                             const SearchPolicy& policy) {
  const auto& before = history[start - 1].params;
  const auto& after = history[start].params;
  if (after.top_p != before.top_p) return after.top_p > before.top_p ? 1 : -1;
  if (after.top_k != before.top_k) return after.top_k > before.top_k ? 1 : -1;
  // Both clamped: the bound they sit on tells which way they were pushed.
  return after.top_p >= policy.tp_max && after.top_k >= policy.tk_max ? 1 : -1;
}

}  // namespace detail

inline GenerationParams step_params(std::span<const IterationRecord> history,
                                    const SearchPolicy& policy) {
  if (history.empty()) throw EmptyInput("step_params needs at least one iteration");
  const auto& current = history.back().params;
  const std::size_t start = detail::segment_start(history);
  const auto segment = history.subspan(start);
  const auto best =
      static_cast<std::size_t>(std::min_element(segment.begin(), segment.end(),
                                                [](const auto& a, const auto& b) {
                                                  return a.metrics.loss < b.metrics.loss;
                                                }) -
                               segment.begin());
  if (segment.size() - 1 - best < policy.stall_window) return current;

  int direction = -1;
  if (start > 0) {
    direction = detail::opening_direction(history, start, policy);
    const auto previous = history.first(start);
    const auto prev_segment = previous.subspan(detail::segment_start(previous));
    if (empirical_risk(segment) > empirical_risk(prev_segment)) direction = -direction;
  }

  GenerationParams next = current;
  const auto& pool = policy.instruction_candidates;
  const auto found = std::find(pool.begin(), pool.end(), current.instruction);
  next.instruction = found == pool.end()
                         ? pool.front()
                         : pool[static_cast<std::size_t>(found - pool.begin() + 1) % pool.size()];
  next.top_p = std::clamp(current.top_p + direction * policy.tp_step(), policy.tp_min,
                          policy.tp_max);
  next.top_k = std::clamp(current.top_k + direction * policy.tk_step(), policy.tk_min,
                          policy.tk_max);
  return next;
}

struct AlignerConfig {
  JudgeConfig judge;
  /// Source facts shown to both judge and editor.
  std::string context;
  double threshold = kConvergenceThreshold;
  /// Instruction is replaced by the policy's first candidate when empty.
  GenerationParams initial_params;
  std::string system_prompt{kEditorSystemPrompt};
  std::function<void(const IterationRecord&)> on_iteration;
};

struct AlignerBackends {
  std::shared_ptr<const Gateway> judge;
  std::shared_ptr<const Gateway> editor;
};

inline AlignmentOutcome run_alignment(std::string initial_content,
                                      const EditorProfile& target_profile, const Budget& budget,
                                      const SearchPolicy& policy, const AlignerConfig& config,
                                      const AlignerBackends& backends) {
  budget.validate();
  policy.validate();
  if (!backends.judge || !backends.editor) throw ConfigError("aligner needs judge and editor");
  const auto& dims = config.judge.dimensions;
  if (target_profile.dimension_count() != dims.size()) {
    throw ShapeError("profile '" + target_profile.editor_id + "' has " +
                     std::to_string(target_profile.dimension_count()) +
                     " targets but the judge scores " + std::to_string(dims.size()) +
                     " dimensions");
  }

  const auto expected = profile_graph(target_profile);
  const auto& scov = expected.edge_weights;

  using clock = std::chrono::steady_clock;
  const auto started = clock::now();
  auto elapsed = [&] { return std::chrono::duration<double>(clock::now() - started); };

  GenerationParams params = config.initial_params;
  if (params.instruction.empty()) params.instruction = policy.instruction_candidates.front();

  AlignmentOutcome outcome;
  auto& history = outcome.history;
  std::string content = std::move(initial_content);
  std::string prompt;

  auto abort = [&](const Error& e) -> AlignmentAborted {
    return AlignmentAborted("alignment aborted after " + std::to_string(history.size()) +
                                " iterations: " + e.what(),
                            history, e.kind());
  };

  for (std::size_t i = 0;; ++i) {
    JudgeResult judged;
    try {
      judged = judge_content(*backends.judge, content, config.context, config.judge);
    } catch (const BackendError& e) {
      throw abort(e);
    } catch (const JudgeUnparseable& e) {
      throw abort(e);
    }

    const auto current = build_graph(judged.scores, scov);
    IterationRecord record{i,      params, content, prompt, std::move(judged),
                           measure_alignment(expected, current, config.threshold), elapsed()};
    history.push_back(std::move(record));
    if (config.on_iteration) config.on_iteration(history.back());

    if (history.back().metrics.converged) {
      outcome.status = AlignmentStatus::converged;
      break;
    }
    if (history.size() >= budget.max_iterations || elapsed() >= budget.max_wall_time) break;

    const auto deltas = compute_deltas(history.back().judge_result, target_profile.targets, dims);
    params = step_params(history, policy);
    const auto meta = build_meta_prompt(deltas, config.context, content, params.instruction,
                                        config.system_prompt);
    try {
      auto rewritten = rewrite_content(*backends.editor, meta, params);
      content = std::move(rewritten.text);
      prompt = std::move(rewritten.prompt);
    } catch (const BackendError& e) {
      throw abort(e);
    }
    if (elapsed() >= budget.max_wall_time) break;
  }

  outcome.best = select_best(history);
  return outcome;
}

/// One IterationRecord per line.
inline std::string history_to_jsonl(std::span<const IterationRecord> history) {
  std::string out;
  for (const auto& r : history) {
    out += nlohmann::json(r).dump();
    out += '\n';
  }
  return out;
}

inline std::vector<IterationRecord> history_from_jsonl(std::string_view text) {
  std::vector<IterationRecord> out;
  std::istringstream in{std::string(text)};
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    try {
      out.push_back(nlohmann::json::parse(line).get<IterationRecord>());
    } catch (const nlohmann::json::exception& e) {
      throw ParseError("history line " + std::to_string(line_no) + ": " + e.what());
    }
  }
  return out;
}

}  // namespace tomalign

#endif  // TOMALIGN_ALIGNER_HPP
