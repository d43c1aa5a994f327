#ifndef TOMALIGN_REPLAY_HPP
#define TOMALIGN_REPLAY_HPP

// Offline replay of an event log through generation and alignment with
// simulated editors. Each event may carry {"simulation": {"lambda": x,
// "editor": id}}; in mock mode the judge of every alignment session is a
// contraction toward that editor's targets at rate lambda.

#include <chrono>
#include <cstdio>
#include <filesystem>
#include <iomanip>
#include <map>
#include <mutex>
#include <optional>
#include <random>
#include <sstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "tomalign/aligner.hpp"
#include "tomalign/gateway.hpp"
#include "tomalign/http_backend.hpp"
#include "tomalign/pipeline.hpp"
#include "tomalign/profiles.hpp"

namespace tomalign {

/// Raw targets of the four simulated editors (0-100 scale).
inline const std::vector<std::vector<double>>& synthetic_editor_bases() {
  static const std::vector<std::vector<double>> bases{
      {95, 65, 12, 95}, {90, 70, 15, 92}, {98, 60, 10, 96}, {92, 75, 18, 90}};
  return bases;
}

inline std::string synthetic_editor_id(std::size_t n) { return "editor-" + std::to_string(n + 1); }

/// Five recorded edits per editor, jittered by -2..+2 points so the column
/// means land exactly on the base and the covariance is non-trivial.
inline std::vector<EditorProfile> synthetic_profiles(std::span<const DimensionSpec> dims) {
  std::vector<EditorProfile> out;
  const auto& bases = synthetic_editor_bases();
  for (std::size_t k = 0; k < bases.size(); ++k) {
    if (bases[k].size() != dims.size()) {
      throw ShapeError("synthetic editors need " + std::to_string(bases[k].size()) +
                       " dimensions");
    }
    auto profile = EditorProfile::cold_start(synthetic_editor_id(k), dims);
    for (int e = 0; e < 5; ++e) {
      std::vector<double> row;
      for (std::size_t d = 0; d < dims.size(); ++d) {
        const double jitter = static_cast<double>((e + static_cast<int>(d * (k + 1))) % 5) - 2.0;
        row.push_back(std::clamp(bases[k][d] + jitter, 0.0, 100.0));
      }
      profile = record_edit(std::move(profile),
                            {profile.editor_id, "seed-" + std::to_string(e), "draft",
                             "edited draft", JudgeResult::from_raw(row), 0});
    }
    out.push_back(std::move(profile));
  }
  return out;
}

struct SynthOptions {
  std::size_t count = 50;
  std::vector<double> lambdas{0.3, 0.4, 0.5, 0.6, 0.7, 0.8, 0.9};
  /// Every n-th event is a pre-match preview; 0 disables them.
  std::size_t pre_match_every = 10;
  std::size_t partitions = 4;
  std::uint64_t seed = 2024;
};

inline std::vector<MatchEvent> synthesize_event_log(const SynthOptions& options = {}) {
  if (options.lambdas.empty()) throw ConfigError("need at least one lambda");
  for (double l : options.lambdas) {
    if (!(l > 0.0 && l < 1.0)) throw ConfigError("lambda must lie in (0,1)");
  }
  static const std::vector<std::string> players{
      "A. Moreau", "K. Lindqvist", "R. Okafor", "T. Hayashi", "M. Petrova",
      "J. Castillo", "L. Brennan", "S. Varga", "D. Mensah", "E. Rossi"};
  static const std::vector<std::string> rounds{"first round", "second round", "third round",
                                               "fourth round", "quarterfinal", "semifinal"};
  std::mt19937_64 rng(options.seed);
  std::uniform_int_distribution<std::size_t> pick(0, players.size() - 1);
  std::uniform_int_distribution<int> games(0, 4);
  std::uniform_int_distribution<int> aces(2, 19);
  std::uniform_int_distribution<int> firsts(55, 78);

  std::vector<MatchEvent> events;
  const auto editors = synthetic_editor_bases().size();
  for (std::size_t i = 0; i < options.count; ++i) {
    const auto a = pick(rng);
    auto b = pick(rng);
    if (b == a) b = (a + 1) % players.size();
    char id[32];
    std::snprintf(id, sizeof id, "ev-%04zu", i + 1);
    char match[32];
    std::snprintf(match, sizeof match, "m-%04zu", i + 1);
    const bool pre = options.pre_match_every != 0 && (i + 1) % options.pre_match_every == 0;

    nlohmann::json payload{
        {"players", {players[a], players[b]}},
        {"round", rounds[i % rounds.size()]},
        {"simulation",
         {{"lambda", options.lambdas[i % options.lambdas.size()]},
          {"editor", synthetic_editor_id((i / options.lambdas.size()) % editors)}}}};
    if (pre) {
      payload["facts"] = {players[a] + " leads the head-to-head " + std::to_string(games(rng) + 1) +
                              "-" + std::to_string(games(rng)),
                          "Winner meets the " + rounds[(i + 1) % rounds.size()] + " opponent"};
    } else {
      const auto score = "6-" + std::to_string(games(rng)) + " 6-" + std::to_string(games(rng));
      payload["score"] = score;
      payload["stats"] = {{"aces", {aces(rng), aces(rng)}},
                          {"first_serve_pct", {firsts(rng), firsts(rng)}}};
      payload["facts"] = {players[a] + " beat " + players[b] + " " + score,
                          players[a] + " saved every break point faced"};
    }
    events.push_back({id, match, pre ? EventKind::pre_match : EventKind::post_match,
                      std::move(payload), static_cast<int>(i % options.partitions)});
  }
  return events;
}

// ---------------------------------------------------------------------------

struct ReplayConfig {
  BackendKind backend = BackendKind::mock;
  /// Mock mode: replaces the per-event contraction judge during alignment.
  std::optional<MockScript> mock_script;
  /// http mode: every role uses this backend.
  BackendConfig http;
  std::size_t pool_size = WorkerPool::kDefaultSize;
  Budget budget;
  SearchPolicy policy;
  /// Used when an event carries no simulation.lambda.
  double default_lambda = 0.5;
  /// Judge scores of freshly generated sections in mock mode.
  std::vector<double> initial_scores{75, 35, 5, 80};
  /// Empty: a fresh temporary directory.
  std::filesystem::path store_dir;
};

struct SessionResult {
  std::string content_id;
  std::string section;
  std::string editor_id;
  std::optional<double> lambda;
  bool converged = false;
  bool failed = false;
  /// Index of the converging iteration (or of the last one).
  std::size_t iteration = 0;
  double best_loss = 0.0;
};

struct ReplayRow {
  /// Empty for the overall row.
  std::optional<double> lambda;
  std::size_t samples = 0;
  std::size_t converged = 0;
  double convergence_pct = 0.0;
  /// Mean converging-iteration index over converged sessions.
  double avg_convergence_iteration = 0.0;
};

struct ReplayMetrics {
  ReplayRow overall;
  std::vector<ReplayRow> by_lambda;
  std::size_t events = 0;
  std::size_t duplicates = 0;
  std::size_t failures = 0;
  double elapsed_seconds = 0.0;
  std::vector<SessionResult> sessions;
};

inline void to_json(nlohmann::json& j, const ReplayRow& r) {
  j = {{"lambda", r.lambda ? nlohmann::json(*r.lambda) : nlohmann::json(nullptr)},
       {"Convergence %", r.convergence_pct},
       {"Average Convergence Iteration Number", r.avg_convergence_iteration},
       {"Number of Samples", r.samples},
       {"converged", r.converged}};
}

inline void to_json(nlohmann::json& j, const SessionResult& s) {
  j = {{"content_id", s.content_id}, {"section", s.section},     {"editor_id", s.editor_id},
       {"lambda", s.lambda ? nlohmann::json(*s.lambda) : nlohmann::json(nullptr)},
       {"converged", s.converged},   {"failed", s.failed},       {"iteration", s.iteration},
       {"best_loss", s.best_loss}};
}

inline void to_json(nlohmann::json& j, const ReplayMetrics& m) {
  j = {{"overall", m.overall},       {"by_lambda", m.by_lambda},
       {"events", m.events},         {"duplicates", m.duplicates},
       {"failures", m.failures},     {"elapsed_seconds", m.elapsed_seconds},
       {"sessions", m.sessions}};
}

inline ReplayRow summarize(std::optional<double> lambda, std::span<const SessionResult> sessions) {
  ReplayRow row{lambda, sessions.size(), 0, 0.0, 0.0};
  std::vector<double> iterations;
  for (const auto& s : sessions) {
    if (!s.converged) continue;
    ++row.converged;
    iterations.push_back(static_cast<double>(s.iteration));
  }
  if (row.samples) row.convergence_pct = 100.0 * static_cast<double>(row.converged) / row.samples;
  if (!iterations.empty()) row.avg_convergence_iteration = detail::mean(std::move(iterations));
  return row;
}

/// Plain-text table with the overall row last.
inline std::string render_table(const ReplayMetrics& m) {
  std::ostringstream out;
  out << std::left << std::setw(8) << "Lambda" << std::setw(16) << "Convergence %"
      << std::setw(40) << "Average Convergence Iteration Number"
      << "Number of Samples\n";
  auto line = [&](const std::string& label, const ReplayRow& r) {
    std::ostringstream pct;
    pct << std::fixed << std::setprecision(1) << r.convergence_pct;
    std::ostringstream avg;
    avg << std::fixed << std::setprecision(2) << r.avg_convergence_iteration;
    out << std::left << std::setw(8) << label << std::setw(16) << pct.str() << std::setw(40)
        << (r.converged ? avg.str() : "n/a") << r.samples << "\n";
  };
  for (const auto& r : m.by_lambda) {
    std::ostringstream label;
    if (r.lambda) {
      label << std::fixed << std::setprecision(2) << *r.lambda;
    } else {
      label << "-";
    }
    line(label.str(), r);
  }
  if (m.overall.samples) line("All", m.overall);
  return out.str();
}

namespace detail {

inline std::filesystem::path fresh_temp_dir(const std::string& stem) {
  std::random_device rd;
  for (int attempt = 0; attempt < 100; ++attempt) {
    auto p = std::filesystem::temp_directory_path() / (stem + "-" + std::to_string(rd()));
    if (std::filesystem::create_directory(p)) return p;
  }
  throw IOError("cannot create a temporary directory");
}

inline MockScript canned_text(const std::string& text) {
  auto s = MockScript::replay({text});
  s.on_exhausted = MockScript::Exhausted::repeat_last;
  return s;
}

inline std::string scores_json(std::span<const DimensionSpec> dims, std::span<const double> raw) {
  nlohmann::json j = nlohmann::json::object();
  for (std::size_t i = 0; i < dims.size(); ++i) j[dims[i].key()] = raw[i];
  return j.dump();
}

}  // namespace detail

inline ReplayMetrics cli_replay(const std::vector<MatchEvent>& events, const ReplayConfig& config) {
  const auto started = std::chrono::steady_clock::now();
  PipelineConfig pc;
  pc.pool_size = config.pool_size;
  pc.budget = config.budget;
  pc.policy = config.policy;
  const auto& dims = pc.judge.dimensions;

  Gateways gateways;
  if (config.backend == BackendKind::http) {
    gateways = Gateways::uniform(make_gateway(config.http));
  } else {
    if (config.initial_scores.size() != dims.size()) {
      throw ConfigError("initial scores must cover every dimension");
    }
    gateways.facts = make_mock_gateway(detail::canned_text("- Match facts as listed"));
    gateways.writer = make_mock_gateway(detail::canned_text("Generated paragraph."));
    gateways.judge =
        make_mock_gateway(detail::canned_text(detail::scores_json(dims, config.initial_scores)));
    gateways.editor = make_mock_gateway(detail::canned_text("Rewritten paragraph."));
  }

  const auto dir = config.store_dir.empty() ? detail::fresh_temp_dir("tomalign-replay")
                                            : config.store_dir;
  auto store = std::make_shared<DocumentStore>(dir);
  Pipeline pipeline(store, gateways, pc);
  for (auto& p : synthetic_profiles(dims)) {
    if (!pipeline.has_profile(p.editor_id)) pipeline.put_profile(p);
  }

  ReplayMetrics metrics;
  metrics.events = events.size();
  std::mutex results_mutex;
  std::vector<std::shared_future<ContentItem>> jobs;

  for (std::size_t i = 0; i < events.size(); ++i) {
    const auto& event = events[i];
    const auto sim = event.payload.value("simulation", nlohmann::json::object());
    const double lambda = sim.value("lambda", config.default_lambda);
    const auto editor_id =
        sim.value("editor", synthetic_editor_id(i % synthetic_editor_bases().size()));

    auto align_all = [&, lambda, editor_id](const ContentItem& item) {
      const auto target = pipeline.profile(editor_id);
      for (const auto& section : item.sections) {
        SessionResult r{item.content_id, section.name, editor_id, std::nullopt};
        std::optional<AlignerBackends> backends;
        if (config.backend == BackendKind::mock) {
          r.lambda = config.mock_script ? std::nullopt : std::optional<double>(lambda);
          auto judge = config.mock_script
                           ? *config.mock_script
                           : MockScript::contract(config.initial_scores, target.targets, lambda);
          backends = AlignerBackends{make_mock_gateway(std::move(judge)),
                                     make_mock_gateway(detail::canned_text("Rewritten paragraph."))};
        }
        try {
          const auto outcome =
              pipeline.handle_regenerate(item.content_id, section.name, editor_id, backends);
          r.converged = outcome.status == AlignmentStatus::converged;
          r.iteration = outcome.history.back().index;
          r.best_loss = outcome.best.metrics.loss;
        } catch (const Error&) {
          r.failed = true;
        }
        std::lock_guard lock(results_mutex);
        metrics.sessions.push_back(std::move(r));
      }
    };
    auto submission = pipeline.consume_event(event, align_all);
    if (submission.duplicate) {
      ++metrics.duplicates;
    } else {
      jobs.push_back(submission.item);
    }
  }
  for (auto& j : jobs) j.wait();
  pipeline.wait_idle();

  std::sort(metrics.sessions.begin(), metrics.sessions.end(), [](const auto& a, const auto& b) {
    return std::tie(a.content_id, a.section) < std::tie(b.content_id, b.section);
  });
  std::map<std::optional<double>, std::vector<SessionResult>> groups;
  for (const auto& s : metrics.sessions) {
    groups[s.lambda].push_back(s);
    metrics.failures += s.failed;
  }
  for (const auto& [lambda, sessions] : groups) metrics.by_lambda.push_back(summarize(lambda, sessions));
  metrics.overall = summarize(std::nullopt, metrics.sessions);
  metrics.elapsed_seconds =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - started).count();
  return metrics;
}

inline ReplayMetrics cli_replay(const std::filesystem::path& event_log, const ReplayConfig& config) {
  return cli_replay(read_event_log(event_log), config);
}

}  // namespace tomalign

#endif  // TOMALIGN_REPLAY_HPP
