#include <gtest/gtest.h>

#include <chrono>
#include <fstream>
#include <set>

#include "test_support.hpp"
#include "tomalign/replay.hpp"

using namespace tomalign;
using tomalign::testing::TempDir;

namespace {

// Converging iteration of a contraction session, computed directly from the
// mock formula: iteration i is judged by call i+1.
std::optional<std::size_t> oracle_iteration(const std::vector<double>& initial,
                                            const EditorProfile& profile, double lambda,
                                            std::size_t budget = 21) {
  const auto& targets = profile.targets;
  const auto expected = profile_graph(profile);
  for (std::size_t i = 0; i < budget; ++i) {
    std::vector<double> raw;
    for (std::size_t d = 0; d < targets.size(); ++d) {
      raw.push_back(targets[d] - std::pow(1.0 - lambda, double(i + 1)) * (targets[d] - initial[d]));
    }
    const auto g = build_graph(normalize_scores(raw), expected.edge_weights);
    if (measure_alignment(expected, g).loss < 0.05) return i;
  }
  return std::nullopt;
}

ReplayConfig temp_config(const TempDir& dir) {
  ReplayConfig c;
  c.store_dir = dir.path();
  return c;
}

}  // namespace

TEST(SynthLog, ShapeAndDeterminism) {
  const auto events = synthesize_event_log();
  ASSERT_EQ(events.size(), 50u);
  EXPECT_EQ(events.front().event_id, "ev-0001");
  EXPECT_EQ(events.back().match_id, "m-0050");
  std::size_t pre = 0;
  std::set<std::string> ids;
  for (std::size_t i = 0; i < events.size(); ++i) {
    const auto& e = events[i];
    e.validate();
    ids.insert(e.event_id);
    pre += e.kind == EventKind::pre_match;
    const std::vector<double> grid{0.3, 0.4, 0.5, 0.6, 0.7, 0.8, 0.9};
    EXPECT_DOUBLE_EQ(e.payload["simulation"]["lambda"].get<double>(), grid[i % 7]);
    EXPECT_EQ(e.payload["simulation"]["editor"], "editor-" + std::to_string((i / 7) % 4 + 1));
    EXPECT_EQ(e.partition, static_cast<int>(i % 4));
    const auto players = e.payload["players"].get<std::vector<std::string>>();
    EXPECT_NE(players[0], players[1]);
  }
  EXPECT_EQ(pre, 5u);
  EXPECT_EQ(ids.size(), 50u);
  EXPECT_EQ(synthesize_event_log(), events);

  SynthOptions other;
  other.seed = 7;
  EXPECT_NE(synthesize_event_log(other), events);
  other.lambdas = {1.0};
  EXPECT_THROW(synthesize_event_log(other), ConfigError);
  other.lambdas = {};
  EXPECT_THROW(synthesize_event_log(other), ConfigError);
}

TEST(SynthLog, ProfilesLandOnTheirBases) {
  const auto profiles = synthetic_profiles(default_dimensions());
  ASSERT_EQ(profiles.size(), 4u);
  for (std::size_t k = 0; k < profiles.size(); ++k) {
    EXPECT_EQ(profiles[k].editor_id, synthetic_editor_id(k));
    EXPECT_EQ(profiles[k].sample_count, 5u);
    for (std::size_t d = 0; d < 4; ++d) {
      EXPECT_NEAR(profiles[k].targets[d], synthetic_editor_bases()[k][d], 1e-12);
    }
  }
}

TEST(Replay, TenEventsAtHalfRateConvergeOnIterationThree) {
  TempDir dir;
  SynthOptions o;
  o.count = 10;
  o.lambdas = {0.5};
  const auto m = cli_replay(synthesize_event_log(o), temp_config(dir));
  EXPECT_EQ(m.overall.samples, 28u);
  EXPECT_DOUBLE_EQ(m.overall.convergence_pct, 100.0);
  EXPECT_DOUBLE_EQ(m.overall.avg_convergence_iteration, 3.0);
  ASSERT_EQ(m.by_lambda.size(), 1u);
  EXPECT_EQ(m.by_lambda[0].lambda, 0.5);
  EXPECT_EQ(m.failures, 0u);
}

TEST(Replay, SessionsMatchTheContractionOracle) {
  TempDir dir;
  const auto m = cli_replay(synthesize_event_log(), temp_config(dir));
  ASSERT_EQ(m.sessions.size(), 140u);
  const auto profiles = synthetic_profiles(default_dimensions());
  for (const auto& s : m.sessions) {
    const auto k = std::stoul(s.editor_id.substr(7)) - 1;
    const auto expected = oracle_iteration({75, 35, 5, 80}, profiles[k], *s.lambda);
    ASSERT_TRUE(expected.has_value());
    EXPECT_TRUE(s.converged) << s.content_id << "/" << s.section;
    EXPECT_EQ(s.iteration, *expected) << s.content_id << "/" << s.section;
    EXPECT_LT(s.best_loss, 0.05);
  }
}

TEST(Replay, FiftyEventsAllConvergeAndFasterRatesNeedFewerIterations) {
  TempDir dir;
  const auto start = std::chrono::steady_clock::now();
  const auto m = cli_replay(synthesize_event_log(), temp_config(dir));
  const double seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  EXPECT_LT(seconds, 60.0);
  EXPECT_EQ(m.overall.samples, 140u);
  EXPECT_DOUBLE_EQ(m.overall.convergence_pct, 100.0);
  ASSERT_EQ(m.by_lambda.size(), 7u);
  std::size_t total = 0;
  for (std::size_t i = 0; i < m.by_lambda.size(); ++i) {
    total += m.by_lambda[i].samples;
    EXPECT_DOUBLE_EQ(m.by_lambda[i].convergence_pct, 100.0);
    if (i > 0) {
      EXPECT_LT(*m.by_lambda[i - 1].lambda, *m.by_lambda[i].lambda);
      EXPECT_LE(m.by_lambda[i].avg_convergence_iteration,
                m.by_lambda[i - 1].avg_convergence_iteration);
    }
  }
  EXPECT_EQ(total, 140u);
}

TEST(Replay, EmptyLogYieldsEmptyMetrics) {
  TempDir dir;
  const auto m = cli_replay(std::vector<MatchEvent>{}, temp_config(dir));
  EXPECT_EQ(m.overall.samples, 0u);
  EXPECT_EQ(m.overall.convergence_pct, 0.0);
  EXPECT_TRUE(m.by_lambda.empty());
  const auto table = render_table(m);
  EXPECT_EQ(std::count(table.begin(), table.end(), '\n'), 1);
}

TEST(Replay, MalformedLogIsAnIOError) {
  TempDir dir;
  const auto path = dir.path() / "bad.jsonl";
  {
    std::ofstream out(path);
    out << nlohmann::json(synthesize_event_log().front()).dump() << "\n[1,2\n";
  }
  try {
    cli_replay(path, temp_config(dir));
    FAIL();
  } catch (const IOError& e) {
    EXPECT_NE(std::string(e.what()).find("line 2"), std::string::npos) << e.what();
  }
}

TEST(Replay, SecondRunOverTheSameStoreIsAllDuplicates) {
  TempDir dir;
  SynthOptions o;
  o.count = 12;
  const auto events = synthesize_event_log(o);
  const auto first = cli_replay(events, temp_config(dir));
  EXPECT_EQ(first.duplicates, 0u);
  EXPECT_GT(first.overall.samples, 0u);
  const auto second = cli_replay(events, temp_config(dir));
  EXPECT_EQ(second.duplicates, 12u);
  EXPECT_EQ(second.overall.samples, 0u);
  EXPECT_EQ(DocumentStore(dir.path()).list("content/").size(), 12u);
}

TEST(Replay, ScriptedJudgeOverridesTheContraction) {
  TempDir dir;
  SynthOptions o;
  o.count = 3;
  auto config = temp_config(dir);
  config.mock_script = MockScript::replay(
      {R"({"factualness":10,"novelty":10,"repetitiveness":90,"topic_alignment":10})"});
  config.budget.max_iterations = 4;
  const auto m = cli_replay(synthesize_event_log(o), config);
  EXPECT_EQ(m.overall.samples, 9u);
  EXPECT_EQ(m.overall.converged, 0u);
  ASSERT_EQ(m.by_lambda.size(), 1u);
  EXPECT_FALSE(m.by_lambda[0].lambda.has_value());
  for (const auto& s : m.sessions) EXPECT_EQ(s.iteration, 3u);
  EXPECT_NE(render_table(m).find("n/a"), std::string::npos);
}

TEST(Replay, EventsWithoutSimulationUseTheDefaultRate) {
  TempDir dir;
  auto e = tomalign::testing::post_match("plain");
  auto config = temp_config(dir);
  config.default_lambda = 0.8;
  const auto m = cli_replay(std::vector<MatchEvent>{e}, config);
  ASSERT_EQ(m.by_lambda.size(), 1u);
  EXPECT_EQ(m.by_lambda[0].lambda, 0.8);
  EXPECT_EQ(m.sessions[0].editor_id, "editor-1");
}

TEST(Replay, MetricsJsonUsesTableHeadings) {
  TempDir dir;
  SynthOptions o;
  o.count = 2;
  const nlohmann::json j = cli_replay(synthesize_event_log(o), temp_config(dir));
  for (const auto* key : {"Convergence %", "Average Convergence Iteration Number", "Number of Samples"}) {
    EXPECT_TRUE(j["overall"].contains(key)) << key;
  }
  EXPECT_TRUE(j["overall"]["lambda"].is_null());
  EXPECT_EQ(j["sessions"].size(), 6u);
}

TEST(Summarize, AveragesOnlyConvergedSessions) {
  std::vector<SessionResult> s(4);
  s[0].converged = true;
  s[0].iteration = 2;
  s[1].converged = true;
  s[1].iteration = 5;
  s[2].iteration = 20;
  s[3].failed = true;
  const auto row = summarize(0.4, s);
  EXPECT_EQ(row.samples, 4u);
  EXPECT_EQ(row.converged, 2u);
  EXPECT_DOUBLE_EQ(row.convergence_pct, 50.0);
  EXPECT_DOUBLE_EQ(row.avg_convergence_iteration, 3.5);
}
