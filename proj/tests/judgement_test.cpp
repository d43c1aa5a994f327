#include <gtest/gtest.h>

#include <random>

#include "tomalign/judgement.hpp"

using namespace tomalign;

namespace {

const std::string kIdealJson =
    R"({"factualness":100,"novelty":50,"repetitiveness":0,"topic_alignment":100})";

JudgeRequest sample_request() {
  return {"Alcaraz beat Sinner 6-4 6-3.", "- Alcaraz d. Sinner 6-4 6-3\n- Final", default_dimensions(),
          {}};
}

}  // namespace

TEST(DefaultDimensions, MatchTheIdealScoreTable) {
  const auto dims = default_dimensions();
  ASSERT_EQ(dims.size(), 4u);
  EXPECT_EQ(dims[0].name, "Factualness");
  EXPECT_EQ(dims[1].name, "Novelty");
  EXPECT_EQ(dims[2].name, "Repetitiveness");
  EXPECT_EQ(dims[3].name, "Topic Alignment");
  EXPECT_EQ(ideal_scores(dims), (std::vector<double>{100, 50, 0, 100}));
  EXPECT_EQ(dims[2].polarity, Polarity::inverted);
  EXPECT_EQ(dims[3].key(), "topic_alignment");
}

TEST(JudgePrompt, ContainsDimensionsAndScale) {
  const auto prompt = build_judge_prompt(sample_request());
  for (const auto& d : default_dimensions()) {
    EXPECT_NE(prompt.find(d.name), std::string::npos) << d.name;
    EXPECT_NE(prompt.find(d.definition), std::string::npos) << d.name;
    EXPECT_NE(prompt.find('"' + d.key() + '"'), std::string::npos) << d.name;
  }
  EXPECT_NE(prompt.find("between 0 and 100"), std::string::npos);
  EXPECT_NE(prompt.find("JSON object"), std::string::npos);
  EXPECT_NE(prompt.find("Alcaraz beat Sinner 6-4 6-3."), std::string::npos);
  EXPECT_NE(prompt.find("- Final"), std::string::npos);
  EXPECT_EQ(prompt.find("### Example"), std::string::npos);
}

TEST(JudgePrompt, IsDeterministic) {
  auto request = sample_request();
  request.few_shot_examples = {{"text", "facts", kIdealJson}};
  EXPECT_EQ(build_judge_prompt(request), build_judge_prompt(request));
}

TEST(JudgePrompt, EmbeddedExamplesParseBack) {
  auto request = sample_request();
  request.few_shot_examples = {
      {"one", "facts one", kIdealJson},
      {"two", "facts two",
       R"({"factualness":70,"novelty":20,"repetitiveness":35,"topic_alignment":60,"rationale":"thin"})"},
  };
  const auto prompt = build_judge_prompt(request);
  for (std::size_t i = 0; i < request.few_shot_examples.size(); ++i) {
    const auto header = "### Example " + std::to_string(i + 1);
    const auto at = prompt.find(header);
    ASSERT_NE(at, std::string::npos);
    const auto scores_at = prompt.find("Scores:\n", at);
    const auto embedded = prompt.substr(scores_at + 8);
    const auto parsed = parse_judge_response(embedded, request.dimensions);
    EXPECT_EQ(parsed, parse_judge_response(request.few_shot_examples[i].expected_json,
                                           request.dimensions));
  }
}

TEST(JudgePrompt, RejectsInvalidRequests) {
  auto request = sample_request();
  request.few_shot_examples = {{"x", "y", "not json"}};
  EXPECT_THROW(build_judge_prompt(request), ValidationError);
  request.few_shot_examples = {{"x", "y", R"({"factualness":1})"}};
  EXPECT_THROW(build_judge_prompt(request), ValidationError);
  request.few_shot_examples.clear();
  request.dimensions.clear();
  EXPECT_THROW(build_judge_prompt(request), EmptyInput);
}

TEST(ParseJudge, IdealScores) {
  const auto r = parse_judge_response(kIdealJson, default_dimensions());
  EXPECT_EQ(r.raw_scores, (std::vector<double>{100, 50, 0, 100}));
  EXPECT_EQ(r.scores.values(), (std::vector<double>{1.0, 0.5, 0.0, 1.0}));
  EXPECT_FALSE(r.clamped);
  EXPECT_FALSE(r.rationale.has_value());
}

TEST(ParseJudge, ClampsOutOfRangeValues) {
  const auto r = parse_judge_response(
      R"({"factualness":150,"novelty":-4,"repetitiveness":0,"topic_alignment":100})",
      default_dimensions());
  EXPECT_EQ(r.raw_scores[0], 100.0);
  EXPECT_EQ(r.raw_scores[1], 0.0);
  EXPECT_TRUE(r.clamped);
}

TEST(ParseJudge, FindsObjectInsideProse) {
  const auto r = parse_judge_response(
      "Sure! Here you go {not json} then\n```json\n"
      R"({"rationale":"braces } in {text}","factualness":90,"novelty":40,"repetitiveness":10,"topic_alignment":85})"
      "\n```",
      default_dimensions());
  EXPECT_EQ(r.raw_scores, (std::vector<double>{90, 40, 10, 85}));
  EXPECT_EQ(r.rationale, "braces } in {text}");
}

TEST(ParseJudge, Errors) {
  const auto dims = default_dimensions();
  EXPECT_THROW(parse_judge_response("no json here", dims), ParseError);
  try {
    parse_judge_response(R"({"factualness":100,"novelty":50,"topic_alignment":100})", dims);
    FAIL();
  } catch (const MissingDimension& e) {
    EXPECT_EQ(e.dimension(), "repetitiveness");
  }
  EXPECT_THROW(parse_judge_response(
                   R"({"factualness":"high","novelty":50,"repetitiveness":0,"topic_alignment":1})",
                   dims),
               ParseError);
}

TEST(ParseJudge, RandomValidObjectsRoundTrip) {
  std::mt19937_64 rng(7);
  std::uniform_real_distribution<double> u(-20.0, 120.0);
  const auto dims = default_dimensions();
  for (int trial = 0; trial < 300; ++trial) {
    nlohmann::json j;
    std::vector<double> expected;
    for (const auto& d : dims) {
      const double v = u(rng);
      j[d.key()] = v;
      expected.push_back(std::clamp(v, 0.0, 100.0));
    }
    const auto r = parse_judge_response("prefix " + j.dump() + " suffix", dims);
    EXPECT_EQ(r.raw_scores, expected);
    for (double s : r.scores.values()) {
      EXPECT_GE(s, 0.0);
      EXPECT_LE(s, 1.0);
    }
    EXPECT_EQ(nlohmann::json(r).get<JudgeResult>(), r);
  }
}

TEST(JudgeContent, MockReturnsIdealScores) {
  auto gw = make_mock_gateway(MockScript::replay({kIdealJson}));
  const auto r = judge_content(*gw, "text", "facts", JudgeConfig{});
  EXPECT_EQ(r.raw_scores, (std::vector<double>{100, 50, 0, 100}));
  EXPECT_EQ(r.parse_retries, 0);
}

TEST(JudgeContent, RetriesGarbageOnce) {
  auto gw = make_mock_gateway(MockScript::replay({"garbage", kIdealJson}));
  const auto r = judge_content(*gw, "text", "facts", JudgeConfig{});
  EXPECT_EQ(r.parse_retries, 1);
  EXPECT_EQ(r.raw_scores[1], 50.0);
}

TEST(JudgeContent, PersistentGarbageIsUnparseable) {
  auto gw = make_mock_gateway(MockScript::replay({"garbage", "garbage", "garbage", kIdealJson}));
  EXPECT_THROW(judge_content(*gw, "text", "facts", JudgeConfig{}), JudgeUnparseable);
}

TEST(JudgeContent, BackendFailurePropagates) {
  auto script = MockScript::replay({});
  script.replay_responses = {MockResponse::fail()};
  auto gw = make_mock_gateway(script);
  EXPECT_THROW(judge_content(*gw, "text", "facts", JudgeConfig{}), BackendError);
}

TEST(JudgeContent, SendsTheJudgeParams) {
  auto backend = std::make_shared<MockBackend>(MockScript::replay({kIdealJson}));
  Gateway gw(backend, {0, {}});
  JudgeConfig config;
  judge_content(gw, "text", "facts", config);
  EXPECT_EQ(backend->last_params(), config.params);
  EXPECT_EQ(backend->prompts().front(),
            build_judge_prompt({"text", "facts", config.dimensions, {}}));
}
