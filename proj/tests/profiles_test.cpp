#include <gtest/gtest.h>

#include <algorithm>
#include <random>

#include "tomalign/profiles.hpp"

using namespace tomalign;

namespace {

EditEvent edit(std::vector<double> raw, std::string editor = "ed-1") {
  return {std::move(editor), "c-1", "before", "after", JudgeResult::from_raw(std::move(raw)),
          1700000000000};
}

}  // namespace

TEST(Profiles, ColdStartUsesIdeals) {
  const auto p = EditorProfile::cold_start("ed-1", default_dimensions());
  EXPECT_EQ(p.targets, (std::vector<double>{100, 50, 0, 100}));
  EXPECT_EQ(p.sample_count, 0u);
  EXPECT_TRUE(p.samples.empty());
}

TEST(Profiles, FirstEditSetsTargets) {
  auto p = EditorProfile::cold_start("ed-1", default_dimensions());
  p = record_edit(p, edit({80, 40, 10, 90}));
  EXPECT_EQ(p.targets, (std::vector<double>{80, 40, 10, 90}));
  EXPECT_EQ(p.sample_count, 1u);
}

TEST(Profiles, SecondEditAverages) {
  auto p = EditorProfile::cold_start("ed-1", default_dimensions());
  p = record_edit(p, edit({80, 40, 10, 90}));
  p = record_edit(p, edit({90, 60, 20, 70}));
  EXPECT_EQ(p.targets, (std::vector<double>{85, 50, 15, 80}));
  EXPECT_EQ(p.sample_count, 2u);
}

TEST(Profiles, EditErrors) {
  auto p = EditorProfile::cold_start("ed-1", default_dimensions());
  EXPECT_THROW(record_edit(p, edit({80, 40, 10})), ShapeError);
  auto empty = edit({80, 40, 10, 90});
  empty.text_after.clear();
  EXPECT_THROW(record_edit(p, empty), ValidationError);
}

TEST(Profiles, ColdStartGraphFloorsTheZeroIdeal) {
  const auto g = profile_graph(EditorProfile::cold_start("ed-1", default_dimensions()));
  EXPECT_EQ(g.magnitudes, (std::vector<double>{1.0, 0.5, 0.0, 1.0}));
  const auto m = vertex_matrix(g, kAreaEpsilon);
  EXPECT_EQ(m(0, 0), 1.0);
  EXPECT_EQ(m(1, 1), 0.5);
  EXPECT_EQ(m(2, 2), 0.01);
  EXPECT_EQ(m(3, 3), 1.0);
  EXPECT_NEAR(graph_area(g), 0.005, 1e-15);
}

TEST(Profiles, SingleSampleHasUnitEdges) {
  auto p = EditorProfile::cold_start("ed-1", default_dimensions());
  p = record_edit(p, edit({80, 40, 10, 90}));
  const auto g = profile_graph(p);
  for (std::size_t i = 0; i < 4; ++i) {
    for (std::size_t j = 0; j < 4; ++j) EXPECT_EQ(g.edge_weights.at(i, j), 1.0);
  }
}

TEST(Profiles, TwoSampleEdgesMatchCovarianceByHand) {
  // Columns 0 and 1 both go 0 -> 100, so on the unit scale each has
  // variance 0.25 and their covariance is 0.25.
  std::vector<DimensionSpec> dims{{0, "A", "a", 100}, {1, "B", "b", 100}};
  auto p = EditorProfile::cold_start("ed-2", dims);
  p = record_edit(p, edit({0, 0}, "ed-2"));
  p = record_edit(p, edit({100, 100}, "ed-2"));
  const auto g = profile_graph(p);
  EXPECT_DOUBLE_EQ(g.edge_weights.at(0, 1), 0.75);
  EXPECT_DOUBLE_EQ(g.edge_weights.at(1, 0), 0.75);
  EXPECT_EQ(g.magnitudes, (std::vector<double>{0.5, 0.5}));
}

TEST(Profiles, TargetsAreColumnMeansAndOrderInvariant) {
  std::mt19937_64 rng(23);
  std::uniform_real_distribution<double> u(0.0, 100.0);
  for (int trial = 0; trial < 200; ++trial) {
    std::vector<EditEvent> edits;
    const int n = 1 + trial % 17;
    for (int i = 0; i < n; ++i) edits.push_back(edit({u(rng), u(rng), u(rng), u(rng)}));

    auto forward = EditorProfile::cold_start("ed-1", default_dimensions());
    for (const auto& e : edits) forward = record_edit(forward, e);

    auto shuffled_edits = edits;
    std::shuffle(shuffled_edits.begin(), shuffled_edits.end(), rng);
    auto shuffled = EditorProfile::cold_start("ed-1", default_dimensions());
    for (const auto& e : shuffled_edits) shuffled = record_edit(shuffled, e);

    EXPECT_EQ(forward.targets, shuffled.targets);
    EXPECT_EQ(forward.sample_count, static_cast<std::size_t>(n));
    const auto gf = profile_graph(forward);
    const auto gs = profile_graph(shuffled);
    EXPECT_EQ(gf.magnitudes, gs.magnitudes);
    EXPECT_EQ(gf.edge_weights.entries.rows(), gs.edge_weights.entries.rows());

    for (std::size_t c = 0; c < 4; ++c) {
      long double sum = 0.0L;
      for (const auto& e : edits) sum += e.judge_result_after.raw_scores[c];
      EXPECT_NEAR(forward.targets[c], static_cast<double>(sum / n), 1e-9);
    }
  }
}

TEST(Profiles, JsonRoundTrip) {
  auto p = EditorProfile::cold_start("ed-1", default_dimensions());
  p = record_edit(p, edit({80.25, 40, 10, 90}));
  EXPECT_EQ(nlohmann::json(p).get<EditorProfile>(), p);
  const auto e = edit({1, 2, 3, 4});
  const auto back = nlohmann::json(e).get<EditEvent>();
  EXPECT_EQ(back.judge_result_after, e.judge_result_after);
  EXPECT_EQ(back.timestamp_ms, e.timestamp_ms);
}

TEST(ContextSimilarity, HandDerivedValues) {
  EXPECT_DOUBLE_EQ(context_similarity("ace serve win", "ace serve win"), 1.0);
  EXPECT_EQ(context_similarity("ace serve", "volley lob"), 0.0);
  EXPECT_NEAR(context_similarity("ace serve win", "ace serve loss"), 2.0 / 3.0, 1e-15);
  EXPECT_NEAR(context_similarity("Ace, SERVE! win", "ace serve loss"), 2.0 / 3.0, 1e-15);
  EXPECT_EQ(context_similarity("the ace", "the lob", {"the"}), 0.0);
  EXPECT_THROW(context_similarity("", "x"), EmptyInput);
  EXPECT_THROW(context_similarity("x", ""), EmptyInput);
}

TEST(ContextSimilarity, SymmetricAndBounded) {
  const std::vector<std::string> vocab{"ace", "serve", "break", "set", "match", "point",
                                       "rally", "net", "lob", "volley"};
  std::mt19937_64 rng(31);
  std::uniform_int_distribution<std::size_t> pick(0, vocab.size() - 1);
  std::uniform_int_distribution<int> len(1, 20);
  auto sentence = [&] {
    std::string s;
    for (int i = len(rng); i > 0; --i) s += vocab[pick(rng)] + " ";
    return s;
  };
  for (int trial = 0; trial < 500; ++trial) {
    const auto a = sentence();
    const auto b = sentence();
    const double ab = context_similarity(a, b);
    EXPECT_EQ(ab, context_similarity(b, a));
    EXPECT_GE(ab, 0.0);
    EXPECT_LE(ab, 1.0);
    EXPECT_NEAR(context_similarity(a, a), 1.0, 1e-12);
  }
}
