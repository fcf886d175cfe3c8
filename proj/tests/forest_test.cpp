#include <gtest/gtest.h>

#include <numeric>

#include "driftnet/forest.hpp"
#include "driftnet/model_io.hpp"
#include "driftnet/parallel.hpp"
#include "fixtures.hpp"

using namespace driftnet;

namespace {

FeatureVector at(double x0) {
  FeatureVector fv{};
  fv[0] = x0;
  return fv;
}

TreeNode leaf(std::vector<double> d) {
  TreeNode n;
  n.distribution = std::move(d);
  return n;
}

TreeNode split(double threshold, int left, int right) {
  TreeNode n;
  n.feature = 0;
  n.threshold = threshold;
  n.left = left;
  n.right = right;
  return n;
}

// One tree over feature 0 with leaves
//   x <= 1: [0.9, 0.1, 0]   1 < x <= 2: [0.7, 0.3, 0]
//   2 < x <= 3: [0.2, 0.6, 0.2]   x > 3: [0.5, 0, 0.5] (a tie, resolved to A)
Model three_class_fixture() {
  Model m;
  m.class_catalog = {"A", "B", "C"};
  m.class_thresholds = {0, 0, 0};
  DecisionTree t;
  t.nodes = {split(2.0, 1, 4),
             split(1.0, 2, 3),
             leaf({0.9, 0.1, 0.0}),
             leaf({0.7, 0.3, 0.0}),
             split(3.0, 5, 6),
             leaf({0.2, 0.6, 0.2}),
             leaf({0.5, 0.0, 0.5})};
  m.trees = {t};
  return m;
}

Sample sample(double x0, std::string label) { return {at(x0), std::move(label)}; }

std::vector<Sample> well_separated(std::size_t per_class, std::uint64_t seed) {
  fixtures::Rng rng(seed);
  boost::random::uniform_real_distribution<double> u(0.0, 1.0);
  std::vector<Sample> out;
  for (std::size_t i = 0; i < 2 * per_class; ++i) {
    Sample s;
    for (auto& f : s.features) f = u(rng);
    const bool a = i < per_class;
    s.features[0] = a ? 5.0 * u(rng) * 0.999 : 100.0 + 50.0 * u(rng);
    s.label = a ? "low" : "high";
    out.push_back(s);
  }
  return out;
}

}  // namespace

TEST(ForestParams, Validation) {
  ForestParams p;
  EXPECT_NO_THROW(validate(p));
  p.features_per_split = 29;
  EXPECT_THROW(validate(p), std::invalid_argument);
  p = {};
  p.n_trees = 0;
  EXPECT_THROW(validate(p), std::invalid_argument);
  p = {};
  p.min_samples_leaf = 0;
  EXPECT_THROW(validate(p), std::invalid_argument);
}

TEST(TrainForest, RejectsEmptyAndUnknownLabels) {
  EXPECT_THROW(train_forest({}, fixtures::quick_forest(), 1), std::invalid_argument);
  const std::vector<Sample> s = {sample(1.0, "x")};
  EXPECT_THROW(train_forest(s, fixtures::quick_forest(), 1, {"y"}), std::invalid_argument);
  auto bad = s;
  bad[0].features[3] = std::nan("");
  EXPECT_THROW(train_forest(bad, fixtures::quick_forest(), 1), std::invalid_argument);
}

TEST(TrainForest, SingleClassPredictsPointMass) {
  std::vector<Sample> s;
  for (int i = 0; i < 50; ++i) s.push_back(sample(static_cast<double>(i), "only"));
  auto m = train_forest(s, fixtures::quick_forest(), 3);
  for (const auto& t : m.trees) {
    for (const auto& n : t.nodes) {
      if (n.is_leaf()) {
        EXPECT_EQ(n.distribution, std::vector<double>{1.0});
      }
    }
  }
  m = compute_class_thresholds(m, s);
  EXPECT_EQ(m.class_thresholds, std::vector<double>{1.0});
  for (const auto& x : s) {
    const auto p = predict_gated(m, x.features);
    EXPECT_EQ(p.class_label, "only");
    EXPECT_EQ(p.score, 1.0);
    EXPECT_TRUE(p.accepted);
  }
}

TEST(TrainForest, SeparableTrainingAccuracyIsPerfect) {
  const auto s = well_separated(100, 4);
  const auto m = train_forest(s, ForestParams{}, 11);
  for (const auto& x : s) EXPECT_EQ(predict_top(m, x.features).class_label, x.label);
}

TEST(TrainForest, SeparableHeldOutAccuracy) {
  const auto train = fixtures::separable(200, 21);
  const auto test = fixtures::separable(200, 22);
  const auto m = train_forest(train, ForestParams{}, 5);
  TallyMap tally;
  for (const auto& x : test) {
    auto p = predict_top(m, x.features);
    p.accepted = true;
    add_to_tally(tally, p, x.label);
  }
  EXPECT_GE(macro_accuracy(tally).accuracy, 0.95);
}

TEST(TrainForest, DeterministicAcrossRunsAndThreadCounts) {
  const auto s = fixtures::separable(300, 8);
  set_thread_count(1);
  const auto a = save_model(train_forest(s, fixtures::quick_forest(20), 77));
  set_thread_count(4);
  const auto b = save_model(train_forest(s, fixtures::quick_forest(20), 77));
  set_thread_count(0);
  const auto c = save_model(train_forest(s, fixtures::quick_forest(20), 77));
  EXPECT_EQ(a, b);
  EXPECT_EQ(a, c);
  EXPECT_NE(a, save_model(train_forest(s, fixtures::quick_forest(20), 78)));
}

TEST(TrainForest, ExplicitCatalogMayListAbsentClasses) {
  const auto s = fixtures::separable(40, 2);
  const auto m = train_forest(s, fixtures::quick_forest(), 1, {"a", "b", "z"});
  ASSERT_EQ(m.class_count(), 3u);
  const auto scores = predict_scores(m, s[0].features);
  EXPECT_EQ(scores[2], 0.0);
}

TEST(TrainForest, TreeStructureIsWellFormed) {
  const auto m = train_forest(fixtures::separable(200, 9), fixtures::quick_forest(), 4);
  for (const auto& t : m.trees) {
    for (const auto& n : t.nodes) {
      if (n.is_leaf()) {
        EXPECT_NEAR(std::accumulate(n.distribution.begin(), n.distribution.end(), 0.0), 1.0, 1e-9);
      } else {
        EXPECT_LT(n.feature, static_cast<int>(kFeatureCount));
        EXPECT_GT(n.left, 0);
        EXPECT_GT(n.right, 0);
      }
    }
  }
}

TEST(PredictScores, AveragesLeafDistributions) {
  Model m;
  m.class_catalog = {"x", "y"};
  m.class_thresholds = {0, 0};
  DecisionTree t1, t2;
  t1.nodes = {leaf({1.0, 0.0})};
  t2.nodes = {leaf({0.5, 0.5})};
  m.trees = {t1, t2};
  EXPECT_EQ(predict_scores(m, at(0)), (std::vector<double>{0.75, 0.25}));
}

TEST(PredictScores, SumsToOneOnRandomInputs) {
  const auto m = train_forest(fixtures::separable(200, 3), fixtures::quick_forest(), 2);
  fixtures::Rng rng(6);
  boost::random::uniform_real_distribution<double> u(-5.0, 5.0);
  for (int i = 0; i < 1000; ++i) {
    FeatureVector fv;
    for (auto& f : fv) f = u(rng);
    const auto s = predict_scores(m, fv);
    ASSERT_NEAR(std::accumulate(s.begin(), s.end(), 0.0), 1.0, 1e-9);
  }
}

TEST(PredictScores, DuplicatedTreesKeepTheArgmax) {
  auto m = train_forest(fixtures::separable(100, 13), fixtures::quick_forest(7), 5);
  auto doubled = m;
  doubled.trees.insert(doubled.trees.end(), m.trees.begin(), m.trees.end());
  for (const auto& x : fixtures::separable(200, 15)) {
    EXPECT_EQ(predict_top(m, x.features).class_index, predict_top(doubled, x.features).class_index);
  }
}

TEST(PredictTop, TiesGoToTheLowestCatalogIndex) {
  const auto m = three_class_fixture();
  const auto p = predict_top(m, at(3.5));
  EXPECT_EQ(p.class_label, "A");
  EXPECT_EQ(p.score, 0.5);
}

TEST(Thresholds, HandComputedMeansOnThreeClasses) {
  const std::vector<Sample> train = {sample(0.5, "A"), sample(1.5, "A"), sample(3.5, "A"), sample(2.5, "B"),
                                     sample(0.5, "B"), sample(3.5, "C")};
  const auto m = compute_class_thresholds(three_class_fixture(), train);
  EXPECT_NEAR(m.class_thresholds[0], (0.9 + 0.7 + 0.5) / 3.0, 1e-12);
  EXPECT_NEAR(m.class_thresholds[1], 0.6, 1e-12);
  EXPECT_EQ(m.class_thresholds[2], 0.0);
}

TEST(Thresholds, MeanOfTwoCorrectScores) {
  const std::vector<Sample> train = {sample(0.5, "A"), sample(1.5, "A")};
  const auto m = compute_class_thresholds(three_class_fixture(), train);
  EXPECT_NEAR(m.class_thresholds[0], 0.8, 1e-12);
  EXPECT_EQ(m.class_thresholds[1], 0.0);
}

TEST(Gating, InclusiveThresholdComparison) {
  auto m = three_class_fixture();
  m.class_thresholds = {0.8, 0.6, 0.0};
  EXPECT_TRUE(predict_gated(m, at(0.5)).accepted);   // 0.9 >= 0.8
  EXPECT_FALSE(predict_gated(m, at(1.5)).accepted);  // 0.7 < 0.8
  m.class_thresholds[0] = 0.7;
  EXPECT_TRUE(predict_gated(m, at(1.5)).accepted);  // exact tie accepted
  m.class_thresholds[1] = 0.6;
  EXPECT_TRUE(predict_gated(m, at(2.5)).accepted);
}

TEST(Gating, ScoreBelowThresholdRejected) {
  Model m;
  m.class_catalog = {"x", "y"};
  m.class_thresholds = {0.8, 0.0};
  DecisionTree t;
  t.nodes = {leaf({0.79, 0.21})};
  m.trees = {t};
  EXPECT_FALSE(predict_gated(m, at(0)).accepted);
  m.class_thresholds[0] = 0.79;
  EXPECT_TRUE(predict_gated(m, at(0)).accepted);
}

TEST(Gating, RaisingAThresholdNeverAddsAcceptances) {
  const auto train = fixtures::separable(200, 31);
  const auto base = compute_class_thresholds(train_forest(train, fixtures::quick_forest(), 3), train);
  fixtures::Rng rng(32);
  boost::random::uniform_real_distribution<double> u(0.0, 1.0);
  boost::random::uniform_real_distribution<double> noise(-1.0, 3.0);
  for (int set = 0; set < 100; ++set) {
    std::vector<FeatureVector> eval(50);
    for (auto& fv : eval) {
      for (auto& f : fv) f = u(rng);
      fv[0] = noise(rng);
    }
    auto count = [&](const Model& m) {
      int n = 0;
      for (const auto& fv : eval) n += predict_gated(m, fv).accepted;
      return n;
    };
    auto raised = base;
    const std::size_t c = set % 2;
    raised.class_thresholds[c] = std::min(1.0, raised.class_thresholds[c] + u(rng) * 0.5);
    ASSERT_LE(count(raised), count(base)) << set;
  }
}

TEST(MacroAccuracy, WorkedExamples) {
  auto lp = [](const std::string& predicted, const std::string& truth, bool accepted) {
    LabeledPrediction x;
    x.prediction.class_label = predicted;
    x.prediction.accepted = accepted;
    x.true_label = truth;
    return x;
  };
  const std::vector<LabeledPrediction> both = {lp("A", "A", true), lp("A", "A", true), lp("B", "B", true),
                                               lp("A", "B", true)};
  auto r = macro_accuracy(both);
  EXPECT_DOUBLE_EQ(r.accuracy, 0.75);
  EXPECT_DOUBLE_EQ(r.coverage, 1.0);

  const std::vector<LabeledPrediction> half = {lp("A", "A", true), lp("A", "A", false)};
  r = macro_accuracy(half);
  EXPECT_DOUBLE_EQ(r.accuracy, 1.0);
  EXPECT_DOUBLE_EQ(r.coverage, 0.5);
  EXPECT_DOUBLE_EQ(macro_accuracy(half, MetricMode::kRejectedAsError).accuracy, 0.5);

  const std::vector<LabeledPrediction> none = {lp("A", "A", false), lp("B", "A", false)};
  r = macro_accuracy(none);
  EXPECT_TRUE(r.no_accepted);
  EXPECT_EQ(r.coverage, 0.0);
  EXPECT_EQ(r.accuracy, 0.0);

  const std::vector<LabeledPrediction> partial = {lp("A", "A", true), lp("B", "B", false)};
  r = macro_accuracy(partial);
  EXPECT_DOUBLE_EQ(r.accuracy, 1.0);
  EXPECT_EQ(r.classes_without_accepted, std::vector<std::string>{"B"});
}

TEST(MacroAccuracy, ScaleInvariantUnderDuplication) {
  TallyMap t = {{"a", {10, 7, 5}}, {"b", {3, 3, 1}}, {"c", {4, 0, 0}}};
  TallyMap doubled = t;
  merge_tally(doubled, t);
  EXPECT_EQ(macro_accuracy(t).accuracy, macro_accuracy(doubled).accuracy);
  EXPECT_EQ(macro_accuracy(t, MetricMode::kRejectedAsError).accuracy,
            macro_accuracy(doubled, MetricMode::kRejectedAsError).accuracy);
}
