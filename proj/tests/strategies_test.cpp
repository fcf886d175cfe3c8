#include <gtest/gtest.h>

#include <algorithm>

#include "driftnet/error.hpp"
#include "driftnet/strategies.hpp"
#include "driftnet/synth.hpp"
#include "fixtures.hpp"

using namespace driftnet;

namespace {

struct World {
  synth::SynthConfig config;
  std::map<std::string, std::vector<FlowRecord>> all;    // every day
  std::map<std::string, std::vector<FlowRecord>> train;  // training days only
};

const World& world() {
  static const World w = [] {
    World out;
    out.config = fixtures::tiny_config(3, 8, 5);
    out.config.spatial_sigma = 0.3;
    const auto base = synth::build_profiles(out.config);
    for (const auto& h : synth::home_ids(out.config)) {
      out.all[h] = synth::generate_home(out.config, base, h);
      for (const auto& r : out.all[h]) {
        if (r.day_index < static_cast<std::uint32_t>(out.config.train_days)) out.train[h].push_back(r);
      }
    }
    return out;
  }();
  return w;
}

ModelPool make_pool(const std::vector<std::string>& seen) {
  const auto& w = world();
  ModelPool pool;
  std::map<std::string, std::vector<FlowRecord>> seen_train;
  std::vector<FlowRecord> pooled;
  for (const auto& h : seen) {
    seen_train[h] = w.train.at(h);
    pooled.insert(pooled.end(), w.train.at(h).begin(), w.train.at(h).end());
    pool.seen_homes.insert(h);
  }
  pool.context_models = train_contextualized(seen_train, fixtures::quick_forest(), 7);
  pool.global_model = train_global(pooled, fixtures::quick_forest(), 8);
  pool.training_window = {0, 4};
  return pool;
}

const ModelPool& pool12() {
  static const ModelPool p = make_pool({"h01", "h02"});
  return p;
}

std::vector<double> random_histogram(fixtures::Rng& rng, std::size_t bins) {
  boost::random::uniform_real_distribution<double> u(0.0, 1.0);
  std::vector<double> h(bins);
  double sum = 0.0;
  for (auto& x : h) sum += x = u(rng) < 0.3 ? 0.0 : u(rng);
  if (sum == 0.0) {
    h[0] = 1.0;
    return h;
  }
  for (auto& x : h) x /= sum;
  return h;
}

Model constant_model(std::vector<double> distribution, std::string context) {
  Model m;
  m.class_catalog = {"a", "b"};
  m.class_thresholds = {0.0, 0.0};
  TreeNode leaf;
  leaf.distribution = std::move(distribution);
  m.trees = {DecisionTree{{leaf}}};
  m.context_id = std::move(context);
  return m;
}

FlowRecord labeled(std::string label, std::uint32_t day) {
  FlowRecord r;
  r.home_id = "hx";
  r.device_class = std::move(label);
  r.day_index = day;
  r.timestamp = day * kSecondsPerDay;
  return r;
}

std::vector<FlowRecord> without_day(std::vector<FlowRecord> flows, std::uint32_t day) {
  std::erase_if(flows, [&](const FlowRecord& r) { return r.day_index == day; });
  return flows;
}

}  // namespace

TEST(HistogramDistance, MetricAxiomsOnRandomHistograms) {
  fixtures::Rng rng(99);
  for (int i = 0; i < 10000; ++i) {
    const auto p = random_histogram(rng, 20);
    const auto q = random_histogram(rng, 20);
    const auto r = random_histogram(rng, 20);
    const double pq = histogram_distance(p, q);
    ASSERT_EQ(histogram_distance(p, p), 0.0);
    ASSERT_EQ(pq, histogram_distance(q, p));
    ASSERT_GE(pq, 0.0);
    ASSERT_LE(pq, 1.0);
    ASSERT_LE(histogram_distance(p, r), pq + histogram_distance(q, r) + 1e-12);
  }
}

TEST(HistogramDistance, WorkedValues) {
  const std::vector<double> a{1.0, 0.0}, b{0.0, 1.0}, c{0.5, 0.5};
  EXPECT_DOUBLE_EQ(histogram_distance(a, b), 1.0);
  EXPECT_DOUBLE_EQ(histogram_distance(a, c), 0.5);
  const std::vector<double> d{0.25, 0.25, 0.5}, e{0.5, 0.25, 0.25};
  EXPECT_DOUBLE_EQ(histogram_distance(d, e), 0.25);
  EXPECT_THROW(histogram_distance(a, d), std::invalid_argument);
}

TEST(ScoreHistogram, BinEdgesAndNormalization) {
  EXPECT_EQ(score_bin(0.0, 20), 0u);
  EXPECT_EQ(score_bin(0.0499, 20), 0u);
  EXPECT_EQ(score_bin(0.05, 20), 1u);
  EXPECT_EQ(score_bin(1.0, 20), 19u);
  EXPECT_EQ(score_bin(0.999, 20), 19u);
  EXPECT_THROW(score_bin(0.5, 0), std::invalid_argument);
  const auto h = score_histogram(pool12().model("h01"), world().all.at("h03"), 20);
  ASSERT_EQ(h.size(), 20u);
  double sum = 0.0;
  for (double x : h) sum += x;
  EXPECT_NEAR(sum, 1.0, 1e-12);
  const auto empty = score_histogram(pool12().model("h01"), std::vector<FlowRecord>{}, 10);
  EXPECT_EQ(empty, std::vector<double>(10, 0.0));
}

TEST(SelectionMode, NamesRoundTrip) {
  for (auto m : {SelectionMode::kGlobalOnly, SelectionMode::kContextBest, SelectionMode::kCombinedStatic,
                 SelectionMode::kCombinedDynamic, SelectionMode::kScoreDistribution}) {
    EXPECT_EQ(mode_from_name(mode_name(m)), m);
  }
  EXPECT_FALSE(mode_from_name("bogus"));
}

TEST(SelectionPolicy, Validation) {
  SelectionPolicy p;
  EXPECT_NO_THROW(validate(p));
  p.window_days = 0;
  EXPECT_THROW(validate(p), std::invalid_argument);
  p = {};
  p.reselect_every_days = 0;
  EXPECT_THROW(validate(p), std::invalid_argument);
  p = {};
  p.histogram_bins = 0;
  EXPECT_THROW(validate(p), std::invalid_argument);
}

TEST(ModelPool, CandidateOrderAndInvariants) {
  const auto& pool = pool12();
  EXPECT_EQ(pool.candidates(true), (std::vector<std::string>{"global", "h01", "h02"}));
  EXPECT_EQ(pool.candidates(false), (std::vector<std::string>{"h01", "h02"}));
  EXPECT_EQ(check_invariants(pool), "");
  auto broken = pool;
  broken.seen_homes.insert("h09");
  EXPECT_NE(check_invariants(broken), "");
  EXPECT_THROW(pool.model("h09"), std::out_of_range);
}

TEST(Argmax, FirstMaximumWins) {
  EXPECT_EQ(argmax_accuracy({0.5, 0.9, 0.9, 0.1}), 1u);
  EXPECT_EQ(argmax_accuracy({0.7, 0.7}), 0u);
  EXPECT_EQ(argmax_accuracy({0.2}), 0u);
}

TEST(SelectBestStatic, TiesPreferGlobalThenLowestContextId) {
  ModelPool pool;
  pool.global_model = constant_model({0.6, 0.4}, "global");
  pool.context_models["h02"] = constant_model({0.6, 0.4}, "h02");
  pool.context_models["h01"] = constant_model({0.6, 0.4}, "h01");
  pool.seen_homes = {"h01", "h02"};
  const std::vector<FlowRecord> flows = {labeled("a", 0), labeled("b", 0)};
  EXPECT_EQ(select_best_static(pool, true, flows), "global");
  EXPECT_EQ(select_best_static(pool, false, flows), "h01");
  pool.context_models["h02"] = constant_model({0.4, 0.6}, "h02");
  const std::vector<FlowRecord> bs = {labeled("b", 0)};
  EXPECT_EQ(select_best_static(pool, true, bs), "h02");
}

TEST(SelectBestStatic, SupersetNeverLowersTheBestAccuracy) {
  const auto& pool = pool12();
  for (const auto& [home, flows] : world().train) {
    auto best_of = [&](bool with_global) {
      const auto id = select_best_static(pool, with_global, flows);
      return evaluate_model_on(pool.model(id), flows).report.accuracy;
    };
    EXPECT_GE(best_of(true), best_of(false)) << home;
  }
}

TEST(SelectBestStatic, DuplicatingTheSelectionSetKeepsTheChoice) {
  const auto& pool = pool12();
  const auto& flows = world().train.at("h03");
  const auto once = select_best_static(pool, true, flows);
  auto doubled = flows;
  doubled.insert(doubled.end(), flows.begin(), flows.end());
  EXPECT_EQ(select_best_static(pool, true, doubled), once);
}

TEST(Evaluate, SkipsUnlabeledRecordsAndFlagsDisjointLabels) {
  const auto& m = pool12().model("h01");
  auto flows = world().train.at("h03");
  const auto base = evaluate_model_on(m, flows);
  EXPECT_FALSE(base.no_label_overlap);
  auto noisy = flows;
  for (std::size_t i = 0; i < 20; ++i) {
    auto r = flows[i];
    r.device_class.reset();
    noisy.push_back(r);
  }
  EXPECT_EQ(evaluate_model_on(m, noisy).report.accuracy, base.report.accuracy);
  EXPECT_EQ(evaluate_model_on(m, noisy).report.total, base.report.total);

  auto foreign = flows;
  for (auto& r : foreign) r.device_class = "toaster";
  const auto f = evaluate_model_on(m, foreign);
  EXPECT_TRUE(f.no_label_overlap);
  EXPECT_EQ(f.report.accuracy, 0.0);
}

TEST(Training, SharedCatalogIsTheLabelUnion) {
  const auto& pool = pool12();
  std::set<std::string> labels;
  for (const auto& h : {"h01", "h02"}) {
    for (const auto& r : world().train.at(h)) labels.insert(*r.device_class);
  }
  const std::vector<std::string> expected(labels.begin(), labels.end());
  for (const auto& id : pool.candidates(true)) EXPECT_EQ(pool.model(id).class_catalog, expected) << id;
}

TEST(Training, ContextModelsAreIsolatedFromOtherHomes) {
  const auto& w = world();
  const auto catalog = pool12().model("h01").class_catalog;
  std::map<std::string, std::vector<FlowRecord>> two = {{"h01", w.train.at("h01")}, {"h02", w.train.at("h02")}};
  auto three = two;
  three["h03"] = w.train.at("h03");
  const auto a = train_contextualized(two, fixtures::quick_forest(), 7, catalog);
  const auto b = train_contextualized(three, fixtures::quick_forest(), 7, catalog);
  EXPECT_EQ(a.at("h01"), b.at("h01"));
  EXPECT_EQ(a.at("h02"), b.at("h02"));
}

TEST(Training, GlobalOverOneHomeMatchesItsContextModel) {
  const auto& flows = world().train.at("h02");
  const auto ctx = train_contextualized({{"h02", flows}}, fixtures::quick_forest(), 7).at("h02");
  auto global = train_global(flows, fixtures::quick_forest(), context_seed(7, "h02"));
  EXPECT_EQ(global.context_id, kGlobalContext);
  EXPECT_EQ(global.trees, ctx.trees);
  EXPECT_EQ(global.class_thresholds, ctx.class_thresholds);
  EXPECT_EQ(global.class_catalog, ctx.class_catalog);
}

TEST(Training, HomesWithoutLabelsAreSkipped) {
  auto flows = world().train.at("h01");
  for (auto& r : flows) r.device_class.reset();
  std::vector<std::string> skipped;
  const auto models =
      train_contextualized({{"h01", flows}, {"h02", world().train.at("h02")}}, fixtures::quick_forest(), 7, {}, &skipped);
  EXPECT_EQ(models.size(), 1u);
  EXPECT_EQ(skipped, std::vector<std::string>{"h01"});
}

TEST(ScoredHistory, WindowsMatchDirectEvaluation) {
  const auto& pool = pool12();
  const auto& flows = world().all.at("h03");
  const ScoredHistory history(pool, true, flows);
  ASSERT_EQ(history.candidates(), pool.candidates(true));
  EXPECT_EQ(history.active_days().size(), 8u);
  for (const auto& [first, last] : std::vector<std::pair<std::uint32_t, std::uint32_t>>{{0, 7}, {2, 4}, {6, 6}, {3, 9}}) {
    std::vector<FlowRecord> slice;
    for (const auto& r : flows) {
      if (r.day_index >= first && r.day_index <= last) slice.push_back(r);
    }
    EXPECT_EQ(history.record_count({first, last}), slice.size());
    for (std::size_t c = 0; c < history.candidates().size(); ++c) {
      const auto& m = pool.model(history.candidates()[c]);
      for (auto mode : {MetricMode::kAcceptedOnly, MetricMode::kRejectedAsError}) {
        const auto direct = evaluate_model_on(m, slice, mode).report;
        const auto cached = history.accuracy(c, {first, last}, mode);
        EXPECT_EQ(cached.accuracy, direct.accuracy);
        EXPECT_EQ(cached.accepted, direct.accepted);
      }
      EXPECT_EQ(history.score_histogram(c, {first, last}), score_histogram(m, slice, 20));
    }
  }
  EXPECT_THROW(history.candidate_index("nope"), std::out_of_range);
}

TEST(SelectionWindow, ExtendsBackwardsUntilEnoughRecords) {
  const ScoredHistory history(pool12(), true, world().all.at("h03"));
  SelectionPolicy p;
  p.window_days = 1;
  p.min_window_records = 1;
  auto w = selection_window(history, 5, p);
  ASSERT_TRUE(w);
  EXPECT_EQ(w->first, 4u);
  EXPECT_EQ(w->last, 4u);

  p.min_window_records = history.record_count({3, 4});
  w = selection_window(history, 5, p);
  EXPECT_EQ(w->first, 3u);
  EXPECT_GE(history.record_count(*w), p.min_window_records);

  p.min_window_records = 1000000;
  w = selection_window(history, 5, p);
  EXPECT_EQ(w->first, 0u);
  EXPECT_EQ(w->last, 4u);

  EXPECT_FALSE(selection_window(history, 0, p));
}

TEST(SelectionWindow, SkipsOverInactiveDays) {
  auto flows = without_day(without_day(world().all.at("h03"), 3), 2);
  const ScoredHistory history(pool12(), true, flows);
  SelectionPolicy p;
  p.window_days = 1;
  p.min_window_records = history.record_count({4, 4}) + 1;
  const auto w = selection_window(history, 5, p);
  EXPECT_EQ(w->first, 1u);
}

TEST(SelectBestDynamic, DayZeroFallsBackToFirstCandidate) {
  const ScoredHistory history(pool12(), true, world().all.at("h03"));
  const auto c = select_best_dynamic(history, 0, SelectionPolicy{});
  EXPECT_EQ(c.context_id, "global");
  EXPECT_EQ(c.window_records, 0u);
  const ScoredHistory ctx_only(pool12(), false, world().all.at("h03"));
  EXPECT_EQ(select_best_dynamic(ctx_only, 0, SelectionPolicy{}).context_id, "h01");
}

TEST(SelectBestDynamic, FullHistoryWindowEqualsStaticChoiceOnTraining) {
  const auto& pool = pool12();
  for (const auto& home : {"h01", "h02", "h03"}) {
    const auto& all = world().all.at(home);
    SelectionPolicy p;
    p.window_days = 100;
    const auto dynamic = select_best_dynamic(pool, true, all, 5, p);
    EXPECT_EQ(dynamic.context_id, select_best_static(pool, true, world().train.at(home))) << home;
  }
}

TEST(RunSelection, CarriesTheChoiceOverEmptyDays) {
  const auto flows = without_day(world().all.at("h03"), 6);
  const ScoredHistory history(pool12(), true, flows);
  SelectionPolicy p;
  p.window_days = 1;
  p.min_window_records = 1;
  const auto trace = run_selection(history, "h03", {5, 7}, p);
  ASSERT_EQ(trace.entries.size(), 3u);
  EXPECT_EQ(trace.entries[1].day, 6u);
  EXPECT_EQ(trace.entries[1].chosen_context, trace.entries[0].chosen_context);
  EXPECT_EQ(trace.entries[1].window_records, trace.entries[0].window_records);
  EXPECT_EQ(trace.entries[2].chosen_context, select_best_dynamic(history, 7, p).context_id);
}

TEST(RunSelection, ReselectsOnTheSchedule) {
  const ScoredHistory history(pool12(), true, world().all.at("h03"));
  SelectionPolicy p;
  p.window_days = 2;
  p.min_window_records = 1;
  p.reselect_every_days = 2;
  const auto trace = run_selection(history, "h03", {1, 7}, p);
  ASSERT_EQ(trace.entries.size(), 7u);
  for (const auto& e : trace.entries) {
    const auto& anchor = trace.entries[(e.day - 1) / 2 * 2];
    const auto fresh = select_best_dynamic(history, anchor.day, p);
    EXPECT_EQ(e.chosen_context, fresh.context_id) << e.day;
    EXPECT_EQ(e.window_records, fresh.window_records) << e.day;
  }
}

TEST(RunSelection, RejectsStaticPoliciesAndMissingReferences) {
  const ScoredHistory history(pool12(), true, world().all.at("h03"));
  SelectionPolicy p;
  p.mode = SelectionMode::kCombinedStatic;
  EXPECT_THROW(run_selection(history, "h03", {5, 7}, p), std::invalid_argument);
  p.mode = SelectionMode::kScoreDistribution;
  EXPECT_THROW(run_selection(history, "h03", {5, 7}, p), std::invalid_argument);
}

TEST(ScoreDistribution, SingleCandidateAndTies) {
  const auto& w = world();
  auto one = make_pool({"h02"});
  const auto refs = reference_histograms(one, w.train);
  EXPECT_EQ(select_by_score_distribution(one, false, w.all.at("h03"), refs), "h02");

  ModelPool twins;
  twins.context_models["h02"] = constant_model({0.7, 0.3}, "h02");
  twins.context_models["h01"] = constant_model({0.7, 0.3}, "h01");
  twins.seen_homes = {"h01", "h02"};
  const std::map<std::string, std::vector<double>> same = {{"h01", std::vector<double>(20, 0.05)},
                                                           {"h02", std::vector<double>(20, 0.05)}};
  EXPECT_EQ(select_by_score_distribution(twins, false, w.all.at("h03"), same), "h01");
}

TEST(ScoreDistribution, OwnTrainingDataIsAtDistanceZero) {
  const auto& pool = pool12();
  const auto refs = reference_histograms(pool, world().train);
  ASSERT_EQ(refs.size(), 3u);
  for (const auto& h : {"h01", "h02"}) {
    EXPECT_EQ(histogram_distance(score_histogram(pool.model(h), world().train.at(h)), refs.at(h)), 0.0);
  }
  EXPECT_THROW(reference_histograms(pool, {}), DataError);
}

TEST(ScoreDistribution, TraceUsesUnlabeledHistograms) {
  const auto& pool = pool12();
  const auto refs = reference_histograms(pool, world().train);
  const ScoredHistory history(pool, true, world().all.at("h03"));
  SelectionPolicy p;
  p.mode = SelectionMode::kScoreDistribution;
  p.window_days = 100;
  const auto trace = run_selection(history, "h03", {5, 7}, p, &refs);
  ASSERT_EQ(trace.entries.size(), 3u);
  std::vector<FlowRecord> window;
  for (const auto& r : world().all.at("h03")) {
    if (r.day_index < 5) window.push_back(r);
  }
  for (auto& r : window) r.device_class.reset();
  EXPECT_EQ(trace.entries[0].chosen_context, select_by_score_distribution(pool, true, window, refs));
}

TEST(SelectionTraceCsv, Format) {
  SelectionTrace t;
  t.home_id = "h04";
  t.entries = {{30, "global", 0.5, 120}, {31, "h02", 2.0 / 3.0, 7}};
  const auto dir = fixtures::temp_dir("trace_csv");
  write_selection_trace_csv(dir / "t.csv", t);
  EXPECT_EQ(fixtures::read_file(dir / "t.csv"),
            "home_id,day_index,chosen_context,window_accuracy,window_records\n"
            "h04,30,global,0.500000,120\n"
            "h04,31,h02,0.666667,7\n");
}
