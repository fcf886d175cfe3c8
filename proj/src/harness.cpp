#include "driftnet/harness.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numeric>
#include <random>
#include <set>
#include <stdexcept>

#include <boost/random/uniform_int_distribution.hpp>
#include <fmt/format.h>
#include <fmt/ranges.h>

#include "driftnet/error.hpp"
#include "driftnet/flow_csv.hpp"
#include "driftnet/model_io.hpp"
#include "driftnet/parallel.hpp"
#include "driftnet/seed.hpp"

namespace driftnet {

NLOHMANN_DEFINE_TYPE_NON_INTRUSIVE(DayWindow, first_day, last_day)
NLOHMANN_DEFINE_TYPE_NON_INTRUSIVE(AccuracyReport, accuracy, coverage, total, accepted, no_accepted,
                                   classes_without_accepted)
NLOHMANN_DEFINE_TYPE_NON_INTRUSIVE(SelectionTrace::Entry, day, chosen_context, window_accuracy, window_records)
NLOHMANN_DEFINE_TYPE_NON_INTRUSIVE(SelectionTrace, home_id, entries)

namespace harness {

NLOHMANN_DEFINE_TYPE_NON_INTRUSIVE(DayAccuracy, day, records, accuracy)
NLOHMANN_DEFINE_TYPE_NON_INTRUSIVE(DailyCounts, gt, lt, eq)
NLOHMANN_DEFINE_TYPE_NON_INTRUSIVE(RunSpec, run_id, seen_homes, unseen_homes, train, test, seed)
NLOHMANN_DEFINE_TYPE_NON_INTRUSIVE(DecayRow, home_id, train, test)
NLOHMANN_DEFINE_TYPE_NON_INTRUSIVE(TemporalDecay, rows, skipped)
NLOHMANN_DEFINE_TYPE_NON_INTRUSIVE(SpatialMatrix, homes, accuracy, no_accepted)
NLOHMANN_DEFINE_TYPE_NON_INTRUSIVE(HomeResult, home_id, mg, best_ctx, best_combined_static, best_combined_dynamic,
                                   ctx_choice, combined_choice, selection_accuracy_ctx, selection_accuracy_combined,
                                   ideal_test_choice, trace, mg_days, ctx_days, static_days, dynamic_days, counts)
NLOHMANN_DEFINE_TYPE_NON_INTRUSIVE(RunReport, spec, homes, skipped, mg, best_ctx, best_combined_static,
                                   best_combined_dynamic, ideal_mismatches)

namespace {

using nlohmann::json;

std::size_t first_argmax(const ScoredHistory& h, std::size_t begin, DayRange range, MetricMode mode,
                         double* best_accuracy = nullptr) {
  std::vector<double> acc;
  for (std::size_t c = begin; c < h.candidates().size(); ++c) acc.push_back(h.accuracy(c, range, mode).accuracy);
  const auto best = argmax_accuracy(acc);
  if (best_accuracy) *best_accuracy = acc[best];
  return begin + best;
}

DayRange as_range(DayWindow w) { return {w.first_day, w.last_day}; }

double mean_active(const std::vector<DayAccuracy>& days) {
  double sum = 0.0;
  std::size_t n = 0;
  for (const auto& d : days) {
    if (d.records == 0) continue;
    sum += d.accuracy;
    ++n;
  }
  return n ? sum / static_cast<double>(n) : 0.0;
}

void write_text(const std::filesystem::path& path, const std::string& text, std::vector<std::filesystem::path>& out) {
  std::ofstream f(path, std::ios::binary | std::ios::trunc);
  if (!f) throw IoError("cannot open for writing: " + path.string());
  f << text;
  if (!f) throw IoError("write failed: " + path.string());
  out.push_back(path);
}

std::string fixed(double v) { return fmt::format("{:.6f}", v); }

json params_json(const HarnessParams& p, const ExperimentOptions& o) {
  return {{"forest",
           {{"n_trees", p.forest.n_trees},
            {"max_depth", p.forest.max_depth},
            {"min_samples_leaf", p.forest.min_samples_leaf},
            {"features_per_split", p.forest.features_per_split},
            {"bootstrap", p.forest.bootstrap}}},
          {"policy",
           {{"mode", std::string(mode_name(p.policy.mode))},
            {"window_days", p.policy.window_days},
            {"reselect_every_days", p.policy.reselect_every_days},
            {"min_window_records", p.policy.min_window_records},
            {"histogram_bins", p.policy.histogram_bins}}},
          {"metric", p.metric == MetricMode::kAcceptedOnly ? "accepted_only" : "rejected_as_error"},
          {"seed", p.seed},
          {"train_days", p.train_days ? json(*p.train_days) : json()},
          {"oracle_static", p.oracle_static},
          {"runs", o.runs},
          {"seen", o.seen}};
}

}  // namespace

Dataset load_dataset(const std::filesystem::path& dir) {
  const auto manifest_path = dir / "manifest.json";
  std::ifstream in(manifest_path, std::ios::binary);
  if (!in) throw DataError("cannot read dataset manifest " + manifest_path.string());
  Dataset d;
  try {
    d.manifest = json::parse(in);
    const auto config = synth::config_from_json(d.manifest.at("config"));
    d.n_days = static_cast<std::uint32_t>(config.n_days);
    d.train_days = static_cast<std::uint32_t>(config.train_days);
    for (const auto& h : d.manifest.at("homes")) {
      const auto home = h.get<std::string>();
      d.homes[home] = read_flow_csv(dir / (home + ".csv"));
    }
  } catch (const json::exception& e) {
    throw FormatError(FormatError::Kind::kMalformed, manifest_path.string() + ": " + e.what());
  } catch (const std::invalid_argument& e) {
    throw DataError(manifest_path.string() + ": " + e.what());
  }
  for (const auto& [home, records] : d.homes) {
    for (const auto& r : records) {
      if (r.day_index >= d.n_days)
        throw DataError(fmt::format("{}: day_index {} outside the {} dataset days", home, r.day_index, d.n_days));
    }
  }
  refresh_catalog(d);
  return d;
}

Dataset make_dataset(const synth::SynthConfig& config) {
  synth::validate(config);
  Dataset d;
  const auto base = synth::build_profiles(config);
  for (const auto& h : synth::home_ids(config)) d.homes[h] = synth::generate_home(config, base, h);
  d.n_days = static_cast<std::uint32_t>(config.n_days);
  d.train_days = static_cast<std::uint32_t>(config.train_days);
  d.manifest = synth::dataset_manifest(config);
  refresh_catalog(d);
  return d;
}

void refresh_catalog(Dataset& d) {
  std::set<std::string> labels;
  for (const auto& [home, records] : d.homes) {
    for (const auto& r : records) {
      if (r.device_class) labels.insert(*r.device_class);
    }
  }
  d.catalog.assign(labels.begin(), labels.end());
}

std::vector<FlowRecord> records_in(const std::vector<FlowRecord>& records, DayWindow window) {
  std::vector<FlowRecord> out;
  std::copy_if(records.begin(), records.end(), std::back_inserter(out),
               [&](const FlowRecord& r) { return window.contains(r.day_index); });
  return out;
}

DayWindow train_window(const Dataset& d, const HarnessParams& p) {
  const auto t = p.train_days.value_or(d.train_days);
  if (t == 0 || t >= d.n_days)
    throw DataError(fmt::format("train_days {} must lie in [1, {})", t, d.n_days));
  return {0, t - 1};
}

DayWindow test_window(const Dataset& d, const HarnessParams& p) {
  const auto train = train_window(d, p);
  return {train.last_day + 1, d.n_days - 1};
}

HomeModels train_home_models(const Dataset& d, const HarnessParams& p) {
  const auto window = train_window(d, p);
  std::map<std::string, std::vector<FlowRecord>> train;
  for (const auto& [home, records] : d.homes) train[home] = records_in(records, window);
  HomeModels out;
  out.models = train_contextualized(train, p.forest, p.seed, d.catalog, &out.skipped);
  return out;
}

TemporalDecay temporal_decay_report(const Dataset& d, const HarnessParams& p, const HomeModels* models) {
  HomeModels local;
  if (!models) {
    local = train_home_models(d, p);
    models = &local;
  }
  const auto train = train_window(d, p);
  const auto test = test_window(d, p);
  TemporalDecay out;
  out.skipped = models->skipped;
  for (const auto& [home, model] : models->models) {
    const auto& records = d.homes.at(home);
    const auto test_records = records_in(records, test);
    if (test_records.empty()) {
      out.skipped.push_back(home);
      continue;
    }
    DecayRow row;
    row.home_id = home;
    row.train = evaluate_model_on(model, records_in(records, train), p.metric).report;
    row.test = evaluate_model_on(model, test_records, p.metric).report;
    out.rows.push_back(std::move(row));
  }
  std::sort(out.skipped.begin(), out.skipped.end());
  return out;
}

double SpatialMatrix::diagonal_mean() const {
  if (homes.empty()) return 0.0;
  double sum = 0.0;
  for (std::size_t i = 0; i < homes.size(); ++i) sum += accuracy[i][i];
  return sum / static_cast<double>(homes.size());
}

double SpatialMatrix::off_diagonal_mean() const {
  const auto n = homes.size();
  if (n < 2) return 0.0;
  double sum = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = 0; j < n; ++j) {
      if (i != j) sum += accuracy[i][j];
    }
  }
  return sum / static_cast<double>(n * (n - 1));
}

double SpatialMatrix::range() const {
  double lo = 1.0;
  double hi = 0.0;
  for (const auto& row : accuracy) {
    for (double v : row) {
      lo = std::min(lo, v);
      hi = std::max(hi, v);
    }
  }
  return homes.empty() ? 0.0 : hi - lo;
}

SpatialMatrix spatial_matrix(const Dataset& d, const HarnessParams& p, const HomeModels* models) {
  HomeModels local;
  if (!models) {
    local = train_home_models(d, p);
    models = &local;
  }
  const auto test = test_window(d, p);
  SpatialMatrix m;
  for (const auto& [home, model] : models->models) m.homes.push_back(home);
  const auto n = m.homes.size();
  m.accuracy.assign(n, std::vector<double>(n, 0.0));
  m.no_accepted.assign(n, std::vector<bool>(n, false));
  std::vector<std::vector<char>> flags(n, std::vector<char>(n, 0));
  parallel_for(n, [&](std::size_t i) {
    const auto records = records_in(d.homes.at(m.homes[i]), test);
    for (std::size_t j = 0; j < n; ++j) {
      const auto e = evaluate_model_on(models->models.at(m.homes[j]), records, p.metric);
      m.accuracy[i][j] = e.report.accuracy;
      flags[i][j] = e.report.no_accepted ? 1 : 0;
    }
  });
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = 0; j < n; ++j) m.no_accepted[i][j] = flags[i][j] != 0;
  }
  return m;
}

RunSpec make_run_spec(const Dataset& d, const HarnessParams& p, int run_id, int n_seen) {
  std::vector<std::string> homes;
  for (const auto& [h, r] : d.homes) homes.push_back(h);
  if (n_seen < 1 || static_cast<std::size_t>(n_seen) > homes.size())
    throw DataError(fmt::format("seen home count {} must lie in [1, {}]", n_seen, homes.size()));
  RunSpec spec;
  spec.run_id = run_id;
  spec.seed = derive_seed(p.seed, "run", static_cast<std::uint64_t>(run_id));
  std::mt19937_64 rng(spec.seed);
  // Partial Fisher-Yates; the first n_seen slots are the sample.
  for (std::size_t i = 0; i < static_cast<std::size_t>(n_seen); ++i) {
    boost::random::uniform_int_distribution<std::size_t> pick(i, homes.size() - 1);
    std::swap(homes[i], homes[pick(rng)]);
  }
  spec.seen_homes.assign(homes.begin(), homes.begin() + n_seen);
  spec.unseen_homes.assign(homes.begin() + n_seen, homes.end());
  std::sort(spec.seen_homes.begin(), spec.seen_homes.end());
  std::sort(spec.unseen_homes.begin(), spec.unseen_homes.end());
  spec.train = train_window(d, p);
  spec.test = test_window(d, p);
  return spec;
}

DailyCounts daily_comparison_counts(const std::vector<DayAccuracy>& s, const std::vector<DayAccuracy>& dyn) {
  if (s.size() != dyn.size()) throw std::invalid_argument("static and dynamic traces cover different days");
  DailyCounts c;
  for (std::size_t i = 0; i < s.size(); ++i) {
    if (s[i].day != dyn[i].day || s[i].records != dyn[i].records)
      throw std::invalid_argument(fmt::format("trace mismatch at position {}", i));
    if (s[i].records == 0) continue;
    const double diff = dyn[i].accuracy - s[i].accuracy;
    if (std::abs(diff) <= 1e-9) {
      ++c.eq;
    } else if (diff > 0) {
      ++c.gt;
    } else {
      ++c.lt;
    }
  }
  return c;
}

ModelPool build_pool(const RunSpec& spec, const Dataset& d, const HarnessParams& p, const HomeModels& home_models) {
  ModelPool pool;
  pool.training_window = spec.train;
  std::vector<FlowRecord> pooled;
  for (const auto& h : spec.seen_homes) {
    auto it = home_models.models.find(h);
    if (it == home_models.models.end()) continue;
    pool.context_models.emplace(h, it->second);
    pool.seen_homes.insert(h);
    auto r = records_in(d.homes.at(h), spec.train);
    pooled.insert(pooled.end(), r.begin(), r.end());
  }
  if (pool.seen_homes.empty()) throw DataError(fmt::format("run {}: no seen home has training data", spec.run_id));
  pool.global_model = train_global(pooled, p.forest, derive_seed(spec.seed, "global"), d.catalog);
  if (auto err = check_invariants(pool); !err.empty()) throw InvariantError("model pool: " + err);
  return pool;
}

RunReport run_experiment(const RunSpec& spec, const Dataset& d, const HarnessParams& p, const HomeModels* home_models) {
  validate(p.policy);
  if (p.policy.mode != SelectionMode::kCombinedDynamic && p.policy.mode != SelectionMode::kScoreDistribution)
    throw std::invalid_argument("the dynamic column needs a combined_dynamic or score_distribution policy");
  HomeModels local;
  if (!home_models) {
    local = train_home_models(d, p);
    home_models = &local;
  }
  const auto pool = build_pool(spec, d, p, *home_models);

  std::map<std::string, std::vector<double>> references;
  if (p.policy.mode == SelectionMode::kScoreDistribution) {
    std::map<std::string, std::vector<FlowRecord>> training;
    for (const auto& h : pool.seen_homes) training[h] = records_in(d.homes.at(h), spec.train);
    references = reference_histograms(pool, training, p.policy.histogram_bins);
  }

  RunReport report;
  report.spec = spec;
  std::vector<std::optional<HomeResult>> results(spec.unseen_homes.size());
  const DayRange train = as_range(spec.train);
  const DayRange test = as_range(spec.test);
  const DayRange selection = p.oracle_static ? test : train;

  parallel_for(spec.unseen_homes.size(), [&](std::size_t u) {
    const auto& home = spec.unseen_homes[u];
    const auto& records = d.homes.at(home);
    ScoredHistory history(pool, true, records, p.policy.histogram_bins);
    if (history.record_count(test) == 0) return;

    HomeResult r;
    r.home_id = home;
    const auto& ids = history.candidates();
    const auto ctx = first_argmax(history, 1, selection, p.metric, &r.selection_accuracy_ctx);
    const auto combined = first_argmax(history, 0, selection, p.metric, &r.selection_accuracy_combined);
    r.ctx_choice = ids[ctx];
    r.combined_choice = ids[combined];
    r.ideal_test_choice = ids[first_argmax(history, 0, test, p.metric)];
    r.mg = history.accuracy(0, test, p.metric).accuracy;
    r.best_ctx = history.accuracy(ctx, test, p.metric).accuracy;
    r.best_combined_static = history.accuracy(combined, test, p.metric).accuracy;

    r.trace = run_selection(history, home, test, p.policy, references.empty() ? nullptr : &references, p.metric);
    for (std::uint32_t day = test.first; day <= test.last; ++day) {
      const DayRange one{day, day};
      const auto n = history.record_count(one);
      auto day_acc = [&](std::size_t c) { return DayAccuracy{day, n, n ? history.accuracy(c, one, p.metric).accuracy : 0.0}; };
      r.mg_days.push_back(day_acc(0));
      r.ctx_days.push_back(day_acc(ctx));
      r.static_days.push_back(day_acc(combined));
      r.dynamic_days.push_back(day_acc(history.candidate_index(r.trace.entries[day - test.first].chosen_context)));
    }
    r.best_combined_dynamic = mean_active(r.dynamic_days);
    r.counts = daily_comparison_counts(r.static_days, r.dynamic_days);
    results[u] = std::move(r);
  });

  for (std::size_t u = 0; u < results.size(); ++u) {
    if (!results[u]) {
      report.skipped.push_back(spec.unseen_homes[u]);
      continue;
    }
    report.homes.push_back(std::move(*results[u]));
  }
  for (const auto& h : spec.seen_homes) {
    if (!pool.seen_homes.count(h)) report.skipped.push_back(h);
  }
  if (!report.homes.empty()) {
    const double n = static_cast<double>(report.homes.size());
    for (const auto& h : report.homes) {
      report.mg += h.mg / n;
      report.best_ctx += h.best_ctx / n;
      report.best_combined_static += h.best_combined_static / n;
      report.best_combined_dynamic += h.best_combined_dynamic / n;
      if (h.ideal_mismatch()) ++report.ideal_mismatches;
    }
  }
  return report;
}

int ideal_mismatch_count(const ModelPool& pool, const std::map<std::string, std::vector<FlowRecord>>& unseen,
                         DayWindow train, DayWindow test, MetricMode mode) {
  int mismatches = 0;
  for (const auto& [home, records] : unseen) {
    const auto a = select_best_static(pool, true, records_in(records, train), mode);
    const auto b = select_best_static(pool, true, records_in(records, test), mode);
    if (a != b) ++mismatches;
  }
  return mismatches;
}

ExperimentReport run_experiments(const Dataset& d, const HarnessParams& p, const ExperimentOptions& o) {
  if (o.runs < 1) throw DataError("runs must be positive");
  ExperimentReport report;
  const auto models = train_home_models(d, p);
  if (o.temporal) report.decay = temporal_decay_report(d, p, &models);
  if (o.spatial) report.spatial = spatial_matrix(d, p, &models);
  for (int run = 0; run < o.runs; ++run)
    report.runs.push_back(run_experiment(make_run_spec(d, p, run, o.seen), d, p, &models));
  report.manifest = {{"format_version", kReportFormatVersion},
                     {"kind", "driftnet-report"},
                     {"model_format_version", kModelFormatVersion},
                     {"params", params_json(p, o)},
                     {"dataset", d.manifest}};
  return report;
}

std::array<double, 4> table3_averages(const ExperimentReport& report) {
  std::array<double, 4> avg{};
  if (report.runs.empty()) return avg;
  for (const auto& r : report.runs) {
    avg[0] += r.mg;
    avg[1] += r.best_ctx;
    avg[2] += r.best_combined_static;
    avg[3] += r.best_combined_dynamic;
  }
  for (auto& a : avg) a /= static_cast<double>(report.runs.size());
  return avg;
}

json to_json(const ExperimentReport& r) {
  json j = {{"manifest", r.manifest}, {"runs", r.runs}};
  j["decay"] = r.decay ? json(*r.decay) : json();
  j["spatial"] = r.spatial ? json(*r.spatial) : json();
  return j;
}

ExperimentReport report_from_json(const json& j) {
  try {
    ExperimentReport r;
    r.manifest = j.at("manifest");
    r.runs = j.at("runs").get<std::vector<RunReport>>();
    if (!j.at("decay").is_null()) r.decay = j.at("decay").get<TemporalDecay>();
    if (!j.at("spatial").is_null()) r.spatial = j.at("spatial").get<SpatialMatrix>();
    return r;
  } catch (const json::exception& e) {
    throw FormatError(FormatError::Kind::kMalformed, std::string("results: ") + e.what());
  }
}

std::string summary_text(const ExperimentReport& r) {
  std::string s;
  auto line = [&]<typename... A>(fmt::format_string<A...> f, A&&... args) {
    s += fmt::format(f, std::forward<A>(args)...);
    s += '\n';
  };
  if (r.decay) {
    line("Temporal decay (per-home model, training vs test window)");
    double sum = 0.0;
    double lo = 1.0, hi = -1.0;
    int lower = 0;
    for (const auto& row : r.decay->rows) {
      line("  {}  train {:.4f}  test {:.4f}  decay {:+.4f}  coverage {:.3f}/{:.3f}", row.home_id, row.train.accuracy,
           row.test.accuracy, row.decay(), row.train.coverage, row.test.coverage);
      sum += row.decay();
      lo = std::min(lo, row.decay());
      hi = std::max(hi, row.decay());
      if (row.test.accuracy < row.train.accuracy) ++lower;
    }
    if (!r.decay->rows.empty()) {
      line("  mean decay {:.4f} (min {:.4f}, max {:.4f}); {} of {} homes lower at test", sum / r.decay->rows.size(), lo,
           hi, lower, r.decay->rows.size());
    }
    if (!r.decay->skipped.empty()) line("  skipped: {}", fmt::join(r.decay->skipped, ", "));
    line("");
  }
  if (r.spatial) {
    line("Spatial matrix (rows: test home, columns: model home)");
    line("  diagonal mean {:.4f}, off-diagonal mean {:.4f}, range {:.4f}", r.spatial->diagonal_mean(),
         r.spatial->off_diagonal_mean(), r.spatial->range());
    for (std::size_t i = 0; i < r.spatial->homes.size(); ++i) {
      for (std::size_t j = 0; j < r.spatial->homes.size(); ++j) {
        if (r.spatial->no_accepted[i][j])
          line("  no accepted predictions: model {} on {}", r.spatial->homes[j], r.spatial->homes[i]);
      }
    }
    line("");
  }
  if (!r.runs.empty()) {
    line("Strategy comparison ({} runs)", r.runs.size());
    line("  run   M_g     Best(m_i)  Best(M_g,m_i)  Best(M_g,m_i)^d  seen");
    int with_mismatch = 0;
    for (const auto& run : r.runs) {
      line("  {:>3}   {:.4f}  {:.4f}     {:.4f}         {:.4f}           {}", run.spec.run_id, run.mg, run.best_ctx,
           run.best_combined_static, run.best_combined_dynamic, fmt::join(run.spec.seen_homes, " "));
      if (run.ideal_mismatches > 0) ++with_mismatch;
    }
    const auto avg = table3_averages(r);
    line("  avg   {:.4f}  {:.4f}     {:.4f}         {:.4f}", avg[0], avg[1], avg[2], avg[3]);
    line("  runs with an unseen home whose best training-window model differs at test: {} of {}", with_mismatch,
         r.runs.size());
    int gt = 0, lt = 0, eq = 0;
    for (const auto& run : r.runs) {
      for (const auto& h : run.homes) {
        gt += h.counts.gt;
        lt += h.counts.lt;
        eq += h.counts.eq;
      }
    }
    line("  home-days dynamic vs static: {} higher, {} lower, {} equal", gt, lt, eq);
  }
  return s;
}

std::vector<std::filesystem::path> emit_report(const ExperimentReport& r, const std::filesystem::path& out_dir) {
  std::error_code ec;
  std::filesystem::create_directories(out_dir / "traces", ec);
  if (!ec) std::filesystem::create_directories(out_dir / "selection", ec);
  if (ec) throw IoError("cannot create directory under " + out_dir.string() + ": " + ec.message());
  std::vector<std::filesystem::path> written;

  std::string t3 = "run_id,mg,best_ctx,best_combined_static,best_combined_dynamic\n";
  for (const auto& run : r.runs) {
    t3 += fmt::format("{},{},{},{},{}\n", run.spec.run_id, fixed(run.mg), fixed(run.best_ctx),
                      fixed(run.best_combined_static), fixed(run.best_combined_dynamic));
  }
  const auto avg = table3_averages(r);
  t3 += fmt::format("avg,{},{},{},{}\n", fixed(avg[0]), fixed(avg[1]), fixed(avg[2]), fixed(avg[3]));
  write_text(out_dir / "table3.csv", t3, written);

  // Mean day counts per home over the runs in which it was unseen.
  std::set<std::string> homes;
  std::map<std::string, std::array<double, 3>> sums;
  std::map<std::string, int> appearances;
  for (const auto& run : r.runs) {
    homes.insert(run.spec.seen_homes.begin(), run.spec.seen_homes.end());
    homes.insert(run.spec.unseen_homes.begin(), run.spec.unseen_homes.end());
    for (const auto& h : run.homes) {
      auto& s = sums[h.home_id];
      s[0] += h.counts.gt;
      s[1] += h.counts.lt;
      s[2] += h.counts.eq;
      ++appearances[h.home_id];
    }
  }
  std::string t4 = "count";
  for (const auto& h : homes) t4 += "," + h;
  t4 += '\n';
  const char* row_names[] = {"gt", "lt", "eq"};
  for (int k = 0; k < 3; ++k) {
    t4 += row_names[k];
    for (const auto& h : homes) {
      t4 += ',';
      if (auto it = appearances.find(h); it != appearances.end()) t4 += fixed(sums[h][k] / it->second);
    }
    t4 += '\n';
  }
  write_text(out_dir / "table4.csv", t4, written);

  if (r.decay) {
    std::string s = "home_id,train_accuracy,test_accuracy,decay,train_coverage,test_coverage\n";
    for (const auto& row : r.decay->rows) {
      s += fmt::format("{},{},{},{},{},{}\n", row.home_id, fixed(row.train.accuracy), fixed(row.test.accuracy),
                       fixed(row.decay()), fixed(row.train.coverage), fixed(row.test.coverage));
    }
    write_text(out_dir / "temporal_decay.csv", s, written);
  }
  if (r.spatial) {
    std::string s = "test_home";
    for (const auto& h : r.spatial->homes) s += "," + h;
    s += '\n';
    for (std::size_t i = 0; i < r.spatial->homes.size(); ++i) {
      s += r.spatial->homes[i];
      for (double v : r.spatial->accuracy[i]) s += "," + fixed(v);
      s += '\n';
    }
    write_text(out_dir / "spatial_matrix.csv", s, written);
  }

  std::map<std::string, std::string> traces;
  for (const auto& run : r.runs) {
    for (const auto& h : run.homes) {
      auto& s = traces[h.home_id];
      if (s.empty()) s = "run_id,day_index,records,mg,best_ctx,best_combined_static,best_combined_dynamic,dynamic_choice\n";
      for (std::size_t i = 0; i < h.dynamic_days.size(); ++i) {
        s += fmt::format("{},{},{},{},{},{},{},{}\n", run.spec.run_id, h.dynamic_days[i].day, h.dynamic_days[i].records,
                         fixed(h.mg_days[i].accuracy), fixed(h.ctx_days[i].accuracy), fixed(h.static_days[i].accuracy),
                         fixed(h.dynamic_days[i].accuracy), h.trace.entries[i].chosen_context);
      }
      const auto path = out_dir / "selection" / fmt::format("run{:02}_{}.csv", run.spec.run_id, h.home_id);
      write_selection_trace_csv(path, h.trace);
      written.push_back(path);
    }
  }
  for (const auto& [home, text] : traces) write_text(out_dir / "traces" / (home + ".csv"), text, written);

  write_text(out_dir / "summary.txt", summary_text(r), written);
  write_text(out_dir / "results.json", to_json(r).dump() + "\n", written);
  write_text(out_dir / "manifest.json", r.manifest.dump(2) + "\n", written);
  return written;
}

}  // namespace harness
}  // namespace driftnet
