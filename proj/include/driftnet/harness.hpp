#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "driftnet/flow.hpp"
#include "driftnet/forest.hpp"
#include "driftnet/strategies.hpp"
#include "driftnet/synth.hpp"

namespace driftnet::harness {

inline constexpr int kReportFormatVersion = 1;

struct Dataset {
  std::map<std::string, std::vector<FlowRecord>> homes;  // records in file order
  std::vector<std::string> catalog;                       // union of labels, sorted
  std::uint32_t n_days = 0;
  std::uint32_t train_days = 0;
  nlohmann::json manifest;  // echo of the dataset manifest (empty for in-memory data)
};

// Reads manifest.json and the per-home CSVs it lists. Throws DataError.
Dataset load_dataset(const std::filesystem::path& data_dir);
// Generates the dataset of `config` in memory, as generate_dataset would write it.
Dataset make_dataset(const synth::SynthConfig& config);
// Recomputes the catalog from the home records.
void refresh_catalog(Dataset& dataset);

std::vector<FlowRecord> records_in(const std::vector<FlowRecord>& records, DayWindow window);

struct HarnessParams {
  ForestParams forest;
  SelectionPolicy policy;
  MetricMode metric = MetricMode::kAcceptedOnly;
  std::uint64_t seed = 7;
  std::optional<std::uint32_t> train_days;  // default: the dataset's
  // Static selection on the test window instead of the training window.
  bool oracle_static = false;
};

DayWindow train_window(const Dataset& dataset, const HarnessParams& params);
DayWindow test_window(const Dataset& dataset, const HarnessParams& params);

/// One model per home on its training window, seeded with context_seed(seed, home).
/// The same models serve as context candidates in every run.
struct HomeModels {
  std::map<std::string, Model> models;
  std::vector<std::string> skipped;
};
HomeModels train_home_models(const Dataset& dataset, const HarnessParams& params);

struct DecayRow {
  std::string home_id;
  AccuracyReport train;
  AccuracyReport test;
  double decay() const { return train.accuracy - test.accuracy; }
};

struct TemporalDecay {
  std::vector<DecayRow> rows;
  std::vector<std::string> skipped;
};

TemporalDecay temporal_decay_report(const Dataset& dataset, const HarnessParams& params,
                                    const HomeModels* models = nullptr);

struct SpatialMatrix {
  std::vector<std::string> homes;
  std::vector<std::vector<double>> accuracy;     // [test home][model home]
  std::vector<std::vector<bool>> no_accepted;   // flagged cells
  double diagonal_mean() const;
  double off_diagonal_mean() const;
  double range() const;  // max - min over all cells
};

SpatialMatrix spatial_matrix(const Dataset& dataset, const HarnessParams& params, const HomeModels* models = nullptr);

struct RunSpec {
  int run_id = 0;
  std::vector<std::string> seen_homes;    // sorted
  std::vector<std::string> unseen_homes;  // sorted
  DayWindow train;
  DayWindow test;
  std::uint64_t seed = 0;
};

// Draws `n_seen` homes uniformly without replacement from derive_seed(seed, "run", run_id).
RunSpec make_run_spec(const Dataset& dataset, const HarnessParams& params, int run_id, int n_seen);

struct DayAccuracy {
  std::uint32_t day = 0;
  std::size_t records = 0;
  double accuracy = 0.0;
};

struct DailyCounts {
  int gt = 0;
  int lt = 0;
  int eq = 0;
};

/// Day-level comparison of dynamic against static accuracy. Days with zero records
/// are ignored; equality within 1e-9. Throws std::invalid_argument when the two
/// sequences cover different days.
DailyCounts daily_comparison_counts(const std::vector<DayAccuracy>& static_days,
                                    const std::vector<DayAccuracy>& dynamic_days);

struct HomeResult {
  std::string home_id;
  double mg = 0.0;
  double best_ctx = 0.0;
  double best_combined_static = 0.0;
  double best_combined_dynamic = 0.0;
  std::string ctx_choice;       // static choice among context models
  std::string combined_choice;  // static choice among global and context models
  double selection_accuracy_ctx = 0.0;
  double selection_accuracy_combined = 0.0;
  std::string ideal_test_choice;  // combined argmax on the test window
  SelectionTrace trace;           // dynamic selection per test day
  std::vector<DayAccuracy> mg_days, ctx_days, static_days, dynamic_days;
  DailyCounts counts;
  bool ideal_mismatch() const { return combined_choice != ideal_test_choice; }
};

struct RunReport {
  RunSpec spec;
  std::vector<HomeResult> homes;
  std::vector<std::string> skipped;
  double mg = 0.0;
  double best_ctx = 0.0;
  double best_combined_static = 0.0;
  double best_combined_dynamic = 0.0;
  int ideal_mismatches = 0;
};

/// Trains the run's global model (context models come from `home_models`, trained
/// here when null) and scores the four strategies on every unseen home.
RunReport run_experiment(const RunSpec& spec, const Dataset& dataset, const HarnessParams& params,
                         const HomeModels* home_models = nullptr);

ModelPool build_pool(const RunSpec& spec, const Dataset& dataset, const HarnessParams& params,
                     const HomeModels& home_models);

// Unseen homes whose combined static choice on the training window differs from the one on the test window.
int ideal_mismatch_count(const ModelPool& pool, const std::map<std::string, std::vector<FlowRecord>>& unseen,
                         DayWindow train, DayWindow test, MetricMode mode = MetricMode::kAcceptedOnly);

struct ExperimentReport {
  std::vector<RunReport> runs;
  std::optional<TemporalDecay> decay;
  std::optional<SpatialMatrix> spatial;
  nlohmann::json manifest;  // parameters and dataset echo
};

struct ExperimentOptions {
  int runs = 10;
  int seen = 5;
  bool temporal = true;
  bool spatial = true;
};

ExperimentReport run_experiments(const Dataset& dataset, const HarnessParams& params, const ExperimentOptions& options);

// Column means of table3 over runs.
std::array<double, 4> table3_averages(const ExperimentReport& report);

/// Writes table3.csv, table4.csv, temporal_decay.csv, spatial_matrix.csv,
/// traces/<home>.csv, selection/<run>_<home>.csv, summary.txt, results.json and
/// manifest.json into out_dir. Returns the written paths.
std::vector<std::filesystem::path> emit_report(const ExperimentReport& report, const std::filesystem::path& out_dir);

nlohmann::json to_json(const ExperimentReport& report);
ExperimentReport report_from_json(const nlohmann::json& j);

std::string summary_text(const ExperimentReport& report);

}  // namespace driftnet::harness
