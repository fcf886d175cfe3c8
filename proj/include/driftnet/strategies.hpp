#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <set>
#include <span>
#include <string>
#include <vector>

#include "driftnet/flow.hpp"
#include "driftnet/forest.hpp"

namespace driftnet {

inline const std::string kGlobalContext = "global";

enum class SelectionMode { kGlobalOnly, kContextBest, kCombinedStatic, kCombinedDynamic, kScoreDistribution };

std::string_view mode_name(SelectionMode mode);  // "global_only", "context_best", ...
std::optional<SelectionMode> mode_from_name(std::string_view name);

struct SelectionPolicy {
  SelectionMode mode = SelectionMode::kCombinedDynamic;
  int window_days = 30;
  int reselect_every_days = 1;
  std::size_t min_window_records = 50;
  int histogram_bins = 20;
};

void validate(const SelectionPolicy& policy);

struct ModelPool {
  std::optional<Model> global_model;
  std::map<std::string, Model> context_models;  // keyed by home id
  std::set<std::string> seen_homes;
  DayWindow training_window;

  const Model& model(const std::string& context_id) const;
  // Global first (when present and requested), then context ids in lexicographic order.
  std::vector<std::string> candidates(bool include_global) const;
};

// Empty when consistent: keys match seen_homes and every model shares one catalog.
std::string check_invariants(const ModelPool& pool);

std::vector<Sample> to_samples(std::span<const FlowRecord> flows);

/// One forest over the pooled labeled flows, context "global", thresholds from the
/// same pool. The catalog defaults to the union of labels.
Model train_global(std::span<const FlowRecord> flows, const ForestParams& params, std::uint64_t seed,
                   std::vector<std::string> catalog = {});

// Seed of the model for `home_id`; independent of which other homes are trained.
std::uint64_t context_seed(std::uint64_t seed, const std::string& home_id);

/// One forest per home with seed context_seed(seed, home). Homes without labeled
/// flows are left out and reported in `skipped`. All models share `catalog`
/// (default: union of labels over every home passed in).
std::map<std::string, Model> train_contextualized(const std::map<std::string, std::vector<FlowRecord>>& flows_by_home,
                                                  const ForestParams& params, std::uint64_t seed,
                                                  std::vector<std::string> catalog = {},
                                                  std::vector<std::string>* skipped = nullptr);

struct Evaluation {
  AccuracyReport report;
  bool no_label_overlap = false;  // no true label is in the model catalog
};

Evaluation evaluate_model_on(const Model& model, std::span<const FlowRecord> flows,
                             MetricMode mode = MetricMode::kAcceptedOnly);

// Inclusive day range.
struct DayRange {
  std::uint32_t first = 0;
  std::uint32_t last = 0;
};

/// Labeled history of one home scored once by every candidate of a pool. Window
/// accuracies and score histograms are sums of per-day tallies, so any day range
/// evaluates to exactly what featurize -> predict_gated -> macro_accuracy gives
/// over the records in it.
class ScoredHistory {
 public:
  ScoredHistory(const ModelPool& pool, bool include_global, std::span<const FlowRecord> history,
                int histogram_bins = 20);

  const std::vector<std::string>& candidates() const { return candidates_; }
  // Days on which the home has at least one record, ascending.
  const std::vector<std::uint32_t>& active_days() const { return active_days_; }
  std::size_t record_count(DayRange range) const;
  TallyMap tally(std::size_t candidate, DayRange range) const;
  AccuracyReport accuracy(std::size_t candidate, DayRange range, MetricMode mode = MetricMode::kAcceptedOnly) const;
  // Normalized histogram of top-1 scores; all zeros on an empty range.
  std::vector<double> score_histogram(std::size_t candidate, DayRange range) const;
  std::size_t candidate_index(const std::string& context_id) const;

 private:
  struct DayScores {
    std::uint32_t day = 0;
    std::size_t records = 0;
    std::vector<TallyMap> tallies;                      // per candidate
    std::vector<std::vector<std::size_t>> histograms;   // per candidate, per bin
  };
  template <typename F>
  void for_days(DayRange range, F&& f) const;

  std::vector<std::string> candidates_;
  std::vector<DayScores> days_;  // active days only, ascending
  std::vector<std::uint32_t> active_days_;
  int bins_;
};

// First candidate with the highest accuracy; candidates are in pool order.
std::size_t argmax_accuracy(const std::vector<double>& accuracies);

/// Candidate with the best macro accuracy on `selection` (ties: global, then
/// lexicographic context id).
std::string select_best_static(const ModelPool& pool, bool include_global, std::span<const FlowRecord> selection,
                               MetricMode mode = MetricMode::kAcceptedOnly);

struct WindowChoice {
  std::string context_id;
  double window_accuracy = 0.0;
  std::size_t window_records = 0;
};

// Days [day - window_days, day - 1], extended backwards over earlier active days
// until min_window_records is met. Empty on day 0.
std::optional<DayRange> selection_window(const ScoredHistory& history, std::uint32_t day,
                                         const SelectionPolicy& policy);

/// Single-day choice without persistence. Falls back to global (or the first
/// context model) when the window holds no records.
WindowChoice select_best_dynamic(const ModelPool& pool, bool include_global, std::span<const FlowRecord> history,
                                 std::uint32_t day, const SelectionPolicy& policy,
                                 MetricMode mode = MetricMode::kAcceptedOnly);
WindowChoice select_best_dynamic(const ScoredHistory& history, std::uint32_t day, const SelectionPolicy& policy,
                                 MetricMode mode = MetricMode::kAcceptedOnly);

struct SelectionTrace {
  struct Entry {
    std::uint32_t day = 0;
    std::string chosen_context;
    double window_accuracy = 0.0;
    std::size_t window_records = 0;
  };
  std::string home_id;
  std::vector<Entry> entries;  // strictly increasing days
};

/// Day-by-day selection over [days.first, days.last]. Reselects on days where
/// (day - days.first) % reselect_every_days == 0 and the home has records;
/// otherwise the previous entry carries over. kCombinedDynamic ranks candidates by
/// labeled window accuracy, kScoreDistribution by score-histogram distance to
/// `references` over the same window (labels unused).
SelectionTrace run_selection(const ScoredHistory& history, const std::string& home_id, DayRange days,
                             const SelectionPolicy& policy,
                             const std::map<std::string, std::vector<double>>* references = nullptr,
                             MetricMode mode = MetricMode::kAcceptedOnly);

void write_selection_trace_csv(const std::filesystem::path& path, const SelectionTrace& trace);

// Top-1 score histogram over [0, 1] with equal-width bins, the last one closed.
std::vector<double> score_histogram(const Model& model, std::span<const FlowRecord> flows, int bins = 20);
std::size_t score_bin(double score, int bins);

// Total variation distance; throws std::invalid_argument on a length mismatch.
double histogram_distance(std::span<const double> p, std::span<const double> q);

/// Reference histogram of each candidate on its own training data: a context
/// model on its home's flows, the global model on all seen homes' flows.
std::map<std::string, std::vector<double>> reference_histograms(
    const ModelPool& pool, const std::map<std::string, std::vector<FlowRecord>>& training_by_home, int bins = 20);

// First candidate whose histogram on `unlabeled` is closest to its reference.
std::string select_by_score_distribution(const ModelPool& pool, bool include_global,
                                         std::span<const FlowRecord> unlabeled,
                                         const std::map<std::string, std::vector<double>>& references, int bins = 20);

}  // namespace driftnet
