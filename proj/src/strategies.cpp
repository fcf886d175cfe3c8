#include "driftnet/strategies.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <limits>
#include <stdexcept>

#include <fmt/format.h>

#include "driftnet/error.hpp"
#include "driftnet/parallel.hpp"
#include "driftnet/seed.hpp"

namespace driftnet {

namespace {

constexpr std::pair<SelectionMode, std::string_view> kModeNames[] = {
    {SelectionMode::kGlobalOnly, "global_only"},
    {SelectionMode::kContextBest, "context_best"},
    {SelectionMode::kCombinedStatic, "combined_static"},
    {SelectionMode::kCombinedDynamic, "combined_dynamic"},
    {SelectionMode::kScoreDistribution, "score_distribution"},
};

std::vector<std::string> label_union(std::span<const FlowRecord> flows, std::vector<std::string> into = {}) {
  for (const auto& r : flows) {
    if (r.device_class) into.push_back(*r.device_class);
  }
  std::sort(into.begin(), into.end());
  into.erase(std::unique(into.begin(), into.end()), into.end());
  return into;
}

DayWindow day_span(std::span<const FlowRecord> flows) {
  DayWindow w{std::numeric_limits<std::uint32_t>::max(), 0};
  for (const auto& r : flows) {
    w.first_day = std::min(w.first_day, r.day_index);
    w.last_day = std::max(w.last_day, r.day_index);
  }
  if (flows.empty()) w.first_day = 0;
  return w;
}

Model fit(std::span<const FlowRecord> flows, const ForestParams& params, std::uint64_t seed,
          std::vector<std::string> catalog, const std::string& context_id) {
  auto samples = to_samples(flows);
  if (samples.empty()) throw DataError("no labeled flows to train context '" + context_id + "'");
  auto model = train_forest(samples, params, seed, std::move(catalog));
  model = compute_class_thresholds(std::move(model), samples);
  model.context_id = context_id;
  model.training_window = day_span(flows);
  return model;
}

std::vector<double> normalized(const std::vector<std::size_t>& counts) {
  std::size_t total = 0;
  for (auto c : counts) total += c;
  std::vector<double> out(counts.size(), 0.0);
  if (total == 0) return out;
  for (std::size_t i = 0; i < counts.size(); ++i)
    out[i] = static_cast<double>(counts[i]) / static_cast<double>(total);
  return out;
}

void check_bins(int bins) {
  if (bins <= 0) throw std::invalid_argument("histogram bins must be positive");
}

// Index of the first minimum.
std::size_t argmin(const std::vector<double>& values) {
  std::size_t best = 0;
  for (std::size_t i = 1; i < values.size(); ++i) {
    if (values[i] < values[best]) best = i;
  }
  return best;
}

}  // namespace

std::string_view mode_name(SelectionMode mode) {
  for (const auto& [m, name] : kModeNames) {
    if (m == mode) return name;
  }
  return "unknown";
}

std::optional<SelectionMode> mode_from_name(std::string_view name) {
  for (const auto& [m, n] : kModeNames) {
    if (n == name) return m;
  }
  return std::nullopt;
}

void validate(const SelectionPolicy& p) {
  if (p.window_days <= 0) throw std::invalid_argument("window_days must be positive");
  if (p.reselect_every_days <= 0) throw std::invalid_argument("reselect_every_days must be positive");
  if (p.window_days < p.reselect_every_days)
    throw std::invalid_argument("window_days must be at least reselect_every_days");
  if (p.histogram_bins < 2) throw std::invalid_argument("histogram_bins must be at least 2");
}

const Model& ModelPool::model(const std::string& context_id) const {
  if (context_id == kGlobalContext) {
    if (!global_model) throw std::out_of_range("pool has no global model");
    return *global_model;
  }
  auto it = context_models.find(context_id);
  if (it == context_models.end()) throw std::out_of_range("pool has no context model '" + context_id + "'");
  return it->second;
}

std::vector<std::string> ModelPool::candidates(bool include_global) const {
  std::vector<std::string> out;
  if (include_global && global_model) out.push_back(kGlobalContext);
  for (const auto& [id, m] : context_models) out.push_back(id);
  return out;
}

std::string check_invariants(const ModelPool& pool) {
  std::set<std::string> keys;
  for (const auto& [id, m] : pool.context_models) {
    keys.insert(id);
    if (m.context_id != id) return "context model '" + id + "' carries context_id '" + m.context_id + "'";
  }
  if (keys != pool.seen_homes) return "context models do not match the seen homes";
  const std::vector<std::string>* catalog = nullptr;
  auto same = [&](const Model& m) {
    if (!catalog) catalog = &m.class_catalog;
    return m.class_catalog == *catalog;
  };
  if (pool.global_model && !same(*pool.global_model)) return "global catalog differs";
  for (const auto& [id, m] : pool.context_models) {
    if (!same(m)) return "catalog of context '" + id + "' differs";
  }
  return {};
}

std::vector<Sample> to_samples(std::span<const FlowRecord> flows) {
  std::vector<Sample> out;
  out.reserve(flows.size());
  for (const auto& r : flows) {
    if (r.device_class) out.push_back({featurize(r), *r.device_class});
  }
  return out;
}

Model train_global(std::span<const FlowRecord> flows, const ForestParams& params, std::uint64_t seed,
                   std::vector<std::string> catalog) {
  return fit(flows, params, seed, std::move(catalog), kGlobalContext);
}

std::uint64_t context_seed(std::uint64_t seed, const std::string& home_id) {
  return derive_seed(seed, std::string_view(home_id));
}

std::map<std::string, Model> train_contextualized(const std::map<std::string, std::vector<FlowRecord>>& flows_by_home,
                                                  const ForestParams& params, std::uint64_t seed,
                                                  std::vector<std::string> catalog,
                                                  std::vector<std::string>* skipped) {
  if (catalog.empty()) {
    for (const auto& [home, flows] : flows_by_home) catalog = label_union(flows, std::move(catalog));
  }
  std::map<std::string, Model> out;
  for (const auto& [home, flows] : flows_by_home) {
    const bool labeled = std::any_of(flows.begin(), flows.end(), [](const auto& r) { return r.device_class.has_value(); });
    if (!labeled) {
      if (skipped) skipped->push_back(home);
      continue;
    }
    out.emplace(home, fit(flows, params, context_seed(seed, home), catalog, home));
  }
  return out;
}

Evaluation evaluate_model_on(const Model& model, std::span<const FlowRecord> flows, MetricMode mode) {
  TallyMap tally;
  bool overlap = false;
  for (const auto& r : flows) {
    if (!r.device_class) continue;
    if (!overlap && model.class_index(*r.device_class)) overlap = true;
    add_to_tally(tally, predict_gated(model, featurize(r)), *r.device_class);
  }
  Evaluation e;
  e.report = macro_accuracy(tally, mode);
  e.no_label_overlap = !overlap;
  return e;
}

ScoredHistory::ScoredHistory(const ModelPool& pool, bool include_global, std::span<const FlowRecord> history,
                             int histogram_bins)
    : candidates_(pool.candidates(include_global)), bins_(histogram_bins) {
  check_bins(histogram_bins);
  if (candidates_.empty()) throw std::invalid_argument("model pool has no candidates");

  std::map<std::uint32_t, std::vector<const FlowRecord*>> by_day;
  for (const auto& r : history) by_day[r.day_index].push_back(&r);
  std::vector<const Model*> models;
  for (const auto& id : candidates_) models.push_back(&pool.model(id));

  days_.resize(by_day.size());
  std::vector<const std::vector<const FlowRecord*>*> groups;
  std::size_t i = 0;
  for (const auto& [day, records] : by_day) {
    days_[i].day = day;
    days_[i].records = records.size();
    active_days_.push_back(day);
    groups.push_back(&records);
    ++i;
  }

  parallel_for(days_.size(), [&](std::size_t d) {
    auto& day = days_[d];
    day.tallies.resize(models.size());
    day.histograms.assign(models.size(), std::vector<std::size_t>(static_cast<std::size_t>(bins_), 0));
    for (const auto* r : *groups[d]) {
      const auto fv = featurize(*r);
      for (std::size_t c = 0; c < models.size(); ++c) {
        const auto p = predict_gated(*models[c], fv);
        ++day.histograms[c][score_bin(p.score, bins_)];
        if (r->device_class) add_to_tally(day.tallies[c], p, *r->device_class);
      }
    }
  });
}

template <typename F>
void ScoredHistory::for_days(DayRange range, F&& f) const {
  if (range.first > range.last) return;
  auto it = std::lower_bound(days_.begin(), days_.end(), range.first,
                             [](const DayScores& d, std::uint32_t day) { return d.day < day; });
  for (; it != days_.end() && it->day <= range.last; ++it) f(*it);
}

std::size_t ScoredHistory::record_count(DayRange range) const {
  std::size_t n = 0;
  for_days(range, [&](const DayScores& d) { n += d.records; });
  return n;
}

TallyMap ScoredHistory::tally(std::size_t candidate, DayRange range) const {
  TallyMap out;
  for_days(range, [&](const DayScores& d) { merge_tally(out, d.tallies.at(candidate)); });
  return out;
}

AccuracyReport ScoredHistory::accuracy(std::size_t candidate, DayRange range, MetricMode mode) const {
  return macro_accuracy(tally(candidate, range), mode);
}

std::vector<double> ScoredHistory::score_histogram(std::size_t candidate, DayRange range) const {
  std::vector<std::size_t> counts(static_cast<std::size_t>(bins_), 0);
  for_days(range, [&](const DayScores& d) {
    const auto& h = d.histograms.at(candidate);
    for (std::size_t b = 0; b < counts.size(); ++b) counts[b] += h[b];
  });
  return normalized(counts);
}

std::size_t ScoredHistory::candidate_index(const std::string& context_id) const {
  auto it = std::find(candidates_.begin(), candidates_.end(), context_id);
  if (it == candidates_.end()) throw std::out_of_range("not a candidate: " + context_id);
  return static_cast<std::size_t>(it - candidates_.begin());
}

std::size_t argmax_accuracy(const std::vector<double>& accuracies) {
  std::size_t best = 0;
  for (std::size_t i = 1; i < accuracies.size(); ++i) {
    if (accuracies[i] > accuracies[best]) best = i;
  }
  return best;
}

std::string select_best_static(const ModelPool& pool, bool include_global, std::span<const FlowRecord> selection,
                               MetricMode mode) {
  const auto ids = pool.candidates(include_global);
  if (ids.empty()) throw std::invalid_argument("model pool has no candidates");
  std::vector<double> acc;
  for (const auto& id : ids) acc.push_back(evaluate_model_on(pool.model(id), selection, mode).report.accuracy);
  return ids[argmax_accuracy(acc)];
}

std::optional<DayRange> selection_window(const ScoredHistory& history, std::uint32_t day,
                                         const SelectionPolicy& policy) {
  if (day == 0) return std::nullopt;
  const auto w = static_cast<std::uint32_t>(policy.window_days);
  DayRange range{day >= w ? day - w : 0, day - 1};
  std::size_t n = history.record_count(range);
  const auto& active = history.active_days();
  auto it = std::lower_bound(active.begin(), active.end(), range.first);
  while (n < policy.min_window_records && it != active.begin()) {
    --it;
    range.first = *it;
    n += history.record_count({*it, *it});
  }
  return range;
}

WindowChoice select_best_dynamic(const ScoredHistory& history, std::uint32_t day, const SelectionPolicy& policy,
                                 MetricMode mode) {
  const auto& ids = history.candidates();
  WindowChoice choice{ids.front(), 0.0, 0};
  const auto range = selection_window(history, day, policy);
  if (!range) return choice;
  choice.window_records = history.record_count(*range);
  if (choice.window_records == 0) return choice;
  std::vector<double> acc;
  for (std::size_t c = 0; c < ids.size(); ++c) acc.push_back(history.accuracy(c, *range, mode).accuracy);
  const auto best = argmax_accuracy(acc);
  choice.context_id = ids[best];
  choice.window_accuracy = acc[best];
  return choice;
}

WindowChoice select_best_dynamic(const ModelPool& pool, bool include_global, std::span<const FlowRecord> history,
                                 std::uint32_t day, const SelectionPolicy& policy, MetricMode mode) {
  return select_best_dynamic(ScoredHistory(pool, include_global, history, policy.histogram_bins), day, policy, mode);
}

SelectionTrace run_selection(const ScoredHistory& history, const std::string& home_id, DayRange days,
                             const SelectionPolicy& policy,
                             const std::map<std::string, std::vector<double>>* references, MetricMode mode) {
  validate(policy);
  if (policy.mode != SelectionMode::kCombinedDynamic && policy.mode != SelectionMode::kScoreDistribution)
    throw std::invalid_argument("run_selection needs a dynamic or score-distribution policy");
  if (policy.mode == SelectionMode::kScoreDistribution && !references)
    throw std::invalid_argument("score-distribution selection needs reference histograms");

  const auto& ids = history.candidates();
  const auto& active = history.active_days();
  SelectionTrace trace;
  trace.home_id = home_id;
  for (std::uint32_t day = days.first; day <= days.last; ++day) {
    const bool scheduled = (day - days.first) % static_cast<std::uint32_t>(policy.reselect_every_days) == 0;
    const bool has_records = std::binary_search(active.begin(), active.end(), day);
    if (!trace.entries.empty() && !(scheduled && has_records)) {
      auto carried = trace.entries.back();
      carried.day = day;
      trace.entries.push_back(carried);
      continue;
    }
    SelectionTrace::Entry e;
    e.day = day;
    if (policy.mode == SelectionMode::kCombinedDynamic) {
      auto c = select_best_dynamic(history, day, policy, mode);
      e.chosen_context = c.context_id;
      e.window_accuracy = c.window_accuracy;
      e.window_records = c.window_records;
    } else {
      e.chosen_context = ids.front();
      const auto range = selection_window(history, day, policy);
      if (range) e.window_records = history.record_count(*range);
      if (e.window_records > 0) {
        std::vector<double> dist;
        for (std::size_t c = 0; c < ids.size(); ++c) {
          auto ref = references->find(ids[c]);
          if (ref == references->end()) throw std::invalid_argument("no reference histogram for " + ids[c]);
          dist.push_back(histogram_distance(history.score_histogram(c, *range), ref->second));
        }
        const auto best = argmin(dist);
        e.chosen_context = ids[best];
        e.window_accuracy = history.accuracy(best, *range, mode).accuracy;
      }
    }
    trace.entries.push_back(std::move(e));
    if (day == std::numeric_limits<std::uint32_t>::max()) break;
  }
  return trace;
}

void write_selection_trace_csv(const std::filesystem::path& path, const SelectionTrace& trace) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot write " + path.string());
  out << "home_id,day_index,chosen_context,window_accuracy,window_records\n";
  for (const auto& e : trace.entries) {
    out << fmt::format("{},{},{},{:.6f},{}\n", trace.home_id, e.day, e.chosen_context, e.window_accuracy,
                       e.window_records);
  }
  if (!out) throw IoError("failed writing " + path.string());
}

std::size_t score_bin(double score, int bins) {
  check_bins(bins);
  if (!(score > 0.0)) return 0;
  const auto b = static_cast<std::size_t>(std::floor(score * bins));
  return std::min(b, static_cast<std::size_t>(bins - 1));
}

std::vector<double> score_histogram(const Model& model, std::span<const FlowRecord> flows, int bins) {
  check_bins(bins);
  std::vector<std::size_t> counts(static_cast<std::size_t>(bins), 0);
  for (const auto& r : flows) ++counts[score_bin(predict_top(model, featurize(r)).score, bins)];
  return normalized(counts);
}

double histogram_distance(std::span<const double> p, std::span<const double> q) {
  if (p.size() != q.size())
    throw std::invalid_argument(fmt::format("histogram lengths differ ({} vs {})", p.size(), q.size()));
  double sum = 0.0;
  for (std::size_t i = 0; i < p.size(); ++i) sum += std::abs(p[i] - q[i]);
  return std::min(1.0, sum / 2.0);
}

std::map<std::string, std::vector<double>> reference_histograms(
    const ModelPool& pool, const std::map<std::string, std::vector<FlowRecord>>& training_by_home, int bins) {
  auto flows_of = [&](const std::string& home) -> const std::vector<FlowRecord>& {
    auto it = training_by_home.find(home);
    if (it == training_by_home.end()) throw DataError("no training flows for context '" + home + "'");
    return it->second;
  };
  std::map<std::string, std::vector<double>> out;
  for (const auto& [id, model] : pool.context_models) out[id] = score_histogram(model, flows_of(id), bins);
  if (pool.global_model) {
    std::vector<FlowRecord> pooled;
    for (const auto& home : pool.seen_homes) {
      const auto& f = flows_of(home);
      pooled.insert(pooled.end(), f.begin(), f.end());
    }
    out[kGlobalContext] = score_histogram(*pool.global_model, pooled, bins);
  }
  return out;
}

std::string select_by_score_distribution(const ModelPool& pool, bool include_global,
                                         std::span<const FlowRecord> unlabeled,
                                         const std::map<std::string, std::vector<double>>& references, int bins) {
  const auto ids = pool.candidates(include_global);
  if (ids.empty()) throw std::invalid_argument("model pool has no candidates");
  std::vector<double> dist;
  for (const auto& id : ids) {
    auto ref = references.find(id);
    if (ref == references.end()) throw std::invalid_argument("no reference histogram for " + id);
    dist.push_back(histogram_distance(score_histogram(pool.model(id), unlabeled, bins), ref->second));
  }
  return ids[argmin(dist)];
}

}  // namespace driftnet
