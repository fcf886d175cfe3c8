#include "driftnet/forest.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <random>
#include <stdexcept>

#include <boost/random/uniform_int_distribution.hpp>

#include "driftnet/parallel.hpp"
#include "driftnet/seed.hpp"

namespace driftnet {

namespace {

using Rng = std::mt19937_64;

// Column-major copy of the training features shared by all trees, with every
// sample index sorted once per feature.
struct TrainingMatrix {
  std::vector<std::vector<double>> columns;  // [feature][sample]
  std::vector<std::size_t> labels;
  std::size_t classes = 0;
  std::vector<std::vector<std::uint32_t>> order;  // [feature] sample indices by ascending value
};

struct SplitChoice {
  int feature = -1;
  double threshold = 0.0;
  double score = 0.0;  // sum over children of sum(count^2)/n, higher is purer
};

// Each node owns the same slot range [begin, end) in every per-feature array;
// the arrays hold the node's rows sorted by that feature, so split search is a
// linear scan. A split stably partitions all arrays, which keeps them sorted.
class TreeBuilder {
 public:
  TreeBuilder(const TrainingMatrix& data, const ForestParams& params, std::uint64_t seed)
      : data_(data), params_(params), rng_(seed) {}

  DecisionTree build() {
    const auto n = data_.labels.size();
    std::vector<std::uint32_t> multiplicity(n, 1);
    if (params_.bootstrap) {
      std::fill(multiplicity.begin(), multiplicity.end(), 0);
      boost::random::uniform_int_distribution<std::size_t> pick(0, n - 1);
      for (std::size_t i = 0; i < n; ++i) ++multiplicity[pick(rng_)];
    }
    for (std::size_t f = 0; f < kFeatureCount; ++f) {
      auto& sorted = sorted_[f];
      sorted.clear();
      sorted.reserve(n);
      for (auto r : data_.order[f]) sorted.insert(sorted.end(), multiplicity[r], r);
    }
    goes_left_.assign(n, 0);
    buffer_.resize(n);
    tree_.nodes.clear();
    grow(0, sorted_[0].size(), 0);
    return std::move(tree_);
  }

 private:
  int grow(std::size_t begin, std::size_t end, int depth) {
    const int index = static_cast<int>(tree_.nodes.size());
    tree_.nodes.emplace_back();

    std::vector<std::size_t> counts(data_.classes, 0);
    for (std::size_t i = begin; i < end; ++i) ++counts[data_.labels[sorted_[0][i]]];
    const std::size_t n = end - begin;
    const bool pure = std::count_if(counts.begin(), counts.end(), [](auto c) { return c > 0; }) <= 1;

    SplitChoice split;
    if (!pure && depth < params_.max_depth &&
        n >= 2 * static_cast<std::size_t>(params_.min_samples_leaf)) {
      split = find_split(begin, end, counts);
    }

    if (split.feature < 0) {
      auto& leaf = tree_.nodes[index];
      leaf.distribution.resize(data_.classes);
      for (std::size_t k = 0; k < data_.classes; ++k)
        leaf.distribution[k] = static_cast<double>(counts[k]) / static_cast<double>(n);
      return index;
    }

    const auto middle = partition(begin, end, split);
    tree_.nodes[index].feature = split.feature;
    tree_.nodes[index].threshold = split.threshold;
    int left = grow(begin, middle, depth + 1);
    int right = grow(middle, end, depth + 1);
    tree_.nodes[index].left = left;
    tree_.nodes[index].right = right;
    return index;
  }

  std::size_t partition(std::size_t begin, std::size_t end, const SplitChoice& split) {
    const auto& column = data_.columns[split.feature];
    for (std::size_t i = begin; i < end; ++i) {
      const auto r = sorted_[0][i];
      goes_left_[r] = column[r] <= split.threshold ? 1 : 0;
    }
    std::size_t middle = begin;
    for (auto& sorted : sorted_) {
      std::size_t l = begin;
      std::size_t rcount = 0;
      for (std::size_t i = begin; i < end; ++i) {
        const auto r = sorted[i];
        if (goes_left_[r]) {
          sorted[l++] = r;
        } else {
          buffer_[rcount++] = r;
        }
      }
      std::copy(buffer_.begin(), buffer_.begin() + static_cast<std::ptrdiff_t>(rcount),
                sorted.begin() + static_cast<std::ptrdiff_t>(l));
      middle = l;
    }
    return middle;
  }

  // Examines a random subset of features_per_split features and keeps going
  // through the remaining ones only while no improving split was found.
  SplitChoice find_split(std::size_t begin, std::size_t end, const std::vector<std::size_t>& counts) {
    std::array<int, kFeatureCount> order;
    std::iota(order.begin(), order.end(), 0);
    std::size_t n = end - begin;
    double parent_sq = 0.0;
    for (auto c : counts) parent_sq += static_cast<double>(c) * static_cast<double>(c);
    const double parent_score = parent_sq / static_cast<double>(n);

    SplitChoice best;
    best.score = parent_score + 1e-9;
    std::vector<std::size_t> left_counts(data_.classes);
    std::vector<std::size_t> right_counts(data_.classes);
    const auto min_leaf = static_cast<std::size_t>(params_.min_samples_leaf);

    for (std::size_t fi = 0; fi < kFeatureCount; ++fi) {
      // Lazy Fisher-Yates: draw the next feature uniformly from the unexamined ones.
      boost::random::uniform_int_distribution<std::size_t> pick(fi, kFeatureCount - 1);
      std::swap(order[fi], order[pick(rng_)]);
      if (fi >= static_cast<std::size_t>(params_.features_per_split) && best.feature >= 0) break;
      const int f = order[fi];
      const auto& column = data_.columns[f];
      const auto* rows = sorted_[f].data() + begin;
      if (column[rows[0]] == column[rows[n - 1]]) continue;

      std::fill(left_counts.begin(), left_counts.end(), 0);
      right_counts = counts;
      double left_sq = 0.0;
      double right_sq = parent_sq;
      double value = column[rows[0]];
      for (std::size_t i = 0; i + 1 < n; ++i) {
        const auto k = data_.labels[rows[i]];
        left_sq += 2.0 * static_cast<double>(left_counts[k]) + 1.0;
        right_sq -= 2.0 * static_cast<double>(right_counts[k]) - 1.0;
        ++left_counts[k];
        --right_counts[k];
        const double next = column[rows[i + 1]];
        const double lo = value;
        value = next;
        const std::size_t n_left = i + 1;
        if (lo == next) continue;
        if (n_left < min_leaf || n - n_left < min_leaf) continue;
        const double score = left_sq / static_cast<double>(n_left) +
                             right_sq / static_cast<double>(n - n_left);
        if (score > best.score) {
          double threshold = lo + (next - lo) / 2.0;
          if (!(threshold < next)) threshold = lo;
          best = {f, threshold, score};
        }
      }
    }
    return best;
  }

  const TrainingMatrix& data_;
  const ForestParams& params_;
  Rng rng_;
  DecisionTree tree_;
  std::array<std::vector<std::uint32_t>, kFeatureCount> sorted_;
  std::vector<std::uint8_t> goes_left_;
  std::vector<std::uint32_t> buffer_;
};

}  // namespace

void validate(const ForestParams& p) {
  if (p.n_trees <= 0) throw std::invalid_argument("n_trees must be positive");
  if (p.max_depth <= 0) throw std::invalid_argument("max_depth must be positive");
  if (p.min_samples_leaf <= 0) throw std::invalid_argument("min_samples_leaf must be positive");
  if (p.features_per_split <= 0 || p.features_per_split > static_cast<int>(kFeatureCount))
    throw std::invalid_argument("features_per_split must be in [1, 28]");
}

const std::vector<double>& DecisionTree::leaf_for(const FeatureVector& fv) const {
  std::size_t i = 0;
  while (!nodes[i].is_leaf()) {
    const auto& node = nodes[i];
    i = static_cast<std::size_t>(fv[node.feature] <= node.threshold ? node.left : node.right);
  }
  return nodes[i].distribution;
}

std::optional<std::size_t> Model::class_index(const std::string& label) const {
  auto it = std::find(class_catalog.begin(), class_catalog.end(), label);
  if (it == class_catalog.end()) return std::nullopt;
  return static_cast<std::size_t>(it - class_catalog.begin());
}

Model train_forest(std::span<const Sample> samples, const ForestParams& params, std::uint64_t seed,
                   std::vector<std::string> catalog) {
  validate(params);
  if (samples.empty()) throw std::invalid_argument("cannot train a forest on an empty sample set");

  if (catalog.empty()) {
    for (const auto& s : samples) catalog.push_back(s.label);
    std::sort(catalog.begin(), catalog.end());
    catalog.erase(std::unique(catalog.begin(), catalog.end()), catalog.end());
  }
  std::map<std::string, std::size_t> index_of;
  for (std::size_t k = 0; k < catalog.size(); ++k) {
    if (!index_of.emplace(catalog[k], k).second)
      throw std::invalid_argument("duplicate class in catalog: " + catalog[k]);
  }

  TrainingMatrix data;
  data.classes = catalog.size();
  data.columns.assign(kFeatureCount, std::vector<double>(samples.size()));
  data.labels.reserve(samples.size());
  for (std::size_t i = 0; i < samples.size(); ++i) {
    auto it = index_of.find(samples[i].label);
    if (it == index_of.end())
      throw std::invalid_argument("sample label outside the class catalog: " + samples[i].label);
    data.labels.push_back(it->second);
    for (std::size_t f = 0; f < kFeatureCount; ++f) {
      const double v = samples[i].features[f];
      if (!std::isfinite(v)) throw std::invalid_argument("non-finite feature value");
      data.columns[f][i] = v;
    }
  }

  if (samples.size() > std::numeric_limits<std::uint32_t>::max())
    throw std::invalid_argument("too many samples");
  data.order.resize(kFeatureCount);
  for (std::size_t f = 0; f < kFeatureCount; ++f) {
    auto& order = data.order[f];
    order.resize(samples.size());
    std::iota(order.begin(), order.end(), std::uint32_t{0});
    const auto& column = data.columns[f];
    std::stable_sort(order.begin(), order.end(), [&](auto a, auto b) { return column[a] < column[b]; });
  }

  Model model;
  model.class_catalog = std::move(catalog);
  model.class_thresholds.assign(model.class_catalog.size(), 0.0);
  model.hyperparams = params;
  model.rng_seed = seed;
  model.trees.resize(static_cast<std::size_t>(params.n_trees));
  parallel_for(model.trees.size(), [&](std::size_t t) {
    TreeBuilder builder(data, params, derive_seed(seed, static_cast<std::uint64_t>(t)));
    model.trees[t] = builder.build();
  });
  return model;
}

std::vector<double> predict_scores(const Model& model, const FeatureVector& fv) {
  std::vector<double> scores(model.class_count(), 0.0);
  for (const auto& tree : model.trees) {
    const auto& dist = tree.leaf_for(fv);
    for (std::size_t k = 0; k < scores.size(); ++k) scores[k] += dist[k];
  }
  const double n = static_cast<double>(model.trees.size());
  for (auto& s : scores) s /= n;
  return scores;
}

Prediction predict_top(const Model& model, const FeatureVector& fv) {
  auto scores = predict_scores(model, fv);
  std::size_t best = 0;
  for (std::size_t k = 1; k < scores.size(); ++k) {
    if (scores[k] > scores[best]) best = k;
  }
  Prediction p;
  p.class_index = best;
  p.class_label = model.class_catalog[best];
  p.score = scores[best];
  return p;
}

Prediction predict_gated(const Model& model, const FeatureVector& fv) {
  auto p = predict_top(model, fv);
  p.accepted = p.score >= model.class_thresholds[p.class_index];
  return p;
}

Model compute_class_thresholds(Model model, std::span<const Sample> samples) {
  const auto k = model.class_count();
  std::vector<double> sums(k, 0.0);
  std::vector<std::size_t> hits(k, 0);
  for (const auto& s : samples) {
    auto p = predict_top(model, s.features);
    if (p.class_label == s.label) {
      sums[p.class_index] += p.score;
      ++hits[p.class_index];
    }
  }
  model.class_thresholds.assign(k, 0.0);
  for (std::size_t c = 0; c < k; ++c) {
    if (hits[c] > 0) model.class_thresholds[c] = sums[c] / static_cast<double>(hits[c]);
  }
  return model;
}

void add_to_tally(TallyMap& tally, const Prediction& prediction, const std::string& true_label) {
  auto& t = tally[true_label];
  ++t.total;
  if (prediction.accepted) {
    ++t.accepted;
    if (prediction.class_label == true_label) ++t.correct;
  }
}

void merge_tally(TallyMap& into, const TallyMap& from) {
  for (const auto& [label, t] : from) into[label] += t;
}

AccuracyReport macro_accuracy(const TallyMap& tally, MetricMode mode) {
  AccuracyReport report;
  double sum = 0.0;
  std::size_t classes = 0;
  for (const auto& [label, t] : tally) {
    if (t.total == 0) continue;
    report.total += t.total;
    report.accepted += t.accepted;
    if (t.accepted == 0) report.classes_without_accepted.push_back(label);
    if (mode == MetricMode::kAcceptedOnly) {
      if (t.accepted == 0) continue;
      sum += static_cast<double>(t.correct) / static_cast<double>(t.accepted);
    } else {
      sum += static_cast<double>(t.correct) / static_cast<double>(t.total);
    }
    ++classes;
  }
  report.no_accepted = report.accepted == 0;
  if (report.total > 0)
    report.coverage = static_cast<double>(report.accepted) / static_cast<double>(report.total);
  if (!report.no_accepted && classes > 0) report.accuracy = sum / static_cast<double>(classes);
  return report;
}

AccuracyReport macro_accuracy(std::span<const LabeledPrediction> predictions, MetricMode mode) {
  TallyMap tally;
  for (const auto& lp : predictions) add_to_tally(tally, lp.prediction, lp.true_label);
  return macro_accuracy(tally, mode);
}

}  // namespace driftnet
