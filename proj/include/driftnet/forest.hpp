#pragma once

#include <cstdint>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "driftnet/flow.hpp"

namespace driftnet {

struct ForestParams {
  int n_trees = 100;
  int max_depth = 20;
  int min_samples_leaf = 2;
  int features_per_split = 6;  // ceil(sqrt(28))
  bool bootstrap = true;

  bool operator==(const ForestParams&) const = default;
};

// Throws std::invalid_argument on non-positive values or features_per_split > 28.
void validate(const ForestParams& params);

/// A node is a leaf when feature < 0. Internal nodes send x[feature] <= threshold left.
struct TreeNode {
  int feature = -1;
  double threshold = 0.0;
  int left = -1;
  int right = -1;
  std::vector<double> distribution;  // leaves only, one entry per catalog class

  bool is_leaf() const { return feature < 0; }
  bool operator==(const TreeNode&) const = default;
};

// Nodes in preorder; the root is nodes[0].
struct DecisionTree {
  std::vector<TreeNode> nodes;

  const std::vector<double>& leaf_for(const FeatureVector& fv) const;
  bool operator==(const DecisionTree&) const = default;
};

struct DayWindow {
  std::uint32_t first_day = 0;
  std::uint32_t last_day = 0;  // inclusive

  bool contains(std::uint32_t day) const { return day >= first_day && day <= last_day; }
  bool operator==(const DayWindow&) const = default;
};

struct Model {
  std::vector<DecisionTree> trees;
  std::vector<std::string> class_catalog;
  std::vector<double> class_thresholds;  // same length as class_catalog
  std::string context_id = "global";
  DayWindow training_window;
  ForestParams hyperparams;
  std::uint64_t rng_seed = 0;

  std::size_t class_count() const { return class_catalog.size(); }
  std::optional<std::size_t> class_index(const std::string& label) const;
  bool operator==(const Model&) const = default;
};

struct Sample {
  FeatureVector features;
  std::string label;
};

/// Grows a Gini random forest. The catalog defaults to the sorted set of sample
/// labels; an explicit catalog may list classes that have no samples, which then
/// carry zero probability in every leaf. Trees are seeded with derive_seed(seed,
/// tree_index), so the result does not depend on the worker count.
/// Thresholds of the returned model are all 0.
Model train_forest(std::span<const Sample> samples, const ForestParams& params, std::uint64_t seed,
                   std::vector<std::string> catalog = {});

// Mean of the per-tree leaf distributions.
std::vector<double> predict_scores(const Model& model, const FeatureVector& fv);

struct Prediction {
  std::size_t class_index = 0;
  std::string class_label;
  double score = 0.0;
  bool accepted = false;
};

// Argmax of the scores, ties to the lowest catalog index. Ignores thresholds.
Prediction predict_top(const Model& model, const FeatureVector& fv);

// Accepted iff score >= threshold of the predicted class.
Prediction predict_gated(const Model& model, const FeatureVector& fv);

/// Sets threshold[c] to the mean top score over samples of class c that the
/// model predicts correctly; 0 for classes with no correct prediction.
Model compute_class_thresholds(Model model, std::span<const Sample> samples);

enum class MetricMode {
  kAcceptedOnly,     // per-class accuracy over accepted predictions
  kRejectedAsError,  // rejected predictions count as wrong
};

struct ClassTally {
  std::size_t total = 0;
  std::size_t accepted = 0;
  std::size_t correct = 0;  // accepted and correct

  ClassTally& operator+=(const ClassTally& o) {
    total += o.total;
    accepted += o.accepted;
    correct += o.correct;
    return *this;
  }
  bool operator==(const ClassTally&) const = default;
};

// Keyed by true label.
using TallyMap = std::map<std::string, ClassTally>;

void add_to_tally(TallyMap& tally, const Prediction& prediction, const std::string& true_label);
void merge_tally(TallyMap& into, const TallyMap& from);

struct AccuracyReport {
  double accuracy = 0.0;
  double coverage = 0.0;
  std::size_t total = 0;
  std::size_t accepted = 0;
  bool no_accepted = false;  // accuracy reported as 0
  std::vector<std::string> classes_without_accepted;
};

/// Macro accuracy over true classes. In accepted-only mode a class contributes
/// correct/accepted and classes with nothing accepted are left out (listed in
/// classes_without_accepted); in rejected-as-error mode every present class
/// contributes correct/total.
AccuracyReport macro_accuracy(const TallyMap& tally, MetricMode mode = MetricMode::kAcceptedOnly);

struct LabeledPrediction {
  Prediction prediction;
  std::string true_label;
};

AccuracyReport macro_accuracy(std::span<const LabeledPrediction> predictions,
                              MetricMode mode = MetricMode::kAcceptedOnly);

}  // namespace driftnet
