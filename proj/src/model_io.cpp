#include "driftnet/model_io.hpp"

#include <fstream>
#include <sstream>

#include <fmt/format.h>
#include <json.hpp>

#include "driftnet/error.hpp"
#include "driftnet/seed.hpp"

namespace driftnet {

namespace {

using nlohmann::json;
using Kind = FormatError::Kind;

constexpr std::string_view kMagic = "DRIFTNET-MODEL";

json node_to_json(const DecisionTree& tree, int index) {
  const auto& node = tree.nodes[static_cast<std::size_t>(index)];
  if (node.is_leaf()) return json{{"leaf", node.distribution}};
  return json{{"feature", node.feature},
              {"threshold", node.threshold},
              {"children", json::array({node_to_json(tree, node.left), node_to_json(tree, node.right)})}};
}

int node_from_json(const json& j, DecisionTree& tree, std::size_t classes) {
  const int index = static_cast<int>(tree.nodes.size());
  tree.nodes.emplace_back();
  if (j.contains("leaf")) {
    auto dist = j.at("leaf").get<std::vector<double>>();
    if (dist.size() != classes) throw FormatError(Kind::kMalformed, "leaf distribution size mismatch");
    tree.nodes[index].distribution = std::move(dist);
    return index;
  }
  const int feature = j.at("feature").get<int>();
  if (feature < 0 || feature >= static_cast<int>(kFeatureCount))
    throw FormatError(Kind::kMalformed, "feature index out of range");
  const auto& children = j.at("children");
  if (!children.is_array() || children.size() != 2)
    throw FormatError(Kind::kMalformed, "internal node needs two children");
  tree.nodes[index].feature = feature;
  tree.nodes[index].threshold = j.at("threshold").get<double>();
  int left = node_from_json(children[0], tree, classes);
  int right = node_from_json(children[1], tree, classes);
  tree.nodes[index].left = left;
  tree.nodes[index].right = right;
  return index;
}

std::string checksum_hex(std::string_view covered) { return fmt::format("{:016x}", fnv1a64(covered)); }

}  // namespace

std::string save_model(const Model& m) {
  json trees = json::array();
  for (const auto& t : m.trees) trees.push_back(node_to_json(t, 0));
  json body = {
      {"format_version", kModelFormatVersion},
      {"context_id", m.context_id},
      {"class_catalog", m.class_catalog},
      {"class_thresholds", m.class_thresholds},
      {"training_window", {m.training_window.first_day, m.training_window.last_day}},
      {"hyperparams",
       {{"n_trees", m.hyperparams.n_trees},
        {"max_depth", m.hyperparams.max_depth},
        {"min_samples_leaf", m.hyperparams.min_samples_leaf},
        {"features_per_split", m.hyperparams.features_per_split},
        {"bootstrap", m.hyperparams.bootstrap}}},
      {"rng_seed", m.rng_seed},
      {"trees", std::move(trees)},
  };
  std::string covered = fmt::format("{} {}\n{}\n", kMagic, kModelFormatVersion, body.dump());
  return covered + "checksum " + checksum_hex(covered) + "\n";
}

Model load_model(std::string_view text) {
  const auto magic_end = text.find('\n');
  if (magic_end == std::string_view::npos) throw FormatError(Kind::kTruncated, "model file truncated");
  const auto magic_line = text.substr(0, magic_end);
  if (magic_line != fmt::format("{} {}", kMagic, kModelFormatVersion))
    throw FormatError(Kind::kVersionMismatch,
                      fmt::format("unsupported model header '{}'", magic_line.substr(0, 40)));

  const auto body_end = text.find('\n', magic_end + 1);
  if (body_end == std::string_view::npos) throw FormatError(Kind::kTruncated, "model file truncated");
  const auto covered = text.substr(0, body_end + 1);
  auto trailer = text.substr(body_end + 1);
  if (!trailer.empty() && trailer.back() == '\n') trailer.remove_suffix(1);
  if (trailer.empty()) throw FormatError(Kind::kTruncated, "model file truncated: missing checksum");
  if (!trailer.starts_with("checksum ") || trailer.substr(9) != checksum_hex(covered))
    throw FormatError(Kind::kChecksum, "model checksum mismatch");

  Model m;
  try {
    auto body = json::parse(text.substr(magic_end + 1, body_end - magic_end - 1));
    if (body.at("format_version").get<int>() != kModelFormatVersion)
      throw FormatError(Kind::kVersionMismatch, "unsupported model format_version");
    m.context_id = body.at("context_id").get<std::string>();
    m.class_catalog = body.at("class_catalog").get<std::vector<std::string>>();
    m.class_thresholds = body.at("class_thresholds").get<std::vector<double>>();
    auto window = body.at("training_window").get<std::vector<std::uint32_t>>();
    if (window.size() != 2) throw FormatError(Kind::kMalformed, "training_window needs two days");
    m.training_window = {window[0], window[1]};
    const auto& hp = body.at("hyperparams");
    m.hyperparams.n_trees = hp.at("n_trees").get<int>();
    m.hyperparams.max_depth = hp.at("max_depth").get<int>();
    m.hyperparams.min_samples_leaf = hp.at("min_samples_leaf").get<int>();
    m.hyperparams.features_per_split = hp.at("features_per_split").get<int>();
    m.hyperparams.bootstrap = hp.at("bootstrap").get<bool>();
    m.rng_seed = body.at("rng_seed").get<std::uint64_t>();
    for (const auto& t : body.at("trees")) {
      DecisionTree tree;
      node_from_json(t, tree, m.class_catalog.size());
      m.trees.push_back(std::move(tree));
    }
  } catch (const json::exception& e) {
    throw FormatError(Kind::kMalformed, std::string("malformed model body: ") + e.what());
  }
  if (m.trees.empty() || m.class_catalog.empty() ||
      m.class_thresholds.size() != m.class_catalog.size())
    throw FormatError(Kind::kMalformed, "model body violates size invariants");
  return m;
}

void save_model_file(const std::filesystem::path& path, const Model& model) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot open for writing: " + path.string());
  out << save_model(model);
  if (!out) throw IoError("write failed: " + path.string());
}

Model load_model_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open for reading: " + path.string());
  std::ostringstream buf;
  buf << in.rdbuf();
  try {
    return load_model(buf.str());
  } catch (const FormatError& e) {
    throw FormatError(e.kind(), path.string() + ": " + e.what());
  }
}

}  // namespace driftnet
