#include "driftnet/cli.hpp"

#include <algorithm>
#include <filesystem>
#include <fstream>
#include <sstream>

#include <CLI11.hpp>
#include <fmt/format.h>
#include <json.hpp>

#include "driftnet/error.hpp"
#include "driftnet/flow_csv.hpp"
#include "driftnet/harness.hpp"
#include "driftnet/model_io.hpp"
#include "driftnet/seed.hpp"
#include "driftnet/selftest.hpp"
#include "driftnet/synth.hpp"

namespace driftnet::cli {

namespace {

namespace fs = std::filesystem;
using nlohmann::json;

// Thrown for flag combinations CLI11 cannot express.
struct UsageError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

json format_versions() {
  return {{"config", synth::kConfigFormatVersion},
          {"flow_csv_columns", kFlowCsvColumns},
          {"model", kModelFormatVersion},
          {"report", harness::kReportFormatVersion}};
}

void write_json(const fs::path& path, const json& j) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot open for writing: " + path.string());
  out << j.dump(2) << '\n';
  if (!out) throw IoError("write failed: " + path.string());
}

void make_dir(const fs::path& dir) {
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec) throw IoError("cannot create directory " + dir.string() + ": " + ec.message());
}

// Refuses to write into an input directory.
void check_distinct(const fs::path& input, const fs::path& out) {
  std::error_code ec;
  if (fs::exists(out, ec) && fs::equivalent(input, out, ec))
    throw UsageError("--out must differ from the input directory " + input.string());
}

std::string dataset_hash(const harness::Dataset& d) {
  return d.manifest.contains("config_hash") ? d.manifest["config_hash"].get<std::string>() : std::string{};
}

struct GenerateArgs {
  std::string config;
  std::optional<std::uint64_t> seed;
  std::string out;
};

struct TrainArgs {
  std::string data;
  std::string mode = "global";
  std::vector<std::string> seen;
  std::uint64_t seed = 7;
  int trees = 100;
  std::string out;
};

struct EvaluateArgs {
  std::string data;
  int runs = 10;
  int seen = 5;
  std::string policy = "combined_dynamic";
  std::string metric = "accepted_only";
  std::uint64_t seed = 7;
  int trees = 100;
  int window = 30;
  int reselect = 1;
  std::size_t min_window_records = 50;
  bool oracle_static = false;
  bool skip_temporal = false;
  bool skip_spatial = false;
  std::string out;
};

struct ReportArgs {
  std::string results;
  std::string out;
};

struct SelftestArgs {
  bool list = false;
  std::string model;
  std::string out;
};

int run_generate(const GenerateArgs& a, std::ostream& out) {
  auto config = a.config.empty() ? synth::SynthConfig::defaults() : synth::load_config(a.config);
  if (a.seed) config.master_seed = *a.seed;
  const auto written = synth::generate_dataset(config, a.out);
  // The dataset manifest doubles as the invocation manifest.
  auto manifest = synth::dataset_manifest(config);
  manifest["command"] = "generate";
  manifest["format_versions"] = format_versions();
  write_json(fs::path(a.out) / "manifest.json", manifest);
  out << fmt::format("wrote {} files to {}\n", written.size(), a.out);
  return kOk;
}

int run_train(const TrainArgs& a, std::ostream& out) {
  check_distinct(a.data, a.out);
  const auto dataset = harness::load_dataset(a.data);
  harness::HarnessParams p;
  p.seed = a.seed;
  p.forest.n_trees = a.trees;
  const auto window = harness::train_window(dataset, p);

  std::vector<std::string> seen = a.seen;
  if (seen.empty()) {
    for (const auto& [h, r] : dataset.homes) seen.push_back(h);
  }
  std::sort(seen.begin(), seen.end());
  seen.erase(std::unique(seen.begin(), seen.end()), seen.end());
  std::map<std::string, std::vector<FlowRecord>> flows;
  for (const auto& h : seen) {
    auto it = dataset.homes.find(h);
    if (it == dataset.homes.end()) throw DataError("home not in dataset: " + h);
    flows[h] = harness::records_in(it->second, window);
  }

  make_dir(a.out);
  std::vector<std::string> files;
  std::vector<std::string> skipped;
  if (a.mode == "global") {
    std::vector<FlowRecord> pooled;
    for (const auto& [h, f] : flows) pooled.insert(pooled.end(), f.begin(), f.end());
    save_model_file(fs::path(a.out) / "global.model", train_global(pooled, p.forest, a.seed, dataset.catalog));
    files.push_back("global.model");
  } else {
    for (const auto& [h, m] : train_contextualized(flows, p.forest, a.seed, dataset.catalog, &skipped)) {
      save_model_file(fs::path(a.out) / (h + ".model"), m);
      files.push_back(h + ".model");
    }
  }
  write_json(fs::path(a.out) / "manifest.json", {{"command", "train"},
                                                 {"mode", a.mode},
                                                 {"seen_homes", seen},
                                                 {"skipped_homes", skipped},
                                                 {"seed", a.seed},
                                                 {"n_trees", a.trees},
                                                 {"training_window", {window.first_day, window.last_day}},
                                                 {"config_hash", dataset_hash(dataset)},
                                                 {"models", files},
                                                 {"format_versions", format_versions()}});
  for (const auto& s : skipped) out << "skipped home without labeled data: " << s << '\n';
  out << fmt::format("wrote {} model(s) to {}\n", files.size(), a.out);
  return kOk;
}

int run_evaluate(const EvaluateArgs& a, std::ostream& out) {
  check_distinct(a.data, a.out);
  harness::HarnessParams p;
  p.seed = a.seed;
  p.forest.n_trees = a.trees;
  p.policy.mode = *mode_from_name(a.policy);
  p.policy.window_days = a.window;
  p.policy.reselect_every_days = a.reselect;
  p.policy.min_window_records = a.min_window_records;
  p.metric = a.metric == "accepted_only" ? MetricMode::kAcceptedOnly : MetricMode::kRejectedAsError;
  p.oracle_static = a.oracle_static;
  try {
    validate(p.policy);
  } catch (const std::invalid_argument& e) {
    throw UsageError(e.what());
  }
  const auto dataset = harness::load_dataset(a.data);
  harness::ExperimentOptions o;
  o.runs = a.runs;
  o.seen = a.seen;
  o.temporal = !a.skip_temporal;
  o.spatial = !a.skip_spatial;
  auto report = harness::run_experiments(dataset, p, o);
  report.manifest["command"] = "evaluate";
  report.manifest["config_hash"] = dataset_hash(dataset);
  report.manifest["seed"] = a.seed;
  report.manifest["format_versions"] = format_versions();
  harness::emit_report(report, a.out);
  out << harness::summary_text(report);
  return kOk;
}

int run_report(const ReportArgs& a, std::ostream& out) {
  check_distinct(a.results, a.out);
  const auto path = fs::path(a.results) / "results.json";
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot read " + path.string());
  json j;
  try {
    j = json::parse(in);
  } catch (const json::exception& e) {
    throw FormatError(FormatError::Kind::kMalformed, path.string() + ": " + e.what());
  }
  auto report = harness::report_from_json(j);
  report.manifest["command"] = "report";
  harness::emit_report(report, a.out);
  out << harness::summary_text(report);
  return kOk;
}

int run_selftest(const SelftestArgs& a, std::ostream& out) {
  const auto& checks = self_checks();
  if (a.list) {
    for (const auto& c : checks) out << c.name << "  " << c.description << '\n';
    return kOk;
  }
  if (!a.model.empty()) {
    const auto m = load_model_file(a.model);  // FormatError maps to exit 2
    out << fmt::format("model ok: context {}, {} trees, {} classes\n", m.context_id, m.trees.size(), m.class_count());
    return kOk;
  }
  int failed = 0;
  json results = json::object();
  for (const auto& c : checks) {
    std::string err;
    try {
      err = c.run();
    } catch (const std::exception& e) {
      err = std::string("threw: ") + e.what();
    }
    results[c.name] = err.empty() ? "pass" : "fail";
    if (err.empty()) {
      out << "PASS " << c.name << '\n';
    } else {
      ++failed;
      out << "FAIL " << c.name << ": " << err << '\n';
    }
  }
  if (!a.out.empty()) {
    make_dir(a.out);
    write_json(fs::path(a.out) / "manifest.json",
               {{"command", "selftest"}, {"checks", results}, {"format_versions", format_versions()}});
  }
  out << fmt::format("{} of {} checks passed\n", checks.size() - static_cast<std::size_t>(failed), checks.size());
  return failed ? kInternal : kOk;
}

}  // namespace

int dispatch(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  CLI::App app{"Seeded IoT flow generator, drift-aware model training and evaluation", "driftnet"};
  app.require_subcommand(1);
  app.set_help_all_flag("--help-all");

  GenerateArgs gen;
  auto* g = app.add_subcommand("generate", "write a synthetic multi-home flow dataset");
  g->add_option("--config", gen.config, "synthesis config (JSON); defaults apply when omitted")->check(CLI::ExistingFile);
  g->add_option("--seed", gen.seed, "override the config's master seed");
  g->add_option("--out", gen.out, "output directory")->required();

  TrainArgs tr;
  auto* t = app.add_subcommand("train", "train a global model or one model per home");
  t->add_option("--data", tr.data, "dataset directory")->required()->check(CLI::ExistingDirectory);
  t->add_option("--mode", tr.mode, "global or contextual")->check(CLI::IsMember({"global", "contextual"}));
  t->add_option("--seen", tr.seen, "homes to train on (default: all)")->delimiter(',');
  t->add_option("--seed", tr.seed, "training seed");
  t->add_option("--trees", tr.trees, "trees per forest")->check(CLI::PositiveNumber);
  t->add_option("--out", tr.out, "output directory")->required();

  EvaluateArgs ev;
  auto* e = app.add_subcommand("evaluate", "run the seen/unseen strategy comparison");
  e->add_option("--data", ev.data, "dataset directory")->required()->check(CLI::ExistingDirectory);
  e->add_option("--runs", ev.runs, "number of runs")->check(CLI::PositiveNumber);
  e->add_option("--seen", ev.seen, "seen homes per run")->check(CLI::PositiveNumber);
  e->add_option("--policy", ev.policy, "selector behind the dynamic column")
      ->check(CLI::IsMember({"combined_dynamic", "score_distribution"}));
  e->add_option("--metric", ev.metric, "accepted_only or rejected_as_error")
      ->check(CLI::IsMember({"accepted_only", "rejected_as_error"}));
  e->add_option("--seed", ev.seed, "experiment seed");
  e->add_option("--trees", ev.trees, "trees per forest")->check(CLI::PositiveNumber);
  e->add_option("--window", ev.window, "dynamic window in days")->check(CLI::PositiveNumber);
  e->add_option("--reselect", ev.reselect, "reselect every N days")->check(CLI::PositiveNumber);
  e->add_option("--min-window-records", ev.min_window_records, "floor on records in a dynamic window");
  e->add_flag("--oracle-static", ev.oracle_static, "select static models on the test window");
  e->add_flag("--no-temporal", ev.skip_temporal, "skip the temporal decay report");
  e->add_flag("--no-spatial", ev.skip_spatial, "skip the spatial matrix");
  e->add_option("--out", ev.out, "output directory")->required();

  ReportArgs rep;
  auto* r = app.add_subcommand("report", "re-emit tables and summary from a results directory");
  r->add_option("--results", rep.results, "directory written by evaluate")->required()->check(CLI::ExistingDirectory);
  r->add_option("--out", rep.out, "output directory")->required();

  SelftestArgs st;
  auto* s = app.add_subcommand("selftest", "run the embedded checks");
  s->add_flag("--list", st.list, "list checks without running them");
  s->add_option("--model", st.model, "verify a model file instead")->check(CLI::ExistingFile);
  s->add_option("--out", st.out, "write a manifest to this directory");

  std::vector<std::string> reversed(args.rbegin(), args.rend());
  try {
    app.parse(reversed);
  } catch (const CLI::CallForHelp& ex) {
    app.exit(ex, out, err);
    return kOk;
  } catch (const CLI::CallForAllHelp& ex) {
    app.exit(ex, out, err);
    return kOk;
  } catch (const CLI::ParseError& ex) {
    err << ex.what() << "\n\n" << app.help();
    return kUsage;
  }

  try {
    if (g->parsed()) return run_generate(gen, out);
    if (t->parsed()) return run_train(tr, out);
    if (e->parsed()) return run_evaluate(ev, out);
    if (r->parsed()) return run_report(rep, out);
    if (s->parsed()) return run_selftest(st, out);
  } catch (const UsageError& ex) {
    err << "error: " << ex.what() << '\n';
    return kUsage;
  } catch (const DataError& ex) {
    err << "error: " << ex.what() << '\n';
    return kDataError;
  } catch (const std::invalid_argument& ex) {
    err << "error: " << ex.what() << '\n';
    return kDataError;
  } catch (const std::exception& ex) {
    err << "internal error: " << ex.what() << '\n';
    return kInternal;
  }
  return kInternal;
}

int dispatch(int argc, char** argv, std::ostream& out, std::ostream& err) {
  std::vector<std::string> args;
  for (int i = 1; i < argc; ++i) args.emplace_back(argv[i]);
  return dispatch(args, out, err);
}

}  // namespace driftnet::cli
