#include "driftnet/selftest.hpp"

#include <cmath>
#include <random>

#include <boost/random/uniform_int_distribution.hpp>
#include <boost/random/uniform_real_distribution.hpp>
#include <fmt/format.h>

#include "driftnet/error.hpp"
#include "driftnet/flow.hpp"
#include "driftnet/flow_csv.hpp"
#include "driftnet/forest.hpp"
#include "driftnet/model_io.hpp"
#include "driftnet/strategies.hpp"

namespace driftnet {

namespace {

using Rng = std::mt19937_64;

std::vector<PacketObservation> random_packets(Rng& rng) {
  boost::random::uniform_int_distribution<int> count(0, 40);
  boost::random::uniform_int_distribution<std::uint32_t> wire(40, 1500);
  boost::random::uniform_real_distribution<double> gap(0.0, 2.0);
  std::vector<PacketObservation> out(static_cast<std::size_t>(count(rng)));
  double t = 0.0;
  for (auto& p : out) {
    t += gap(rng);
    p.arrival_time = t;
    p.wire_bytes = wire(rng);
    boost::random::uniform_int_distribution<std::uint32_t> payload(0, p.wire_bytes - 40);
    p.payload_bytes = payload(rng) < 60 ? 0 : payload(rng);
  }
  return out;
}

// Variance as the mean of squared pairwise differences halved.
double pairwise_std(const std::vector<double>& x) {
  if (x.empty()) return 0.0;
  double s = 0.0;
  for (double a : x) {
    for (double b : x) s += (a - b) * (a - b);
  }
  return std::sqrt(s / (2.0 * static_cast<double>(x.size() * x.size())));
}

bool close(double a, double b) { return std::abs(a - b) <= 1e-9 * std::max(1.0, std::abs(b)); }

std::string check_featurizer() {
  Rng rng(11);
  for (int trial = 0; trial < 200; ++trial) {
    const auto packets = random_packets(rng);
    const auto s = aggregate_packets(packets);
    std::uint64_t octets = 0, data = 0, small = 0, large = 0, non_empty = 0, first = 0, max_size = 0;
    std::vector<double> payloads, gaps;
    for (std::size_t i = 0; i < packets.size(); ++i) {
      const auto& p = packets[i];
      octets += p.wire_bytes;
      data += p.payload_bytes;
      small += p.payload_bytes < kSmallPayloadBelow;
      large += p.payload_bytes >= kLargePayloadFrom;
      if (p.payload_bytes > 0) {
        ++non_empty;
        if (first == 0) first = p.payload_bytes;
      }
      max_size = std::max<std::uint64_t>(max_size, p.payload_bytes);
      payloads.push_back(p.payload_bytes);
      if (i > 0) gaps.push_back(p.arrival_time - packets[i - 1].arrival_time);
    }
    double mean_gap = 0.0;
    for (double g : gaps) mean_gap += g / static_cast<double>(gaps.size());
    const bool ok = s.packet_total_count == packets.size() && s.octet_total_count == octets &&
                    s.data_byte_count == data && s.small_packet_count == small && s.large_packet_count == large &&
                    s.non_empty_packet_count == non_empty && s.first_non_empty_packet_size == first &&
                    s.max_packet_size == max_size && close(s.average_interarrival_time, mean_gap) &&
                    close(s.stddev_payload_length, pairwise_std(payloads)) &&
                    close(s.stddev_interarrival_time, gaps.size() < 1 ? 0.0 : pairwise_std(gaps));
    if (!ok) return fmt::format("aggregate mismatch on sequence {} ({} packets)", trial, packets.size());
  }
  return {};
}

std::vector<Sample> separable(std::size_t n, std::uint64_t seed) {
  Rng rng(seed);
  boost::random::uniform_real_distribution<double> u(0.0, 1.0);
  std::vector<Sample> out;
  for (std::size_t i = 0; i < n; ++i) {
    Sample s;
    s.features.fill(0.0);
    const bool a = i % 2 == 0;
    s.features[0] = a ? u(rng) : 2.0 + u(rng);
    for (std::size_t f = 1; f < kFeatureCount; ++f) s.features[f] = u(rng);
    s.label = a ? "a" : "b";
    out.push_back(s);
  }
  return out;
}

ForestParams small_forest() {
  ForestParams p;
  p.n_trees = 15;
  return p;
}

std::string check_forest_determinism() {
  const auto data = separable(200, 3);
  const auto a = save_model(train_forest(data, small_forest(), 42));
  const auto b = save_model(train_forest(data, small_forest(), 42));
  return a == b ? std::string{} : "two trainings with one seed differ";
}

std::string check_forest_separable() {
  const auto model = train_forest(separable(200, 5), small_forest(), 1);
  std::size_t correct = 0;
  const auto test = separable(200, 6);
  for (const auto& s : test) correct += predict_top(model, s.features).class_label == s.label;
  const double acc = static_cast<double>(correct) / static_cast<double>(test.size());
  return acc >= 0.95 ? std::string{} : fmt::format("held-out accuracy {:.3f}", acc);
}

std::string check_model_checksum() {
  auto text = save_model(train_forest(separable(50, 2), small_forest(), 9));
  text[text.size() / 2] = text[text.size() / 2] == '1' ? '2' : '1';
  try {
    load_model(text);
  } catch (const FormatError&) {
    return {};
  }
  return "corrupted model loaded without error";
}

std::string check_csv_round_trip() {
  Rng rng(17);
  for (int i = 0; i < 200; ++i) {
    FlowRecord r;
    r.home_id = "h01";
    r.device_class = i % 3 ? std::optional<std::string>("cam") : std::nullopt;
    r.day_index = static_cast<std::uint32_t>(i % 47);
    r.timestamp = r.day_index * kSecondsPerDay + 0.5;
    r.protocol = static_cast<ProtocolClass>(i % 6);
    auto packets = random_packets(rng);
    r.forward = aggregate_packets(packets);
    // Round to the CSV precision first; the format carries six decimals.
    for (double* v : {&r.forward.average_interarrival_time, &r.forward.stddev_payload_length,
                      &r.forward.stddev_interarrival_time}) {
      *v = std::stod(fmt::format("{:.6f}", *v));
    }
    if (parse_flow_row(serialize_flow_row(r)) != r) return fmt::format("row {} changed in a round trip", i);
  }
  return {};
}

std::string check_selector() {
  ModelPool pool;
  const auto data = separable(60, 4);
  auto m = compute_class_thresholds(train_forest(data, small_forest(), 1), data);
  for (const char* h : {"h02", "h01"}) {
    m.context_id = h;
    pool.context_models.emplace(h, m);
    pool.seen_homes.insert(h);
  }
  m.context_id = kGlobalContext;
  pool.global_model = m;
  std::vector<FlowRecord> flows;
  // Every candidate is identical, so the tie-break decides.
  FlowRecord r;
  r.device_class = "a";
  flows.push_back(r);
  if (select_best_static(pool, true, flows) != kGlobalContext) return "tie did not go to global";
  if (select_best_static(pool, false, flows) != "h01") return "tie did not go to the first context id";
  if (argmax_accuracy({0.6, 0.9}) != 1) return "argmax picked the lower accuracy";
  return {};
}

std::string check_histogram_metric() {
  Rng rng(23);
  boost::random::uniform_real_distribution<double> u(0.0, 1.0);
  auto draw = [&] {
    std::vector<double> v(8);
    double s = 0.0;
    for (auto& x : v) s += (x = u(rng));
    for (auto& x : v) x /= s;
    return v;
  };
  for (int i = 0; i < 500; ++i) {
    const auto p = draw(), q = draw(), w = draw();
    const double pq = histogram_distance(p, q);
    if (histogram_distance(p, p) != 0.0) return "d(p, p) != 0";
    if (pq != histogram_distance(q, p)) return "asymmetric distance";
    if (pq > histogram_distance(p, w) + histogram_distance(w, q) + 1e-12) return "triangle inequality violated";
    if (pq < 0.0 || pq > 1.0) return "distance outside [0, 1]";
  }
  return {};
}

}  // namespace

const std::vector<SelfCheck>& self_checks() {
  static const std::vector<SelfCheck> checks = {
      {"featurizer_oracle", "packet aggregation against a brute-force recomputation", check_featurizer},
      {"flow_csv_round_trip", "flow rows survive serialize and parse", check_csv_round_trip},
      {"forest_determinism", "one seed gives byte-identical models", check_forest_determinism},
      {"forest_separable", "held-out accuracy on a separable two-class set", check_forest_separable},
      {"model_checksum", "a corrupted model file is rejected", check_model_checksum},
      {"selector_argmax", "static selection argmax and tie-break order", check_selector},
      {"histogram_metric", "total variation distance metric axioms", check_histogram_metric},
  };
  return checks;
}

}  // namespace driftnet
