#include "driftnet/synth.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <random>
#include <stdexcept>

#include <boost/random/exponential_distribution.hpp>
#include <boost/random/normal_distribution.hpp>
#include <boost/random/poisson_distribution.hpp>
#include <boost/random/uniform_01.hpp>
#include <boost/random/uniform_int_distribution.hpp>
#include <boost/random/uniform_real_distribution.hpp>
#include <fmt/format.h>

#include "driftnet/error.hpp"
#include "driftnet/flow_csv.hpp"
#include "driftnet/parallel.hpp"
#include "driftnet/seed.hpp"

namespace driftnet::synth {

namespace {

using Rng = std::mt19937_64;
using nlohmann::json;

constexpr std::uint32_t kMaxPacketsPerDirection = 3000;
constexpr std::uint32_t kFullSegmentPayload = 1448;
constexpr std::uint32_t kTcpHeaderBytes = 54;
constexpr std::uint32_t kUdpHeaderBytes = 42;

double uniform(Rng& rng, double lo, double hi) {
  return boost::random::uniform_real_distribution<double>(lo, hi)(rng);
}

double standard_normal(Rng& rng) { return boost::random::normal_distribution<double>(0.0, 1.0)(rng); }

bool is_tcp(ProtocolClass p) {
  return p == ProtocolClass::kHttp || p == ProtocolClass::kTls || p == ProtocolClass::kOtherTcp;
}

ProtocolClass draw_protocol(Rng& rng) {
  // Rough mix of consumer IoT traffic: mostly TLS, some DNS/NTP housekeeping.
  static constexpr std::array<std::pair<ProtocolClass, double>, 6> kMix = {{
      {ProtocolClass::kTls, 0.40},
      {ProtocolClass::kDns, 0.14},
      {ProtocolClass::kOtherUdp, 0.16},
      {ProtocolClass::kHttp, 0.10},
      {ProtocolClass::kOtherTcp, 0.14},
      {ProtocolClass::kNtp, 0.06},
  }};
  double u = boost::random::uniform_01<double>()(rng);
  for (const auto& [p, w] : kMix) {
    if (u < w) return p;
    u -= w;
  }
  return ProtocolClass::kTls;
}

DirectionShape draw_direction(Rng& rng, ProtocolClass protocol, bool forward) {
  DirectionShape d;
  switch (protocol) {
    case ProtocolClass::kDns:
    case ProtocolClass::kNtp:
      d.log_packets = uniform(rng, std::log(1.0), std::log(4.0));
      d.log_payload = protocol == ProtocolClass::kNtp ? std::log(48.0) + uniform(rng, -0.1, 0.1)
                                                      : uniform(rng, std::log(28.0), std::log(260.0));
      d.empty_fraction = 0.0;
      d.large_fraction = 0.0;
      break;
    case ProtocolClass::kOtherUdp:
      d.log_packets = uniform(rng, std::log(1.0), std::log(80.0));
      d.log_payload = uniform(rng, std::log(20.0), std::log(1000.0));
      d.empty_fraction = 0.0;
      d.large_fraction = uniform(rng, 0.0, 0.1);
      break;
    default:
      d.log_packets = uniform(rng, std::log(3.0), std::log(120.0));
      d.log_payload = uniform(rng, std::log(20.0), std::log(1000.0));
      d.empty_fraction = uniform(rng, 0.05, forward ? 0.6 : 0.4);
      d.large_fraction = uniform(rng, 0.0, 0.35);
      break;
  }
  d.packets_sigma = uniform(rng, 0.1, 0.35);
  d.payload_sigma = uniform(rng, 0.1, 0.35);
  d.log_gap = uniform(rng, std::log(0.002), std::log(8.0));
  return d;
}

std::uint32_t draw_count(Rng& rng, double log_mu, double sigma, std::uint32_t floor) {
  const double x = std::exp(log_mu + sigma * standard_normal(rng));
  const auto n = static_cast<std::uint32_t>(std::min<double>(std::round(x), kMaxPacketsPerDirection));
  return std::max(n, floor);
}

std::vector<PacketObservation> draw_packets(Rng& rng, const DirectionShape& d, ProtocolClass protocol,
                                            std::uint32_t count) {
  std::vector<PacketObservation> packets;
  packets.reserve(count);
  const std::uint32_t header = is_tcp(protocol) ? kTcpHeaderBytes : kUdpHeaderBytes;
  boost::random::exponential_distribution<double> gap(1.0 / std::exp(d.log_gap));
  boost::random::uniform_01<double> u01;
  double t = 0.0;
  for (std::uint32_t i = 0; i < count; ++i) {
    if (i > 0) t += gap(rng);
    std::uint32_t payload = 0;
    const double u = u01(rng);
    if (u < d.empty_fraction) {
      payload = 0;
    } else if (u < d.empty_fraction + d.large_fraction) {
      payload = kFullSegmentPayload;
    } else {
      const double x = std::exp(d.log_payload + d.payload_sigma * standard_normal(rng));
      payload = static_cast<std::uint32_t>(std::clamp(std::round(x), 1.0, double{kFullSegmentPayload}));
    }
    packets.push_back({t, payload + header, payload});
  }
  return packets;
}

// Rounds real statistics to the six decimals the flow CSV carries.
void quantize(ActivityStats& s) {
  for (double* v : {&s.average_interarrival_time, &s.stddev_payload_length, &s.stddev_interarrival_time})
    *v = std::round(*v * 1e6) / 1e6;
}

json event_to_json(const DriftEvent& e) {
  return {{"day", e.day},
          {"affected_classes", e.affected_classes},
          {"magnitude", e.magnitude},
          {"scope", e.scope == DriftScope::kAllHomes ? "all_homes" : "per_home"},
          {"homes", e.homes},
          {"seed", e.seed}};
}

DriftEvent event_from_json(const json& j) {
  DriftEvent e;
  e.day = j.at("day").get<std::uint32_t>();
  e.affected_classes = j.at("affected_classes").get<std::vector<std::string>>();
  e.magnitude = j.at("magnitude").get<double>();
  const auto scope = j.value("scope", std::string("all_homes"));
  if (scope == "all_homes") {
    e.scope = DriftScope::kAllHomes;
  } else if (scope == "per_home") {
    e.scope = DriftScope::kPerHome;
  } else {
    throw DataError("unknown drift scope '" + scope + "'");
  }
  e.homes = j.value("homes", std::vector<std::string>{});
  e.seed = j.value("seed", std::uint64_t{0});
  return e;
}

double location_distance(const FlowArchetype& a, const FlowArchetype& b) {
  double ss = 0.0;
  for (std::size_t i = 0; i < kLocationParams; ++i) {
    const double d = location(a, i) - location(b, i);
    ss += d * d;
  }
  return std::sqrt(ss);
}

// Closest archetype with the same protocol belonging to a different class.
const FlowArchetype* nearest_foreign_archetype(const ProfileSet& profiles, const std::string& own_class,
                                               const FlowArchetype& from) {
  const FlowArchetype* best = nullptr;
  double best_distance = 0.0;
  for (const auto& [name, profile] : profiles) {
    if (name == own_class) continue;
    for (const auto& other : profile.archetypes) {
      if (other.protocol != from.protocol) continue;
      const double d = location_distance(from, other);
      if (!best || d < best_distance) {
        best = &other;
        best_distance = d;
      }
    }
  }
  return best;
}

// Moves `arch` a log-space distance of `magnitude` along the line to `target`,
// stopping at the target. Shape parameters follow by the same fraction.
void step_towards(FlowArchetype& arch, const FlowArchetype& target, double magnitude) {
  const double d = location_distance(arch, target);
  if (d == 0.0) return;
  const double t = std::min(1.0, magnitude / d);
  auto blend = [t](double& x, double y) { x += t * (y - x); };
  for (auto [self, other] : {std::pair{&arch.forward, &target.forward}, std::pair{&arch.reverse, &target.reverse}}) {
    blend(self->log_packets, other->log_packets);
    blend(self->packets_sigma, other->packets_sigma);
    blend(self->log_payload, other->log_payload);
    blend(self->payload_sigma, other->payload_sigma);
    blend(self->empty_fraction, other->empty_fraction);
    blend(self->large_fraction, other->large_fraction);
    blend(self->log_gap, other->log_gap);
  }
}

}  // namespace

double& location(FlowArchetype& a, std::size_t index) {
  switch (index) {
    case 0: return a.forward.log_packets;
    case 1: return a.forward.log_payload;
    case 2: return a.forward.log_gap;
    case 3: return a.reverse.log_packets;
    case 4: return a.reverse.log_payload;
    case 5: return a.reverse.log_gap;
  }
  throw std::out_of_range("location parameter index");
}

double location(const FlowArchetype& a, std::size_t index) {
  return location(const_cast<FlowArchetype&>(a), index);
}

std::vector<ClassSpec> default_class_catalog() {
  return {
      {"google_nest", 1980998},         {"google_chromecast", 916243},
      {"amazon_echo", 632296},          {"amazon_fire_tv_remote", 526872},
      {"atom_camera", 523321},          {"amazon_fire7_tablet", 368749},
      {"switchbot_humidifier", 246439}, {"tp_link_camera", 215201},
      {"qrio_hub", 209668},             {"panasonic_home_unit", 107225},
      {"switchbot_hub", 97608},         {"tp_link_plug", 79001},
      {"switchbot_plug", 71269},        {"irobot_roomba", 61598},
      {"linkjapan_esensor", 54012},     {"meross_plug", 40792},
      {"meross_lightbulb", 36373},      {"tp_link_lightbulb", 30820},
      {"meross_plug_2", 29665},         {"meross_remote", 27224},
      {"meross_humidifier", 25825},     {"withings_sleep_sensor", 15068},
      {"canon_printer", 6718},          {"elecom_scale", 2641},
  };
}

SynthConfig SynthConfig::defaults() {
  SynthConfig c;
  c.classes = default_class_catalog();
  DriftEvent e;
  e.day = static_cast<std::uint32_t>(c.train_days);
  e.magnitude = kDefaultDriftMagnitude;
  e.seed = 1;
  for (std::size_t i = 0; i < c.classes.size(); i += 2) e.affected_classes.push_back(c.classes[i].name);
  c.drift_events.push_back(std::move(e));
  return c;
}

void validate(const SynthConfig& c) {
  if (c.n_homes <= 0) throw std::invalid_argument("n_homes must be positive");
  if (c.n_days <= 0) throw std::invalid_argument("n_days must be positive");
  if (c.train_days < 0 || c.train_days >= c.n_days)
    throw std::invalid_argument("train_days must be in [0, n_days)");
  if (!(c.flows_per_home_day > 0.0)) throw std::invalid_argument("flows_per_home_day must be positive");
  if (!(c.spatial_sigma >= 0.0)) throw std::invalid_argument("spatial_sigma must be non-negative");
  if (c.classes.empty()) throw std::invalid_argument("class catalog is empty");
  std::vector<std::string> names;
  for (const auto& cls : c.classes) {
    if (cls.name.empty() || cls.name.find(',') != std::string::npos)
      throw std::invalid_argument("class names must be non-empty and comma-free");
    if (!(cls.weight > 0.0)) throw std::invalid_argument("class weight must be positive: " + cls.name);
    names.push_back(cls.name);
  }
  std::sort(names.begin(), names.end());
  if (std::adjacent_find(names.begin(), names.end()) != names.end())
    throw std::invalid_argument("duplicate class name");
  std::uint32_t previous = 0;
  for (const auto& e : c.drift_events) {
    if (e.day >= static_cast<std::uint32_t>(c.n_days)) throw std::invalid_argument("drift event outside dataset range");
    if (e.day < previous) throw std::invalid_argument("drift events must be sorted by day");
    if (!(e.magnitude > 0.0)) throw std::invalid_argument("drift magnitude must be positive");
    for (const auto& cls : e.affected_classes) {
      if (!std::binary_search(names.begin(), names.end(), cls))
        throw std::invalid_argument("drift event names unknown class " + cls);
    }
    previous = e.day;
  }
}

json to_json(const SynthConfig& c) {
  json classes = json::array();
  for (const auto& cls : c.classes) classes.push_back({{"name", cls.name}, {"weight", cls.weight}});
  json events = json::array();
  for (const auto& e : c.drift_events) events.push_back(event_to_json(e));
  return {{"format_version", kConfigFormatVersion},
          {"n_homes", c.n_homes},
          {"n_days", c.n_days},
          {"train_days", c.train_days},
          {"flows_per_home_day", c.flows_per_home_day},
          {"spatial_sigma", c.spatial_sigma},
          {"master_seed", c.master_seed},
          {"classes", std::move(classes)},
          {"drift_events", std::move(events)}};
}

SynthConfig config_from_json(const json& j) {
  SynthConfig c = SynthConfig::defaults();
  try {
    if (j.contains("format_version") && j.at("format_version").get<int>() != kConfigFormatVersion)
      throw DataError("unsupported config format_version");
    c.n_homes = j.value("n_homes", c.n_homes);
    c.n_days = j.value("n_days", c.n_days);
    const bool explicit_train_days = j.contains("train_days");
    c.train_days = j.value("train_days", c.train_days);
    c.flows_per_home_day = j.value("flows_per_home_day", c.flows_per_home_day);
    c.spatial_sigma = j.value("spatial_sigma", c.spatial_sigma);
    c.master_seed = j.value("master_seed", c.master_seed);
    if (j.contains("classes")) {
      c.classes.clear();
      for (const auto& cls : j.at("classes")) {
        if (cls.is_string()) {
          c.classes.push_back({cls.get<std::string>(), 1.0});
        } else {
          c.classes.push_back({cls.at("name").get<std::string>(), cls.value("weight", 1.0)});
        }
      }
    }
    if (j.contains("drift_events")) {
      c.drift_events.clear();
      for (const auto& e : j.at("drift_events")) c.drift_events.push_back(event_from_json(e));
    } else if (j.contains("classes") || explicit_train_days || j.contains("n_days")) {
      // The default event names default classes at the default day; keep it only
      // when it still fits the overridden catalog and range.
      auto& e = c.drift_events.front();
      e.day = static_cast<std::uint32_t>(c.train_days);
      std::vector<std::string> kept;
      for (const auto& cls : e.affected_classes) {
        if (std::any_of(c.classes.begin(), c.classes.end(), [&](const ClassSpec& s) { return s.name == cls; }))
          kept.push_back(cls);
      }
      e.affected_classes = std::move(kept);
      if (e.affected_classes.empty() || e.day >= static_cast<std::uint32_t>(c.n_days)) c.drift_events.clear();
    }
  } catch (const json::exception& e) {
    throw DataError(std::string("malformed synth config: ") + e.what());
  }
  validate(c);
  return c;
}

SynthConfig load_config(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open config: " + path.string());
  json j;
  try {
    in >> j;
  } catch (const json::exception& e) {
    throw DataError(path.string() + ": " + e.what());
  }
  try {
    return config_from_json(j);
  } catch (const std::invalid_argument& e) {
    throw DataError(path.string() + ": " + e.what());
  }
}

std::uint64_t config_hash(const SynthConfig& c) { return fnv1a64(to_json(c).dump()); }

std::vector<std::string> home_ids(const SynthConfig& c) {
  std::vector<std::string> ids;
  for (int h = 1; h <= c.n_homes; ++h) ids.push_back(fmt::format("h{:02d}", h));
  return ids;
}

ProfileSet build_profiles(const SynthConfig& c) {
  double total_weight = 0.0;
  for (const auto& cls : c.classes) total_weight += cls.weight;
  ProfileSet profiles;
  for (const auto& cls : c.classes) {
    Rng rng(derive_seed(c.master_seed, "profile", cls.name));
    DeviceProfile p;
    p.device_class = cls.name;
    p.daily_flow_rate = c.flows_per_home_day * cls.weight / total_weight;
    const int n_archetypes = boost::random::uniform_int_distribution<int>(1, 3)(rng);
    double weight_sum = 0.0;
    for (int a = 0; a < n_archetypes; ++a) {
      FlowArchetype arch;
      arch.weight = uniform(rng, 0.2, 1.0);
      arch.protocol = draw_protocol(rng);
      arch.forward = draw_direction(rng, arch.protocol, true);
      arch.reverse = draw_direction(rng, arch.protocol, false);
      weight_sum += arch.weight;
      p.archetypes.push_back(arch);
    }
    for (auto& arch : p.archetypes) arch.weight /= weight_sum;
    profiles.emplace(cls.name, std::move(p));
  }
  return profiles;
}

ContextModifier draw_context_modifier(const ProfileSet& profiles, const std::string& home_id,
                                      double spatial_sigma, std::uint64_t seed) {
  ContextModifier m;
  m.home_id = home_id;
  for (const auto& [name, profile] : profiles) {
    Rng rng(derive_seed(seed, "context", home_id, name));
    std::array<double, kLocationParams> factors;
    for (auto& f : factors) f = std::exp(spatial_sigma * standard_normal(rng));
    m.scaling.emplace(name, factors);
  }
  return m;
}

ProfileSet apply_context_modifier(const ProfileSet& profiles, const ContextModifier& modifier) {
  ProfileSet out = profiles;
  for (auto& [name, profile] : out) {
    auto it = modifier.scaling.find(name);
    if (it == modifier.scaling.end()) continue;
    for (auto& arch : profile.archetypes) {
      for (std::size_t i = 0; i < kLocationParams; ++i) {
        // Identity factors must leave the profile bit-identical.
        if (it->second[i] != 1.0) location(arch, i) += std::log(it->second[i]);
      }
    }
  }
  return out;
}

ProfileSet apply_spatial_context(const ProfileSet& profiles, const std::string& home_id,
                                 double spatial_sigma, std::uint64_t seed) {
  if (spatial_sigma == 0.0) return profiles;
  return apply_context_modifier(profiles, draw_context_modifier(profiles, home_id, spatial_sigma, seed));
}

ProfileSet apply_temporal_drift(const ProfileSet& profiles, std::span<const DriftEvent> events,
                                std::uint32_t day, const std::string& home_id) {
  ProfileSet out = profiles;
  for (const auto& e : events) {
    if (e.day > day) break;
    if (e.scope == DriftScope::kPerHome &&
        std::find(e.homes.begin(), e.homes.end(), home_id) == e.homes.end())
      continue;
    // Targets are looked up in the state before this event.
    const ProfileSet before = out;
    for (const auto& cls : e.affected_classes) {
      auto it = out.find(cls);
      if (it == out.end()) continue;
      for (std::size_t a = 0; a < it->second.archetypes.size(); ++a) {
        auto& arch = it->second.archetypes[a];
        if (const auto* target = nearest_foreign_archetype(before, cls, arch)) {
          step_towards(arch, *target, e.magnitude);
        } else {
          const auto base = derive_seed(e.seed, "drift", cls, static_cast<std::uint64_t>(a));
          const double per_param = e.magnitude / std::sqrt(double{kLocationParams});
          for (std::size_t i = 0; i < kLocationParams; ++i) {
            const bool up = (derive_seed(base, static_cast<std::uint64_t>(i)) >> 63) != 0;
            location(arch, i) += up ? per_param : -per_param;
          }
        }
      }
    }
  }
  return out;
}

std::vector<FlowRecord> generate_day(const ProfileSet& profiles, const std::string& home_id,
                                     std::uint32_t day, std::uint64_t seed) {
  std::vector<FlowRecord> records;
  boost::random::uniform_01<double> u01;
  for (const auto& [name, profile] : profiles) {
    Rng rng(derive_seed(seed, home_id, static_cast<std::uint64_t>(day), name));
    const auto n = profile.daily_flow_rate > 0.0
                       ? boost::random::poisson_distribution<int, double>(profile.daily_flow_rate)(rng)
                       : 0;
    for (int f = 0; f < n; ++f) {
      double u = u01(rng);
      const FlowArchetype* arch = &profile.archetypes.back();
      for (const auto& a : profile.archetypes) {
        if (u < a.weight) {
          arch = &a;
          break;
        }
        u -= a.weight;
      }
      FlowRecord r;
      r.home_id = home_id;
      r.device_class = name;
      r.day_index = day;
      r.timestamp = (static_cast<double>(day) + u01(rng)) * kSecondsPerDay;
      // Rounded to the CSV precision so records survive a file round trip unchanged.
      r.timestamp = std::round(r.timestamp * 1e6) / 1e6;
      if (static_cast<std::uint32_t>(std::floor(r.timestamp / kSecondsPerDay)) != day)
        r.timestamp = ((static_cast<double>(day) + 1.0) * kSecondsPerDay * 1e6 - 1.0) / 1e6;
      r.protocol = arch->protocol;
      const auto n_fwd = draw_count(rng, arch->forward.log_packets, arch->forward.packets_sigma, 1);
      const auto n_rev = draw_count(rng, arch->reverse.log_packets, arch->reverse.packets_sigma, 0);
      r.forward = aggregate_packets(draw_packets(rng, arch->forward, arch->protocol, n_fwd));
      r.reverse = aggregate_packets(draw_packets(rng, arch->reverse, arch->protocol, n_rev));
      quantize(r.forward);
      quantize(r.reverse);
      records.push_back(std::move(r));
    }
  }
  std::stable_sort(records.begin(), records.end(),
                   [](const FlowRecord& a, const FlowRecord& b) { return a.timestamp < b.timestamp; });
  return records;
}

std::vector<FlowRecord> generate_home(const SynthConfig& c, const ProfileSet& base, const std::string& home_id) {
  const auto contextual = apply_spatial_context(base, home_id, c.spatial_sigma, c.master_seed);
  const auto flow_seed = derive_seed(c.master_seed, "flows");
  std::vector<std::vector<FlowRecord>> days(static_cast<std::size_t>(c.n_days));
  parallel_for(days.size(), [&](std::size_t d) {
    const auto day = static_cast<std::uint32_t>(d);
    days[d] = generate_day(apply_temporal_drift(contextual, c.drift_events, day, home_id), home_id, day, flow_seed);
  });
  std::vector<FlowRecord> all;
  for (auto& d : days) all.insert(all.end(), std::make_move_iterator(d.begin()), std::make_move_iterator(d.end()));
  return all;
}

json dataset_manifest(const SynthConfig& c) {
  return {{"format_version", kConfigFormatVersion},
          {"kind", "driftnet-dataset"},
          {"flow_csv_columns", kFlowCsvColumns},
          {"master_seed", c.master_seed},
          {"config_hash", fmt::format("{:016x}", config_hash(c))},
          {"homes", home_ids(c)},
          {"config", to_json(c)}};
}

std::vector<std::filesystem::path> generate_dataset(const SynthConfig& c, const std::filesystem::path& out_dir) {
  validate(c);
  std::error_code ec;
  std::filesystem::create_directories(out_dir, ec);
  if (ec) throw IoError("cannot create directory " + out_dir.string() + ": " + ec.message());
  const auto base = build_profiles(c);
  const auto homes = home_ids(c);
  std::vector<std::filesystem::path> written;
  for (const auto& h : homes) {
    auto path = out_dir / (h + ".csv");
    write_flow_csv(path, generate_home(c, base, h));
    written.push_back(path);
  }
  const json manifest = dataset_manifest(c);
  auto manifest_path = out_dir / "manifest.json";
  std::ofstream out(manifest_path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot open for writing: " + manifest_path.string());
  out << manifest.dump(2) << '\n';
  if (!out) throw IoError("write failed: " + manifest_path.string());
  written.push_back(manifest_path);
  return written;
}

}  // namespace driftnet::synth
