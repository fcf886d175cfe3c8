#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <map>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include <json.hpp>

#include "driftnet/flow.hpp"

namespace driftnet::synth {

inline constexpr int kConfigFormatVersion = 1;

/// Distribution of one flow direction. Locations are natural logs.
struct DirectionShape {
  double log_packets = 0.0;  // packet count ~ round(LogNormal(log_packets, packets_sigma))
  double packets_sigma = 0.0;
  double log_payload = 0.0;  // non-empty, non-full payload bytes ~ LogNormal(log_payload, payload_sigma)
  double payload_sigma = 0.0;
  double empty_fraction = 0.0;  // share of zero-payload packets
  double large_fraction = 0.0;  // share of full-segment packets
  double log_gap = 0.0;         // log of the mean exponential inter-arrival time (s)

  bool operator==(const DirectionShape&) const = default;
};

struct FlowArchetype {
  double weight = 1.0;
  ProtocolClass protocol = ProtocolClass::kTls;
  DirectionShape forward;
  DirectionShape reverse;

  bool operator==(const FlowArchetype&) const = default;
};

// Location parameters that spatial context and temporal drift act on:
// forward packets/payload/gap, then reverse packets/payload/gap.
inline constexpr std::size_t kLocationParams = 6;
double& location(FlowArchetype& a, std::size_t index);
double location(const FlowArchetype& a, std::size_t index);

struct DeviceProfile {
  std::string device_class;
  std::vector<FlowArchetype> archetypes;  // weights sum to 1
  double daily_flow_rate = 0.0;           // Poisson mean, flows per home per day

  bool operator==(const DeviceProfile&) const = default;
};

using ProfileSet = std::map<std::string, DeviceProfile>;

/// Per-home multiplicative factors on each class's location parameters.
/// Multiplying a log-normal median by the factor adds log(factor) to the location.
struct ContextModifier {
  std::string home_id;
  std::map<std::string, std::array<double, kLocationParams>> scaling;
};

enum class DriftScope { kAllHomes, kPerHome };

/// Step change from `day` onward. Each archetype of an affected class moves a
/// log-space distance of `magnitude` toward the nearest same-protocol archetype of
/// another class (shape parameters follow by the same fraction), so drifted traffic
/// starts to resemble a different device. Without such a neighbour every location
/// parameter shifts by +/- magnitude/sqrt(6) with signs drawn from `seed`.
/// ALL_HOMES applies to every home, PER_HOME only to the listed `homes`.
struct DriftEvent {
  std::uint32_t day = 0;
  std::vector<std::string> affected_classes;
  double magnitude = 0.0;
  DriftScope scope = DriftScope::kAllHomes;
  std::vector<std::string> homes;
  std::uint64_t seed = 0;

  bool operator==(const DriftEvent&) const = default;
};

struct ClassSpec {
  std::string name;
  double weight = 1.0;  // relative flow volume

  bool operator==(const ClassSpec&) const = default;
};

struct SynthConfig {
  int n_homes = 12;
  int n_days = 47;
  int train_days = 30;
  double flows_per_home_day = 180.0;  // summed over classes
  double spatial_sigma = 0.15;
  std::uint64_t master_seed = 20221;
  std::vector<ClassSpec> classes;
  std::vector<DriftEvent> drift_events;

  // 12 homes, 47 days, the 24-class catalog with its record-count weights and
  // one drift event on every other class at the start of the test period.
  static SynthConfig defaults();
  bool operator==(const SynthConfig&) const = default;
};

// The 24 device types with their record counts, heaviest first.
std::vector<ClassSpec> default_class_catalog();

// Drift magnitude used by the default config.
inline constexpr double kDefaultDriftMagnitude = 1.2;

// Throws std::invalid_argument on inconsistent fields.
void validate(const SynthConfig& config);

nlohmann::json to_json(const SynthConfig& config);
SynthConfig config_from_json(const nlohmann::json& j);  // missing keys keep defaults
SynthConfig load_config(const std::filesystem::path& path);

// FNV-1a 64 over the canonical JSON dump.
std::uint64_t config_hash(const SynthConfig& config);

// "h01", "h02", ...
std::vector<std::string> home_ids(const SynthConfig& config);

ProfileSet build_profiles(const SynthConfig& config);

ContextModifier draw_context_modifier(const ProfileSet& profiles, const std::string& home_id,
                                      double spatial_sigma, std::uint64_t seed);
ProfileSet apply_context_modifier(const ProfileSet& profiles, const ContextModifier& modifier);
ProfileSet apply_spatial_context(const ProfileSet& profiles, const std::string& home_id,
                                 double spatial_sigma, std::uint64_t seed);

// Applies every event with event.day <= day, in order.
ProfileSet apply_temporal_drift(const ProfileSet& profiles, std::span<const DriftEvent> events,
                                std::uint32_t day, const std::string& home_id);

// Records of one home-day, sorted by timestamp. Deterministic in (seed, home_id, day).
std::vector<FlowRecord> generate_day(const ProfileSet& profiles, const std::string& home_id,
                                     std::uint32_t day, std::uint64_t seed);

// All days of one home under `config`, with spatial context and drift applied.
std::vector<FlowRecord> generate_home(const SynthConfig& config, const ProfileSet& base,
                                      const std::string& home_id);

// Contents of manifest.json: config echo, hash, seed and format versions.
nlohmann::json dataset_manifest(const SynthConfig& config);

/// Writes <home>.csv per home plus manifest.json. Returns the written paths.
std::vector<std::filesystem::path> generate_dataset(const SynthConfig& config,
                                                    const std::filesystem::path& out_dir);

}  // namespace driftnet::synth
