#pragma once

#include <array>
#include <cstddef>
#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <string_view>

namespace driftnet {

inline constexpr std::size_t kStatsPerDirection = 11;
inline constexpr std::size_t kProtocolCount = 6;
inline constexpr std::size_t kFeatureCount = 2 * kStatsPerDirection + kProtocolCount;  // 28
inline constexpr double kSecondsPerDay = 86400.0;

// Payload thresholds for the small/large packet counters.
inline constexpr std::uint64_t kSmallPayloadBelow = 60;
inline constexpr std::uint64_t kLargePayloadFrom = 220;

/// Per-direction activity counters of a bidirectional flow record.
/// Field order is the feature order used by featurize().
struct ActivityStats {
  std::uint64_t packet_total_count = 0;
  std::uint64_t octet_total_count = 0;
  std::uint64_t small_packet_count = 0;
  std::uint64_t large_packet_count = 0;
  std::uint64_t non_empty_packet_count = 0;
  std::uint64_t data_byte_count = 0;
  double average_interarrival_time = 0.0;
  std::uint64_t first_non_empty_packet_size = 0;
  std::uint64_t max_packet_size = 0;
  double stddev_payload_length = 0.0;
  double stddev_interarrival_time = 0.0;

  bool operator==(const ActivityStats&) const = default;
};

// Empty string when every invariant holds, otherwise a description of the first violation.
std::string check_invariants(const ActivityStats& s);

enum class ProtocolClass : std::uint8_t { kHttp = 0, kTls, kDns, kNtp, kOtherTcp, kOtherUdp };

std::string_view protocol_token(ProtocolClass p);
std::optional<ProtocolClass> protocol_from_token(std::string_view token);

struct FlowRecord {
  std::string home_id;
  std::optional<std::string> device_class;  // absent for unlabeled traffic
  std::uint32_t day_index = 0;
  double timestamp = 0.0;  // seconds since dataset start
  ProtocolClass protocol = ProtocolClass::kOtherTcp;
  ActivityStats forward;
  ActivityStats reverse;

  bool operator==(const FlowRecord&) const = default;
};

std::string check_invariants(const FlowRecord& r);

using FeatureVector = std::array<double, kFeatureCount>;

struct PacketObservation {
  double arrival_time = 0.0;  // seconds
  std::uint32_t wire_bytes = 0;
  std::uint32_t payload_bytes = 0;
};

/// Folds an arrival-ordered packet list into the per-direction counters.
/// Payload statistics cover every packet including zero-payload ones; only
/// first_non_empty_packet_size skips empties. Standard deviations are population
/// deviations, and inter-arrival statistics are 0 with fewer than two packets.
/// Throws std::invalid_argument on unsorted input or payload larger than the wire size.
ActivityStats aggregate_packets(std::span<const PacketObservation> packets);

/// Port heuristic: TCP/80 HTTP, TCP/443 TLS, */53 DNS, UDP/123 NTP, else OTHER_TCP/OTHER_UDP.
ProtocolClass classify_protocol(int ip_protocol, int dst_port);

FeatureVector featurize(const FlowRecord& record);

}  // namespace driftnet
