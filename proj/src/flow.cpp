#include "driftnet/flow.hpp"

#include <cmath>
#include <stdexcept>
#include <vector>

namespace driftnet {

namespace {

constexpr std::array<std::string_view, kProtocolCount> kProtocolTokens = {
    "HTTP", "TLS", "DNS", "NTP", "OTHER_TCP", "OTHER_UDP"};

// Population standard deviation, two-pass.
double population_stddev(const std::vector<double>& xs) {
  if (xs.size() < 2) return 0.0;
  double mean = 0.0;
  for (double x : xs) mean += x;
  mean /= static_cast<double>(xs.size());
  double ss = 0.0;
  for (double x : xs) ss += (x - mean) * (x - mean);
  return std::sqrt(ss / static_cast<double>(xs.size()));
}

void append_stats(FeatureVector& fv, std::size_t offset, const ActivityStats& s) {
  fv[offset + 0] = static_cast<double>(s.packet_total_count);
  fv[offset + 1] = static_cast<double>(s.octet_total_count);
  fv[offset + 2] = static_cast<double>(s.small_packet_count);
  fv[offset + 3] = static_cast<double>(s.large_packet_count);
  fv[offset + 4] = static_cast<double>(s.non_empty_packet_count);
  fv[offset + 5] = static_cast<double>(s.data_byte_count);
  fv[offset + 6] = s.average_interarrival_time;
  fv[offset + 7] = static_cast<double>(s.first_non_empty_packet_size);
  fv[offset + 8] = static_cast<double>(s.max_packet_size);
  fv[offset + 9] = s.stddev_payload_length;
  fv[offset + 10] = s.stddev_interarrival_time;
}

}  // namespace

std::string_view protocol_token(ProtocolClass p) {
  return kProtocolTokens[static_cast<std::size_t>(p)];
}

std::optional<ProtocolClass> protocol_from_token(std::string_view token) {
  for (std::size_t i = 0; i < kProtocolTokens.size(); ++i) {
    if (kProtocolTokens[i] == token) return static_cast<ProtocolClass>(i);
  }
  return std::nullopt;
}

std::string check_invariants(const ActivityStats& s) {
  if (s.small_packet_count + s.large_packet_count > s.packet_total_count)
    return "small + large packet count exceeds packet total";
  if (s.non_empty_packet_count > s.packet_total_count)
    return "non-empty packet count exceeds packet total";
  if (s.data_byte_count > s.octet_total_count) return "data bytes exceed octet total";
  if (s.first_non_empty_packet_size > s.max_packet_size)
    return "first non-empty size exceeds max payload";
  for (double v : {s.average_interarrival_time, s.stddev_payload_length, s.stddev_interarrival_time}) {
    if (!std::isfinite(v) || v < 0.0) return "negative or non-finite real statistic";
  }
  if (s.packet_total_count == 0 && !(s == ActivityStats{}))
    return "empty direction with non-zero statistics";
  return {};
}

std::string check_invariants(const FlowRecord& r) {
  if (!std::isfinite(r.timestamp) || r.timestamp < 0.0) return "negative or non-finite timestamp";
  if (r.day_index != static_cast<std::uint32_t>(std::floor(r.timestamp / kSecondsPerDay)))
    return "day_index does not match timestamp";
  if (auto e = check_invariants(r.forward); !e.empty()) return "forward: " + e;
  if (auto e = check_invariants(r.reverse); !e.empty()) return "reverse: " + e;
  return {};
}

ActivityStats aggregate_packets(std::span<const PacketObservation> packets) {
  ActivityStats s;
  if (packets.empty()) return s;

  std::vector<double> payloads;
  std::vector<double> gaps;
  payloads.reserve(packets.size());
  gaps.reserve(packets.size());
  bool seen_non_empty = false;
  for (std::size_t i = 0; i < packets.size(); ++i) {
    const auto& p = packets[i];
    if (p.payload_bytes > p.wire_bytes)
      throw std::invalid_argument("packet payload exceeds wire size");
    if (!(p.arrival_time >= 0.0)) throw std::invalid_argument("negative packet arrival time");
    if (i > 0) {
      if (p.arrival_time < packets[i - 1].arrival_time)
        throw std::invalid_argument("packets not sorted by arrival time");
      gaps.push_back(p.arrival_time - packets[i - 1].arrival_time);
    }
    ++s.packet_total_count;
    s.octet_total_count += p.wire_bytes;
    s.data_byte_count += p.payload_bytes;
    if (p.payload_bytes < kSmallPayloadBelow) ++s.small_packet_count;
    if (p.payload_bytes >= kLargePayloadFrom) ++s.large_packet_count;
    if (p.payload_bytes > 0) {
      ++s.non_empty_packet_count;
      if (!seen_non_empty) {
        s.first_non_empty_packet_size = p.payload_bytes;
        seen_non_empty = true;
      }
    }
    if (p.payload_bytes > s.max_packet_size) s.max_packet_size = p.payload_bytes;
    payloads.push_back(static_cast<double>(p.payload_bytes));
  }

  if (!gaps.empty()) {
    double total = 0.0;
    for (double g : gaps) total += g;
    s.average_interarrival_time = total / static_cast<double>(gaps.size());
    s.stddev_interarrival_time = population_stddev(gaps);
  }
  s.stddev_payload_length = population_stddev(payloads);
  return s;
}

ProtocolClass classify_protocol(int ip_protocol, int dst_port) {
  if (dst_port < 0 || dst_port > 65535) throw std::invalid_argument("destination port out of range");
  if (ip_protocol == 6) {
    if (dst_port == 80) return ProtocolClass::kHttp;
    if (dst_port == 443) return ProtocolClass::kTls;
    if (dst_port == 53) return ProtocolClass::kDns;
    return ProtocolClass::kOtherTcp;
  }
  if (ip_protocol == 17) {
    if (dst_port == 53) return ProtocolClass::kDns;
    if (dst_port == 123) return ProtocolClass::kNtp;
    return ProtocolClass::kOtherUdp;
  }
  throw std::invalid_argument("ip protocol must be 6 (TCP) or 17 (UDP), got " +
                              std::to_string(ip_protocol));
}

FeatureVector featurize(const FlowRecord& record) {
  FeatureVector fv{};
  append_stats(fv, 0, record.forward);
  append_stats(fv, kStatsPerDirection, record.reverse);
  fv[2 * kStatsPerDirection + static_cast<std::size_t>(record.protocol)] = 1.0;
  return fv;
}

}  // namespace driftnet
