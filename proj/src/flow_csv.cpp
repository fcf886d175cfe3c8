#include "driftnet/flow_csv.hpp"

#include <charconv>
#include <cmath>
#include <fstream>
#include <limits>

#include <fmt/format.h>

#include "driftnet/error.hpp"

namespace driftnet {

namespace {

constexpr std::array<std::string_view, kStatsPerDirection> kStatColumns = {
    "pkts",     "octets",   "small",     "large",       "nonempty",  "data_bytes",
    "iat_mean", "first_ne", "max_payload", "payload_std", "iat_std"};

std::string build_header() {
  std::string h = "home_id,device_class,day_index,timestamp,protocol";
  for (auto prefix : {"fwd_", "rev_"}) {
    for (auto col : kStatColumns) {
      h += ',';
      h += prefix;
      h += col;
    }
  }
  return h;
}

void append_stats(std::string& out, const ActivityStats& s) {
  fmt::format_to(std::back_inserter(out), ",{},{},{},{},{},{},{:.6f},{},{},{:.6f},{:.6f}",
                 s.packet_total_count, s.octet_total_count, s.small_packet_count,
                 s.large_packet_count, s.non_empty_packet_count, s.data_byte_count,
                 s.average_interarrival_time, s.first_non_empty_packet_size, s.max_packet_size,
                 s.stddev_payload_length, s.stddev_interarrival_time);
}

std::vector<std::string_view> split_fields(std::string_view row) {
  std::vector<std::string_view> fields;
  std::size_t start = 0;
  while (true) {
    auto comma = row.find(',', start);
    if (comma == std::string_view::npos) {
      fields.push_back(row.substr(start));
      break;
    }
    fields.push_back(row.substr(start, comma - start));
    start = comma + 1;
  }
  return fields;
}

class FieldReader {
 public:
  FieldReader(const std::vector<std::string_view>& fields, std::size_t line)
      : fields_(fields), line_(line) {}

  std::uint64_t integer(std::size_t i) const {
    std::uint64_t v = 0;
    auto f = fields_[i];
    auto [ptr, ec] = std::from_chars(f.data(), f.data() + f.size(), v);
    if (f.empty() || ec != std::errc{} || ptr != f.data() + f.size())
      throw ParseError(fmt::format("non-numeric field in column {}: '{}'", i + 1, f), line_);
    return v;
  }

  double real(std::size_t i) const {
    double v = 0;
    auto f = fields_[i];
    auto [ptr, ec] = std::from_chars(f.data(), f.data() + f.size(), v);
    if (f.empty() || ec != std::errc{} || ptr != f.data() + f.size() || !std::isfinite(v))
      throw ParseError(fmt::format("non-numeric field in column {}: '{}'", i + 1, f), line_);
    return v;
  }

  ActivityStats stats(std::size_t first) const {
    ActivityStats s;
    s.packet_total_count = integer(first + 0);
    s.octet_total_count = integer(first + 1);
    s.small_packet_count = integer(first + 2);
    s.large_packet_count = integer(first + 3);
    s.non_empty_packet_count = integer(first + 4);
    s.data_byte_count = integer(first + 5);
    s.average_interarrival_time = real(first + 6);
    s.first_non_empty_packet_size = integer(first + 7);
    s.max_packet_size = integer(first + 8);
    s.stddev_payload_length = real(first + 9);
    s.stddev_interarrival_time = real(first + 10);
    return s;
  }

 private:
  const std::vector<std::string_view>& fields_;
  std::size_t line_;
};

}  // namespace

const std::string& flow_csv_header() {
  static const std::string header = build_header();
  return header;
}

std::string serialize_flow_row(const FlowRecord& r) {
  std::string out;
  out.reserve(160);
  fmt::format_to(std::back_inserter(out), "{},{},{},{:.6f},{}", r.home_id,
                 r.device_class.value_or(""), r.day_index, r.timestamp,
                 protocol_token(r.protocol));
  append_stats(out, r.forward);
  append_stats(out, r.reverse);
  return out;
}

FlowRecord parse_flow_row(std::string_view row, std::size_t line) {
  if (!row.empty() && row.back() == '\r') row.remove_suffix(1);
  auto fields = split_fields(row);
  if (fields.size() != kFlowCsvColumns)
    throw ParseError(
        fmt::format("column count {} (expected {})", fields.size(), kFlowCsvColumns), line);

  FieldReader reader(fields, line);
  FlowRecord r;
  r.home_id = std::string(fields[0]);
  if (r.home_id.empty()) throw ParseError("empty home_id", line);
  if (!fields[1].empty()) r.device_class = std::string(fields[1]);
  auto day = reader.integer(2);
  if (day > std::numeric_limits<std::uint32_t>::max()) throw ParseError("day_index overflow", line);
  r.day_index = static_cast<std::uint32_t>(day);
  r.timestamp = reader.real(3);
  auto proto = protocol_from_token(fields[4]);
  if (!proto) throw ParseError(fmt::format("unknown protocol token '{}'", fields[4]), line);
  r.protocol = *proto;
  r.forward = reader.stats(5);
  r.reverse = reader.stats(5 + kStatsPerDirection);
  if (auto err = check_invariants(r); !err.empty())
    throw ParseError("violated invariant: " + err, line);
  return r;
}

void write_flow_csv(const std::filesystem::path& path, const std::vector<FlowRecord>& records) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot open for writing: " + path.string());
  out << flow_csv_header() << '\n';
  for (const auto& r : records) out << serialize_flow_row(r) << '\n';
  out.flush();
  if (!out) throw IoError("write failed: " + path.string());
}

std::vector<FlowRecord> read_flow_csv(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open for reading: " + path.string());
  std::string line;
  if (!std::getline(in, line)) throw ParseError(path.string() + ": missing header", 1);
  if (!line.empty() && line.back() == '\r') line.pop_back();
  if (line != flow_csv_header()) throw ParseError(path.string() + ": unexpected header", 1);
  std::vector<FlowRecord> records;
  std::size_t line_no = 1;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    try {
      records.push_back(parse_flow_row(line, line_no));
    } catch (const ParseError& e) {
      throw ParseError(path.string() + ": " + e.message(), e.line());
    }
  }
  return records;
}

}  // namespace driftnet
