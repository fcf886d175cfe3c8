#pragma once

#include <filesystem>
#include <string>
#include <string_view>
#include <vector>

#include "driftnet/flow.hpp"

namespace driftnet {

inline constexpr std::size_t kFlowCsvColumns = 27;

// Header row of the flow CSV, without trailing newline.
const std::string& flow_csv_header();

// Reals are written with exactly six decimals; no trailing newline.
std::string serialize_flow_row(const FlowRecord& record);

// Throws ParseError tagged with `line_number` (0 = unknown).
FlowRecord parse_flow_row(std::string_view row, std::size_t line_number = 0);

void write_flow_csv(const std::filesystem::path& path, const std::vector<FlowRecord>& records);
std::vector<FlowRecord> read_flow_csv(const std::filesystem::path& path);

}  // namespace driftnet
