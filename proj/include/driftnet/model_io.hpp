#pragma once

#include <filesystem>
#include <string>
#include <string_view>

#include "driftnet/forest.hpp"

namespace driftnet {

inline constexpr int kModelFormatVersion = 1;

/// Text encoding of a model:
///
///   DRIFTNET-MODEL 1
///   {"format_version":1,"context_id":...,"trees":[...]}
///   checksum <16 hex digits>
///
/// The checksum is FNV-1a 64 over the first two lines including their newlines.
/// Doubles are written in shortest round-trip form, so load(save(m)) == m.
std::string save_model(const Model& model);

// Throws FormatError (version mismatch, truncated input, checksum failure, malformed body).
Model load_model(std::string_view text);

void save_model_file(const std::filesystem::path& path, const Model& model);
Model load_model_file(const std::filesystem::path& path);

}  // namespace driftnet
