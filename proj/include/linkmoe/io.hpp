#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include "linkmoe/graph.hpp"

namespace linkmoe::io {

inline constexpr std::string_view kVersion = "0.1.0";

/// Fixed 6-decimal rendering used by every CSV output.
std::string csv_value(double v);

/// Full-precision rendering (%.17g) used by score files so values round-trip.
std::string score_value(double v);

void write_text_file(const std::filesystem::path& path, std::string_view text);

std::string read_text_file(const std::filesystem::path& path);

/// "u v score" lines, one per pair, in input order.
void write_score_file(const std::filesystem::path& path,
                      std::span<const Pair> pairs,
                      std::span<const double> scores);

/// FNV-1a over the raw bytes of a file, rendered as 16 hex digits.
std::string file_digest(const std::filesystem::path& path);

}  // namespace linkmoe::io
