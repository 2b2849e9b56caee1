#include "linkmoe/io.hpp"

#include <cstdio>
#include <fstream>
#include <sstream>

#include "linkmoe/rng.hpp"

namespace linkmoe::io {

std::string csv_value(double v) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%.6f", v);
  return buf;
}

std::string score_value(double v) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}

void write_text_file(const std::filesystem::path& path, std::string_view text) {
  std::ofstream out(path, std::ios::binary);
  if (!out) {
    throw Error(ErrorCode::IoError, "cannot open " + path.string());
  }
  out.write(text.data(), static_cast<std::streamsize>(text.size()));
  out.flush();
  if (!out) {
    throw Error(ErrorCode::IoError, "short write to " + path.string());
  }
}

std::string read_text_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) {
    throw Error(ErrorCode::MissingFile, path.string());
  }
  std::ostringstream buf;
  buf << in.rdbuf();
  return std::move(buf).str();
}

void write_score_file(const std::filesystem::path& path,
                      std::span<const Pair> pairs,
                      std::span<const double> scores) {
  if (pairs.size() != scores.size()) {
    throw Error(ErrorCode::DimMismatch,
                std::to_string(pairs.size()) + " pairs vs " +
                    std::to_string(scores.size()) + " scores");
  }
  std::string text;
  text.reserve(pairs.size() * 32);
  for (std::size_t t = 0; t < pairs.size(); ++t) {
    text += std::to_string(pairs[t].first);
    text += ' ';
    text += std::to_string(pairs[t].second);
    text += ' ';
    text += score_value(scores[t]);
    text += '\n';
  }
  write_text_file(path, text);
}

std::string file_digest(const std::filesystem::path& path) {
  const std::string bytes = read_text_file(path);
  char buf[24];
  std::snprintf(buf, sizeof(buf), "%016llx",
                static_cast<unsigned long long>(fnv1a64(bytes)));
  return buf;
}

}  // namespace linkmoe::io
