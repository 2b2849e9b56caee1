#pragma once

// Shared test fixtures: the small reference graph used throughout the specs
// of expected values, plus throwaway-directory helpers for file-based tests.

#include <atomic>
#include <filesystem>
#include <fstream>
#include <string>
#include <vector>

#include "linkmoe/graph.hpp"

namespace fixtures {

namespace fs = std::filesystem;
using linkmoe::Graph;
using linkmoe::Pair;

// Reference graph: degrees [2,3,3,2], (0,3) and (1,2) are the interesting
// non-edges (two common neighbors each).
inline std::vector<Pair> g1_edges() {
  return {{0, 1}, {0, 2}, {1, 2}, {1, 3}, {2, 3}};
}

inline Graph g1() { return Graph::build(g1_edges(), 4); }

class TempDir {
public:
  explicit TempDir(const std::string& tag) {
    static std::atomic<unsigned> counter{0};
    path_ = fs::temp_directory_path() /
            ("linkmoe_test_" + tag + "_" + std::to_string(counter++));
    fs::remove_all(path_);
    fs::create_directories(path_);
  }

  TempDir(const TempDir&) = delete;
  TempDir& operator=(const TempDir&) = delete;

  ~TempDir() {
    std::error_code ec;
    fs::remove_all(path_, ec);
  }

  const fs::path& path() const { return path_; }
  fs::path file(const std::string& name) const { return path_ / name; }

private:
  fs::path path_;
};

inline void write_file(const fs::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary);
  out << text;
}

inline std::string read_file(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  std::string text((std::istreambuf_iterator<char>(in)),
                   std::istreambuf_iterator<char>());
  return text;
}

// A minimal but complete split directory over G1 plus two extra nodes (4, 5
// stay isolated in the training graph so negatives are easy to find).
inline void write_g1_split(const fs::path& dir) {
  fs::create_directories(dir);
  write_file(dir / "train.txt", "0 1\n0 2\n1 2\n1 3\n2 3\n");
  write_file(dir / "valid.txt", "0 3\n");
  write_file(dir / "valid_neg.txt", "SHARED\n0 4\n1 5\n");
  write_file(dir / "test.txt", "1 2\n");
  write_file(dir / "test_neg.txt", "SHARED\n2 4\n3 5\n");
}

// A split big enough to train on: two 20-node ring communities with chord
// shortcuts. Positives are held-out in-block chords (one common neighbor),
// negatives are cross-block pairs (none). Features one-hot the block, so
// both structural counts and features carry signal. 40 nodes.
inline void write_two_block_split(const fs::path& dir) {
  fs::create_directories(dir);
  auto pair_line = [](unsigned u, unsigned v) {
    return std::to_string(u) + " " + std::to_string(v) + "\n";
  };
  auto chord = [&](unsigned block, unsigned i) {
    return pair_line(20 * block + i, 20 * block + (i + 2) % 20);
  };

  std::string train;
  for (unsigned b = 0; b < 2; ++b) {
    for (unsigned i = 0; i < 20; ++i) {
      train += pair_line(20 * b + i, 20 * b + (i + 1) % 20);
    }
    for (unsigned i : {0u, 5u, 10u, 15u}) train += chord(b, i);
  }
  write_file(dir / "train.txt", train);

  std::string valid, test;
  for (unsigned b = 0; b < 2; ++b) {
    for (unsigned i : {1u, 3u, 7u, 9u, 11u}) valid += chord(b, i);
    for (unsigned i : {2u, 6u, 12u, 14u, 16u}) test += chord(b, i);
  }
  write_file(dir / "valid.txt", valid);
  write_file(dir / "test.txt", test);

  std::string valid_neg = "SHARED\n", test_neg = "SHARED\n";
  for (unsigned i = 0; i < 10; ++i) {
    valid_neg += pair_line(i, 20 + (i + 7) % 20);
    test_neg += pair_line(i, 20 + (i + 13) % 20);
  }
  write_file(dir / "valid_neg.txt", valid_neg);
  write_file(dir / "test_neg.txt", test_neg);

  std::string features;
  for (unsigned v = 0; v < 40; ++v) {
    features += v < 20 ? "1 0\n" : "0 1\n";
  }
  write_file(dir / "features.txt", features);
}

}  // namespace fixtures
