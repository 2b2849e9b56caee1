#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "linkmoe/error.hpp"
#include "linkmoe/matrix.hpp"

namespace linkmoe {

using NodeId = std::uint32_t;
using Pair = std::pair<NodeId, NodeId>;

inline Pair canonical(Pair p) {
  return p.first <= p.second ? p : Pair{p.second, p.first};
}

inline std::uint64_t pack_pair(Pair p) {
  Pair c = canonical(p);
  return (static_cast<std::uint64_t>(c.first) << 32) | c.second;
}

/// Immutable undirected simple graph in CSR form. Neighbor lists are sorted
/// ascending with no duplicates and no self-loops; every edge is stored in
/// both directions. Safe to share read-only across threads.
class Graph {
public:
  Graph() = default;

  /// Symmetrizes, deduplicates and sorts. Throws NODE_OUT_OF_RANGE for an
  /// endpoint >= n and SELF_LOOP for a (u,u) pair.
  static Graph build(std::span<const Pair> pairs, NodeId n);

  NodeId num_nodes() const { return n_; }
  /// Number of distinct undirected edges.
  std::size_t num_edges() const { return neighbors_.size() / 2; }

  std::span<const NodeId> neighbors(NodeId v) const;
  NodeId degree(NodeId v) const;
  bool has_edge(NodeId u, NodeId v) const;

  /// Each undirected edge once, as canonical (min,max) pairs sorted by (u,v).
  std::vector<Pair> edge_list() const;

private:
  void check_node(NodeId v) const;

  NodeId n_ = 0;
  std::vector<std::size_t> offsets_;
  std::vector<NodeId> neighbors_;
};

/// Dense node-feature matrix, one row per node. All entries finite.
struct FeatureMatrix {
  Matrix rows;

  NodeId num_nodes() const { return static_cast<NodeId>(rows.rows); }
  std::size_t dim() const { return rows.cols; }
  std::span<const double> row(NodeId v) const { return rows.row(v); }
};

enum class NegMode { Shared, PerPositive };

/// Fixed negative pairs for ranked evaluation: either one list shared by all
/// positives or one list of k negatives per positive.
struct NegativeSet {
  NegMode mode = NegMode::Shared;
  std::vector<Pair> shared_pairs;
  std::vector<std::vector<Pair>> per_pos_pairs;

  std::size_t total_pairs() const;
};

struct EdgeSplit {
  std::vector<Pair> train_pos;
  std::vector<Pair> valid_pos;
  std::vector<Pair> test_pos;
  NegativeSet valid_neg;
  NegativeSet test_neg;
};

/// Parses "u v" lines (0-based decimal ids, '#' comments and blank lines
/// ignored) in file order without deduplicating or symmetrizing.
std::vector<Pair> load_edge_list(const std::filesystem::path& path);

/// Parses one space-separated real vector per line; row index = node id.
/// The dimension is inferred from the first row.
FeatureMatrix load_features(const std::filesystem::path& path, NodeId n);

/// Parses a negative-set file: header "SHARED" or "PER_POSITIVE k", then one
/// pair per line (SHARED) or 2k integers per positive (PER_POSITIVE).
NegativeSet load_negative_set(const std::filesystem::path& path,
                              std::size_t num_positives, NodeId n);

/// Loads train.txt/valid.txt/test.txt plus valid_neg.txt/test_neg.txt from a
/// split directory, validating endpoints against n and checking that no
/// negative duplicates a positive of the same evaluation set.
EdgeSplit load_split(const std::filesystem::path& dir, NodeId n);

/// Reads a single "n=<count>" line.
NodeId load_graph_header(const std::filesystem::path& path);

}  // namespace linkmoe
