#include "linkmoe/graph.hpp"

#include <algorithm>
#include <cctype>
#include <charconv>
#include <cmath>
#include <fstream>
#include <unordered_set>

namespace linkmoe {

namespace {

std::ifstream open_or_throw(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) {
    throw Error(ErrorCode::MissingFile, path.string());
  }
  return in;
}

bool is_blank_or_comment(const std::string& line) {
  for (char c : line) {
    if (c == '#') return true;
    if (!std::isspace(static_cast<unsigned char>(c))) return false;
  }
  return true;
}

std::vector<std::string_view> split_ws(std::string_view s) {
  std::vector<std::string_view> out;
  std::size_t i = 0;
  while (i < s.size()) {
    while (i < s.size() && std::isspace(static_cast<unsigned char>(s[i]))) ++i;
    std::size_t start = i;
    while (i < s.size() && !std::isspace(static_cast<unsigned char>(s[i]))) ++i;
    if (i > start) out.push_back(s.substr(start, i - start));
  }
  return out;
}

bool parse_node(std::string_view tok, NodeId& out) {
  std::uint64_t v = 0;
  auto [ptr, ec] = std::from_chars(tok.data(), tok.data() + tok.size(), v);
  if (ec != std::errc{} || ptr != tok.data() + tok.size()) return false;
  if (v > 0xffffffffull) return false;
  out = static_cast<NodeId>(v);
  return true;
}

bool parse_real(std::string_view tok, double& out) {
  auto [ptr, ec] = std::from_chars(tok.data(), tok.data() + tok.size(), out);
  return ec == std::errc{} && ptr == tok.data() + tok.size();
}

Pair parse_pair_line(const std::string& line, std::size_t line_no) {
  auto toks = split_ws(line);
  NodeId u, v;
  if (toks.size() != 2 || !parse_node(toks[0], u) || !parse_node(toks[1], v)) {
    throw Error(ErrorCode::MalformedLine, line, line_no);
  }
  if (u == v) {
    throw Error(ErrorCode::SelfLoop, line, line_no);
  }
  return {u, v};
}

void check_endpoints(std::span<const Pair> pairs, NodeId n,
                     const std::string& what) {
  for (const Pair& p : pairs) {
    if (p.first >= n || p.second >= n) {
      throw Error(ErrorCode::NodeOutOfRange, what);
    }
  }
}

}  // namespace

Graph Graph::build(std::span<const Pair> pairs, NodeId n) {
  Graph g;
  g.n_ = n;
  for (const Pair& p : pairs) {
    if (p.first >= n || p.second >= n) {
      throw Error(ErrorCode::NodeOutOfRange,
                  std::to_string(p.first) + " " + std::to_string(p.second));
    }
    if (p.first == p.second) {
      throw Error(ErrorCode::SelfLoop, std::to_string(p.first));
    }
  }

  std::vector<std::size_t> counts(static_cast<std::size_t>(n) + 1, 0);
  for (const Pair& p : pairs) {
    ++counts[p.first + 1];
    ++counts[p.second + 1];
  }
  for (std::size_t v = 0; v < n; ++v) counts[v + 1] += counts[v];

  std::vector<NodeId> adj(pairs.size() * 2);
  std::vector<std::size_t> cursor(counts.begin(), counts.end() - 1);
  for (const Pair& p : pairs) {
    adj[cursor[p.first]++] = p.second;
    adj[cursor[p.second]++] = p.first;
  }

  g.offsets_.assign(static_cast<std::size_t>(n) + 1, 0);
  g.neighbors_.reserve(adj.size());
  for (std::size_t v = 0; v < n; ++v) {
    auto begin = adj.begin() + static_cast<std::ptrdiff_t>(counts[v]);
    auto end = adj.begin() + static_cast<std::ptrdiff_t>(counts[v + 1]);
    std::sort(begin, end);
    auto last = std::unique(begin, end);
    g.neighbors_.insert(g.neighbors_.end(), begin, last);
    g.offsets_[v + 1] = g.neighbors_.size();
  }
  return g;
}

std::span<const NodeId> Graph::neighbors(NodeId v) const {
  check_node(v);
  return {neighbors_.data() + offsets_[v], offsets_[v + 1] - offsets_[v]};
}

NodeId Graph::degree(NodeId v) const {
  check_node(v);
  return static_cast<NodeId>(offsets_[v + 1] - offsets_[v]);
}

bool Graph::has_edge(NodeId u, NodeId v) const {
  auto nb = neighbors(u);
  check_node(v);
  return std::binary_search(nb.begin(), nb.end(), v);
}

std::vector<Pair> Graph::edge_list() const {
  std::vector<Pair> out;
  out.reserve(num_edges());
  for (NodeId u = 0; u < n_; ++u) {
    for (NodeId v : neighbors(u)) {
      if (u < v) out.emplace_back(u, v);
    }
  }
  return out;
}

void Graph::check_node(NodeId v) const {
  if (v >= n_) {
    throw Error(ErrorCode::NodeOutOfRange, std::to_string(v));
  }
}

std::size_t NegativeSet::total_pairs() const {
  if (mode == NegMode::Shared) return shared_pairs.size();
  std::size_t total = 0;
  for (const auto& lst : per_pos_pairs) total += lst.size();
  return total;
}

std::vector<Pair> load_edge_list(const std::filesystem::path& path) {
  std::ifstream in = open_or_throw(path);
  std::vector<Pair> pairs;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (is_blank_or_comment(line)) continue;
    pairs.push_back(parse_pair_line(line, line_no));
  }
  return pairs;
}

FeatureMatrix load_features(const std::filesystem::path& path, NodeId n) {
  std::ifstream in = open_or_throw(path);
  std::string line;
  std::size_t line_no = 0;
  std::vector<double> values;
  std::size_t dim = 0;
  std::size_t row_count = 0;
  while (std::getline(in, line)) {
    ++line_no;
    auto toks = split_ws(line);
    if (toks.empty()) continue;
    if (row_count == 0) {
      dim = toks.size();
    } else if (toks.size() != dim) {
      throw Error(ErrorCode::RaggedRow, line, line_no);
    }
    for (auto tok : toks) {
      double x;
      if (!parse_real(tok, x)) {
        throw Error(ErrorCode::MalformedLine, std::string(tok), line_no);
      }
      if (!std::isfinite(x)) {
        throw Error(ErrorCode::NonFiniteValue, std::string(tok), line_no);
      }
      values.push_back(x);
    }
    ++row_count;
    if (row_count > n) {
      throw Error(ErrorCode::RowCountMismatch,
                  "expected " + std::to_string(n) + " rows");
    }
  }
  if (row_count != n) {
    throw Error(ErrorCode::RowCountMismatch,
                "expected " + std::to_string(n) + " rows, got " +
                    std::to_string(row_count));
  }
  FeatureMatrix f;
  f.rows.rows = n;
  f.rows.cols = dim;
  f.rows.data = std::move(values);
  return f;
}

NegativeSet load_negative_set(const std::filesystem::path& path,
                              std::size_t num_positives, NodeId n) {
  std::ifstream in = open_or_throw(path);
  std::string line;
  std::size_t line_no = 0;

  // Header line: "SHARED" or "PER_POSITIVE k".
  std::vector<std::string_view> header;
  while (std::getline(in, line)) {
    ++line_no;
    if (is_blank_or_comment(line)) continue;
    header = split_ws(line);
    break;
  }
  if (header.empty()) {
    throw Error(ErrorCode::MalformedLine, "missing negative-set header", line_no);
  }

  NegativeSet neg;
  std::size_t per_pos_k = 0;
  if (header.size() == 1 && header[0] == "SHARED") {
    neg.mode = NegMode::Shared;
  } else if (header.size() == 2 && header[0] == "PER_POSITIVE") {
    NodeId k;
    if (!parse_node(header[1], k) || k == 0) {
      throw Error(ErrorCode::MalformedLine, line, line_no);
    }
    neg.mode = NegMode::PerPositive;
    per_pos_k = k;
  } else {
    throw Error(ErrorCode::MalformedLine, line, line_no);
  }

  while (std::getline(in, line)) {
    ++line_no;
    if (is_blank_or_comment(line)) continue;
    if (neg.mode == NegMode::Shared) {
      neg.shared_pairs.push_back(parse_pair_line(line, line_no));
    } else {
      auto toks = split_ws(line);
      if (toks.size() != per_pos_k * 2) {
        throw Error(ErrorCode::NegCountMismatch,
                    "expected " + std::to_string(per_pos_k * 2) +
                        " integers per line",
                    line_no);
      }
      std::vector<Pair> lst;
      lst.reserve(per_pos_k);
      for (std::size_t i = 0; i < per_pos_k; ++i) {
        NodeId u, v;
        if (!parse_node(toks[2 * i], u) || !parse_node(toks[2 * i + 1], v)) {
          throw Error(ErrorCode::MalformedLine, line, line_no);
        }
        if (u == v) throw Error(ErrorCode::SelfLoop, line, line_no);
        lst.emplace_back(u, v);
      }
      neg.per_pos_pairs.push_back(std::move(lst));
    }
  }

  if (neg.mode == NegMode::PerPositive &&
      neg.per_pos_pairs.size() != num_positives) {
    throw Error(ErrorCode::NegCountMismatch,
                "outer length " + std::to_string(neg.per_pos_pairs.size()) +
                    " != positive count " + std::to_string(num_positives));
  }

  if (neg.mode == NegMode::Shared) {
    check_endpoints(neg.shared_pairs, n, path.string());
  } else {
    for (const auto& lst : neg.per_pos_pairs) check_endpoints(lst, n, path.string());
  }
  return neg;
}

namespace {

void check_negs_disjoint(const NegativeSet& neg, std::span<const Pair> positives,
                         const std::string& what) {
  std::unordered_set<std::uint64_t> pos_keys;
  pos_keys.reserve(positives.size() * 2);
  for (const Pair& p : positives) pos_keys.insert(pack_pair(p));
  auto check = [&](const Pair& q) {
    if (pos_keys.count(pack_pair(q))) {
      throw Error(ErrorCode::NegativeIsPositive,
                  what + ": (" + std::to_string(q.first) + "," +
                      std::to_string(q.second) + ")");
    }
  };
  if (neg.mode == NegMode::Shared) {
    for (const Pair& q : neg.shared_pairs) check(q);
  } else {
    for (const auto& lst : neg.per_pos_pairs)
      for (const Pair& q : lst) check(q);
  }
}

}  // namespace

EdgeSplit load_split(const std::filesystem::path& dir, NodeId n) {
  for (const char* name :
       {"train.txt", "valid.txt", "test.txt", "valid_neg.txt", "test_neg.txt"}) {
    if (!std::filesystem::exists(dir / name)) {
      throw Error(ErrorCode::MissingFile, name);
    }
  }
  EdgeSplit split;
  split.train_pos = load_edge_list(dir / "train.txt");
  split.valid_pos = load_edge_list(dir / "valid.txt");
  split.test_pos = load_edge_list(dir / "test.txt");
  check_endpoints(split.train_pos, n, "train.txt");
  check_endpoints(split.valid_pos, n, "valid.txt");
  check_endpoints(split.test_pos, n, "test.txt");
  split.valid_neg =
      load_negative_set(dir / "valid_neg.txt", split.valid_pos.size(), n);
  split.test_neg =
      load_negative_set(dir / "test_neg.txt", split.test_pos.size(), n);
  check_negs_disjoint(split.valid_neg, split.valid_pos, "valid_neg.txt");
  check_negs_disjoint(split.test_neg, split.test_pos, "test_neg.txt");
  return split;
}

NodeId load_graph_header(const std::filesystem::path& path) {
  std::ifstream in = open_or_throw(path);
  std::string line;
  while (std::getline(in, line)) {
    if (is_blank_or_comment(line)) continue;
    auto toks = split_ws(line);
    if (toks.size() == 1 && toks[0].substr(0, 2) == "n=") {
      NodeId n;
      if (parse_node(toks[0].substr(2), n)) return n;
    }
    throw Error(ErrorCode::MalformedLine, line, 1);
  }
  throw Error(ErrorCode::MalformedLine, "empty header file");
}

}  // namespace linkmoe
