#include "linkmoe/heuristics.hpp"

#include <algorithm>
#include <cmath>
#include <cstdlib>
#include <deque>
#include <functional>
#include <thread>
#include <unordered_set>

namespace linkmoe {

namespace {

void check_pair(const Graph& g, NodeId i, NodeId j) {
  if (i >= g.num_nodes() || j >= g.num_nodes()) {
    throw Error(ErrorCode::NodeOutOfRange,
                std::to_string(i) + " " + std::to_string(j));
  }
  if (i == j) {
    throw Error(ErrorCode::SelfPair, std::to_string(i));
  }
}

/// Calls fn(k, d_k) for every common neighbor k of i and j, ascending.
template <typename Fn>
void for_common_neighbors(const Graph& g, NodeId i, NodeId j, Fn&& fn) {
  auto a = g.neighbors(i);
  auto b = g.neighbors(j);
  std::size_t x = 0, y = 0;
  while (x < a.size() && y < b.size()) {
    if (a[x] < b[y]) {
      ++x;
    } else if (a[x] > b[y]) {
      ++y;
    } else {
      fn(a[x], g.degree(a[x]));
      ++x;
      ++y;
    }
  }
}

/// BFS ball of radius max_depth around src: node -> distance.
std::unordered_map<NodeId, int> bfs_ball(const Graph& g, NodeId src,
                                         int max_depth) {
  std::unordered_map<NodeId, int> dist;
  dist.emplace(src, 0);
  std::vector<NodeId> frontier{src};
  for (int d = 1; d <= max_depth && !frontier.empty(); ++d) {
    std::vector<NodeId> next;
    for (NodeId u : frontier) {
      for (NodeId w : g.neighbors(u)) {
        if (dist.emplace(w, d).second) next.push_back(w);
      }
    }
    frontier = std::move(next);
  }
  return dist;
}

struct PairHeuristics {
  const Graph& g;
  const HeuristicConfig& cfg;

  void fill_local(NodeId a, NodeId b, std::span<double> row) const {
    double da = g.degree(a), db = g.degree(b);
    row[0] = da + db;
    row[1] = std::abs(da - db);
    double cn = 0.0, aa = 0.0, ra = 0.0;
    for_common_neighbors(g, a, b, [&](NodeId, NodeId dk) {
      cn += 1.0;
      if (dk >= 2) aa += 1.0 / std::log(static_cast<double>(dk));
      ra += 1.0 / static_cast<double>(dk);
    });
    row[2] = cn;
    row[3] = aa;
    row[4] = ra;
    row[5] = sp_score(shortest_path(g, a, b, cfg.sp_cap));
  }
};

}  // namespace

void parallel_for(std::size_t count, int threads,
                  const std::function<void(std::size_t, std::size_t, int)>& fn) {
  if (threads <= 1 || count <= 1) {
    fn(0, count, 0);
    return;
  }
  std::size_t workers = std::min<std::size_t>(threads, count);
  std::size_t chunk = (count + workers - 1) / workers;
  std::vector<std::thread> pool;
  pool.reserve(workers);
  for (std::size_t w = 0; w < workers; ++w) {
    std::size_t lo = w * chunk;
    std::size_t hi = std::min(count, lo + chunk);
    if (lo >= hi) break;
    pool.emplace_back([&, lo, hi, w] { fn(lo, hi, static_cast<int>(w)); });
  }
  for (auto& t : pool) t.join();
}

double KatzScorer::operator()(const Graph& g, NodeId i, NodeId j, double beta,
                              int max_len) {
  check_pair(g, i, j);
  if (max_len < 1 || max_len > 6) {
    throw Error(ErrorCode::BadConfig,
                "katz_max_len must be in [1,6], got " + std::to_string(max_len));
  }
  // Walk counts stay integers until the final damping, so the result is
  // identical no matter which endpoint we expand from.
  auto [a, b] = canonical(Pair{i, j});
  if (cur_.size() < g.num_nodes()) {
    cur_.assign(g.num_nodes(), 0.0);
    next_.assign(g.num_nodes(), 0.0);
  }
  cur_[a] = 1.0;
  cur_touched_.assign(1, a);
  double result = 0.0;
  double damp = 1.0;
  for (int l = 1; l <= max_len; ++l) {
    damp *= beta;
    for (NodeId u : cur_touched_) {
      double cu = cur_[u];
      for (NodeId w : g.neighbors(u)) {
        if (next_[w] == 0.0) next_touched_.push_back(w);
        next_[w] += cu;
      }
    }
    for (NodeId u : cur_touched_) cur_[u] = 0.0;
    std::swap(cur_, next_);
    std::swap(cur_touched_, next_touched_);
    next_touched_.clear();
    result += damp * cur_[b];
    if (cur_touched_.empty()) break;
  }
  for (NodeId u : cur_touched_) cur_[u] = 0.0;
  cur_touched_.clear();
  return result;
}

void HeuristicConfig::validate() const {
  if (!(katz_beta > 0.0 && katz_beta < 1.0)) {
    throw Error(ErrorCode::BadConfig, "katz_beta must be in (0,1)");
  }
  if (!(ppr_alpha > 0.0 && ppr_alpha < 1.0)) {
    throw Error(ErrorCode::BadConfig, "ppr_alpha must be in (0,1)");
  }
  if (katz_max_len < 1 || katz_max_len > 6) {
    throw Error(ErrorCode::BadConfig, "katz_max_len must be in [1,6]");
  }
  if (sp_cap < 1) {
    throw Error(ErrorCode::BadConfig, "sp_cap must be >= 1");
  }
  if (!(ppr_eps > 0.0)) {
    throw Error(ErrorCode::BadConfig, "ppr_eps must be > 0");
  }
}

std::uint32_t common_neighbors(const Graph& g, NodeId i, NodeId j) {
  check_pair(g, i, j);
  std::uint32_t count = 0;
  for_common_neighbors(g, i, j, [&](NodeId, NodeId) { ++count; });
  return count;
}

double adamic_adar(const Graph& g, NodeId i, NodeId j) {
  check_pair(g, i, j);
  double sum = 0.0;
  for_common_neighbors(g, i, j, [&](NodeId, NodeId dk) {
    if (dk >= 2) sum += 1.0 / std::log(static_cast<double>(dk));
  });
  return sum;
}

double resource_allocation(const Graph& g, NodeId i, NodeId j) {
  check_pair(g, i, j);
  double sum = 0.0;
  for_common_neighbors(g, i, j,
                       [&](NodeId, NodeId dk) { sum += 1.0 / dk; });
  return sum;
}

std::optional<int> shortest_path(const Graph& g, NodeId i, NodeId j, int cap) {
  check_pair(g, i, j);
  if (cap < 1) {
    throw Error(ErrorCode::BadConfig, "sp cap must be >= 1");
  }
  // Meet-in-the-middle: balls of radius ceil(cap/2) and floor(cap/2) cover
  // every path of length <= cap.
  auto ball_i = bfs_ball(g, i, (cap + 1) / 2);
  auto ball_j = bfs_ball(g, j, cap / 2);
  int best = cap + 1;
  const auto& small = ball_i.size() <= ball_j.size() ? ball_i : ball_j;
  const auto& large = ball_i.size() <= ball_j.size() ? ball_j : ball_i;
  for (const auto& [node, d] : small) {
    auto it = large.find(node);
    if (it != large.end()) best = std::min(best, d + it->second);
  }
  if (best > cap) return std::nullopt;
  return best;
}

double katz(const Graph& g, NodeId i, NodeId j, double beta, int max_len) {
  KatzScorer scorer;
  return scorer(g, i, j, beta, max_len);
}

std::unordered_map<NodeId, double> ppr(const Graph& g, NodeId src, double alpha,
                                       double eps) {
  if (src >= g.num_nodes()) {
    throw Error(ErrorCode::NodeOutOfRange, std::to_string(src));
  }
  if (!(alpha > 0.0 && alpha < 1.0)) {
    throw Error(ErrorCode::BadConfig, "ppr_alpha must be in (0,1)");
  }
  std::unordered_map<NodeId, double> p;
  if (g.degree(src) == 0) {
    p.emplace(src, 1.0);
    return p;
  }
  std::unordered_map<NodeId, double> r;
  r.emplace(src, 1.0);
  std::deque<NodeId> queue{src};
  std::unordered_set<NodeId> queued{src};
  while (!queue.empty()) {
    NodeId u = queue.front();
    queue.pop_front();
    queued.erase(u);
    double ru = r[u];
    double du = static_cast<double>(g.degree(u));
    if (ru < eps * du) continue;
    p[u] += alpha * ru;
    r[u] = 0.0;
    double share = (1.0 - alpha) * ru / du;
    for (NodeId w : g.neighbors(u)) {
      double rw = (r[w] += share);
      if (rw >= eps * g.degree(w) && queued.insert(w).second) {
        queue.push_back(w);
      }
    }
  }
  return p;
}

double ppr_pair(const Graph& g, NodeId i, NodeId j, double alpha, double eps) {
  check_pair(g, i, j);
  auto [a, b] = canonical(Pair{i, j});
  auto pa = ppr(g, a, alpha, eps);
  auto pb = ppr(g, b, alpha, eps);
  auto get = [](const std::unordered_map<NodeId, double>& m, NodeId k) {
    auto it = m.find(k);
    return it == m.end() ? 0.0 : it->second;
  };
  return get(pa, b) + get(pb, a);
}

double feature_cosine(const FeatureMatrix& f, NodeId i, NodeId j) {
  if (i >= f.num_nodes() || j >= f.num_nodes()) {
    throw Error(ErrorCode::NodeOutOfRange,
                std::to_string(i) + " " + std::to_string(j));
  }
  auto a = f.row(std::min(i, j));
  auto b = f.row(std::max(i, j));
  double dot = 0.0, na = 0.0, nb = 0.0;
  for (std::size_t k = 0; k < a.size(); ++k) {
    dot += a[k] * b[k];
    na += a[k] * a[k];
    nb += b[k] * b[k];
  }
  if (na == 0.0 || nb == 0.0) return 0.0;
  return dot / (std::sqrt(na) * std::sqrt(nb));
}

std::vector<double> pair_feature(const FeatureMatrix& f, NodeId i, NodeId j) {
  if (i >= f.num_nodes() || j >= f.num_nodes()) {
    throw Error(ErrorCode::NodeOutOfRange,
                std::to_string(i) + " " + std::to_string(j));
  }
  auto a = f.row(i);
  auto b = f.row(j);
  std::vector<double> out(a.size());
  for (std::size_t k = 0; k < a.size(); ++k) out[k] = a[k] * b[k];
  return out;
}

std::array<double, kStructuralDim> structural_vector(const Graph& g,
                                                     const HeuristicConfig& cfg,
                                                     NodeId i, NodeId j) {
  check_pair(g, i, j);
  cfg.validate();
  auto [a, b] = canonical(Pair{i, j});
  std::array<double, kStructuralDim> row{};
  PairHeuristics ph{g, cfg};
  ph.fill_local(a, b, row);
  row[6] = katz(g, a, b, cfg.katz_beta, cfg.katz_max_len);
  row[7] = ppr_pair(g, a, b, cfg.ppr_alpha, cfg.ppr_eps);
  return row;
}

std::vector<double> batch_ppr_sym(const Graph& g, const HeuristicConfig& cfg,
                                  std::span<const Pair> pairs, int threads) {
  cfg.validate();
  const int workers = resolve_threads(threads);
  const std::size_t count = pairs.size();
  std::vector<double> out(count, 0.0);
  if (count == 0) return out;

  // One PPR push per distinct endpoint; each push serves every pair that
  // touches that endpoint. slot 2t holds push(a)[b], slot 2t+1 push(b)[a].
  struct Request {
    NodeId src;
    NodeId partner;
    std::size_t slot;
  };
  std::vector<Request> requests;
  requests.reserve(count * 2);
  for (std::size_t t = 0; t < count; ++t) {
    auto [a, b] = canonical(pairs[t]);
    check_pair(g, a, b);
    requests.push_back({a, b, 2 * t});
    requests.push_back({b, a, 2 * t + 1});
  }
  std::sort(requests.begin(), requests.end(),
            [](const Request& x, const Request& y) {
              return x.src < y.src || (x.src == y.src && x.slot < y.slot);
            });
  std::vector<std::size_t> group_starts;
  for (std::size_t k = 0; k < requests.size(); ++k) {
    if (k == 0 || requests[k].src != requests[k - 1].src) group_starts.push_back(k);
  }

  std::vector<double> slots(count * 2, 0.0);
  parallel_for(group_starts.size(), workers,
               [&](std::size_t lo, std::size_t hi, int) {
                 for (std::size_t gidx = lo; gidx < hi; ++gidx) {
                   std::size_t begin = group_starts[gidx];
                   std::size_t end = gidx + 1 < group_starts.size()
                                         ? group_starts[gidx + 1]
                                         : requests.size();
                   auto table = ppr(g, requests[begin].src, cfg.ppr_alpha,
                                    cfg.ppr_eps);
                   for (std::size_t k = begin; k < end; ++k) {
                     auto it = table.find(requests[k].partner);
                     slots[requests[k].slot] =
                         it == table.end() ? 0.0 : it->second;
                   }
                 }
               });
  for (std::size_t t = 0; t < count; ++t) out[t] = slots[2 * t] + slots[2 * t + 1];
  return out;
}

Matrix batch_structural(const Graph& g, const HeuristicConfig& cfg,
                        std::span<const Pair> pairs, int threads) {
  cfg.validate();
  const int workers = resolve_threads(threads);
  const std::size_t count = pairs.size();
  Matrix out(count, kStructuralDim);
  if (count == 0) return out;

  std::vector<Pair> canon(count);
  for (std::size_t t = 0; t < count; ++t) {
    check_pair(g, pairs[t].first, pairs[t].second);
    canon[t] = canonical(pairs[t]);
  }

  std::vector<double> ppr_sym = batch_ppr_sym(g, cfg, canon, threads);

  PairHeuristics ph{g, cfg};
  parallel_for(count, workers, [&](std::size_t lo, std::size_t hi, int) {
    KatzScorer katz_scorer;
    for (std::size_t t = lo; t < hi; ++t) {
      auto [a, b] = canon[t];
      auto row = out.row(t);
      ph.fill_local(a, b, row);
      row[6] = katz_scorer(g, a, b, cfg.katz_beta, cfg.katz_max_len);
      row[7] = ppr_sym[t];
    }
  });
  return out;
}

int resolve_threads(int requested) {
  if (requested > 0) return requested;
  if (const char* env = std::getenv("LINKMOE_THREADS")) {
    int v = std::atoi(env);
    if (v > 0) return v;
  }
  unsigned hw = std::thread::hardware_concurrency();
  return hw == 0 ? 1 : static_cast<int>(hw);
}

}  // namespace linkmoe
