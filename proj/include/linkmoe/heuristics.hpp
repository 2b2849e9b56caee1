#pragma once

#include <array>
#include <functional>
#include <optional>
#include <string_view>
#include <unordered_map>
#include <vector>

#include "linkmoe/graph.hpp"
#include "linkmoe/matrix.hpp"

namespace linkmoe {

/// Knobs for the global-proximity heuristics. The local ones (CN/AA/RA) are
/// parameter-free.
struct HeuristicConfig {
  double katz_beta = 0.05;  // walk damping
  int katz_max_len = 3;     // truncation length L, at most 6
  double ppr_alpha = 0.15;  // restart probability
  double ppr_eps = 1e-4;    // forward-push residual tolerance
  int sp_cap = 7;           // BFS depth cap

  void validate() const;
};

/// Fixed column order of the structural heuristic vector.
inline constexpr std::size_t kStructuralDim = 8;
inline constexpr std::array<std::string_view, kStructuralDim>
    kStructuralNames = {"deg_sum", "deg_absdiff", "cn",  "aa",
                        "ra",      "sp_score",    "katz", "ppr_sym"};

std::uint32_t common_neighbors(const Graph& g, NodeId i, NodeId j);
double adamic_adar(const Graph& g, NodeId i, NodeId j);
double resource_allocation(const Graph& g, NodeId i, NodeId j);

/// Bidirectional BFS distance, or nullopt when the distance exceeds cap or
/// the nodes live in different components.
std::optional<int> shortest_path(const Graph& g, NodeId i, NodeId j, int cap);

/// Higher-is-better transform of a BFS distance: 1/d, 0 when unreachable.
inline double sp_score(std::optional<int> dist) {
  return dist ? 1.0 / static_cast<double>(*dist) : 0.0;
}

/// Raw distance for group binning: d capped at cap, unreachable -> cap+1.
inline double sp_raw(std::optional<int> dist, int cap) {
  if (!dist) return static_cast<double>(cap + 1);
  return static_cast<double>(*dist < cap ? *dist : cap);
}

/// Truncated Katz index: sum over l=1..L of beta^l * (#walks of length l
/// from i to j), counted by sparse neighbor expansion.
double katz(const Graph& g, NodeId i, NodeId j, double beta, int max_len);

/// Reusable dense workspace for repeated Katz queries on graphs of similar
/// size; one instance per thread.
class KatzScorer {
 public:
  double operator()(const Graph& g, NodeId i, NodeId j, double beta,
                    int max_len);

 private:
  std::vector<double> cur_, next_;
  std::vector<NodeId> cur_touched_, next_touched_;
};

/// Approximate personalized PageRank from src by forward push. On return
/// every node's residual is below eps*degree; scores are non-negative and
/// sum to at most 1. An isolated src keeps all mass: {src: 1}.
std::unordered_map<NodeId, double> ppr(const Graph& g, NodeId src, double alpha,
                                       double eps);

/// Order-invariant pair score: ppr(i)[j] + ppr(j)[i].
double ppr_pair(const Graph& g, NodeId i, NodeId j, double alpha, double eps);

/// ppr_pair over a batch, one push per distinct endpoint. Output follows the
/// input pair order regardless of the thread count.
std::vector<double> batch_ppr_sym(const Graph& g, const HeuristicConfig& cfg,
                                  std::span<const Pair> pairs, int threads = 0);

/// Cosine of the two feature rows; 0 when either row has zero norm.
double feature_cosine(const FeatureMatrix& f, NodeId i, NodeId j);

/// Elementwise product of the two feature rows (order invariant).
std::vector<double> pair_feature(const FeatureMatrix& f, NodeId i, NodeId j);

/// All eight structural heuristics of a pair in kStructuralNames order:
/// [deg_sum, deg_absdiff, cn, aa, ra, sp_score, katz, ppr_sym].
std::array<double, kStructuralDim> structural_vector(const Graph& g,
                                                     const HeuristicConfig& cfg,
                                                     NodeId i, NodeId j);

/// structural_vector over a batch, one row per pair in input order. PPR
/// pushes are shared across pairs with a common endpoint and the fan-out
/// across threads never changes values or row order.
Matrix batch_structural(const Graph& g, const HeuristicConfig& cfg,
                        std::span<const Pair> pairs, int threads = 0);

/// Resolves the worker count: explicit argument, else LINKMOE_THREADS, else
/// hardware concurrency.
int resolve_threads(int requested);

/// Splits [0, count) into contiguous chunks and runs fn(lo, hi, worker) on a
/// thread per chunk; serial when threads <= 1.
void parallel_for(std::size_t count, int threads,
                  const std::function<void(std::size_t, std::size_t, int)>& fn);

}  // namespace linkmoe
