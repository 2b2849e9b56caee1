#pragma once

#include <map>
#include <string>
#include <vector>

#include "linkmoe/gate.hpp"
#include "linkmoe/graph.hpp"
#include "linkmoe/matrix.hpp"

namespace linkmoe {

/// Scores of the negatives a positive is ranked against: one list shared by
/// every positive, or one list per positive.
struct NegScores {
  NegMode mode = NegMode::Shared;
  std::vector<double> shared;
  std::vector<std::vector<double>> per_pos;

  std::span<const double> for_positive(std::size_t i) const {
    return mode == NegMode::Shared ? std::span<const double>(shared)
                                   : std::span<const double>(per_pos[i]);
  }
};

/// Mid-rank of a positive among its negatives:
/// 1 + #{neg > pos} + 0.5 * #{neg = pos}.
double rank_of_positive(double pos_score, std::span<const double> neg_scores);

struct RankingReport {
  std::vector<double> ranks;   // one per positive
  double mrr = 0.0;            // mean of 1/rank
  std::map<int, double> hits;  // K -> fraction with rank <= K

  double hits_at(int k) const { return hits.at(k); }
};

RankingReport evaluate(std::span<const double> pos_scores, const NegScores& negs,
                       std::span<const int> ks);

/// Indices of positives counted correct at K: rank <= K. Sorted ascending.
std::vector<std::size_t> correct_set(const RankingReport& report, double k);

/// |a n b| / |a u b| over sorted index sets; 1 when both are empty.
double jaccard_overlap(std::span<const std::size_t> a,
                       std::span<const std::size_t> b);

struct OverlapMatrix {
  std::vector<std::string> names;
  Matrix values;  // symmetric, unit diagonal for non-empty correct sets
};

/// Pairwise Jaccard of the methods' correct sets at K. Every method scores
/// the same positives against the same negative layout.
OverlapMatrix overlap_matrix(const std::vector<std::string>& names,
                             const std::vector<std::vector<double>>& pos_scores,
                             const std::vector<NegScores>& neg_scores, int k);

enum class GroupKey { CN, SP, FCS };

std::string_view group_key_name(GroupKey key);
GroupKey parse_group_key(std::string_view name);

/// Value bins over a grouping heuristic: interior edges e_1 < ... < e_{B-1}
/// define B bins [.., e_1), [e_1, e_2), ..., [e_{B-1}, ..). Closed on the
/// left, so a value equal to an edge lands in the bin to its right.
struct GroupSpec {
  GroupKey key = GroupKey::CN;
  std::vector<double> edges;

  static GroupSpec cn_default();  // CN counts: 0, [1,3), [3,10), [10,30), 30+
  static GroupSpec sp_default();  // raw distance: 1, 2, 3, 4, >=5/unreachable
  /// 5 quantile bins over the observed values; duplicate quantiles collapse.
  static GroupSpec fcs_quantiles(std::vector<double> values);

  std::size_t num_bins() const { return edges.size() + 1; }
  std::size_t bin_of(double value) const;
  std::string bin_label(std::size_t bin) const;
  void validate() const;
};

/// Per-bin per-method Hits@K over the positives, each still ranked against
/// its full negative set. Empty bins are absent, so proportions sum to 1.
struct GroupBreakdown {
  GroupSpec spec;
  std::vector<std::string> method_names;

  struct Row {
    std::size_t bin;
    std::size_t count;
    double proportion;
    std::vector<double> hits;  // per method
  };
  std::vector<Row> rows;
};

GroupBreakdown group_breakdown(std::span<const double> group_values,
                               const std::vector<std::string>& method_names,
                               const std::vector<std::vector<double>>& pos_scores,
                               const std::vector<NegScores>& neg_scores,
                               const GroupSpec& spec, int k);

/// Hits@K of single heuristics (diagonal) and of raw score sums (cell a,b).
struct CombinationGrid {
  std::vector<std::string> names;
  Matrix hits;
};

CombinationGrid combination_grid(const std::vector<std::string>& names,
                                 const std::vector<std::vector<double>>& pos_scores,
                                 const std::vector<NegScores>& neg_scores, int k);

/// Mean gate weight per expert within each non-empty bin; each row of means
/// sums to 1 within 1e-9.
struct GateWeightBreakdown {
  GroupSpec spec;
  std::vector<std::string> expert_names;

  struct Row {
    std::size_t bin;
    std::size_t count;
    std::vector<double> mean_weights;
  };
  std::vector<Row> rows;
};

GateWeightBreakdown avg_gate_weights_per_group(
    const GateNetwork& gn, std::span<const GateInput> inputs,
    std::span<const double> group_values, const GroupSpec& spec);

}  // namespace linkmoe
