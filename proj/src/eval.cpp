#include "linkmoe/eval.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>

namespace linkmoe {

namespace {

std::string short_number(double v) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%.6g", v);
  return buf;
}

void check_neg_layout(std::size_t n_pos, const NegScores& negs) {
  if (negs.mode == NegMode::Shared) {
    if (negs.shared.empty()) {
      throw Error(ErrorCode::EmptyNegatives, "shared negative list is empty");
    }
  } else {
    if (negs.per_pos.size() != n_pos) {
      throw Error(ErrorCode::NegCountMismatch,
                  std::to_string(negs.per_pos.size()) + " negative lists for " +
                      std::to_string(n_pos) + " positives");
    }
    for (const auto& list : negs.per_pos) {
      if (list.empty()) {
        throw Error(ErrorCode::EmptyNegatives,
                    "a positive has an empty negative list");
      }
    }
  }
}

}  // namespace

double rank_of_positive(double pos_score, std::span<const double> neg_scores) {
  std::size_t greater = 0, equal = 0;
  for (double s : neg_scores) {
    if (s > pos_score) {
      ++greater;
    } else if (s == pos_score) {
      ++equal;
    }
  }
  return 1.0 + static_cast<double>(greater) + 0.5 * static_cast<double>(equal);
}

RankingReport evaluate(std::span<const double> pos_scores, const NegScores& negs,
                       std::span<const int> ks) {
  if (pos_scores.empty()) {
    throw Error(ErrorCode::EmptyPositives, "nothing to rank");
  }
  check_neg_layout(pos_scores.size(), negs);

  RankingReport report;
  report.ranks.resize(pos_scores.size());
  double rr_sum = 0.0;
  for (std::size_t i = 0; i < pos_scores.size(); ++i) {
    const double r = rank_of_positive(pos_scores[i], negs.for_positive(i));
    report.ranks[i] = r;
    rr_sum += 1.0 / r;
  }
  report.mrr = rr_sum / static_cast<double>(pos_scores.size());
  for (int k : ks) {
    std::size_t hit = 0;
    for (double r : report.ranks) {
      if (r <= static_cast<double>(k)) ++hit;
    }
    report.hits[k] =
        static_cast<double>(hit) / static_cast<double>(report.ranks.size());
  }
  return report;
}

std::vector<std::size_t> correct_set(const RankingReport& report, double k) {
  std::vector<std::size_t> out;
  for (std::size_t i = 0; i < report.ranks.size(); ++i) {
    if (report.ranks[i] <= k) out.push_back(i);
  }
  return out;
}

double jaccard_overlap(std::span<const std::size_t> a,
                       std::span<const std::size_t> b) {
  if (a.empty() && b.empty()) return 1.0;
  std::size_t i = 0, j = 0, inter = 0, uni = 0;
  while (i < a.size() && j < b.size()) {
    ++uni;
    if (a[i] < b[j]) {
      ++i;
    } else if (a[i] > b[j]) {
      ++j;
    } else {
      ++inter;
      ++i;
      ++j;
    }
  }
  uni += (a.size() - i) + (b.size() - j);
  return static_cast<double>(inter) / static_cast<double>(uni);
}

OverlapMatrix overlap_matrix(const std::vector<std::string>& names,
                             const std::vector<std::vector<double>>& pos_scores,
                             const std::vector<NegScores>& neg_scores, int k) {
  if (names.size() != pos_scores.size() || names.size() != neg_scores.size()) {
    throw Error(ErrorCode::DimMismatch,
                "names, score lists and negative sets must align");
  }
  const int ks[] = {k};
  std::vector<std::vector<std::size_t>> sets;
  sets.reserve(names.size());
  for (std::size_t a = 0; a < names.size(); ++a) {
    auto report = evaluate(pos_scores[a], neg_scores[a], ks);
    sets.push_back(correct_set(report, static_cast<double>(k)));
  }
  OverlapMatrix out;
  out.names = names;
  out.values = Matrix(names.size(), names.size());
  for (std::size_t a = 0; a < names.size(); ++a) {
    for (std::size_t b = 0; b < names.size(); ++b) {
      out.values(a, b) = jaccard_overlap(sets[a], sets[b]);
    }
  }
  return out;
}

std::string_view group_key_name(GroupKey key) {
  switch (key) {
    case GroupKey::CN:
      return "cn";
    case GroupKey::SP:
      return "sp";
    case GroupKey::FCS:
      return "fcs";
  }
  return "cn";
}

GroupKey parse_group_key(std::string_view name) {
  if (name == "cn") return GroupKey::CN;
  if (name == "sp") return GroupKey::SP;
  if (name == "fcs") return GroupKey::FCS;
  throw Error(ErrorCode::BadConfig,
              "unknown group key '" + std::string(name) + "' (cn, sp, fcs)");
}

GroupSpec GroupSpec::cn_default() { return {GroupKey::CN, {1, 3, 10, 30}}; }

GroupSpec GroupSpec::sp_default() { return {GroupKey::SP, {2, 3, 4, 5}}; }

GroupSpec GroupSpec::fcs_quantiles(std::vector<double> values) {
  if (values.empty()) {
    throw Error(ErrorCode::EmptyPositives, "no values to bin");
  }
  std::sort(values.begin(), values.end());
  GroupSpec spec{GroupKey::FCS, {}};
  const std::size_t n = values.size();
  for (int q = 1; q <= 4; ++q) {
    const auto idx = std::min(
        n - 1, static_cast<std::size_t>(0.2 * static_cast<double>(q * n)));
    const double edge = values[idx];
    // Equal quantiles collapse into fewer bins rather than empty ones.
    if (spec.edges.empty() || edge > spec.edges.back()) {
      spec.edges.push_back(edge);
    }
  }
  return spec;
}

std::size_t GroupSpec::bin_of(double value) const {
  return static_cast<std::size_t>(
      std::upper_bound(edges.begin(), edges.end(), value) - edges.begin());
}

std::string GroupSpec::bin_label(std::size_t bin) const {
  if (edges.empty()) return "all";
  if (bin == 0) return "<" + short_number(edges.front());
  if (bin == edges.size()) return ">=" + short_number(edges.back());
  return "[" + short_number(edges[bin - 1]) + "," + short_number(edges[bin]) +
         ")";
}

void GroupSpec::validate() const {
  for (std::size_t i = 0; i < edges.size(); ++i) {
    if (!std::isfinite(edges[i]) ||
        (i > 0 && !(edges[i] > edges[i - 1]))) {
      throw Error(ErrorCode::BadConfig, "bin edges must be finite and strictly ascending");
    }
  }
}

GroupBreakdown group_breakdown(std::span<const double> group_values,
                               const std::vector<std::string>& method_names,
                               const std::vector<std::vector<double>>& pos_scores,
                               const std::vector<NegScores>& neg_scores,
                               const GroupSpec& spec, int k) {
  spec.validate();
  if (method_names.size() != pos_scores.size() ||
      method_names.size() != neg_scores.size()) {
    throw Error(ErrorCode::DimMismatch, "method names and score lists must align");
  }
  if (method_names.empty()) {
    throw Error(ErrorCode::EmptyRegistry, "no methods to break down");
  }
  const std::size_t n = group_values.size();
  for (const auto& s : pos_scores) {
    if (s.size() != n) {
      throw Error(ErrorCode::DimMismatch, "score list does not cover the positives");
    }
  }

  const int ks[] = {k};
  std::vector<std::vector<double>> ranks;
  ranks.reserve(method_names.size());
  for (std::size_t m = 0; m < method_names.size(); ++m) {
    ranks.push_back(evaluate(pos_scores[m], neg_scores[m], ks).ranks);
  }

  std::vector<std::vector<std::size_t>> members(spec.num_bins());
  for (std::size_t i = 0; i < n; ++i) {
    members[spec.bin_of(group_values[i])].push_back(i);
  }

  GroupBreakdown out;
  out.spec = spec;
  out.method_names = method_names;
  for (std::size_t bin = 0; bin < members.size(); ++bin) {
    if (members[bin].empty()) continue;
    GroupBreakdown::Row row;
    row.bin = bin;
    row.count = members[bin].size();
    row.proportion =
        static_cast<double>(row.count) / static_cast<double>(n);
    for (const auto& method_ranks : ranks) {
      std::size_t hit = 0;
      for (std::size_t i : members[bin]) {
        if (method_ranks[i] <= static_cast<double>(k)) ++hit;
      }
      row.hits.push_back(static_cast<double>(hit) /
                         static_cast<double>(row.count));
    }
    out.rows.push_back(std::move(row));
  }
  return out;
}

CombinationGrid combination_grid(const std::vector<std::string>& names,
                                 const std::vector<std::vector<double>>& pos_scores,
                                 const std::vector<NegScores>& neg_scores,
                                 int k) {
  if (names.size() != pos_scores.size() || names.size() != neg_scores.size()) {
    throw Error(ErrorCode::DimMismatch,
                "names, score lists and negative sets must align");
  }
  if (names.empty()) {
    throw Error(ErrorCode::EmptyRegistry, "no heuristics to combine");
  }
  const std::size_t n_pos = pos_scores.front().size();
  for (const auto& s : pos_scores) {
    if (s.size() != n_pos) {
      throw Error(ErrorCode::DimMismatch, "positive score lists must align");
    }
  }
  const int ks[] = {k};
  auto sum_negs = [](const NegScores& a, const NegScores& b) {
    NegScores out;
    out.mode = a.mode;
    if (a.mode != b.mode) {
      throw Error(ErrorCode::DimMismatch, "negative layouts must match");
    }
    if (a.mode == NegMode::Shared) {
      if (a.shared.size() != b.shared.size()) {
        throw Error(ErrorCode::DimMismatch, "negative lists must align");
      }
      out.shared.resize(a.shared.size());
      for (std::size_t i = 0; i < out.shared.size(); ++i) {
        out.shared[i] = a.shared[i] + b.shared[i];
      }
    } else {
      if (a.per_pos.size() != b.per_pos.size()) {
        throw Error(ErrorCode::DimMismatch, "negative lists must align");
      }
      out.per_pos.resize(a.per_pos.size());
      for (std::size_t i = 0; i < out.per_pos.size(); ++i) {
        if (a.per_pos[i].size() != b.per_pos[i].size()) {
          throw Error(ErrorCode::DimMismatch, "negative lists must align");
        }
        out.per_pos[i].resize(a.per_pos[i].size());
        for (std::size_t j = 0; j < out.per_pos[i].size(); ++j) {
          out.per_pos[i][j] = a.per_pos[i][j] + b.per_pos[i][j];
        }
      }
    }
    return out;
  };

  CombinationGrid grid;
  grid.names = names;
  grid.hits = Matrix(names.size(), names.size());
  for (std::size_t a = 0; a < names.size(); ++a) {
    for (std::size_t b = 0; b < names.size(); ++b) {
      if (a == b) {
        grid.hits(a, b) =
            evaluate(pos_scores[a], neg_scores[a], ks).hits.at(k);
        continue;
      }
      std::vector<double> pos(n_pos);
      for (std::size_t i = 0; i < n_pos; ++i) {
        pos[i] = pos_scores[a][i] + pos_scores[b][i];
      }
      grid.hits(a, b) =
          evaluate(pos, sum_negs(neg_scores[a], neg_scores[b]), ks).hits.at(k);
    }
  }
  return grid;
}

GateWeightBreakdown avg_gate_weights_per_group(
    const GateNetwork& gn, std::span<const GateInput> inputs,
    std::span<const double> group_values, const GroupSpec& spec) {
  spec.validate();
  if (inputs.size() != group_values.size()) {
    throw Error(ErrorCode::DimMismatch, "inputs and group values must align");
  }
  if (inputs.empty()) {
    throw Error(ErrorCode::EmptyPositives, "no pairs to analyze");
  }
  std::vector<std::vector<std::size_t>> members(spec.num_bins());
  for (std::size_t i = 0; i < inputs.size(); ++i) {
    members[spec.bin_of(group_values[i])].push_back(i);
  }
  GateWeightBreakdown out;
  out.spec = spec;
  out.expert_names = gn.expert_names;
  for (std::size_t bin = 0; bin < members.size(); ++bin) {
    if (members[bin].empty()) continue;
    GateWeightBreakdown::Row row;
    row.bin = bin;
    row.count = members[bin].size();
    row.mean_weights.assign(gn.num_experts, 0.0);
    for (std::size_t i : members[bin]) {
      auto weights = gate_forward(gn, inputs[i], false, nullptr);
      for (std::size_t o = 0; o < weights.size(); ++o) {
        row.mean_weights[o] += weights[o];
      }
    }
    for (double& w : row.mean_weights) {
      w /= static_cast<double>(row.count);
    }
    out.rows.push_back(std::move(row));
  }
  return out;
}

}  // namespace linkmoe
