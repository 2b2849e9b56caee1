#pragma once

#include <filesystem>
#include <memory>
#include <string>
#include <unordered_map>
#include <vector>

#include "linkmoe/graph.hpp"
#include "linkmoe/heuristics.hpp"
#include "linkmoe/nn.hpp"

namespace linkmoe {

enum class ExpertKind { Heuristic, FeatureMlp, External };

enum class HeuristicExpert { CN, AA, RA, SP, Katz, PPR, FCS };

/// Raw scores of one external model, keyed by canonical (min,max) pair.
struct ScoreTable {
  std::unordered_map<std::uint64_t, double> entries;

  bool lookup(Pair p, double& out) const {
    auto it = entries.find(pack_pair(p));
    if (it == entries.end()) return false;
    out = it->second;
    return true;
  }
};

/// Parses "u v score" lines ('#' comments ignored) into a canonicalized
/// table. A pair listed twice with differing scores is an error.
ScoreTable load_score_table(const std::filesystem::path& path);

/// MLP scoring a pair via the elementwise product of its feature rows;
/// emits raw logits.
struct FeatureMlpExpert {
  MlpParams net;
  std::size_t feature_dim = 0;

  double score(const FeatureMatrix& f, Pair p) const;
};

struct MlpExpertTrainConfig {
  double lr = 1e-3;
  double dropout = 0.0;
  double weight_decay = 0.0;
  int layers = 2;
  int hidden_dim = 64;
  int epochs = 50;
  int batch_size = 512;
};

/// Trains the built-in feature expert with BCE on train_pos against non-edge
/// negatives of g, resampled uniformly 1:1 each epoch. Deterministic for a
/// fixed rng seed.
FeatureMlpExpert train_feature_mlp_expert(const Graph& g,
                                          const FeatureMatrix& features,
                                          std::span<const Pair> train_pos,
                                          Rng& rng,
                                          const MlpExpertTrainConfig& cfg);

struct Expert {
  std::string name;
  ExpertKind kind = ExpertKind::Heuristic;
  HeuristicExpert heuristic = HeuristicExpert::CN;
  std::shared_ptr<const FeatureMlpExpert> mlp;
  std::shared_ptr<const ScoreTable> table;
};

/// Parsed form of one --expert declaration:
///   cn | aa | ra | sp | katz | ppr | fcs
///   mlp=<checkpoint>            (at most one)
///   external:<name>=<scorefile>
struct ExpertDecl {
  std::string name;
  ExpertKind kind = ExpertKind::Heuristic;
  HeuristicExpert heuristic = HeuristicExpert::CN;
  std::filesystem::path path;
};

ExpertDecl parse_expert_decl(const std::string& decl);

class ExpertRegistry {
public:
  void add(Expert expert);
  std::size_t size() const { return experts_.size(); }
  const std::vector<Expert>& experts() const { return experts_; }
  std::vector<std::string> names() const;
  const Expert* find(const std::string& name) const;

private:
  std::vector<Expert> experts_;
};

/// Builds a registry from declarations, loading score tables and the MLP
/// checkpoint from disk. Duplicate names and unknown heuristics are errors.
ExpertRegistry register_experts(std::span<const ExpertDecl> decls);

/// experts x pairs table of raw scores; no missing entries by construction.
struct ScoreMatrix {
  std::vector<std::string> expert_ids;
  std::vector<Pair> pairs;
  Matrix scores;  // m x pairs.size()

  std::size_t num_experts() const { return expert_ids.size(); }
  std::size_t num_pairs() const { return pairs.size(); }
  std::span<const double> expert_row(std::size_t o) const { return scores.row(o); }
  std::vector<double> column(std::size_t c) const;
};

/// Scores every pair with every registered expert; column order follows the
/// input pair order. External experts must cover every pair.
ScoreMatrix score_pairs(const ExpertRegistry& registry, const Graph& g,
                        const FeatureMatrix* features,
                        std::span<const Pair> pairs, const HeuristicConfig& cfg,
                        int threads = 0);

/// Optional per-expert z-scoring (off by default): fit on one score matrix,
/// apply to any matrix with the same expert rows.
struct ScoreNormalizer {
  std::vector<double> mean;
  std::vector<double> stdev;

  static ScoreNormalizer fit(const ScoreMatrix& m);
  void apply(ScoreMatrix& m) const;
};

}  // namespace linkmoe
