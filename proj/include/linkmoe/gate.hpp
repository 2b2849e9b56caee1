#pragma once

#include <cstdint>
#include <string>
#include <string_view>
#include <vector>

#include "linkmoe/experts.hpp"
#include "linkmoe/graph.hpp"
#include "linkmoe/heuristics.hpp"
#include "linkmoe/nn.hpp"

namespace linkmoe {

enum class GateMode { All, OnlyStruct, OnlyFeat, OnlyLocalStruct, OnlyGlobalStruct };

std::string_view gate_mode_name(GateMode mode);
GateMode parse_gate_mode(std::string_view name);

/// Structural columns visible to the gate in a mode; the two degree columns
/// accompany any structural selection. Empty for OnlyFeat.
std::vector<std::size_t> active_struct_columns(GateMode mode);

/// Per-column z-scoring fit on gate-training pairs.
struct Standardizer {
  std::vector<double> mean;
  std::vector<double> stdev;  // floored at 1e-8

  static Standardizer fit(const Matrix& rows);
  std::vector<double> apply(std::span<const double> row) const;
};

/// One pair as the gate sees it: the standardized structural vector (all
/// kStructuralDim columns; mode selection happens inside the gate) plus the
/// raw pair feature when node features exist.
struct GateInput {
  std::vector<double> structural;
  std::vector<double> feature;
};

struct GateNetwork {
  GateMode mode = GateMode::All;
  std::size_t num_experts = 0;
  std::vector<std::string> expert_names;
  HeuristicConfig heuristics;
  Standardizer standardizer;   // over all kStructuralDim columns
  std::size_t feature_dim = 0; // feature-branch input width; 0 when unused
  MlpParams struct_branch;     // empty iff mode == OnlyFeat
  MlpParams feat_branch;       // empty unless the mode uses features
  MlpParams fusion_head;       // output width = num_experts
  bool normalize_scores = false;
  ScoreNormalizer score_norm;  // meaningful only when normalize_scores

  bool uses_struct() const { return mode != GateMode::OnlyFeat; }
  bool uses_feature() const {
    return mode == GateMode::All || mode == GateMode::OnlyFeat;
  }
};

struct GateTape {
  MlpTape struct_tape;
  MlpTape feat_tape;
  MlpTape fusion_tape;
  std::vector<double> concat;
  std::vector<double> weights;
};

struct GateGrads {
  MlpGrads struct_grads;
  MlpGrads feat_grads;
  MlpGrads fusion_grads;

  static GateGrads zeros_like(const GateNetwork& gn);
};

/// Expert weights for one pair: softmax over the fusion head applied to the
/// concatenated branch embeddings. Positive, sum to 1.
std::vector<double> gate_forward(const GateNetwork& gn, const GateInput& input,
                                 bool train_mode, Rng* rng,
                                 GateTape* tape = nullptr);

/// Reverse pass from the gradient w.r.t. the fusion logits; parameter
/// gradients accumulate into grads.
void gate_backward(const GateNetwork& gn, const GateTape& tape,
                   std::span<const double> d_fusion_logits, GateGrads& grads);

/// Mixing logit: gate weights dotted with the expert score column.
double moe_logit(const GateNetwork& gn, std::span<const double> scores,
                 const GateInput& input);

/// sigmoid(moe_logit): the model's link probability.
double moe_predict(const GateNetwork& gn, std::span<const double> scores,
                   const GateInput& input);

/// Validation re-split: the gate trains on one part of the validation set
/// and early-stops on the rest.
struct GateSplit {
  std::vector<Pair> train_pos;
  std::vector<Pair> val_pos;
  NegativeSet train_neg;
  NegativeSet val_neg;
};

/// Deterministic shuffled partition; ratio = fraction assigned to gate
/// training. SHARED negatives are partitioned the same way; PER_POSITIVE
/// negatives follow their positive.
GateSplit split_validation(std::span<const Pair> valid_pos,
                           const NegativeSet& valid_neg, double ratio,
                           std::uint64_t seed);

struct GateTrainConfig {
  double lr = 1e-3;
  double dropout = 0.0;
  double weight_decay = 0.0;
  int layers = 2;          // hidden depth of each branch
  int hidden_dim = 32;     // branch width and embedding size
  int fusion_layers = 1;   // 1 = single linear map onto the experts
  int batch_size = 4096;
  int max_epochs = 500;
  int patience = 20;       // epochs without a new best val MRR
  double split_ratio = 0.9;
  std::uint64_t seed = 1;

  void validate() const;
};

/// Everything train_gate consumes, precomputed once: standardized inputs,
/// frozen expert score columns, labels, and the gate-val ranking layout.
struct GateDataset {
  GateMode mode = GateMode::OnlyStruct;
  std::vector<std::string> expert_names;
  std::size_t feature_dim = 0;
  HeuristicConfig heuristics;
  Standardizer standardizer;
  bool normalize_scores = false;
  ScoreNormalizer score_norm;

  std::vector<GateInput> train_inputs;
  std::vector<std::vector<double>> train_scores;
  std::vector<double> train_labels;

  std::vector<GateInput> val_pos_inputs;
  std::vector<std::vector<double>> val_pos_scores;
  NegMode val_mode = NegMode::Shared;
  std::vector<GateInput> val_neg_inputs;
  std::vector<std::vector<double>> val_neg_scores;
  std::vector<std::vector<GateInput>> val_perpos_inputs;
  std::vector<std::vector<std::vector<double>>> val_perpos_scores;
};

GateDataset build_gate_dataset(const Graph& g, const FeatureMatrix* features,
                               const ExpertRegistry& registry,
                               const GateSplit& split,
                               const HeuristicConfig& cfg, GateMode mode,
                               bool normalize_scores, int threads = 0);

struct GateHistoryRow {
  int epoch;
  double train_loss;
  double val_mrr;
};

struct GateTrainResult {
  GateNetwork net;  // parameters of the best-on-val epoch
  std::vector<GateHistoryRow> history;
  int best_epoch = 0;
  double best_val_mrr = 0.0;
};

/// Step two of the two-step procedure: expert scores stay frozen; only gate
/// parameters move. Adam on minibatch BCE, early stopping on gate-val MRR.
GateTrainResult train_gate(const GateDataset& data, const GateTrainConfig& cfg,
                           Rng& rng);

/// End-to-end inference: heuristics -> standardize -> gate -> mix -> sigmoid.
/// Registry expert names must match the checkpointed names in order.
std::vector<double> predict_pairs(const GateNetwork& gn,
                                  const ExpertRegistry& registry, const Graph& g,
                                  const FeatureMatrix* features,
                                  std::span<const Pair> pairs, int threads = 0);

}  // namespace linkmoe
