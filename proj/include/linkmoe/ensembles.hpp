#pragma once

#include <vector>

#include "linkmoe/experts.hpp"
#include "linkmoe/nn.hpp"

namespace linkmoe {

/// Per-pair arithmetic mean over the expert rows; raw scores, no sigmoid.
std::vector<double> mean_ensemble(const ScoreMatrix& scores);

/// One unconstrained weight per expert, shared by every pair.
struct GlobalWeights {
  std::vector<double> w;
};

struct GlobalEnsembleTrainConfig {
  double lr = 0.01;
  double weight_decay = 0.0;
  int batch_size = 4096;
  int max_epochs = 500;
  int patience = 20;

  void validate() const;
};

struct GlobalEnsembleResult {
  GlobalWeights weights;
  std::vector<double> val_mrr_history;
  int best_epoch = 0;
  double best_val_mrr = 0.0;
};

/// Logistic regression on expert score columns: minimizes BCE of
/// sigmoid(w . column) over w, Adam, early stopping on held-out MRR.
/// Train/val layouts mirror the gate's re-split.
GlobalEnsembleResult train_global_ensemble(
    const std::vector<std::vector<double>>& train_scores,
    std::span<const double> train_labels,
    const std::vector<std::vector<double>>& val_pos_scores,
    NegMode val_mode,
    const std::vector<std::vector<double>>& val_neg_scores,
    const std::vector<std::vector<std::vector<double>>>& val_perpos_scores,
    const GlobalEnsembleTrainConfig& cfg, Rng& rng);

/// w . column per pair, before the sigmoid; ranking-equivalent to the
/// probability.
double global_ensemble_logit(const GlobalWeights& w,
                             std::span<const double> score_column);

/// sigmoid(w . column) per pair, in score-matrix column order.
std::vector<double> global_ensemble_predict(const GlobalWeights& w,
                                            const ScoreMatrix& scores);

}  // namespace linkmoe
