#include "linkmoe/ensembles.hpp"

#include <algorithm>
#include <numeric>

#include "linkmoe/eval.hpp"

namespace linkmoe {

std::vector<double> mean_ensemble(const ScoreMatrix& scores) {
  const std::size_t m = scores.num_experts();
  if (m == 0) {
    throw Error(ErrorCode::EmptyRegistry, "mean ensemble needs experts");
  }
  std::vector<double> out(scores.num_pairs(), 0.0);
  for (std::size_t o = 0; o < m; ++o) {
    auto row = scores.expert_row(o);
    for (std::size_t t = 0; t < out.size(); ++t) out[t] += row[t];
  }
  const double inv = 1.0 / static_cast<double>(m);
  for (double& v : out) v *= inv;
  return out;
}

void GlobalEnsembleTrainConfig::validate() const {
  if (lr < 0.0 || weight_decay < 0.0 || batch_size < 1 || max_epochs < 1 ||
      patience < 1) {
    throw Error(ErrorCode::BadConfig, "bad global-ensemble hyperparameters");
  }
}

double global_ensemble_logit(const GlobalWeights& w,
                             std::span<const double> score_column) {
  if (w.w.size() != score_column.size()) {
    throw Error(ErrorCode::DimMismatch,
                std::to_string(w.w.size()) + " weights vs column of " +
                    std::to_string(score_column.size()));
  }
  double z = 0.0;
  for (std::size_t o = 0; o < w.w.size(); ++o) z += w.w[o] * score_column[o];
  return z;
}

std::vector<double> global_ensemble_predict(const GlobalWeights& w,
                                            const ScoreMatrix& scores) {
  if (w.w.size() != scores.num_experts()) {
    throw Error(ErrorCode::DimMismatch,
                std::to_string(w.w.size()) + " weights vs " +
                    std::to_string(scores.num_experts()) + " experts");
  }
  std::vector<double> out(scores.num_pairs());
  for (std::size_t t = 0; t < out.size(); ++t) {
    double z = 0.0;
    for (std::size_t o = 0; o < w.w.size(); ++o) z += w.w[o] * scores.scores(o, t);
    out[t] = sigmoid(z);
  }
  return out;
}

namespace {

double ensemble_val_mrr(
    const GlobalWeights& w,
    const std::vector<std::vector<double>>& val_pos_scores, NegMode val_mode,
    const std::vector<std::vector<double>>& val_neg_scores,
    const std::vector<std::vector<std::vector<double>>>& val_perpos_scores) {
  std::vector<double> pos(val_pos_scores.size());
  for (std::size_t i = 0; i < pos.size(); ++i) {
    pos[i] = global_ensemble_logit(w, val_pos_scores[i]);
  }
  NegScores negs;
  negs.mode = val_mode;
  if (val_mode == NegMode::Shared) {
    negs.shared.resize(val_neg_scores.size());
    for (std::size_t i = 0; i < negs.shared.size(); ++i) {
      negs.shared[i] = global_ensemble_logit(w, val_neg_scores[i]);
    }
  } else {
    for (const auto& list : val_perpos_scores) {
      std::vector<double> vals(list.size());
      for (std::size_t j = 0; j < vals.size(); ++j) {
        vals[j] = global_ensemble_logit(w, list[j]);
      }
      negs.per_pos.push_back(std::move(vals));
    }
  }
  const int ks[] = {1};
  return evaluate(pos, negs, ks).mrr;
}

}  // namespace

GlobalEnsembleResult train_global_ensemble(
    const std::vector<std::vector<double>>& train_scores,
    std::span<const double> train_labels,
    const std::vector<std::vector<double>>& val_pos_scores, NegMode val_mode,
    const std::vector<std::vector<double>>& val_neg_scores,
    const std::vector<std::vector<std::vector<double>>>& val_perpos_scores,
    const GlobalEnsembleTrainConfig& cfg, Rng& rng) {
  cfg.validate();
  if (train_scores.size() != train_labels.size()) {
    throw Error(ErrorCode::DimMismatch,
                std::to_string(train_scores.size()) + " score columns vs " +
                    std::to_string(train_labels.size()) + " labels");
  }
  if (train_scores.empty()) {
    throw Error(ErrorCode::EmptyPositives, "no training examples");
  }
  const std::size_t m = train_scores.front().size();
  if (m == 0) {
    throw Error(ErrorCode::EmptyRegistry, "score columns are empty");
  }
  bool has_pos = false, has_neg = false;
  for (double y : train_labels) (y > 0.5 ? has_pos : has_neg) = true;
  if (!has_pos) throw Error(ErrorCode::EmptyPositives, "no positive labels");
  if (!has_neg) throw Error(ErrorCode::NoNegatives, "no negative labels");
  if (val_pos_scores.empty()) {
    throw Error(ErrorCode::EmptySplit, "no validation positives");
  }

  GlobalEnsembleResult result;
  result.weights.w.assign(m, 0.0);
  ParamRefs refs;
  refs.add(result.weights.w);
  AdamState adam = AdamState::init(
      {cfg.lr, 0.9, 0.999, 1e-8, cfg.weight_decay}, refs.size());

  GlobalWeights best = result.weights;
  result.best_val_mrr = -1.0;
  int epochs_since_best = 0;

  std::vector<std::size_t> order(train_labels.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::vector<double> grad(m);

  for (int epoch = 1; epoch <= cfg.max_epochs; ++epoch) {
    rng.shuffle(order);
    for (std::size_t start = 0; start < order.size();
         start += static_cast<std::size_t>(cfg.batch_size)) {
      std::size_t stop = std::min(
          order.size(), start + static_cast<std::size_t>(cfg.batch_size));
      std::fill(grad.begin(), grad.end(), 0.0);
      const double inv = 1.0 / static_cast<double>(stop - start);
      for (std::size_t k = start; k < stop; ++k) {
        const auto& col = train_scores[order[k]];
        if (col.size() != m) {
          throw Error(ErrorCode::DimMismatch, "ragged score column");
        }
        double z = global_ensemble_logit(result.weights, col);
        auto bce = bce_with_logits(z, train_labels[order[k]]);
        for (std::size_t o = 0; o < m; ++o) {
          grad[o] += bce.d_logit * col[o] * inv;
        }
      }
      adam_step(adam, refs, grad);
    }
    const double val_mrr = ensemble_val_mrr(
        result.weights, val_pos_scores, val_mode, val_neg_scores,
        val_perpos_scores);
    result.val_mrr_history.push_back(val_mrr);
    if (val_mrr > result.best_val_mrr) {
      result.best_val_mrr = val_mrr;
      result.best_epoch = epoch;
      best = result.weights;
      epochs_since_best = 0;
    } else if (++epochs_since_best >= cfg.patience) {
      break;
    }
  }
  result.weights = best;
  return result;
}

}  // namespace linkmoe
