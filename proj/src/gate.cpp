#include "linkmoe/gate.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "linkmoe/eval.hpp"

namespace linkmoe {

namespace {

constexpr std::string_view kModeNames[] = {"all", "only-struct", "only-feat",
                                           "only-local", "only-global"};

std::vector<double> gather(std::span<const double> row,
                           std::span<const std::size_t> cols) {
  std::vector<double> out(cols.size());
  for (std::size_t k = 0; k < cols.size(); ++k) out[k] = row[cols[k]];
  return out;
}

std::vector<std::size_t> branch_dims(std::size_t in, int hidden, int layers) {
  std::vector<std::size_t> dims{in};
  for (int l = 0; l < layers; ++l) dims.push_back(static_cast<std::size_t>(hidden));
  return dims;
}

}  // namespace

std::string_view gate_mode_name(GateMode mode) {
  return kModeNames[static_cast<std::size_t>(mode)];
}

GateMode parse_gate_mode(std::string_view name) {
  for (std::size_t i = 0; i < std::size(kModeNames); ++i) {
    if (name == kModeNames[i]) return static_cast<GateMode>(i);
  }
  throw Error(ErrorCode::BadConfig,
              "unknown gate mode '" + std::string(name) +
                  "' (all, only-struct, only-feat, only-local, only-global)");
}

std::vector<std::size_t> active_struct_columns(GateMode mode) {
  // Column order: deg_sum, deg_absdiff, cn, aa, ra, sp_score, katz, ppr_sym.
  switch (mode) {
    case GateMode::All:
    case GateMode::OnlyStruct:
      return {0, 1, 2, 3, 4, 5, 6, 7};
    case GateMode::OnlyFeat:
      return {};
    case GateMode::OnlyLocalStruct:
      return {0, 1, 2, 3, 4};
    case GateMode::OnlyGlobalStruct:
      return {0, 1, 5, 6, 7};
  }
  return {};
}

Standardizer Standardizer::fit(const Matrix& rows) {
  if (rows.rows == 0) {
    throw Error(ErrorCode::EmptySplit, "cannot standardize zero rows");
  }
  Standardizer s;
  s.mean.assign(rows.cols, 0.0);
  s.stdev.assign(rows.cols, 0.0);
  const double inv = 1.0 / static_cast<double>(rows.rows);
  for (std::size_t r = 0; r < rows.rows; ++r) {
    auto row = rows.row(r);
    for (std::size_t c = 0; c < rows.cols; ++c) s.mean[c] += row[c];
  }
  for (double& m : s.mean) m *= inv;
  for (std::size_t r = 0; r < rows.rows; ++r) {
    auto row = rows.row(r);
    for (std::size_t c = 0; c < rows.cols; ++c) {
      const double d = row[c] - s.mean[c];
      s.stdev[c] += d * d;
    }
  }
  for (double& v : s.stdev) v = std::max(std::sqrt(v * inv), 1e-8);
  return s;
}

std::vector<double> Standardizer::apply(std::span<const double> row) const {
  if (row.size() != mean.size()) {
    throw Error(ErrorCode::DimMismatch,
                "standardizer fit on " + std::to_string(mean.size()) +
                    " columns, applied to " + std::to_string(row.size()));
  }
  std::vector<double> out(row.size());
  for (std::size_t c = 0; c < row.size(); ++c) {
    out[c] = (row[c] - mean[c]) / stdev[c];
  }
  return out;
}

GateGrads GateGrads::zeros_like(const GateNetwork& gn) {
  GateGrads g;
  if (!gn.struct_branch.empty()) g.struct_grads = MlpGrads::zeros_like(gn.struct_branch);
  if (!gn.feat_branch.empty()) g.feat_grads = MlpGrads::zeros_like(gn.feat_branch);
  g.fusion_grads = MlpGrads::zeros_like(gn.fusion_head);
  return g;
}

std::vector<double> gate_forward(const GateNetwork& gn, const GateInput& input,
                                 bool train_mode, Rng* rng, GateTape* tape) {
  if (gn.uses_struct() && input.structural.size() != kStructuralDim) {
    throw Error(ErrorCode::ModeInputMismatch,
                "mode " + std::string(gate_mode_name(gn.mode)) +
                    " needs the structural vector");
  }
  if (gn.uses_feature() && input.feature.empty()) {
    throw Error(ErrorCode::ModeInputMismatch,
                "mode " + std::string(gate_mode_name(gn.mode)) +
                    " needs a pair feature");
  }

  std::vector<double> concat;
  GateTape local;
  GateTape& t = tape ? *tape : local;
  if (gn.uses_struct()) {
    auto cols = active_struct_columns(gn.mode);
    auto s = gather(input.structural, cols);
    auto u = mlp_forward(gn.struct_branch, s, train_mode, rng, &t.struct_tape);
    concat.insert(concat.end(), u.begin(), u.end());
  }
  if (gn.uses_feature()) {
    auto v = mlp_forward(gn.feat_branch, input.feature, train_mode, rng,
                         &t.feat_tape);
    concat.insert(concat.end(), v.begin(), v.end());
  }
  auto logits = mlp_forward(gn.fusion_head, concat, train_mode, rng,
                            &t.fusion_tape);
  auto weights = softmax(logits);
  t.concat = std::move(concat);
  t.weights = weights;
  return weights;
}

void gate_backward(const GateNetwork& gn, const GateTape& tape,
                   std::span<const double> d_fusion_logits, GateGrads& grads) {
  auto d_concat =
      mlp_backward(gn.fusion_head, tape.fusion_tape, d_fusion_logits,
                   grads.fusion_grads);
  std::size_t offset = 0;
  if (gn.uses_struct()) {
    const std::size_t w = gn.struct_branch.out_dim();
    mlp_backward(gn.struct_branch, tape.struct_tape,
                 std::span<const double>(d_concat).subspan(offset, w),
                 grads.struct_grads);
    offset += w;
  }
  if (gn.uses_feature()) {
    const std::size_t w = gn.feat_branch.out_dim();
    mlp_backward(gn.feat_branch, tape.feat_tape,
                 std::span<const double>(d_concat).subspan(offset, w),
                 grads.feat_grads);
  }
}

double moe_logit(const GateNetwork& gn, std::span<const double> scores,
                 const GateInput& input) {
  if (scores.size() != gn.num_experts) {
    throw Error(ErrorCode::DimMismatch,
                "score column length " + std::to_string(scores.size()) +
                    " vs " + std::to_string(gn.num_experts) + " experts");
  }
  auto weights = gate_forward(gn, input, false, nullptr);
  double z = 0.0;
  for (std::size_t o = 0; o < weights.size(); ++o) z += weights[o] * scores[o];
  return z;
}

double moe_predict(const GateNetwork& gn, std::span<const double> scores,
                   const GateInput& input) {
  return sigmoid(moe_logit(gn, scores, input));
}

GateSplit split_validation(std::span<const Pair> valid_pos,
                           const NegativeSet& valid_neg, double ratio,
                           std::uint64_t seed) {
  if (!(ratio > 0.0 && ratio < 1.0)) {
    throw Error(ErrorCode::BadConfig, "split ratio must be in (0,1)");
  }
  const std::size_t n = valid_pos.size();
  const auto n_train =
      static_cast<std::size_t>(std::floor(ratio * static_cast<double>(n) + 1e-9));
  if (n_train == 0 || n_train == n) {
    throw Error(ErrorCode::EmptySplit,
                "ratio " + std::to_string(ratio) + " of " + std::to_string(n) +
                    " positives leaves one side empty");
  }
  if (valid_neg.mode == NegMode::PerPositive &&
      valid_neg.per_pos_pairs.size() != n) {
    throw Error(ErrorCode::NegCountMismatch,
                std::to_string(valid_neg.per_pos_pairs.size()) +
                    " negative lists for " + std::to_string(n) + " positives");
  }

  Rng base(seed);
  Rng pos_rng = base.fork("pos");
  std::vector<std::size_t> perm(n);
  std::iota(perm.begin(), perm.end(), std::size_t{0});
  pos_rng.shuffle(perm);

  GateSplit out;
  out.train_neg.mode = valid_neg.mode;
  out.val_neg.mode = valid_neg.mode;
  for (std::size_t k = 0; k < n; ++k) {
    const bool to_train = k < n_train;
    auto& pos = to_train ? out.train_pos : out.val_pos;
    pos.push_back(valid_pos[perm[k]]);
    if (valid_neg.mode == NegMode::PerPositive) {
      auto& negs = to_train ? out.train_neg.per_pos_pairs
                            : out.val_neg.per_pos_pairs;
      negs.push_back(valid_neg.per_pos_pairs[perm[k]]);
    }
  }
  if (valid_neg.mode == NegMode::Shared) {
    const std::size_t nn = valid_neg.shared_pairs.size();
    const auto nn_train = static_cast<std::size_t>(
        std::floor(ratio * static_cast<double>(nn) + 1e-9));
    if (nn_train == 0 || nn_train == nn) {
      throw Error(ErrorCode::EmptySplit,
                  "ratio " + std::to_string(ratio) + " of " +
                      std::to_string(nn) + " negatives leaves one side empty");
    }
    Rng neg_rng = base.fork("neg");
    std::vector<std::size_t> nperm(nn);
    std::iota(nperm.begin(), nperm.end(), std::size_t{0});
    neg_rng.shuffle(nperm);
    for (std::size_t k = 0; k < nn; ++k) {
      auto& negs = k < nn_train ? out.train_neg.shared_pairs
                                : out.val_neg.shared_pairs;
      negs.push_back(valid_neg.shared_pairs[nperm[k]]);
    }
  }
  return out;
}

void GateTrainConfig::validate() const {
  if (lr < 0.0 || dropout < 0.0 || dropout >= 1.0 || weight_decay < 0.0 ||
      layers < 1 || hidden_dim < 1 || fusion_layers < 1 || batch_size < 1 ||
      max_epochs < 1 || patience < 1) {
    throw Error(ErrorCode::BadConfig, "bad gate training hyperparameters");
  }
  if (!(split_ratio > 0.0 && split_ratio < 1.0)) {
    throw Error(ErrorCode::BadConfig, "split ratio must be in (0,1)");
  }
}

GateDataset build_gate_dataset(const Graph& g, const FeatureMatrix* features,
                               const ExpertRegistry& registry,
                               const GateSplit& split,
                               const HeuristicConfig& cfg, GateMode mode,
                               bool normalize_scores, int threads) {
  GateDataset data;
  data.mode = mode;
  data.heuristics = cfg;
  data.expert_names = registry.names();
  const bool wants_feature =
      mode == GateMode::All || mode == GateMode::OnlyFeat;
  if (wants_feature && (features == nullptr || features->dim() == 0)) {
    throw Error(ErrorCode::ModeInputMismatch,
                "mode " + std::string(gate_mode_name(mode)) +
                    " needs node features");
  }
  data.feature_dim = wants_feature ? features->dim() : 0;

  // Gate-train block: positives then negatives, flat with labels.
  std::vector<Pair> train_pairs(split.train_pos.begin(), split.train_pos.end());
  std::vector<double> labels(train_pairs.size(), 1.0);
  if (split.train_neg.mode == NegMode::Shared) {
    for (Pair p : split.train_neg.shared_pairs) {
      train_pairs.push_back(p);
      labels.push_back(0.0);
    }
  } else {
    for (const auto& list : split.train_neg.per_pos_pairs) {
      for (Pair p : list) {
        train_pairs.push_back(p);
        labels.push_back(0.0);
      }
    }
  }
  if (split.train_pos.empty()) {
    throw Error(ErrorCode::EmptyPositives, "gate-train split has no positives");
  }
  if (train_pairs.size() == split.train_pos.size()) {
    throw Error(ErrorCode::NoNegatives, "gate-train split has no negatives");
  }

  Matrix train_struct = batch_structural(g, cfg, train_pairs, threads);
  ScoreMatrix train_scores =
      score_pairs(registry, g, features, train_pairs, cfg, threads);
  data.standardizer = Standardizer::fit(train_struct);
  data.normalize_scores = normalize_scores;
  if (normalize_scores) {
    data.score_norm = ScoreNormalizer::fit(train_scores);
    data.score_norm.apply(train_scores);
  }

  auto make_input = [&](Pair p, std::span<const double> struct_row) {
    GateInput in;
    in.structural = data.standardizer.apply(struct_row);
    if (wants_feature) in.feature = pair_feature(*features, p.first, p.second);
    return in;
  };

  data.train_inputs.reserve(train_pairs.size());
  data.train_scores.reserve(train_pairs.size());
  for (std::size_t t = 0; t < train_pairs.size(); ++t) {
    data.train_inputs.push_back(make_input(train_pairs[t], train_struct.row(t)));
    data.train_scores.push_back(train_scores.column(t));
  }
  data.train_labels = std::move(labels);

  // Gate-val block, kept in ranking layout for MRR-based early stopping.
  if (split.val_pos.empty()) {
    throw Error(ErrorCode::EmptySplit, "gate-val split has no positives");
  }
  data.val_mode = split.val_neg.mode;
  std::vector<Pair> val_pairs(split.val_pos.begin(), split.val_pos.end());
  std::vector<std::size_t> neg_list_ends;
  if (split.val_neg.mode == NegMode::Shared) {
    if (split.val_neg.shared_pairs.empty()) {
      throw Error(ErrorCode::EmptyNegatives, "gate-val split has no negatives");
    }
    val_pairs.insert(val_pairs.end(), split.val_neg.shared_pairs.begin(),
                     split.val_neg.shared_pairs.end());
  } else {
    for (const auto& list : split.val_neg.per_pos_pairs) {
      if (list.empty()) {
        throw Error(ErrorCode::EmptyNegatives,
                    "a gate-val positive has no negatives");
      }
      val_pairs.insert(val_pairs.end(), list.begin(), list.end());
      neg_list_ends.push_back(val_pairs.size());
    }
  }

  Matrix val_struct = batch_structural(g, cfg, val_pairs, threads);
  ScoreMatrix val_scores =
      score_pairs(registry, g, features, val_pairs, cfg, threads);
  if (normalize_scores) data.score_norm.apply(val_scores);

  const std::size_t n_pos = split.val_pos.size();
  for (std::size_t t = 0; t < n_pos; ++t) {
    data.val_pos_inputs.push_back(make_input(val_pairs[t], val_struct.row(t)));
    data.val_pos_scores.push_back(val_scores.column(t));
  }
  if (split.val_neg.mode == NegMode::Shared) {
    for (std::size_t t = n_pos; t < val_pairs.size(); ++t) {
      data.val_neg_inputs.push_back(make_input(val_pairs[t], val_struct.row(t)));
      data.val_neg_scores.push_back(val_scores.column(t));
    }
  } else {
    std::size_t start = n_pos;
    for (std::size_t end : neg_list_ends) {
      std::vector<GateInput> inputs;
      std::vector<std::vector<double>> cols;
      for (std::size_t t = start; t < end; ++t) {
        inputs.push_back(make_input(val_pairs[t], val_struct.row(t)));
        cols.push_back(val_scores.column(t));
      }
      data.val_perpos_inputs.push_back(std::move(inputs));
      data.val_perpos_scores.push_back(std::move(cols));
      start = end;
    }
  }
  return data;
}

namespace {

/// Gate-val MRR of the current parameters; scoring uses the raw mixing
/// logit, which ranks identically to the sigmoid.
double gate_val_mrr(const GateNetwork& gn, const GateDataset& data) {
  std::vector<double> pos(data.val_pos_inputs.size());
  for (std::size_t i = 0; i < pos.size(); ++i) {
    pos[i] = moe_logit(gn, data.val_pos_scores[i], data.val_pos_inputs[i]);
  }
  NegScores negs;
  negs.mode = data.val_mode;
  if (data.val_mode == NegMode::Shared) {
    negs.shared.resize(data.val_neg_inputs.size());
    for (std::size_t i = 0; i < negs.shared.size(); ++i) {
      negs.shared[i] =
          moe_logit(gn, data.val_neg_scores[i], data.val_neg_inputs[i]);
    }
  } else {
    for (std::size_t i = 0; i < data.val_perpos_inputs.size(); ++i) {
      std::vector<double> list(data.val_perpos_inputs[i].size());
      for (std::size_t j = 0; j < list.size(); ++j) {
        list[j] = moe_logit(gn, data.val_perpos_scores[i][j],
                            data.val_perpos_inputs[i][j]);
      }
      negs.per_pos.push_back(std::move(list));
    }
  }
  const int ks[] = {1};
  return evaluate(pos, negs, ks).mrr;
}

void flatten_gate_grads(const GateNetwork& gn, const GateGrads& g,
                        std::vector<double>& out) {
  out.clear();
  if (!gn.struct_branch.empty()) flatten_grads(g.struct_grads, out);
  if (!gn.feat_branch.empty()) flatten_grads(g.feat_grads, out);
  flatten_grads(g.fusion_grads, out);
}

}  // namespace

GateTrainResult train_gate(const GateDataset& data, const GateTrainConfig& cfg,
                           Rng& rng) {
  cfg.validate();
  const std::size_t m = data.expert_names.size();
  if (m == 0) {
    throw Error(ErrorCode::EmptyRegistry, "gate needs at least one expert");
  }
  bool has_pos = false, has_neg = false;
  for (double y : data.train_labels) (y > 0.5 ? has_pos : has_neg) = true;
  if (!has_pos) throw Error(ErrorCode::EmptyPositives, "no positive labels");
  if (!has_neg) throw Error(ErrorCode::NoNegatives, "no negative labels");

  GateNetwork gn;
  gn.mode = data.mode;
  gn.num_experts = m;
  gn.expert_names = data.expert_names;
  gn.heuristics = data.heuristics;
  gn.standardizer = data.standardizer;
  gn.feature_dim = data.feature_dim;
  gn.normalize_scores = data.normalize_scores;
  gn.score_norm = data.score_norm;

  std::size_t concat_dim = 0;
  if (gn.uses_struct()) {
    auto dims = branch_dims(active_struct_columns(data.mode).size(),
                            cfg.hidden_dim, cfg.layers);
    gn.struct_branch = MlpParams::init(dims, cfg.dropout, rng);
    concat_dim += gn.struct_branch.out_dim();
  }
  if (gn.uses_feature()) {
    auto dims = branch_dims(data.feature_dim, cfg.hidden_dim, cfg.layers);
    gn.feat_branch = MlpParams::init(dims, cfg.dropout, rng);
    concat_dim += gn.feat_branch.out_dim();
  }
  std::vector<std::size_t> fusion_dims{concat_dim};
  for (int l = 1; l < cfg.fusion_layers; ++l) {
    fusion_dims.push_back(static_cast<std::size_t>(cfg.hidden_dim));
  }
  fusion_dims.push_back(m);
  gn.fusion_head = MlpParams::init(fusion_dims, cfg.dropout, rng);

  ParamRefs refs;
  if (!gn.struct_branch.empty()) refs.add(gn.struct_branch);
  if (!gn.feat_branch.empty()) refs.add(gn.feat_branch);
  refs.add(gn.fusion_head);
  AdamState adam = AdamState::init(
      {cfg.lr, 0.9, 0.999, 1e-8, cfg.weight_decay}, refs.size());

  GateTrainResult result;
  result.net = gn;
  result.best_val_mrr = -1.0;
  int epochs_since_best = 0;

  std::vector<std::size_t> order(data.train_labels.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::vector<double> flat;
  std::vector<double> d_logits(m);

  for (int epoch = 1; epoch <= cfg.max_epochs; ++epoch) {
    rng.shuffle(order);
    double loss_sum = 0.0;
    for (std::size_t start = 0; start < order.size();
         start += static_cast<std::size_t>(cfg.batch_size)) {
      std::size_t stop = std::min(
          order.size(), start + static_cast<std::size_t>(cfg.batch_size));
      GateGrads grads = GateGrads::zeros_like(gn);
      const double inv = 1.0 / static_cast<double>(stop - start);
      for (std::size_t k = start; k < stop; ++k) {
        const std::size_t idx = order[k];
        GateTape tape;
        auto weights =
            gate_forward(gn, data.train_inputs[idx], true, &rng, &tape);
        const auto& scores = data.train_scores[idx];
        double z = 0.0;
        for (std::size_t o = 0; o < m; ++o) z += weights[o] * scores[o];
        auto bce = bce_with_logits(z, data.train_labels[idx]);
        loss_sum += bce.loss;
        for (std::size_t o = 0; o < m; ++o) {
          d_logits[o] = bce.d_logit * weights[o] * (scores[o] - z) * inv;
        }
        gate_backward(gn, tape, d_logits, grads);
      }
      flatten_gate_grads(gn, grads, flat);
      adam_step(adam, refs, flat);
    }
    const double train_loss = loss_sum / static_cast<double>(order.size());
    const double val_mrr = gate_val_mrr(gn, data);
    result.history.push_back({epoch, train_loss, val_mrr});
    if (val_mrr > result.best_val_mrr) {
      result.best_val_mrr = val_mrr;
      result.best_epoch = epoch;
      result.net = gn;
      epochs_since_best = 0;
    } else if (++epochs_since_best >= cfg.patience) {
      break;
    }
  }
  return result;
}

std::vector<double> predict_pairs(const GateNetwork& gn,
                                  const ExpertRegistry& registry, const Graph& g,
                                  const FeatureMatrix* features,
                                  std::span<const Pair> pairs, int threads) {
  if (registry.names() != gn.expert_names) {
    std::string listed;
    for (const auto& n : gn.expert_names) {
      if (!listed.empty()) listed += ", ";
      listed += n;
    }
    throw Error(ErrorCode::BadConfig,
                "registered experts do not match the checkpoint (expected: " +
                    listed + ")");
  }
  if (gn.uses_feature()) {
    if (features == nullptr || features->dim() == 0) {
      throw Error(ErrorCode::ModeInputMismatch,
                  "checkpoint mode " + std::string(gate_mode_name(gn.mode)) +
                      " needs node features");
    }
    if (features->dim() != gn.feature_dim) {
      throw Error(ErrorCode::DimMismatch,
                  "feature dim " + std::to_string(features->dim()) +
                      " vs checkpoint " + std::to_string(gn.feature_dim));
    }
  }

  Matrix structural = batch_structural(g, gn.heuristics, pairs, threads);
  ScoreMatrix scores =
      score_pairs(registry, g, features, pairs, gn.heuristics, threads);
  if (gn.normalize_scores) gn.score_norm.apply(scores);

  std::vector<double> out(pairs.size());
  parallel_for(pairs.size(), resolve_threads(threads),
               [&](std::size_t lo, std::size_t hi, int) {
                 for (std::size_t t = lo; t < hi; ++t) {
                   GateInput input;
                   input.structural = gn.standardizer.apply(structural.row(t));
                   if (gn.uses_feature()) {
                     input.feature = pair_feature(*features, pairs[t].first,
                                                  pairs[t].second);
                   }
                   out[t] = moe_predict(gn, scores.column(t), input);
                 }
               });
  return out;
}

}  // namespace linkmoe
