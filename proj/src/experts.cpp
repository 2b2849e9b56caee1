#include "linkmoe/experts.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <limits>
#include <numeric>

#include "linkmoe/checkpoint.hpp"

namespace linkmoe {

namespace {

std::vector<std::string_view> split_ws(std::string_view s) {
  std::vector<std::string_view> out;
  std::size_t i = 0;
  while (i < s.size()) {
    while (i < s.size() && (s[i] == ' ' || s[i] == '\t' || s[i] == '\r')) ++i;
    std::size_t j = i;
    while (j < s.size() && s[j] != ' ' && s[j] != '\t' && s[j] != '\r') ++j;
    if (j > i) out.push_back(s.substr(i, j - i));
    i = j;
  }
  return out;
}

bool is_skippable(std::string_view line) {
  for (char c : line) {
    if (c == ' ' || c == '\t' || c == '\r') continue;
    return c == '#';
  }
  return true;
}

NodeId parse_node(std::string_view tok, std::size_t lineno) {
  std::uint64_t v = 0;
  auto [ptr, ec] = std::from_chars(tok.data(), tok.data() + tok.size(), v);
  if (ec != std::errc{} || ptr != tok.data() + tok.size() ||
      v > std::numeric_limits<NodeId>::max()) {
    throw Error(ErrorCode::MalformedLine, "bad node id '" + std::string(tok) + "'",
                lineno);
  }
  return static_cast<NodeId>(v);
}

double parse_real(std::string_view tok, std::size_t lineno) {
  double v = 0.0;
  auto [ptr, ec] = std::from_chars(tok.data(), tok.data() + tok.size(), v);
  if (ec != std::errc{} || ptr != tok.data() + tok.size()) {
    throw Error(ErrorCode::MalformedLine, "bad number '" + std::string(tok) + "'",
                lineno);
  }
  return v;
}

void check_pair(const Graph& g, Pair p) {
  if (p.first >= g.num_nodes() || p.second >= g.num_nodes()) {
    throw Error(ErrorCode::NodeOutOfRange,
                std::to_string(p.first) + " " + std::to_string(p.second));
  }
  if (p.first == p.second) {
    throw Error(ErrorCode::SelfPair, std::to_string(p.first));
  }
}

}  // namespace

ScoreTable load_score_table(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) {
    throw Error(ErrorCode::MissingFile, path.string());
  }
  ScoreTable table;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (is_skippable(line)) continue;
    auto toks = split_ws(line);
    if (toks.size() != 3) {
      throw Error(ErrorCode::MalformedLine, "expected 'u v score'", lineno);
    }
    NodeId u = parse_node(toks[0], lineno);
    NodeId v = parse_node(toks[1], lineno);
    double s = parse_real(toks[2], lineno);
    if (u == v) {
      throw Error(ErrorCode::SelfPair, std::to_string(u), lineno);
    }
    if (!std::isfinite(s)) {
      throw Error(ErrorCode::NonFiniteScore, std::string(toks[2]), lineno);
    }
    auto [it, inserted] = table.entries.emplace(pack_pair({u, v}), s);
    if (!inserted && it->second != s) {
      throw Error(ErrorCode::ConflictingDuplicate,
                  std::to_string(u) + " " + std::to_string(v), lineno);
    }
  }
  return table;
}

double FeatureMlpExpert::score(const FeatureMatrix& f, Pair p) const {
  if (f.dim() != feature_dim) {
    throw Error(ErrorCode::DimMismatch,
                "feature dim " + std::to_string(f.dim()) + " vs model " +
                    std::to_string(feature_dim));
  }
  auto x = pair_feature(f, p.first, p.second);
  return mlp_forward(net, x, false, nullptr)[0];
}

FeatureMlpExpert train_feature_mlp_expert(const Graph& g,
                                          const FeatureMatrix& features,
                                          std::span<const Pair> train_pos,
                                          Rng& rng,
                                          const MlpExpertTrainConfig& cfg) {
  if (features.num_nodes() == 0 || features.dim() == 0) {
    throw Error(ErrorCode::NoFeatures, "feature expert needs node features");
  }
  if (features.num_nodes() != g.num_nodes()) {
    throw Error(ErrorCode::RowCountMismatch,
                std::to_string(features.num_nodes()) + " feature rows for " +
                    std::to_string(g.num_nodes()) + " nodes");
  }
  if (train_pos.empty()) {
    throw Error(ErrorCode::EmptyPositives, "no training edges");
  }
  if (cfg.layers < 0 || cfg.hidden_dim < 1 || cfg.epochs < 1 ||
      cfg.batch_size < 1 || cfg.lr <= 0.0 || cfg.dropout < 0.0 ||
      cfg.dropout >= 1.0) {
    throw Error(ErrorCode::BadConfig, "bad feature-expert hyperparameters");
  }
  const NodeId n = g.num_nodes();
  if (n < 2 || 2 * g.num_edges() >= static_cast<std::size_t>(n) * (n - 1)) {
    throw Error(ErrorCode::BadConfig, "graph has no non-edges to sample");
  }
  for (Pair p : train_pos) check_pair(g, p);

  std::vector<std::size_t> dims;
  dims.push_back(features.dim());
  for (int l = 0; l < cfg.layers; ++l) {
    dims.push_back(static_cast<std::size_t>(cfg.hidden_dim));
  }
  dims.push_back(1);
  MlpParams net = MlpParams::init(dims, cfg.dropout, rng);
  ParamRefs refs;
  refs.add(net);
  AdamState adam = AdamState::init(
      {cfg.lr, 0.9, 0.999, 1e-8, cfg.weight_decay}, refs.size());

  auto sample_non_edge = [&]() -> Pair {
    for (int attempt = 0; attempt < 100000; ++attempt) {
      auto u = static_cast<NodeId>(rng.next_below(n));
      auto v = static_cast<NodeId>(rng.next_below(n));
      if (u == v || g.has_edge(u, v)) continue;
      return canonical(Pair{u, v});
    }
    throw Error(ErrorCode::BadConfig, "non-edge sampling did not terminate");
  };

  std::vector<std::size_t> order(train_pos.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::vector<double> flat;
  for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
    rng.shuffle(order);
    for (std::size_t start = 0; start < order.size();
         start += static_cast<std::size_t>(cfg.batch_size)) {
      std::size_t stop = std::min(order.size(),
                                  start + static_cast<std::size_t>(cfg.batch_size));
      MlpGrads grads = MlpGrads::zeros_like(net);
      const double inv = 1.0 / static_cast<double>(2 * (stop - start));
      for (std::size_t k = start; k < stop; ++k) {
        const Pair examples[2] = {train_pos[order[k]], sample_non_edge()};
        const double labels[2] = {1.0, 0.0};
        for (int e = 0; e < 2; ++e) {
          auto x = pair_feature(features, examples[e].first, examples[e].second);
          MlpTape tape;
          auto out = mlp_forward(net, x, true, &rng, &tape);
          auto bce = bce_with_logits(out[0], labels[e]);
          const double gout[1] = {bce.d_logit * inv};
          mlp_backward(net, tape, gout, grads);
        }
      }
      flat.clear();
      flatten_grads(grads, flat);
      adam_step(adam, refs, flat);
    }
  }
  return FeatureMlpExpert{std::move(net), features.dim()};
}

ExpertDecl parse_expert_decl(const std::string& decl) {
  static const std::pair<std::string_view, HeuristicExpert> kHeuristics[] = {
      {"cn", HeuristicExpert::CN},     {"aa", HeuristicExpert::AA},
      {"ra", HeuristicExpert::RA},     {"sp", HeuristicExpert::SP},
      {"katz", HeuristicExpert::Katz}, {"ppr", HeuristicExpert::PPR},
      {"fcs", HeuristicExpert::FCS}};
  for (auto [name, kind] : kHeuristics) {
    if (decl == name) {
      return ExpertDecl{std::string(name), ExpertKind::Heuristic, kind, {}};
    }
  }
  if (decl.rfind("mlp=", 0) == 0) {
    std::string path = decl.substr(4);
    if (path.empty()) {
      throw Error(ErrorCode::BadConfig, "mlp expert needs a checkpoint path");
    }
    return ExpertDecl{"mlp", ExpertKind::FeatureMlp, HeuristicExpert::CN, path};
  }
  if (decl.rfind("external:", 0) == 0) {
    std::string rest = decl.substr(9);
    auto eq = rest.find('=');
    if (eq == std::string::npos || eq == 0 || eq + 1 == rest.size()) {
      throw Error(ErrorCode::BadConfig,
                  "external expert must look like external:<name>=<file>");
    }
    return ExpertDecl{rest.substr(0, eq), ExpertKind::External,
                      HeuristicExpert::CN, rest.substr(eq + 1)};
  }
  throw Error(ErrorCode::UnknownHeuristic, decl);
}

void ExpertRegistry::add(Expert expert) {
  if (find(expert.name) != nullptr) {
    throw Error(ErrorCode::DuplicateName, expert.name);
  }
  experts_.push_back(std::move(expert));
}

std::vector<std::string> ExpertRegistry::names() const {
  std::vector<std::string> out;
  out.reserve(experts_.size());
  for (const auto& e : experts_) out.push_back(e.name);
  return out;
}

const Expert* ExpertRegistry::find(const std::string& name) const {
  for (const auto& e : experts_) {
    if (e.name == name) return &e;
  }
  return nullptr;
}

ExpertRegistry register_experts(std::span<const ExpertDecl> decls) {
  ExpertRegistry reg;
  for (const auto& d : decls) {
    Expert e;
    e.name = d.name;
    e.kind = d.kind;
    e.heuristic = d.heuristic;
    switch (d.kind) {
      case ExpertKind::Heuristic:
        break;
      case ExpertKind::FeatureMlp:
        e.mlp = std::make_shared<FeatureMlpExpert>(
            load_feature_mlp_checkpoint(d.path));
        break;
      case ExpertKind::External:
        e.table = std::make_shared<ScoreTable>(load_score_table(d.path));
        break;
    }
    reg.add(std::move(e));
  }
  return reg;
}

std::vector<double> ScoreMatrix::column(std::size_t c) const {
  std::vector<double> out(num_experts());
  for (std::size_t o = 0; o < out.size(); ++o) out[o] = scores(o, c);
  return out;
}

ScoreMatrix score_pairs(const ExpertRegistry& registry, const Graph& g,
                        const FeatureMatrix* features,
                        std::span<const Pair> pairs, const HeuristicConfig& cfg,
                        int threads) {
  if (registry.size() == 0) {
    throw Error(ErrorCode::EmptyRegistry, "no experts registered");
  }
  cfg.validate();
  const int workers = resolve_threads(threads);
  for (Pair p : pairs) check_pair(g, p);
  if (features != nullptr && features->num_nodes() != g.num_nodes()) {
    throw Error(ErrorCode::RowCountMismatch,
                std::to_string(features->num_nodes()) + " feature rows for " +
                    std::to_string(g.num_nodes()) + " nodes");
  }

  ScoreMatrix out;
  out.expert_ids = registry.names();
  out.pairs.assign(pairs.begin(), pairs.end());
  out.scores = Matrix(registry.size(), pairs.size());

  auto require_features = [&](const std::string& who) -> const FeatureMatrix& {
    if (features == nullptr) {
      throw Error(ErrorCode::NoFeatures, who + " needs node features");
    }
    return *features;
  };

  for (std::size_t o = 0; o < registry.size(); ++o) {
    const Expert& e = registry.experts()[o];
    auto row = out.scores.row(o);
    switch (e.kind) {
      case ExpertKind::Heuristic:
        switch (e.heuristic) {
          case HeuristicExpert::CN:
            parallel_for(pairs.size(), workers,
                         [&](std::size_t lo, std::size_t hi, int) {
                           for (std::size_t t = lo; t < hi; ++t) {
                             row[t] = common_neighbors(g, pairs[t].first,
                                                       pairs[t].second);
                           }
                         });
            break;
          case HeuristicExpert::AA:
            parallel_for(pairs.size(), workers,
                         [&](std::size_t lo, std::size_t hi, int) {
                           for (std::size_t t = lo; t < hi; ++t) {
                             row[t] = adamic_adar(g, pairs[t].first,
                                                  pairs[t].second);
                           }
                         });
            break;
          case HeuristicExpert::RA:
            parallel_for(pairs.size(), workers,
                         [&](std::size_t lo, std::size_t hi, int) {
                           for (std::size_t t = lo; t < hi; ++t) {
                             row[t] = resource_allocation(g, pairs[t].first,
                                                          pairs[t].second);
                           }
                         });
            break;
          case HeuristicExpert::SP:
            parallel_for(pairs.size(), workers,
                         [&](std::size_t lo, std::size_t hi, int) {
                           for (std::size_t t = lo; t < hi; ++t) {
                             row[t] = sp_score(shortest_path(
                                 g, pairs[t].first, pairs[t].second, cfg.sp_cap));
                           }
                         });
            break;
          case HeuristicExpert::Katz:
            parallel_for(pairs.size(), workers,
                         [&](std::size_t lo, std::size_t hi, int) {
                           KatzScorer scorer;
                           for (std::size_t t = lo; t < hi; ++t) {
                             row[t] = scorer(g, pairs[t].first, pairs[t].second,
                                             cfg.katz_beta, cfg.katz_max_len);
                           }
                         });
            break;
          case HeuristicExpert::PPR: {
            auto sym = batch_ppr_sym(g, cfg, pairs, threads);
            std::copy(sym.begin(), sym.end(), row.begin());
            break;
          }
          case HeuristicExpert::FCS: {
            const FeatureMatrix& f = require_features("fcs");
            parallel_for(pairs.size(), workers,
                         [&](std::size_t lo, std::size_t hi, int) {
                           for (std::size_t t = lo; t < hi; ++t) {
                             row[t] = feature_cosine(f, pairs[t].first,
                                                     pairs[t].second);
                           }
                         });
            break;
          }
        }
        break;
      case ExpertKind::FeatureMlp: {
        const FeatureMatrix& f = require_features(e.name);
        parallel_for(pairs.size(), workers,
                     [&](std::size_t lo, std::size_t hi, int) {
                       for (std::size_t t = lo; t < hi; ++t) {
                         row[t] = e.mlp->score(f, pairs[t]);
                       }
                     });
        break;
      }
      case ExpertKind::External:
        for (std::size_t t = 0; t < pairs.size(); ++t) {
          if (!e.table->lookup(pairs[t], row[t])) {
            throw Error(ErrorCode::MissingScore,
                        e.name + " has no score for " +
                            std::to_string(pairs[t].first) + " " +
                            std::to_string(pairs[t].second));
          }
        }
        break;
    }
  }
  return out;
}

ScoreNormalizer ScoreNormalizer::fit(const ScoreMatrix& m) {
  if (m.num_pairs() == 0) {
    throw Error(ErrorCode::EmptySplit, "cannot fit a normalizer on zero pairs");
  }
  ScoreNormalizer norm;
  norm.mean.resize(m.num_experts());
  norm.stdev.resize(m.num_experts());
  const double inv = 1.0 / static_cast<double>(m.num_pairs());
  for (std::size_t o = 0; o < m.num_experts(); ++o) {
    auto row = m.expert_row(o);
    double mu = 0.0;
    for (double s : row) mu += s;
    mu *= inv;
    double var = 0.0;
    for (double s : row) var += (s - mu) * (s - mu);
    var *= inv;
    norm.mean[o] = mu;
    norm.stdev[o] = std::max(std::sqrt(var), 1e-8);
  }
  return norm;
}

void ScoreNormalizer::apply(ScoreMatrix& m) const {
  if (m.num_experts() != mean.size()) {
    throw Error(ErrorCode::DimMismatch,
                "normalizer fit on " + std::to_string(mean.size()) +
                    " experts, applied to " + std::to_string(m.num_experts()));
  }
  for (std::size_t o = 0; o < m.num_experts(); ++o) {
    auto row = m.scores.row(o);
    for (double& s : row) s = (s - mean[o]) / stdev[o];
  }
}

}  // namespace linkmoe
