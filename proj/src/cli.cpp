#include "linkmoe/cli.hpp"

#include <CLI11.hpp>
#include <json.hpp>

#include <algorithm>
#include <chrono>
#include <cstdint>
#include <filesystem>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>
#include <utility>
#include <vector>

#include "linkmoe/checkpoint.hpp"
#include "linkmoe/ensembles.hpp"
#include "linkmoe/error.hpp"
#include "linkmoe/eval.hpp"
#include "linkmoe/experts.hpp"
#include "linkmoe/gate.hpp"
#include "linkmoe/graph.hpp"
#include "linkmoe/heuristics.hpp"
#include "linkmoe/io.hpp"
#include "linkmoe/rng.hpp"

namespace linkmoe::cli {
namespace {

namespace fs = std::filesystem;
using nlohmann::json;

// Files written by one run, removed again if the run dies before commit().
// The manifest is written last, so a directory with a manifest is complete.
class RunOutputs {
public:
  explicit RunOutputs(fs::path dir) : dir_(std::move(dir)) {
    std::error_code ec;
    fs::create_directories(dir_, ec);
    if (ec) {
      throw Error(ErrorCode::IoError,
                  "cannot create output directory " + dir_.string());
    }
  }

  RunOutputs(const RunOutputs&) = delete;
  RunOutputs& operator=(const RunOutputs&) = delete;

  ~RunOutputs() {
    if (committed_) return;
    std::error_code ec;
    for (auto it = files_.rbegin(); it != files_.rend(); ++it) {
      fs::remove(dir_ / *it, ec);
    }
  }

  const fs::path& dir() const { return dir_; }
  fs::path path_of(const std::string& name) const { return dir_ / name; }
  const std::vector<std::string>& files() const { return files_; }

  void track(const std::string& name) { files_.push_back(name); }

  void write_text(const std::string& name, const std::string& text) {
    track(name);
    io::write_text_file(dir_ / name, text);
  }

  void write_scores(const std::string& name, std::span<const Pair> pairs,
                    std::span<const double> scores) {
    track(name);
    io::write_score_file(dir_ / name, pairs, scores);
  }

  void commit() { committed_ = true; }

private:
  fs::path dir_;
  std::vector<std::string> files_;
  bool committed_ = false;
};

class StageClock {
public:
  template <class F>
  void run(const std::string& name, F&& fn) {
    auto t0 = std::chrono::steady_clock::now();
    fn();
    std::chrono::duration<double> dt = std::chrono::steady_clock::now() - t0;
    stages_.emplace_back(name, dt.count());
  }

  const std::vector<std::pair<std::string, double>>& stages() const {
    return stages_;
  }

private:
  std::vector<std::pair<std::string, double>> stages_;
};

void write_manifest(RunOutputs& out, const std::string& command,
                    std::uint64_t seed, const json& config,
                    const StageClock& clock) {
  json digests = json::object();
  for (const auto& f : out.files()) {
    digests[f] = io::file_digest(out.path_of(f));
  }
  json wall = json::object();
  for (const auto& [name, secs] : clock.stages()) wall[name] = secs;

  json m;
  m["command"] = command;
  m["version"] = std::string(io::kVersion);
  m["seed"] = seed;
  m["config"] = config;
  m["wall_clock_sec"] = wall;
  m["outputs"] = digests;
  out.write_text("manifest.json", m.dump(2) + "\n");
  out.commit();
}

// ---- dataset plumbing -----------------------------------------------------

struct DataOpts {
  std::string split_dir;
  std::string header_path;
  std::uint64_t nodes = 0;
  std::string features_path;
  bool include_valid = false;
  int threads = 0;
};

void add_data_options(CLI::App* cmd, DataOpts& d) {
  cmd->add_option("--split", d.split_dir,
                  "split directory holding train.txt valid.txt test.txt "
                  "valid_neg.txt test_neg.txt")
      ->required();
  cmd->add_option("--nodes", d.nodes, "node count n");
  cmd->add_option("--header", d.header_path,
                  "file with a single n=<count> line (alternative to --nodes)");
  cmd->add_option("--features", d.features_path,
                  "node feature file, one space-separated row per node");
  cmd->add_flag("--include-valid-in-graph", d.include_valid,
                "insert validation edges into the inference graph "
                "(ogbl-collab convention; off by default)");
  cmd->add_option("--threads", d.threads,
                  "worker cap; 0 means LINKMOE_THREADS or hardware")
      ->capture_default_str();
}

struct LoadedData {
  NodeId n = 0;
  EdgeSplit split;
  Graph g;
  std::optional<FeatureMatrix> features;

  const FeatureMatrix* features_ptr() const {
    return features ? &*features : nullptr;
  }
};

LoadedData load_data(const DataOpts& d) {
  if (d.nodes == 0 && d.header_path.empty()) {
    throw Error(ErrorCode::BadConfig, "need --nodes or --header");
  }
  if (d.nodes > 0xffffffffull) {
    throw Error(ErrorCode::BadConfig, "--nodes exceeds the 32-bit id space");
  }
  LoadedData out;
  out.n = d.nodes != 0 ? static_cast<NodeId>(d.nodes)
                       : load_graph_header(d.header_path);
  out.split = load_split(d.split_dir, out.n);
  std::vector<Pair> edges = out.split.train_pos;
  if (d.include_valid) {
    edges.insert(edges.end(), out.split.valid_pos.begin(),
                 out.split.valid_pos.end());
  }
  out.g = Graph::build(edges, out.n);
  if (!d.features_path.empty()) {
    out.features = load_features(d.features_path, out.n);
  }
  return out;
}

json data_config_json(const DataOpts& d) {
  json j;
  j["split"] = d.split_dir;
  if (d.nodes != 0) j["nodes"] = d.nodes;
  if (!d.header_path.empty()) j["header"] = d.header_path;
  if (!d.features_path.empty()) j["features"] = d.features_path;
  j["include_valid_in_graph"] = d.include_valid;
  j["threads"] = d.threads;
  return j;
}

void add_heuristic_options(CLI::App* cmd, HeuristicConfig& h) {
  cmd->add_option("--katz-beta", h.katz_beta, "Katz walk damping")
      ->capture_default_str();
  cmd->add_option("--katz-len", h.katz_max_len, "Katz truncation length (<= 6)")
      ->capture_default_str();
  cmd->add_option("--ppr-alpha", h.ppr_alpha, "PPR restart probability")
      ->capture_default_str();
  cmd->add_option("--ppr-eps", h.ppr_eps, "PPR forward-push tolerance")
      ->capture_default_str();
  cmd->add_option("--sp-cap", h.sp_cap, "BFS depth cap for shortest paths")
      ->capture_default_str();
}

json heur_config_json(const HeuristicConfig& h) {
  json j;
  j["katz_beta"] = h.katz_beta;
  j["katz_max_len"] = h.katz_max_len;
  j["ppr_alpha"] = h.ppr_alpha;
  j["ppr_eps"] = h.ppr_eps;
  j["sp_cap"] = h.sp_cap;
  return j;
}

std::vector<ExpertDecl> parse_decls(const std::vector<std::string>& specs) {
  if (specs.empty()) {
    throw Error(ErrorCode::BadConfig, "need at least one --expert declaration");
  }
  std::vector<ExpertDecl> out;
  out.reserve(specs.size());
  for (const auto& s : specs) out.push_back(parse_expert_decl(s));
  return out;
}

// Score files are named after the expert; keep names filesystem-safe.
std::string sanitize_filename(const std::string& name) {
  std::string out = name;
  for (char& c : out) {
    bool ok = (c >= 'a' && c <= 'z') || (c >= 'A' && c <= 'Z') ||
              (c >= '0' && c <= '9') || c == '_' || c == '-' || c == '.';
    if (!ok) c = '_';
  }
  return out;
}

std::vector<Pair> flat_neg_pairs(const NegativeSet& negs) {
  if (negs.mode == NegMode::Shared) return negs.shared_pairs;
  std::vector<Pair> out;
  out.reserve(negs.total_pairs());
  for (const auto& lst : negs.per_pos_pairs) {
    out.insert(out.end(), lst.begin(), lst.end());
  }
  return out;
}

// Reassembles flat per-negative scores into the evaluation layout.
NegScores regroup_neg_scores(const NegativeSet& negs,
                             std::span<const double> flat) {
  if (flat.size() != negs.total_pairs()) {
    throw Error(ErrorCode::DimMismatch,
                "negative scores do not cover the negative pairs");
  }
  NegScores out;
  out.mode = negs.mode;
  if (negs.mode == NegMode::Shared) {
    out.shared.assign(flat.begin(), flat.end());
  } else {
    std::size_t at = 0;
    out.per_pos.reserve(negs.per_pos_pairs.size());
    for (const auto& lst : negs.per_pos_pairs) {
      out.per_pos.emplace_back(flat.begin() + at, flat.begin() + at + lst.size());
      at += lst.size();
    }
  }
  return out;
}

struct EvalSet {
  std::string name;  // "test" or "valid"
  const std::vector<Pair>* pos = nullptr;
  const NegativeSet* negs = nullptr;
};

EvalSet pick_eval_set(const LoadedData& data, const std::string& which) {
  if (which == "test") return {"test", &data.split.test_pos, &data.split.test_neg};
  if (which == "valid") {
    return {"valid", &data.split.valid_pos, &data.split.valid_neg};
  }
  throw Error(ErrorCode::BadConfig, "--set must be test or valid");
}

std::vector<Pair> concat_eval_pairs(const EvalSet& set) {
  std::vector<Pair> all = *set.pos;
  std::vector<Pair> neg = flat_neg_pairs(*set.negs);
  all.insert(all.end(), neg.begin(), neg.end());
  return all;
}

// Grouping value of each positive pair, used by the per-group analyses.
std::vector<double> grouping_values(const LoadedData& data, GroupKey key,
                                    const HeuristicConfig& cfg,
                                    std::span<const Pair> pos) {
  std::vector<double> out(pos.size());
  for (std::size_t i = 0; i < pos.size(); ++i) {
    Pair p = canonical(pos[i]);
    switch (key) {
      case GroupKey::CN:
        out[i] = static_cast<double>(common_neighbors(data.g, p.first, p.second));
        break;
      case GroupKey::SP:
        out[i] = sp_raw(shortest_path(data.g, p.first, p.second, cfg.sp_cap),
                        cfg.sp_cap);
        break;
      case GroupKey::FCS:
        if (!data.features) {
          throw Error(ErrorCode::NoFeatures,
                      "feature cosine grouping needs --features");
        }
        out[i] = feature_cosine(*data.features, p.first, p.second);
        break;
    }
  }
  return out;
}

GroupSpec make_group_spec(GroupKey key, std::span<const double> values) {
  switch (key) {
    case GroupKey::CN: return GroupSpec::cn_default();
    case GroupKey::SP: return GroupSpec::sp_default();
    case GroupKey::FCS:
      return GroupSpec::fcs_quantiles(
          std::vector<double>(values.begin(), values.end()));
  }
  throw Error(ErrorCode::BadConfig, "unknown group key");
}

std::string ranking_report_csv(const RankingReport& report) {
  std::string text = "metric,value\n";
  text += "mrr," + io::csv_value(report.mrr) + "\n";
  for (const auto& [k, v] : report.hits) {
    text += "hits@" + std::to_string(k) + "," + io::csv_value(v) + "\n";
  }
  return text;
}

std::string history_csv(const std::vector<GateHistoryRow>& history) {
  std::string text = "epoch,train_loss,val_mrr\n";
  for (const auto& row : history) {
    text += std::to_string(row.epoch) + "," + io::csv_value(row.train_loss) +
            "," + io::csv_value(row.val_mrr) + "\n";
  }
  return text;
}

// ---- heuristics -----------------------------------------------------------

struct HeuristicsArgs {
  DataOpts data;
  HeuristicConfig heur;
  std::string out_dir = "out";
  std::uint64_t seed = 1;
};

void run_heuristics(const HeuristicsArgs& a) {
  RunOutputs out(a.out_dir);
  StageClock clock;

  LoadedData data;
  clock.run("load", [&] { data = load_data(a.data); });

  std::vector<Pair> pairs;
  std::vector<std::pair<std::string, std::size_t>> sections;
  auto append = [&](const char* name, const std::vector<Pair>& block) {
    pairs.insert(pairs.end(), block.begin(), block.end());
    sections.emplace_back(name, block.size());
  };
  append("train_pos", data.split.train_pos);
  append("valid_pos", data.split.valid_pos);
  append("valid_neg", flat_neg_pairs(data.split.valid_neg));
  append("test_pos", data.split.test_pos);
  append("test_neg", flat_neg_pairs(data.split.test_neg));

  Matrix table;
  clock.run("score", [&] {
    table = batch_structural(data.g, a.heur, pairs, a.data.threads);
  });

  clock.run("write", [&] {
    std::string csv;
    for (std::size_t c = 0; c < kStructuralDim; ++c) {
      if (c) csv += ',';
      csv += kStructuralNames[c];
    }
    csv += '\n';
    for (std::size_t r = 0; r < table.rows; ++r) {
      auto row = table.row(r);
      for (std::size_t c = 0; c < row.size(); ++c) {
        if (c) csv += ',';
        csv += io::csv_value(row[c]);
      }
      csv += '\n';
    }
    out.write_text("heuristics.csv", csv);

    std::string sidecar;
    sidecar += "katz_beta = " + io::score_value(a.heur.katz_beta) + "\n";
    sidecar += "katz_max_len = " + std::to_string(a.heur.katz_max_len) + "\n";
    sidecar += "ppr_alpha = " + io::score_value(a.heur.ppr_alpha) + "\n";
    sidecar += "ppr_eps = " + io::score_value(a.heur.ppr_eps) + "\n";
    sidecar += "sp_cap = " + std::to_string(a.heur.sp_cap) + "\n";
    for (const auto& [name, count] : sections) {
      sidecar += "rows_" + name + " = " + std::to_string(count) + "\n";
    }
    out.write_text("heuristic_config.txt", sidecar);
  });

  json cfg = data_config_json(a.data);
  cfg["heuristics"] = heur_config_json(a.heur);
  write_manifest(out, "heuristics", a.seed, cfg, clock);
}

// ---- export-scores --------------------------------------------------------

struct ExportScoresArgs {
  DataOpts data;
  HeuristicConfig heur;
  std::vector<std::string> experts;
  std::string pairs_path;
  std::string out_dir = "out";
  std::uint64_t seed = 1;
};

void run_export_scores(const ExportScoresArgs& a) {
  RunOutputs out(a.out_dir);
  StageClock clock;

  LoadedData data;
  ExpertRegistry registry;
  std::vector<Pair> pairs;
  clock.run("load", [&] {
    data = load_data(a.data);
    registry = register_experts(parse_decls(a.experts));
    pairs = load_edge_list(a.pairs_path);
  });

  ScoreMatrix sm;
  clock.run("score", [&] {
    sm = score_pairs(registry, data.g, data.features_ptr(), pairs, a.heur,
                     a.data.threads);
  });

  clock.run("write", [&] {
    for (std::size_t o = 0; o < sm.num_experts(); ++o) {
      out.write_scores(sanitize_filename(sm.expert_ids[o]) + ".scores", pairs,
                       sm.expert_row(o));
    }
  });

  json cfg = data_config_json(a.data);
  cfg["heuristics"] = heur_config_json(a.heur);
  cfg["experts"] = a.experts;
  cfg["pairs"] = a.pairs_path;
  write_manifest(out, "export-scores", a.seed, cfg, clock);
}

// ---- train-expert-mlp -----------------------------------------------------

struct TrainMlpArgs {
  DataOpts data;
  MlpExpertTrainConfig train;
  std::string out_dir = "out";
  std::uint64_t seed = 1;
};

void run_train_expert_mlp(const TrainMlpArgs& a) {
  RunOutputs out(a.out_dir);
  StageClock clock;

  LoadedData data;
  clock.run("load", [&] { data = load_data(a.data); });
  if (!data.features) {
    throw Error(ErrorCode::NoFeatures, "train-expert-mlp needs --features");
  }

  FeatureMlpExpert expert;
  clock.run("train", [&] {
    Rng rng(a.seed ^ fnv1a64("expert-mlp"));
    expert = train_feature_mlp_expert(data.g, *data.features,
                                      data.split.train_pos, rng, a.train);
  });

  clock.run("write", [&] {
    std::string meta;
    meta += "kind = feature-mlp\n";
    meta += "feature_dim = " + std::to_string(expert.feature_dim) + "\n";
    meta += "layers = " + std::to_string(a.train.layers) + "\n";
    meta += "hidden_dim = " + std::to_string(a.train.hidden_dim) + "\n";
    meta += "epochs = " + std::to_string(a.train.epochs) + "\n";
    meta += "seed = " + std::to_string(a.seed) + "\n";
    out.track("mlp_expert.ckpt");
    out.track("mlp_expert.ckpt.meta");
    save_feature_mlp_checkpoint(expert, out.path_of("mlp_expert.ckpt"), meta);
  });

  json cfg = data_config_json(a.data);
  cfg["lr"] = a.train.lr;
  cfg["dropout"] = a.train.dropout;
  cfg["weight_decay"] = a.train.weight_decay;
  cfg["layers"] = a.train.layers;
  cfg["hidden_dim"] = a.train.hidden_dim;
  cfg["epochs"] = a.train.epochs;
  cfg["batch_size"] = a.train.batch_size;
  write_manifest(out, "train-expert-mlp", a.seed, cfg, clock);
}

// ---- train-gate -----------------------------------------------------------

struct TrainGateArgs {
  DataOpts data;
  HeuristicConfig heur;
  std::vector<std::string> experts;
  std::string mode = "all";
  bool normalize_scores = false;
  std::string grid_path;
  GateTrainConfig train;
  std::string out_dir = "out";
  std::uint64_t seed = 1;
};

// One grid point per line: whitespace-separated key=value tokens overriding
// the base config. '#' starts a comment.
std::vector<GateTrainConfig> parse_grid_file(const fs::path& path,
                                             const GateTrainConfig& base) {
  std::string text = io::read_text_file(path);
  std::vector<GateTrainConfig> out;
  std::istringstream lines(text);
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(lines, line)) {
    ++line_no;
    if (auto hash = line.find('#'); hash != std::string::npos) {
      line.resize(hash);
    }
    std::istringstream tokens(line);
    std::string tok;
    GateTrainConfig cfg = base;
    bool any = false;
    while (tokens >> tok) {
      any = true;
      auto eq = tok.find('=');
      if (eq == std::string::npos || eq == 0) {
        throw Error(ErrorCode::BadConfig, "grid token '" + tok +
                        "' is not key=value", line_no);
      }
      std::string key = tok.substr(0, eq);
      std::string value = tok.substr(eq + 1);
      try {
        if (key == "lr") cfg.lr = std::stod(value);
        else if (key == "dropout") cfg.dropout = std::stod(value);
        else if (key == "weight_decay") cfg.weight_decay = std::stod(value);
        else if (key == "layers") cfg.layers = std::stoi(value);
        else if (key == "hidden_dim") cfg.hidden_dim = std::stoi(value);
        else if (key == "fusion_layers") cfg.fusion_layers = std::stoi(value);
        else if (key == "batch_size") cfg.batch_size = std::stoi(value);
        else if (key == "max_epochs") cfg.max_epochs = std::stoi(value);
        else if (key == "patience") cfg.patience = std::stoi(value);
        else {
          throw Error(ErrorCode::BadConfig,
                      "unknown grid key '" + key + "'", line_no);
        }
      } catch (const std::invalid_argument&) {
        throw Error(ErrorCode::BadConfig,
                    "bad grid value in '" + tok + "'", line_no);
      } catch (const std::out_of_range&) {
        throw Error(ErrorCode::BadConfig,
                    "grid value out of range in '" + tok + "'", line_no);
      }
    }
    if (any) out.push_back(cfg);
  }
  if (out.empty()) {
    throw Error(ErrorCode::BadConfig, "grid file has no grid points");
  }
  return out;
}

json gate_train_config_json(const GateTrainConfig& c) {
  json j;
  j["lr"] = c.lr;
  j["dropout"] = c.dropout;
  j["weight_decay"] = c.weight_decay;
  j["layers"] = c.layers;
  j["hidden_dim"] = c.hidden_dim;
  j["fusion_layers"] = c.fusion_layers;
  j["batch_size"] = c.batch_size;
  j["max_epochs"] = c.max_epochs;
  j["patience"] = c.patience;
  j["split_ratio"] = c.split_ratio;
  return j;
}

void run_train_gate(const TrainGateArgs& a) {
  RunOutputs out(a.out_dir);
  StageClock clock;

  LoadedData data;
  ExpertRegistry registry;
  clock.run("load", [&] {
    data = load_data(a.data);
    registry = register_experts(parse_decls(a.experts));
  });

  GateMode mode = parse_gate_mode(a.mode);
  if (mode == GateMode::All && !data.features) {
    // The default two-branch gate degrades gracefully on featureless graphs.
    std::cout << "note: no --features given, gate mode all -> only-struct\n";
    mode = GateMode::OnlyStruct;
  }

  GateDataset dataset;
  clock.run("dataset", [&] {
    GateSplit split =
        split_validation(data.split.valid_pos, data.split.valid_neg,
                         a.train.split_ratio, a.seed ^ fnv1a64("gate-split"));
    dataset = build_gate_dataset(data.g, data.features_ptr(), registry, split,
                                 a.heur, mode, a.normalize_scores,
                                 a.data.threads);
  });

  std::vector<GateTrainConfig> grid;
  if (!a.grid_path.empty()) {
    grid = parse_grid_file(a.grid_path, a.train);
  } else {
    grid.push_back(a.train);
  }

  std::vector<GateTrainResult> results(grid.size());
  clock.run("train", [&] {
    for (std::size_t i = 0; i < grid.size(); ++i) {
      Rng rng(a.seed ^ fnv1a64("train-gate"));
      results[i] = train_gate(dataset, grid[i], rng);
    }
  });

  std::size_t best = 0;
  for (std::size_t i = 1; i < results.size(); ++i) {
    if (results[i].best_val_mrr > results[best].best_val_mrr) best = i;
  }

  clock.run("write", [&] {
    if (a.grid_path.empty()) {
      out.write_text("history.csv", history_csv(results[0].history));
    } else {
      for (std::size_t i = 0; i < results.size(); ++i) {
        out.write_text("history_" + std::to_string(i + 1) + ".csv",
                       history_csv(results[i].history));
      }
      std::string summary =
          "point,lr,dropout,weight_decay,layers,hidden_dim,fusion_layers,"
          "batch_size,max_epochs,patience,best_epoch,best_val_mrr,best\n";
      for (std::size_t i = 0; i < grid.size(); ++i) {
        const GateTrainConfig& c = grid[i];
        summary += std::to_string(i + 1) + "," + io::csv_value(c.lr) + "," +
                   io::csv_value(c.dropout) + "," +
                   io::csv_value(c.weight_decay) + "," +
                   std::to_string(c.layers) + "," +
                   std::to_string(c.hidden_dim) + "," +
                   std::to_string(c.fusion_layers) + "," +
                   std::to_string(c.batch_size) + "," +
                   std::to_string(c.max_epochs) + "," +
                   std::to_string(c.patience) + "," +
                   std::to_string(results[i].best_epoch) + "," +
                   io::csv_value(results[i].best_val_mrr) + "," +
                   (i == best ? "1" : "0") + "\n";
      }
      out.write_text("grid_summary.csv", summary);
    }

    std::string meta;
    meta += "kind = gate\n";
    meta += "mode = " + std::string(gate_mode_name(results[best].net.mode)) + "\n";
    meta += "experts =";
    for (const auto& name : results[best].net.expert_names) meta += " " + name;
    meta += "\n";
    meta += "best_epoch = " + std::to_string(results[best].best_epoch) + "\n";
    meta += "best_val_mrr = " + io::score_value(results[best].best_val_mrr) + "\n";
    meta += "seed = " + std::to_string(a.seed) + "\n";
    out.track("gate.ckpt");
    out.track("gate.ckpt.meta");
    save_gate_checkpoint(results[best].net, out.path_of("gate.ckpt"), meta);
  });

  json cfg = data_config_json(a.data);
  cfg["heuristics"] = heur_config_json(a.heur);
  cfg["experts"] = a.experts;
  cfg["mode"] = std::string(gate_mode_name(mode));
  cfg["normalize_scores"] = a.normalize_scores;
  cfg["gate"] = gate_train_config_json(a.train);
  if (!a.grid_path.empty()) {
    cfg["grid"] = a.grid_path;
    cfg["grid_points"] = grid.size();
    cfg["best_point"] = best + 1;
  }
  cfg["best_epoch"] = results[best].best_epoch;
  cfg["best_val_mrr"] = results[best].best_val_mrr;
  write_manifest(out, "train-gate", a.seed, cfg, clock);
}

// ---- ensemble -------------------------------------------------------------

struct EnsembleArgs {
  DataOpts data;
  HeuristicConfig heur;
  std::vector<std::string> experts;
  std::string kind = "mean";
  std::string set = "test";
  double split_ratio = 0.9;
  GlobalEnsembleTrainConfig train;
  std::string out_dir = "out";
  std::uint64_t seed = 1;
};

void run_ensemble(const EnsembleArgs& a) {
  if (a.kind != "mean" && a.kind != "global") {
    throw Error(ErrorCode::BadConfig, "--kind must be mean or global");
  }
  RunOutputs out(a.out_dir);
  StageClock clock;

  LoadedData data;
  ExpertRegistry registry;
  clock.run("load", [&] {
    data = load_data(a.data);
    registry = register_experts(parse_decls(a.experts));
  });

  EvalSet set = pick_eval_set(data, a.set);
  std::vector<Pair> eval_pairs = concat_eval_pairs(set);

  ScoreMatrix eval_scores;
  clock.run("score", [&] {
    eval_scores = score_pairs(registry, data.g, data.features_ptr(), eval_pairs,
                              a.heur, a.data.threads);
  });

  if (a.kind == "mean") {
    std::vector<double> preds;
    clock.run("combine", [&] { preds = mean_ensemble(eval_scores); });
    clock.run("write",
              [&] { out.write_scores("mean.scores", eval_pairs, preds); });

    json cfg = data_config_json(a.data);
    cfg["heuristics"] = heur_config_json(a.heur);
    cfg["experts"] = a.experts;
    cfg["kind"] = a.kind;
    cfg["set"] = set.name;
    write_manifest(out, "ensemble", a.seed, cfg, clock);
    return;
  }

  // Global weights train on the same validation re-split the gate uses.
  GlobalEnsembleResult result;
  clock.run("train", [&] {
    GateSplit split =
        split_validation(data.split.valid_pos, data.split.valid_neg,
                         a.split_ratio, a.seed ^ fnv1a64("gate-split"));

    std::vector<Pair> train_pairs = split.train_pos;
    std::vector<double> train_labels(split.train_pos.size(), 1.0);
    std::vector<Pair> train_negs = flat_neg_pairs(split.train_neg);
    train_pairs.insert(train_pairs.end(), train_negs.begin(), train_negs.end());
    train_labels.resize(train_pairs.size(), 0.0);

    ScoreMatrix train_sm = score_pairs(registry, data.g, data.features_ptr(),
                                       train_pairs, a.heur, a.data.threads);
    std::vector<std::vector<double>> train_cols(train_sm.num_pairs());
    for (std::size_t c = 0; c < train_sm.num_pairs(); ++c) {
      train_cols[c] = train_sm.column(c);
    }

    std::vector<Pair> val_pairs = split.val_pos;
    std::vector<Pair> val_negs = flat_neg_pairs(split.val_neg);
    val_pairs.insert(val_pairs.end(), val_negs.begin(), val_negs.end());
    ScoreMatrix val_sm = score_pairs(registry, data.g, data.features_ptr(),
                                     val_pairs, a.heur, a.data.threads);

    std::vector<std::vector<double>> val_pos_cols(split.val_pos.size());
    for (std::size_t c = 0; c < split.val_pos.size(); ++c) {
      val_pos_cols[c] = val_sm.column(c);
    }
    std::vector<std::vector<double>> val_neg_cols;
    std::vector<std::vector<std::vector<double>>> val_perpos_cols;
    std::size_t at = split.val_pos.size();
    if (split.val_neg.mode == NegMode::Shared) {
      val_neg_cols.resize(split.val_neg.shared_pairs.size());
      for (std::size_t c = 0; c < val_neg_cols.size(); ++c) {
        val_neg_cols[c] = val_sm.column(at + c);
      }
    } else {
      val_perpos_cols.resize(split.val_neg.per_pos_pairs.size());
      for (std::size_t i = 0; i < val_perpos_cols.size(); ++i) {
        const auto& lst = split.val_neg.per_pos_pairs[i];
        val_perpos_cols[i].resize(lst.size());
        for (std::size_t c = 0; c < lst.size(); ++c) {
          val_perpos_cols[i][c] = val_sm.column(at + c);
        }
        at += lst.size();
      }
    }

    Rng rng(a.seed ^ fnv1a64("global-ensemble"));
    result = train_global_ensemble(train_cols, train_labels, val_pos_cols,
                                   split.val_neg.mode, val_neg_cols,
                                   val_perpos_cols, a.train, rng);
  });

  std::vector<double> preds;
  clock.run("combine", [&] {
    preds = global_ensemble_predict(result.weights, eval_scores);
  });

  clock.run("write", [&] {
    std::string weights_text;
    auto names = registry.names();
    for (std::size_t o = 0; o < names.size(); ++o) {
      weights_text += names[o] + " " + io::score_value(result.weights.w[o]) + "\n";
    }
    out.write_text("weights.txt", weights_text);
    out.write_scores("global.scores", eval_pairs, preds);
  });

  json cfg = data_config_json(a.data);
  cfg["heuristics"] = heur_config_json(a.heur);
  cfg["experts"] = a.experts;
  cfg["kind"] = a.kind;
  cfg["set"] = set.name;
  cfg["split_ratio"] = a.split_ratio;
  cfg["lr"] = a.train.lr;
  cfg["weight_decay"] = a.train.weight_decay;
  cfg["batch_size"] = a.train.batch_size;
  cfg["max_epochs"] = a.train.max_epochs;
  cfg["patience"] = a.train.patience;
  cfg["best_epoch"] = result.best_epoch;
  cfg["best_val_mrr"] = result.best_val_mrr;
  write_manifest(out, "ensemble", a.seed, cfg, clock);
}

// ---- predict ---------------------------------------------------------------

struct PredictArgs {
  DataOpts data;
  std::string gate_path;
  std::vector<std::string> experts;
  std::string pairs_path;
  std::string out_dir = "out";
  std::uint64_t seed = 1;
};

void run_predict(const PredictArgs& a) {
  RunOutputs out(a.out_dir);
  StageClock clock;

  LoadedData data;
  ExpertRegistry registry;
  GateNetwork gn;
  std::vector<Pair> pairs;
  clock.run("load", [&] {
    data = load_data(a.data);
    gn = load_gate_checkpoint(a.gate_path);
    registry = register_experts(parse_decls(a.experts));
    pairs = load_edge_list(a.pairs_path);
  });

  std::vector<double> preds;
  clock.run("score", [&] {
    preds = predict_pairs(gn, registry, data.g, data.features_ptr(), pairs,
                          a.data.threads);
  });

  clock.run("write",
            [&] { out.write_scores("predictions.scores", pairs, preds); });

  json cfg = data_config_json(a.data);
  cfg["gate"] = a.gate_path;
  cfg["experts"] = a.experts;
  cfg["pairs"] = a.pairs_path;
  write_manifest(out, "predict", a.seed, cfg, clock);
}

// ---- evaluate ---------------------------------------------------------------

struct EvaluateArgs {
  DataOpts data;
  HeuristicConfig heur;
  std::string source;
  std::string set = "test";
  std::vector<int> ks = {1, 3, 10, 20, 50, 100};
  std::vector<std::string> experts;
  std::string weights_path;
  std::string gate_path;
  std::string out_dir = "out";
  std::uint64_t seed = 1;
};

GlobalWeights read_weights_file(const fs::path& path,
                                const std::vector<std::string>& names) {
  std::string text = io::read_text_file(path);
  std::istringstream lines(text);
  std::string line;
  std::size_t line_no = 0;
  std::vector<std::pair<std::string, double>> entries;
  while (std::getline(lines, line)) {
    ++line_no;
    std::istringstream fields(line);
    std::string name;
    double value = 0.0;
    if (!(fields >> name)) continue;
    if (name[0] == '#') continue;
    std::string rest;
    if (!(fields >> value) || (fields >> rest)) {
      throw Error(ErrorCode::MalformedLine, "expected 'name weight'", line_no);
    }
    entries.emplace_back(name, value);
  }
  GlobalWeights w;
  w.w.resize(names.size());
  std::vector<bool> seen(names.size(), false);
  for (const auto& [name, value] : entries) {
    auto it = std::find(names.begin(), names.end(), name);
    if (it == names.end()) {
      throw Error(ErrorCode::BadConfig,
                  "weight for unknown expert '" + name + "'");
    }
    std::size_t idx = static_cast<std::size_t>(it - names.begin());
    if (seen[idx]) {
      throw Error(ErrorCode::ConflictingDuplicate,
                  "duplicate weight for '" + name + "'");
    }
    seen[idx] = true;
    w.w[idx] = value;
  }
  for (std::size_t o = 0; o < names.size(); ++o) {
    if (!seen[o]) {
      throw Error(ErrorCode::BadConfig, "missing weight for '" + names[o] + "'");
    }
  }
  return w;
}

// Scores for every pair of the evaluation set under the requested source.
std::vector<double> source_scores(const EvaluateArgs& a, const LoadedData& data,
                                  std::span<const Pair> all_pairs) {
  if (a.source == "mean") {
    ExpertRegistry registry = register_experts(parse_decls(a.experts));
    ScoreMatrix sm = score_pairs(registry, data.g, data.features_ptr(),
                                 all_pairs, a.heur, a.data.threads);
    return mean_ensemble(sm);
  }
  if (a.source == "global") {
    if (a.weights_path.empty()) {
      throw Error(ErrorCode::BadConfig, "--source global needs --weights");
    }
    ExpertRegistry registry = register_experts(parse_decls(a.experts));
    ScoreMatrix sm = score_pairs(registry, data.g, data.features_ptr(),
                                 all_pairs, a.heur, a.data.threads);
    GlobalWeights w = read_weights_file(a.weights_path, registry.names());
    return global_ensemble_predict(w, sm);
  }
  if (a.source == "gate") {
    if (a.gate_path.empty()) {
      throw Error(ErrorCode::BadConfig, "--source gate needs --gate");
    }
    GateNetwork gn = load_gate_checkpoint(a.gate_path);
    ExpertRegistry registry = register_experts(parse_decls(a.experts));
    return predict_pairs(gn, registry, data.g, data.features_ptr(), all_pairs,
                         a.data.threads);
  }
  ExpertDecl decl;
  try {
    decl = parse_expert_decl(a.source);
  } catch (const Error& e) {
    if (e.code() == ErrorCode::UnknownHeuristic) {
      throw Error(ErrorCode::UnknownSource,
                  "unknown score source '" + a.source +
                      "'; available: cn aa ra sp katz ppr fcs mlp=<ckpt> "
                      "external:<name>=<file> mean global gate");
    }
    throw;
  }
  ExpertRegistry registry = register_experts(std::span(&decl, 1));
  ScoreMatrix sm = score_pairs(registry, data.g, data.features_ptr(), all_pairs,
                               a.heur, a.data.threads);
  auto row = sm.expert_row(0);
  return std::vector<double>(row.begin(), row.end());
}

void run_evaluate(const EvaluateArgs& a) {
  RunOutputs out(a.out_dir);
  StageClock clock;

  LoadedData data;
  clock.run("load", [&] { data = load_data(a.data); });

  EvalSet set = pick_eval_set(data, a.set);
  std::vector<Pair> all_pairs = concat_eval_pairs(set);

  std::vector<double> scores;
  clock.run("score", [&] { scores = source_scores(a, data, all_pairs); });

  RankingReport report;
  clock.run("rank", [&] {
    std::size_t n_pos = set.pos->size();
    std::vector<double> pos_scores(scores.begin(), scores.begin() + n_pos);
    NegScores negs = regroup_neg_scores(
        *set.negs, std::span(scores).subspan(n_pos));
    report = evaluate(pos_scores, negs, a.ks);
  });

  clock.run("write",
            [&] { out.write_text("report.csv", ranking_report_csv(report)); });

  json cfg = data_config_json(a.data);
  cfg["heuristics"] = heur_config_json(a.heur);
  cfg["source"] = a.source;
  cfg["set"] = set.name;
  cfg["ks"] = a.ks;
  if (!a.experts.empty()) cfg["experts"] = a.experts;
  if (!a.weights_path.empty()) cfg["weights"] = a.weights_path;
  if (!a.gate_path.empty()) cfg["gate"] = a.gate_path;
  write_manifest(out, "evaluate", a.seed, cfg, clock);
}

// ---- analyze ----------------------------------------------------------------

struct AnalyzeArgs {
  DataOpts data;
  HeuristicConfig heur;
  std::string kind;
  std::string set = "test";
  int k = 10;
  std::string group_key = "cn";
  std::vector<std::string> experts;
  std::string gate_path;
  std::string out_dir = "out";
  std::uint64_t seed = 1;
};

std::string named_matrix_csv(const std::vector<std::string>& names,
                             const Matrix& values) {
  std::string csv = "method";
  for (const auto& name : names) csv += "," + name;
  csv += '\n';
  for (std::size_t r = 0; r < values.rows; ++r) {
    csv += names[r];
    for (double v : values.row(r)) csv += "," + io::csv_value(v);
    csv += '\n';
  }
  return csv;
}

void run_analyze(const AnalyzeArgs& a) {
  RunOutputs out(a.out_dir);
  StageClock clock;

  LoadedData data;
  clock.run("load", [&] { data = load_data(a.data); });

  EvalSet set = pick_eval_set(data, a.set);
  std::size_t n_pos = set.pos->size();

  if (a.kind == "gate-weights") {
    GateNetwork gn;
    std::vector<GateInput> inputs;
    std::vector<double> values;
    GroupSpec spec;
    GateWeightBreakdown breakdown;
    if (a.gate_path.empty()) {
      throw Error(ErrorCode::BadConfig, "gate-weights needs --gate");
    }
    clock.run("compute", [&] {
      gn = load_gate_checkpoint(a.gate_path);
      if (gn.uses_feature() && !data.features) {
        throw Error(ErrorCode::NoFeatures,
                    "gate checkpoint uses node features; pass --features");
      }
      Matrix structural =
          batch_structural(data.g, gn.heuristics, *set.pos, a.data.threads);
      inputs.resize(n_pos);
      for (std::size_t i = 0; i < n_pos; ++i) {
        if (gn.uses_struct()) {
          inputs[i].structural = gn.standardizer.apply(structural.row(i));
        } else {
          inputs[i].structural.assign(structural.row(i).begin(),
                                      structural.row(i).end());
        }
        if (gn.uses_feature()) {
          Pair p = (*set.pos)[i];
          inputs[i].feature = pair_feature(*data.features, p.first, p.second);
        }
      }
      GroupKey key = parse_group_key(a.group_key);
      values = grouping_values(data, key, gn.heuristics, *set.pos);
      spec = make_group_spec(key, values);
      breakdown = avg_gate_weights_per_group(gn, inputs, values, spec);
    });

    clock.run("write", [&] {
      std::string csv = "bin,count,expert,mean_weight\n";
      for (const auto& row : breakdown.rows) {
        for (std::size_t o = 0; o < breakdown.expert_names.size(); ++o) {
          csv += spec.bin_label(row.bin) + "," + std::to_string(row.count) +
                 "," + breakdown.expert_names[o] + "," +
                 io::csv_value(row.mean_weights[o]) + "\n";
        }
      }
      out.write_text("gate_weights.csv", csv);
    });

    json cfg = data_config_json(a.data);
    cfg["kind"] = a.kind;
    cfg["set"] = set.name;
    cfg["group_key"] = a.group_key;
    cfg["gate"] = a.gate_path;
    write_manifest(out, "analyze", a.seed, cfg, clock);
    return;
  }

  if (a.kind != "overlap" && a.kind != "groups" && a.kind != "grid") {
    throw Error(ErrorCode::BadConfig,
                "--kind must be overlap, groups, grid or gate-weights");
  }

  ExpertRegistry registry;
  std::vector<std::string> names;
  std::vector<std::vector<double>> pos_scores;
  std::vector<NegScores> neg_scores;
  clock.run("score", [&] {
    registry = register_experts(parse_decls(a.experts));
    names = registry.names();
    std::vector<Pair> all_pairs = concat_eval_pairs(set);
    ScoreMatrix sm = score_pairs(registry, data.g, data.features_ptr(),
                                 all_pairs, a.heur, a.data.threads);
    pos_scores.resize(sm.num_experts());
    neg_scores.resize(sm.num_experts());
    for (std::size_t o = 0; o < sm.num_experts(); ++o) {
      auto row = sm.expert_row(o);
      pos_scores[o].assign(row.begin(), row.begin() + n_pos);
      neg_scores[o] = regroup_neg_scores(*set.negs, row.subspan(n_pos));
    }
  });

  if (a.kind == "overlap") {
    OverlapMatrix om;
    clock.run("compute",
              [&] { om = overlap_matrix(names, pos_scores, neg_scores, a.k); });
    clock.run("write", [&] {
      out.write_text("overlap.csv", named_matrix_csv(om.names, om.values));
    });
  } else if (a.kind == "grid") {
    CombinationGrid grid;
    clock.run("compute", [&] {
      grid = combination_grid(names, pos_scores, neg_scores, a.k);
    });
    clock.run("write", [&] {
      out.write_text("grid.csv", named_matrix_csv(grid.names, grid.hits));
    });
  } else {
    GroupBreakdown gb;
    GroupSpec spec;
    clock.run("compute", [&] {
      GroupKey key = parse_group_key(a.group_key);
      std::vector<double> values =
          grouping_values(data, key, a.heur, *set.pos);
      spec = make_group_spec(key, values);
      gb = group_breakdown(values, names, pos_scores, neg_scores, spec, a.k);
    });
    clock.run("write", [&] {
      std::string csv = "bin,proportion,method,hits\n";
      for (const auto& row : gb.rows) {
        for (std::size_t m = 0; m < gb.method_names.size(); ++m) {
          csv += spec.bin_label(row.bin) + "," + io::csv_value(row.proportion) +
                 "," + gb.method_names[m] + "," + io::csv_value(row.hits[m]) +
                 "\n";
        }
      }
      out.write_text("groups.csv", csv);
    });
  }

  json cfg = data_config_json(a.data);
  cfg["heuristics"] = heur_config_json(a.heur);
  cfg["kind"] = a.kind;
  cfg["set"] = set.name;
  cfg["k"] = a.k;
  cfg["experts"] = a.experts;
  if (a.kind == "groups") cfg["group_key"] = a.group_key;
  write_manifest(out, "analyze", a.seed, cfg, clock);
}

void add_common_output_options(CLI::App* cmd, std::string& out_dir,
                               std::uint64_t& seed) {
  cmd->add_option("--out", out_dir, "output directory")->capture_default_str();
  cmd->add_option("--seed", seed, "top-level seed; stages derive sub-seeds")
      ->capture_default_str();
  cmd->set_config("--config", "",
                  "key = value config file; explicit flags take precedence");
}

}  // namespace

int run(const std::vector<std::string>& args) {
  CLI::App app{"link prediction with a mixture of heuristic and learned experts"};
  app.name("linkmoe");
  app.require_subcommand(1);

  HeuristicsArgs heur_args;
  CLI::App* c_heur = app.add_subcommand(
      "heuristics", "write the structural heuristic table for a split");
  add_data_options(c_heur, heur_args.data);
  add_heuristic_options(c_heur, heur_args.heur);
  add_common_output_options(c_heur, heur_args.out_dir, heur_args.seed);

  ExportScoresArgs export_args;
  CLI::App* c_export = app.add_subcommand(
      "export-scores", "score a pairs file with each declared expert");
  add_data_options(c_export, export_args.data);
  add_heuristic_options(c_export, export_args.heur);
  c_export
      ->add_option("--expert", export_args.experts,
                   "expert declaration (repeatable): cn aa ra sp katz ppr fcs "
                   "mlp=<ckpt> external:<name>=<file>")
      ->required();
  c_export->add_option("--pairs", export_args.pairs_path, "pairs file to score")
      ->required();
  add_common_output_options(c_export, export_args.out_dir, export_args.seed);

  TrainMlpArgs mlp_args;
  CLI::App* c_mlp = app.add_subcommand(
      "train-expert-mlp", "train the node-feature MLP expert on train edges");
  add_data_options(c_mlp, mlp_args.data);
  c_mlp->add_option("--lr", mlp_args.train.lr, "Adam learning rate")
      ->capture_default_str();
  c_mlp->add_option("--dropout", mlp_args.train.dropout, "hidden dropout")
      ->capture_default_str();
  c_mlp->add_option("--weight-decay", mlp_args.train.weight_decay, "L2 factor")
      ->capture_default_str();
  c_mlp->add_option("--layers", mlp_args.train.layers, "hidden layer count")
      ->capture_default_str();
  c_mlp->add_option("--hidden", mlp_args.train.hidden_dim, "hidden width")
      ->capture_default_str();
  c_mlp->add_option("--epochs", mlp_args.train.epochs, "training epochs")
      ->capture_default_str();
  c_mlp->add_option("--batch-size", mlp_args.train.batch_size, "minibatch size")
      ->capture_default_str();
  add_common_output_options(c_mlp, mlp_args.out_dir, mlp_args.seed);

  TrainGateArgs gate_args;
  CLI::App* c_gate = app.add_subcommand(
      "train-gate", "train the mixture gate over frozen experts");
  add_data_options(c_gate, gate_args.data);
  add_heuristic_options(c_gate, gate_args.heur);
  c_gate
      ->add_option("--expert", gate_args.experts,
                   "expert declaration (repeatable)")
      ->required();
  c_gate
      ->add_option("--mode", gate_args.mode,
                   "gate input mode: all only-struct only-feat only-local "
                   "only-global")
      ->capture_default_str();
  c_gate->add_flag("--normalize-scores", gate_args.normalize_scores,
                   "z-score expert columns on the gate-train pairs");
  c_gate->add_option("--grid", gate_args.grid_path,
                     "hyperparameter grid file, one key=value line per point");
  c_gate->add_option("--lr", gate_args.train.lr, "Adam learning rate")
      ->capture_default_str();
  c_gate->add_option("--dropout", gate_args.train.dropout, "hidden dropout")
      ->capture_default_str();
  c_gate
      ->add_option("--weight-decay", gate_args.train.weight_decay, "L2 factor")
      ->capture_default_str();
  c_gate->add_option("--layers", gate_args.train.layers, "branch hidden depth")
      ->capture_default_str();
  c_gate->add_option("--hidden", gate_args.train.hidden_dim, "branch width")
      ->capture_default_str();
  c_gate
      ->add_option("--fusion-layers", gate_args.train.fusion_layers,
                   "fusion head depth")
      ->capture_default_str();
  c_gate
      ->add_option("--batch-size", gate_args.train.batch_size, "minibatch size")
      ->capture_default_str();
  c_gate
      ->add_option("--max-epochs", gate_args.train.max_epochs, "epoch cap")
      ->capture_default_str();
  c_gate
      ->add_option("--patience", gate_args.train.patience,
                   "early-stopping patience on gate-val MRR")
      ->capture_default_str();
  c_gate
      ->add_option("--split-ratio", gate_args.train.split_ratio,
                   "fraction of the validation set used for gate training")
      ->capture_default_str();
  add_common_output_options(c_gate, gate_args.out_dir, gate_args.seed);

  EnsembleArgs ens_args;
  CLI::App* c_ens = app.add_subcommand(
      "ensemble", "score an evaluation set with a mean or global ensemble");
  add_data_options(c_ens, ens_args.data);
  add_heuristic_options(c_ens, ens_args.heur);
  c_ens
      ->add_option("--expert", ens_args.experts,
                   "expert declaration (repeatable)")
      ->required();
  c_ens->add_option("--kind", ens_args.kind, "mean or global")
      ->capture_default_str();
  c_ens->add_option("--set", ens_args.set, "test or valid")
      ->capture_default_str();
  c_ens
      ->add_option("--split-ratio", ens_args.split_ratio,
                   "validation re-split ratio (global only)")
      ->capture_default_str();
  c_ens->add_option("--lr", ens_args.train.lr, "Adam learning rate (global)")
      ->capture_default_str();
  c_ens
      ->add_option("--weight-decay", ens_args.train.weight_decay,
                   "L2 factor (global)")
      ->capture_default_str();
  c_ens
      ->add_option("--batch-size", ens_args.train.batch_size,
                   "minibatch size (global)")
      ->capture_default_str();
  c_ens
      ->add_option("--max-epochs", ens_args.train.max_epochs,
                   "epoch cap (global)")
      ->capture_default_str();
  c_ens
      ->add_option("--patience", ens_args.train.patience,
                   "early-stopping patience (global)")
      ->capture_default_str();
  add_common_output_options(c_ens, ens_args.out_dir, ens_args.seed);

  PredictArgs pred_args;
  CLI::App* c_pred = app.add_subcommand(
      "predict", "score a pairs file with a trained gate checkpoint");
  add_data_options(c_pred, pred_args.data);
  c_pred->add_option("--gate", pred_args.gate_path, "gate checkpoint")
      ->required();
  c_pred
      ->add_option("--expert", pred_args.experts,
                   "expert declaration (repeatable); names must match the "
                   "checkpoint")
      ->required();
  c_pred->add_option("--pairs", pred_args.pairs_path, "pairs file to score")
      ->required();
  add_common_output_options(c_pred, pred_args.out_dir, pred_args.seed);

  EvaluateArgs eval_args;
  CLI::App* c_eval = app.add_subcommand(
      "evaluate", "ranking metrics for a score source on test or valid");
  add_data_options(c_eval, eval_args.data);
  add_heuristic_options(c_eval, eval_args.heur);
  c_eval
      ->add_option("--source", eval_args.source,
                   "score source: an expert declaration, mean, global or gate")
      ->required();
  c_eval->add_option("--set", eval_args.set, "test or valid")
      ->capture_default_str();
  c_eval->add_option("--ks", eval_args.ks, "Hits@K cutoffs")
      ->delimiter(',')
      ->capture_default_str();
  c_eval->add_option("--expert", eval_args.experts,
                     "expert declarations for mean/global/gate sources");
  c_eval->add_option("--weights", eval_args.weights_path,
                     "weights.txt from a global ensemble run");
  c_eval->add_option("--gate", eval_args.gate_path, "gate checkpoint");
  add_common_output_options(c_eval, eval_args.out_dir, eval_args.seed);

  AnalyzeArgs ana_args;
  CLI::App* c_ana = app.add_subcommand(
      "analyze", "overlap, per-group, combination-grid or gate-weight tables");
  add_data_options(c_ana, ana_args.data);
  add_heuristic_options(c_ana, ana_args.heur);
  c_ana
      ->add_option("--kind", ana_args.kind,
                   "overlap, groups, grid or gate-weights")
      ->required();
  c_ana->add_option("--set", ana_args.set, "test or valid")
      ->capture_default_str();
  c_ana->add_option("--k", ana_args.k, "Hits@K cutoff")->capture_default_str();
  c_ana
      ->add_option("--group-key", ana_args.group_key,
                   "grouping heuristic: cn, sp or fcs")
      ->capture_default_str();
  c_ana->add_option("--expert", ana_args.experts,
                    "expert declarations (methods to compare)");
  c_ana->add_option("--gate", ana_args.gate_path,
                    "gate checkpoint (gate-weights)");
  add_common_output_options(c_ana, ana_args.out_dir, ana_args.seed);

  std::vector<const char*> argv;
  argv.reserve(args.size() + 1);
  argv.push_back("linkmoe");
  for (const auto& arg : args) argv.push_back(arg.c_str());

  try {
    app.parse(static_cast<int>(argv.size()), argv.data());
  } catch (const CLI::ParseError& e) {
    return app.exit(e);
  }

  try {
    if (app.got_subcommand(c_heur)) run_heuristics(heur_args);
    else if (app.got_subcommand(c_export)) run_export_scores(export_args);
    else if (app.got_subcommand(c_mlp)) run_train_expert_mlp(mlp_args);
    else if (app.got_subcommand(c_gate)) run_train_gate(gate_args);
    else if (app.got_subcommand(c_ens)) run_ensemble(ens_args);
    else if (app.got_subcommand(c_pred)) run_predict(pred_args);
    else if (app.got_subcommand(c_eval)) run_evaluate(eval_args);
    else if (app.got_subcommand(c_ana)) run_analyze(ana_args);
  } catch (const Error& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 0;
}

}  // namespace linkmoe::cli
