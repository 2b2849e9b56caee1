#include "linkmoe/checkpoint.hpp"

#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>

#include "linkmoe/io.hpp"

static_assert(std::endian::native == std::endian::little,
              "checkpoint format is little-endian");

namespace linkmoe {

namespace {

constexpr char kMagic[4] = {'L', 'M', 'O', 'E'};
constexpr std::uint32_t kFormatVersion = 1;
constexpr std::uint32_t kKindFeatureMlp = 1;
constexpr std::uint32_t kKindGate = 2;
constexpr std::uint64_t kMaxStringLen = 1 << 16;
constexpr std::uint64_t kMaxDim = 1 << 24;

class Writer {
public:
  explicit Writer(const std::filesystem::path& path)
      : out_(path, std::ios::binary), path_(path) {
    if (!out_) {
      throw Error(ErrorCode::IoError, "cannot open " + path.string());
    }
  }

  void bytes(const void* p, std::size_t n) {
    out_.write(static_cast<const char*>(p), static_cast<std::streamsize>(n));
  }
  void u32(std::uint32_t v) { bytes(&v, sizeof v); }
  void u64(std::uint64_t v) { bytes(&v, sizeof v); }
  void f64(double v) { bytes(&v, sizeof v); }
  void f64s(std::span<const double> v) { bytes(v.data(), v.size() * sizeof(double)); }
  void str(const std::string& s) {
    u64(s.size());
    bytes(s.data(), s.size());
  }

  void finish() {
    out_.flush();
    if (!out_) {
      throw Error(ErrorCode::IoError, "short write to " + path_.string());
    }
  }

private:
  std::ofstream out_;
  std::filesystem::path path_;
};

class Reader {
public:
  explicit Reader(const std::filesystem::path& path)
      : in_(path, std::ios::binary), path_(path) {
    if (!in_) {
      throw Error(ErrorCode::MissingFile, path.string());
    }
  }

  void bytes(void* p, std::size_t n) {
    in_.read(static_cast<char*>(p), static_cast<std::streamsize>(n));
    if (static_cast<std::size_t>(in_.gcount()) != n) {
      throw Error(ErrorCode::BadCheckpoint, "truncated file " + path_.string());
    }
  }
  std::uint32_t u32() {
    std::uint32_t v;
    bytes(&v, sizeof v);
    return v;
  }
  std::uint64_t u64() {
    std::uint64_t v;
    bytes(&v, sizeof v);
    return v;
  }
  double f64() {
    double v;
    bytes(&v, sizeof v);
    if (!std::isfinite(v)) {
      throw Error(ErrorCode::BadCheckpoint,
                  "non-finite parameter in " + path_.string());
    }
    return v;
  }
  void f64s(std::span<double> v) {
    bytes(v.data(), v.size() * sizeof(double));
    for (double x : v) {
      if (!std::isfinite(x)) {
        throw Error(ErrorCode::BadCheckpoint,
                    "non-finite parameter in " + path_.string());
      }
    }
  }
  std::string str() {
    const std::uint64_t n = u64();
    if (n > kMaxStringLen) {
      throw Error(ErrorCode::BadCheckpoint, "oversized string in " + path_.string());
    }
    std::string s(n, '\0');
    bytes(s.data(), n);
    return s;
  }
  const std::filesystem::path& path() const { return path_; }

private:
  std::ifstream in_;
  std::filesystem::path path_;
};

void write_mlp(Writer& w, const MlpParams& p) {
  w.u64(p.layers.size());
  for (const auto& layer : p.layers) {
    w.u64(layer.w.rows);
    w.u64(layer.w.cols);
  }
  w.f64(p.dropout_p);
  for (const auto& layer : p.layers) {
    w.f64s(layer.w.data);
    w.f64s(layer.b);
  }
}

MlpParams read_mlp(Reader& r) {
  const std::uint64_t n_layers = r.u64();
  if (n_layers == 0 || n_layers > 64) {
    throw Error(ErrorCode::BadCheckpoint, "bad layer count in " + r.path().string());
  }
  std::vector<std::pair<std::uint64_t, std::uint64_t>> dims(n_layers);
  for (auto& [rows, cols] : dims) {
    rows = r.u64();
    cols = r.u64();
    if (rows == 0 || cols == 0 || rows > kMaxDim || cols > kMaxDim) {
      throw Error(ErrorCode::BadCheckpoint, "bad layer shape in " + r.path().string());
    }
  }
  for (std::size_t l = 1; l < dims.size(); ++l) {
    if (dims[l].second != dims[l - 1].first) {
      throw Error(ErrorCode::BadCheckpoint,
                  "layer dimensions do not chain in " + r.path().string());
    }
  }
  MlpParams p;
  p.dropout_p = r.f64();
  if (p.dropout_p < 0.0 || p.dropout_p >= 1.0) {
    throw Error(ErrorCode::BadCheckpoint, "bad dropout in " + r.path().string());
  }
  for (auto [rows, cols] : dims) {
    LinearLayer layer;
    layer.w = Matrix(rows, cols);
    layer.b.resize(rows);
    r.f64s(layer.w.data);
    r.f64s(layer.b);
    p.layers.push_back(std::move(layer));
  }
  return p;
}

void write_header(Writer& w, std::uint32_t kind) {
  w.bytes(kMagic, sizeof kMagic);
  w.u32(kFormatVersion);
  w.u32(kind);
}

void read_header(Reader& r, std::uint32_t expected_kind) {
  char magic[4];
  r.bytes(magic, sizeof magic);
  if (std::memcmp(magic, kMagic, sizeof kMagic) != 0) {
    throw Error(ErrorCode::BadCheckpoint, "bad magic in " + r.path().string());
  }
  const std::uint32_t version = r.u32();
  if (version != kFormatVersion) {
    throw Error(ErrorCode::BadCheckpoint,
                "unsupported format version " + std::to_string(version));
  }
  const std::uint32_t kind = r.u32();
  if (kind != expected_kind) {
    throw Error(ErrorCode::BadCheckpoint,
                "checkpoint kind " + std::to_string(kind) + " where " +
                    std::to_string(expected_kind) + " was expected");
  }
}

void write_standardizer_like(Writer& w, const std::vector<double>& mean,
                             const std::vector<double>& stdev) {
  w.u64(mean.size());
  w.f64s(mean);
  w.f64s(stdev);
}

void read_standardizer_like(Reader& r, std::vector<double>& mean,
                            std::vector<double>& stdev) {
  const std::uint64_t n = r.u64();
  if (n > kMaxDim) {
    throw Error(ErrorCode::BadCheckpoint, "oversized standardizer");
  }
  mean.resize(n);
  stdev.resize(n);
  r.f64s(mean);
  r.f64s(stdev);
}

}  // namespace

void save_feature_mlp_checkpoint(const FeatureMlpExpert& expert,
                                 const std::filesystem::path& path,
                                 const std::string& sidecar_text) {
  Writer w(path);
  write_header(w, kKindFeatureMlp);
  w.u64(expert.feature_dim);
  write_mlp(w, expert.net);
  w.finish();
  io::write_text_file(path.string() + ".meta", sidecar_text);
}

FeatureMlpExpert load_feature_mlp_checkpoint(const std::filesystem::path& path) {
  Reader r(path);
  read_header(r, kKindFeatureMlp);
  FeatureMlpExpert expert;
  expert.feature_dim = r.u64();
  expert.net = read_mlp(r);
  if (expert.net.in_dim() != expert.feature_dim || expert.net.out_dim() != 1) {
    throw Error(ErrorCode::BadCheckpoint,
                "feature expert shape mismatch in " + path.string());
  }
  return expert;
}

void save_gate_checkpoint(const GateNetwork& gn,
                          const std::filesystem::path& path,
                          const std::string& sidecar_text) {
  Writer w(path);
  write_header(w, kKindGate);
  w.u32(static_cast<std::uint32_t>(gn.mode));
  w.u64(gn.num_experts);
  for (const auto& name : gn.expert_names) w.str(name);
  w.u64(gn.feature_dim);
  w.f64(gn.heuristics.katz_beta);
  w.u32(static_cast<std::uint32_t>(gn.heuristics.katz_max_len));
  w.f64(gn.heuristics.ppr_alpha);
  w.f64(gn.heuristics.ppr_eps);
  w.u32(static_cast<std::uint32_t>(gn.heuristics.sp_cap));
  write_standardizer_like(w, gn.standardizer.mean, gn.standardizer.stdev);
  w.u32(gn.normalize_scores ? 1 : 0);
  if (gn.normalize_scores) {
    write_standardizer_like(w, gn.score_norm.mean, gn.score_norm.stdev);
  }
  if (gn.uses_struct()) write_mlp(w, gn.struct_branch);
  if (gn.uses_feature()) write_mlp(w, gn.feat_branch);
  write_mlp(w, gn.fusion_head);
  w.finish();
  io::write_text_file(path.string() + ".meta", sidecar_text);
}

GateNetwork load_gate_checkpoint(const std::filesystem::path& path) {
  Reader r(path);
  read_header(r, kKindGate);
  GateNetwork gn;
  const std::uint32_t mode = r.u32();
  if (mode > static_cast<std::uint32_t>(GateMode::OnlyGlobalStruct)) {
    throw Error(ErrorCode::BadCheckpoint, "bad gate mode in " + path.string());
  }
  gn.mode = static_cast<GateMode>(mode);
  gn.num_experts = r.u64();
  if (gn.num_experts == 0 || gn.num_experts > kMaxDim) {
    throw Error(ErrorCode::BadCheckpoint, "bad expert count in " + path.string());
  }
  gn.expert_names.resize(gn.num_experts);
  for (auto& name : gn.expert_names) name = r.str();
  gn.feature_dim = r.u64();
  gn.heuristics.katz_beta = r.f64();
  gn.heuristics.katz_max_len = static_cast<int>(r.u32());
  gn.heuristics.ppr_alpha = r.f64();
  gn.heuristics.ppr_eps = r.f64();
  gn.heuristics.sp_cap = static_cast<int>(r.u32());
  gn.heuristics.validate();
  read_standardizer_like(r, gn.standardizer.mean, gn.standardizer.stdev);
  if (gn.standardizer.mean.size() != kStructuralDim) {
    throw Error(ErrorCode::BadCheckpoint,
                "standardizer width mismatch in " + path.string());
  }
  gn.normalize_scores = r.u32() != 0;
  if (gn.normalize_scores) {
    read_standardizer_like(r, gn.score_norm.mean, gn.score_norm.stdev);
    if (gn.score_norm.mean.size() != gn.num_experts) {
      throw Error(ErrorCode::BadCheckpoint,
                  "score normalizer width mismatch in " + path.string());
    }
  }
  if (gn.uses_struct()) gn.struct_branch = read_mlp(r);
  if (gn.uses_feature()) gn.feat_branch = read_mlp(r);
  gn.fusion_head = read_mlp(r);
  if (gn.fusion_head.out_dim() != gn.num_experts) {
    throw Error(ErrorCode::BadCheckpoint,
                "fusion head width mismatch in " + path.string());
  }
  if (gn.uses_struct() &&
      gn.struct_branch.in_dim() != active_struct_columns(gn.mode).size()) {
    throw Error(ErrorCode::BadCheckpoint,
                "structural branch width mismatch in " + path.string());
  }
  if (gn.uses_feature() && gn.feat_branch.in_dim() != gn.feature_dim) {
    throw Error(ErrorCode::BadCheckpoint,
                "feature branch width mismatch in " + path.string());
  }
  return gn;
}

}  // namespace linkmoe
