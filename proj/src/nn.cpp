#include "linkmoe/nn.hpp"

#include <algorithm>
#include <cmath>

namespace linkmoe {

MlpParams MlpParams::init(std::span<const std::size_t> dims, double dropout,
                          Rng& rng) {
  if (dims.size() < 2) {
    throw Error(ErrorCode::BadConfig, "mlp needs at least in and out dims");
  }
  if (dropout < 0.0 || dropout >= 1.0) {
    throw Error(ErrorCode::BadConfig, "dropout must be in [0,1)");
  }
  MlpParams p;
  p.dropout_p = dropout;
  for (std::size_t l = 0; l + 1 < dims.size(); ++l) {
    std::size_t in = dims[l], out = dims[l + 1];
    LinearLayer layer;
    layer.w = Matrix(out, in);
    layer.b.assign(out, 0.0);
    double a = std::sqrt(6.0 / static_cast<double>(in + out));
    for (double& x : layer.w.data) x = rng.next_uniform(-a, a);
    p.layers.push_back(std::move(layer));
  }
  return p;
}

std::size_t MlpParams::param_count() const {
  std::size_t n = 0;
  for (const auto& l : layers) n += l.w.size() + l.b.size();
  return n;
}

MlpGrads MlpGrads::zeros_like(const MlpParams& p) {
  MlpGrads g;
  for (const auto& l : p.layers) {
    LinearLayer z;
    z.w = Matrix(l.w.rows, l.w.cols);
    z.b.assign(l.b.size(), 0.0);
    g.layers.push_back(std::move(z));
  }
  return g;
}

void MlpGrads::scale(double s) {
  for (auto& l : layers) {
    for (double& x : l.w.data) x *= s;
    for (double& x : l.b) x *= s;
  }
}

std::vector<double> mlp_forward(const MlpParams& p, std::span<const double> x,
                                bool train_mode, Rng* rng, MlpTape* tape) {
  if (p.empty()) {
    throw Error(ErrorCode::BadConfig, "forward through empty mlp");
  }
  if (x.size() != p.in_dim()) {
    throw Error(ErrorCode::DimMismatch,
                "input size " + std::to_string(x.size()) + " != " +
                    std::to_string(p.in_dim()));
  }
  if (tape) {
    tape->inputs.clear();
    tape->preacts.clear();
    tape->drop_scale.clear();
    tape->train_mode = train_mode;
    tape->layer_count = p.layers.size();
  }
  std::vector<double> act(x.begin(), x.end());
  const std::size_t last = p.layers.size() - 1;
  for (std::size_t l = 0; l < p.layers.size(); ++l) {
    const LinearLayer& layer = p.layers[l];
    if (act.size() != layer.w.cols) {
      throw Error(ErrorCode::DimMismatch, "layer " + std::to_string(l));
    }
    std::vector<double> z(layer.w.rows);
    for (std::size_t r = 0; r < layer.w.rows; ++r) {
      double sum = layer.b[r];
      auto wrow = layer.w.row(r);
      for (std::size_t c = 0; c < wrow.size(); ++c) sum += wrow[c] * act[c];
      z[r] = sum;
    }
    if (tape) {
      tape->inputs.push_back(act);
      tape->preacts.push_back(z);
    }
    if (l == last) {
      act = std::move(z);
      break;
    }
    for (double& v : z) v = v > 0.0 ? v : 0.0;
    if (train_mode && p.dropout_p > 0.0) {
      if (!rng) {
        throw Error(ErrorCode::BadConfig, "train-mode dropout needs an rng");
      }
      double keep = 1.0 - p.dropout_p;
      std::vector<double> scale(z.size());
      for (std::size_t k = 0; k < z.size(); ++k) {
        scale[k] = rng->next_double() < keep ? 1.0 / keep : 0.0;
        z[k] *= scale[k];
      }
      if (tape) tape->drop_scale.push_back(std::move(scale));
    } else if (tape) {
      tape->drop_scale.emplace_back();
    }
    act = std::move(z);
  }
  return act;
}

std::vector<double> mlp_backward(const MlpParams& p, const MlpTape& tape,
                                 std::span<const double> grad_out,
                                 MlpGrads& grads) {
  if (tape.layer_count != p.layers.size() ||
      tape.inputs.size() != p.layers.size() ||
      grads.layers.size() != p.layers.size()) {
    throw Error(ErrorCode::TapeMismatch, "tape does not match parameters");
  }
  if (grad_out.size() != p.out_dim()) {
    throw Error(ErrorCode::TapeMismatch, "grad_out size mismatch");
  }
  std::vector<double> g(grad_out.begin(), grad_out.end());
  for (std::size_t li = p.layers.size(); li-- > 0;) {
    const LinearLayer& layer = p.layers[li];
    const auto& input = tape.inputs[li];
    if (input.size() != layer.w.cols || g.size() != layer.w.rows) {
      throw Error(ErrorCode::TapeMismatch, "layer " + std::to_string(li));
    }
    LinearLayer& gl = grads.layers[li];
    for (std::size_t r = 0; r < layer.w.rows; ++r) {
      gl.b[r] += g[r];
      auto grow = gl.w.row(r);
      for (std::size_t c = 0; c < input.size(); ++c) grow[c] += g[r] * input[c];
    }
    std::vector<double> gin(layer.w.cols, 0.0);
    for (std::size_t r = 0; r < layer.w.rows; ++r) {
      auto wrow = layer.w.row(r);
      for (std::size_t c = 0; c < wrow.size(); ++c) gin[c] += wrow[c] * g[r];
    }
    if (li > 0) {
      // Undo the previous layer's ReLU (and dropout scaling in train mode).
      const auto& prev_pre = tape.preacts[li - 1];
      if (tape.train_mode && !tape.drop_scale[li - 1].empty()) {
        const auto& scale = tape.drop_scale[li - 1];
        for (std::size_t k = 0; k < gin.size(); ++k) gin[k] *= scale[k];
      }
      for (std::size_t k = 0; k < gin.size(); ++k) {
        if (prev_pre[k] <= 0.0) gin[k] = 0.0;
      }
    }
    g = std::move(gin);
  }
  return g;
}

std::vector<double> softmax(std::span<const double> v) {
  std::vector<double> out(v.size());
  double mx = *std::max_element(v.begin(), v.end());
  double sum = 0.0;
  for (std::size_t i = 0; i < v.size(); ++i) {
    out[i] = std::exp(v[i] - mx);
    sum += out[i];
  }
  for (double& x : out) x /= sum;
  return out;
}

double sigmoid(double z) {
  if (z >= 0.0) {
    return 1.0 / (1.0 + std::exp(-z));
  }
  double e = std::exp(z);
  return e / (1.0 + e);
}

BceResult bce_with_logits(double logit, double y) {
  double z = std::clamp(logit, -30.0, 30.0);
  // loss = max(z,0) - z*y + log(1+exp(-|z|)), the stable form of
  // -[y log sigma(z) + (1-y) log(1-sigma(z))].
  double loss = std::max(z, 0.0) - z * y + std::log1p(std::exp(-std::abs(z)));
  return {loss, sigmoid(z) - y};
}

void ParamRefs::add(MlpParams& p) {
  for (auto& l : p.layers) {
    for (double& x : l.w.data) refs.push_back(&x);
    for (double& x : l.b) refs.push_back(&x);
  }
}

void ParamRefs::add(std::vector<double>& v) {
  for (double& x : v) refs.push_back(&x);
}

void flatten_grads(const MlpGrads& g, std::vector<double>& out) {
  for (const auto& l : g.layers) {
    out.insert(out.end(), l.w.data.begin(), l.w.data.end());
    out.insert(out.end(), l.b.begin(), l.b.end());
  }
}

AdamState AdamState::init(const AdamConfig& cfg, std::size_t n) {
  AdamState s;
  s.cfg = cfg;
  s.first_moment.assign(n, 0.0);
  s.second_moment.assign(n, 0.0);
  return s;
}

void adam_step(AdamState& state, const ParamRefs& params,
               std::span<const double> grads) {
  if (params.size() != grads.size() ||
      params.size() != state.first_moment.size()) {
    throw Error(ErrorCode::DimMismatch, "adam_step size mismatch");
  }
  const AdamConfig& c = state.cfg;
  ++state.step_count;
  double bc1 = 1.0 - std::pow(c.beta1, static_cast<double>(state.step_count));
  double bc2 = 1.0 - std::pow(c.beta2, static_cast<double>(state.step_count));
  for (std::size_t i = 0; i < params.size(); ++i) {
    double g = grads[i] + c.weight_decay * params.get(i);
    double m = state.first_moment[i] =
        c.beta1 * state.first_moment[i] + (1.0 - c.beta1) * g;
    double v = state.second_moment[i] =
        c.beta2 * state.second_moment[i] + (1.0 - c.beta2) * g * g;
    double update = c.lr * (m / bc1) / (std::sqrt(v / bc2) + c.eps);
    params.set(i, params.get(i) - update);
  }
}

GradCheckResult grad_check(const std::function<double()>& loss,
                           const ParamRefs& params,
                           std::span<const double> analytic,
                           std::size_t n_coords, double h, Rng& rng) {
  if (params.size() != analytic.size()) {
    throw Error(ErrorCode::DimMismatch, "grad_check size mismatch");
  }
  std::vector<std::size_t> coords(params.size());
  for (std::size_t i = 0; i < coords.size(); ++i) coords[i] = i;
  if (coords.size() > n_coords) {
    rng.shuffle(coords);
    coords.resize(n_coords);
  }
  GradCheckResult result;
  for (std::size_t i : coords) {
    double saved = params.get(i);
    params.set(i, saved + h);
    double up = loss();
    params.set(i, saved - h);
    double down = loss();
    params.set(i, saved);
    double fd = (up - down) / (2.0 * h);
    double denom = std::max({std::abs(fd), std::abs(analytic[i]), 1e-4});
    double rel = std::abs(fd - analytic[i]) / denom;
    if (rel > result.max_rel_err) {
      result.max_rel_err = rel;
      result.worst_coord = i;
    }
  }
  return result;
}

}  // namespace linkmoe
