#pragma once

#include <cstdint>
#include <functional>
#include <span>
#include <vector>

#include "linkmoe/error.hpp"
#include "linkmoe/matrix.hpp"
#include "linkmoe/rng.hpp"

namespace linkmoe {

struct LinearLayer {
  Matrix w;               // out x in
  std::vector<double> b;  // out
};

/// Plain fully-connected net: ReLU between layers, no activation after the
/// last, inverted dropout on hidden activations during training.
struct MlpParams {
  std::vector<LinearLayer> layers;
  double dropout_p = 0.0;

  /// Glorot-uniform init over the given layer widths (dims.size()>=2).
  static MlpParams init(std::span<const std::size_t> dims, double dropout,
                        Rng& rng);

  bool empty() const { return layers.empty(); }
  std::size_t in_dim() const { return layers.front().w.cols; }
  std::size_t out_dim() const { return layers.back().w.rows; }
  std::size_t param_count() const;
};

/// Gradient buffers shaped like an MlpParams; accumulated across a batch.
struct MlpGrads {
  std::vector<LinearLayer> layers;

  static MlpGrads zeros_like(const MlpParams& p);
  void scale(double s);
};

/// Intermediates recorded by mlp_forward for the exact reverse pass.
struct MlpTape {
  std::vector<std::vector<double>> inputs;      // input to each layer
  std::vector<std::vector<double>> preacts;     // W x + b per layer
  std::vector<std::vector<double>> drop_scale;  // per hidden unit: 0 or 1/(1-p)
  bool train_mode = false;
  std::size_t layer_count = 0;
};

/// Returns the last-layer pre-activation. In train mode dropout masks are
/// drawn from rng; pass a tape to record intermediates for mlp_backward.
std::vector<double> mlp_forward(const MlpParams& p, std::span<const double> x,
                                bool train_mode, Rng* rng,
                                MlpTape* tape = nullptr);

/// Exact reverse-mode gradients of the recorded computation. grad_out is the
/// loss gradient w.r.t. the forward output; parameter gradients accumulate
/// into grads and the gradient w.r.t. the input is returned.
std::vector<double> mlp_backward(const MlpParams& p, const MlpTape& tape,
                                 std::span<const double> grad_out,
                                 MlpGrads& grads);

/// Max-subtracted softmax: entries in (0,1), sum within 1e-12 of 1.
std::vector<double> softmax(std::span<const double> v);

double sigmoid(double z);

struct BceResult {
  double loss;
  double d_logit;  // y_hat - y
};

/// Binary cross entropy computed in logit space; the logit is clamped to
/// |z| <= 30 before exponentiation.
BceResult bce_with_logits(double logit, double y);

/// Flattened mutable view over a model's parameters. The traversal order is
/// fixed (per layer: weights row-major, then bias), so Adam moments and
/// gradient vectors align across calls.
struct ParamRefs {
  std::vector<double*> refs;

  std::size_t size() const { return refs.size(); }
  void add(MlpParams& p);
  void add(std::vector<double>& v);
  double get(std::size_t i) const { return *refs[i]; }
  void set(std::size_t i, double x) const { *refs[i] = x; }
};

/// Appends an MlpGrads in ParamRefs traversal order.
void flatten_grads(const MlpGrads& g, std::vector<double>& out);

struct AdamConfig {
  double lr = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  double weight_decay = 0.0;  // L2 added to the gradient before the moments
};

struct AdamState {
  AdamConfig cfg;
  std::vector<double> first_moment;
  std::vector<double> second_moment;
  std::uint64_t step_count = 0;

  static AdamState init(const AdamConfig& cfg, std::size_t n);
};

/// One bias-corrected Adam update of params in place.
void adam_step(AdamState& state, const ParamRefs& params,
               std::span<const double> grads);

struct GradCheckResult {
  double max_rel_err = 0.0;
  std::size_t worst_coord = 0;
};

/// Central finite differences of `loss` over a random subset of coordinates
/// (at least min(n_coords, #params)), compared against analytic. The loss
/// closure must be deterministic at fixed parameters.
GradCheckResult grad_check(const std::function<double()>& loss,
                           const ParamRefs& params,
                           std::span<const double> analytic,
                           std::size_t n_coords, double h, Rng& rng);

}  // namespace linkmoe
