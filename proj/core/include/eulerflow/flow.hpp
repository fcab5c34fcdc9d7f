#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include "eulerflow/net.hpp"
#include "eulerflow/rotation.hpp"

namespace eulerflow {

// How log_prob reports density:
//   Torus: w.r.t. d(omega) d(phi) d(kappa) on [0, 2pi)^3 (training objective).
//   Haar:  w.r.t. the normalized Haar measure on SO(3); sums the two Euler
//          preimages of the rotation and applies the 8pi^2 / |cos phi|
//          chart factor (see docs/math-notes.md).
enum class DensityMode { Torus, Haar };

struct FlowConfig {
  int layers = 24;
  int kernels = 64;
  int context_width = 0;
  std::vector<int> hidden{64, 64};
  std::uint64_t seed = 0;
};

struct CouplingLayer {
  int transformed = 0;  // 0 = omega, 1 = phi, 2 = kappa
  int kernel_count = 0;
  ConditionerNet net;   // input 4 + context_width, output 3 * kernel_count
};

struct LayerTrace {
  double theta_in = 0.0;
  std::vector<double> features;
  NetWorkspace net_ws;
  MobiusCombination combo;
};

struct FlowWorkspace {
  std::vector<LayerTrace> layers;
  std::vector<double> raw_adj, feat_adj;  // backward scratch
};

// Stack of Mobius coupling layers over the uniform torus base.  Layer i
// transforms angle i % 3, so any three consecutive layers touch every angle.
class FlowModel {
 public:
  FlowModel() = default;
  explicit FlowModel(FlowConfig cfg);

  const FlowConfig& config() const { return cfg_; }
  int layer_count() const { return static_cast<int>(layers_.size()); }
  int context_width() const { return cfg_.context_width; }
  std::span<const CouplingLayer> layers() const { return layers_; }

  std::size_t param_count() const;
  void get_params(std::span<double> out) const;
  void set_params(std::span<const double> in);
  // Mutable per-layer parameter slice; ordering matches get_params.
  std::span<double> layer_params(int layer);

  // Normalizing direction: returns the base-space point, accumulates the
  // total log |det J| into *log_det, and fills `ws` for a later gradient.
  EulerAngles forward_trace(const EulerAngles& e, std::span<const double> ctx,
                            FlowWorkspace& ws, double* log_det) const;

  // Adds d(lambda * sum_l log_det_l)/d(params) for the traced sample into
  // `grad` (size param_count).  Reuses ws scratch buffers.
  void accumulate_gradient(FlowWorkspace& ws, double lambda,
                           std::span<double> grad) const;

  double log_prob(const EulerAngles& e, std::span<const double> ctx = {},
                  DensityMode mode = DensityMode::Torus) const;
  double log_prob(const RotationMatrix& r, std::span<const double> ctx = {},
                  DensityMode mode = DensityMode::Torus) const;

  std::vector<EulerAngles> sample_angles(int n, std::span<const double> ctx,
                                         RandomSource& rng) const;
  std::vector<RotationMatrix> sample(int n, std::span<const double> ctx,
                                     RandomSource& rng) const;

  // Sample-argmax mode estimate: draws n_candidates and returns the one the
  // model scores highest (Haar density, the geometric choice on SO(3)).
  RotationMatrix predict_mode(std::span<const double> ctx, int n_candidates,
                              RandomSource& rng) const;

 private:
  void check_ctx(std::span<const double> ctx) const;

  FlowConfig cfg_;
  std::vector<CouplingLayer> layers_;
};

// One coupling step.  ctx must match the layer's net input width minus 4.
EulerAngles layer_forward(const CouplingLayer& layer, const EulerAngles& e,
                          std::span<const double> ctx, double* log_det = nullptr);
EulerAngles layer_inverse(const CouplingLayer& layer, const EulerAngles& e_prime,
                          std::span<const double> ctx, double eps = 1e-9);

// Mean negative torus log-likelihood over a batch; accumulates d(loss)/d(params)
// into `grad` when non-empty.  ctx is flat row-major (batch x context_width),
// empty for unconditional models.
double nll_loss(const FlowModel& model, std::span<const EulerAngles> batch,
                std::span<const double> ctx, std::span<double> grad,
                FlowWorkspace& ws);

double log_sum_exp(double a, double b);

}  // namespace eulerflow
