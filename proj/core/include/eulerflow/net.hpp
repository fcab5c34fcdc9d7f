#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include "eulerflow/mobius.hpp"

namespace eulerflow {

// Activations cached by a forward pass; reused across samples to avoid
// per-call allocation in the training loop.
struct NetWorkspace {
  // acts[0] = input copy, acts[l] = output of dense layer l-1 (post tanh for
  // hidden layers, raw linear output for the last).
  std::vector<std::vector<double>> acts;
};

// Plain MLP: tanh hidden layers, linear output.  Parameters live in one flat
// buffer [W0|b0|W1|b1|...] so the optimizer and checkpoints can treat the
// whole model as a single vector.
class ConditionerNet {
 public:
  ConditionerNet() = default;
  // widths = {input, hidden..., output}.  Hidden layers get Xavier-uniform
  // init from `seed`; the output layer starts at exactly zero so the flow it
  // parameterizes is the identity.
  ConditionerNet(std::vector<int> widths, std::uint64_t seed);

  int input_width() const { return widths_.front(); }
  int output_width() const { return widths_.back(); }
  const std::vector<int>& widths() const { return widths_; }

  std::size_t param_count() const { return params_.size(); }
  std::span<double> params() { return params_; }
  std::span<const double> params() const { return params_; }

  // Throws ShapeMismatch if x or the workspace disagree with the widths.
  void forward(std::span<const double> x, NetWorkspace& ws) const;
  std::span<const double> output(const NetWorkspace& ws) const;

  // Accumulates (+=) into param_grad (size param_count) and x_adj (size
  // input_width).  `ws` must hold the forward pass for the same input.
  void backward(const NetWorkspace& ws, std::span<const double> out_adj,
                std::span<double> param_grad, std::span<double> x_adj) const;

 private:
  std::vector<int> widths_;
  std::vector<double> params_;
  std::vector<std::size_t> w_off_, b_off_;
};

// raw = K weight logits followed by K (u, v) pairs.  Weights go through a
// softmax; kernel coordinates are pulled into the disk by
// w = raw * (limit * tanh(|raw|) / |raw|).
MobiusCombination apply_param_constraints(std::span<const double> raw, int kernel_count);

// Adjoint of apply_param_constraints: maps (weight_adj, kernel_adj) back to
// the raw vector.  `combo` must be the constrained output for `raw`.
void param_constraints_vjp(std::span<const double> raw, const MobiusCombination& combo,
                           std::span<const double> weight_adj,
                           std::span<const DiskPoint> kernel_adj,
                           std::span<double> raw_adj);

struct AdamConfig {
  double lr = 1e-4;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
};

class AdamOptimizer {
 public:
  AdamOptimizer() = default;
  AdamOptimizer(std::size_t n, AdamConfig cfg) : cfg_(cfg), m_(n, 0.0), v_(n, 0.0) {}

  const AdamConfig& config() const { return cfg_; }
  AdamConfig& config() { return cfg_; }
  std::int64_t step_count() const { return t_; }
  std::span<const double> moment1() const { return m_; }
  std::span<const double> moment2() const { return v_; }
  void restore(std::int64_t t, std::vector<double> m, std::vector<double> v);

  // In-place bias-corrected update.  Throws StateMismatch on size mismatch.
  void step(std::span<double> params, std::span<const double> grads);

 private:
  AdamConfig cfg_;
  std::int64_t t_ = 0;
  std::vector<double> m_, v_;
};

// Scales grads in place so the global L2 norm is at most `max_norm`.
// Returns the pre-clip norm.
double clip_gradient_norm(std::span<double> grads, double max_norm);

}  // namespace eulerflow
