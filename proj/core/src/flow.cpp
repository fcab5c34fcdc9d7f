#include "eulerflow/flow.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>
#include <string>

#include "eulerflow/errors.hpp"

namespace eulerflow {

namespace {

constexpr double neg_three_log_two_pi = -3.0 * 1.8378770664093454836;  // -3 ln 2pi

void untransformed_indices(int t, int& a, int& b) {
  a = (t == 0) ? 1 : 0;
  b = (t == 2) ? 1 : 2;
}

void build_features(const EulerAngles& e, int t, std::span<const double> ctx,
                    std::vector<double>& feat) {
  int a, b;
  untransformed_indices(t, a, b);
  feat.resize(4 + ctx.size());
  feat[0] = std::cos(e[a]);
  feat[1] = std::sin(e[a]);
  feat[2] = std::cos(e[b]);
  feat[3] = std::sin(e[b]);
  for (std::size_t i = 0; i < ctx.size(); ++i) feat[4 + i] = ctx[i];
}

}  // namespace

double log_sum_exp(double a, double b) {
  const double m = std::max(a, b);
  if (!std::isfinite(m)) return m;  // both -inf (or one +inf)
  return m + std::log(std::exp(a - m) + std::exp(b - m));
}

FlowModel::FlowModel(FlowConfig cfg) : cfg_(std::move(cfg)) {
  if (cfg_.layers <= 0) throw InvalidParameter("flow: layer count must be positive");
  if (cfg_.kernels <= 0) throw InvalidParameter("flow: kernel count must be positive");
  if (cfg_.context_width < 0) throw InvalidParameter("flow: negative context width");
  layers_.reserve(static_cast<std::size_t>(cfg_.layers));
  for (int i = 0; i < cfg_.layers; ++i) {
    CouplingLayer layer;
    layer.transformed = i % 3;
    layer.kernel_count = cfg_.kernels;
    std::vector<int> widths;
    widths.push_back(4 + cfg_.context_width);
    for (int h : cfg_.hidden) widths.push_back(h);
    widths.push_back(3 * cfg_.kernels);
    layer.net = ConditionerNet(std::move(widths),
                               cfg_.seed * 0x9e3779b97f4a7c15ULL + static_cast<std::uint64_t>(i) + 1);
    layers_.push_back(std::move(layer));
  }
}

std::size_t FlowModel::param_count() const {
  std::size_t n = 0;
  for (const auto& l : layers_) n += l.net.param_count();
  return n;
}

void FlowModel::get_params(std::span<double> out) const {
  if (out.size() != param_count()) throw ShapeMismatch("get_params: buffer size");
  std::size_t off = 0;
  for (const auto& l : layers_) {
    auto p = l.net.params();
    std::copy(p.begin(), p.end(), out.begin() + static_cast<std::ptrdiff_t>(off));
    off += p.size();
  }
}

void FlowModel::set_params(std::span<const double> in) {
  if (in.size() != param_count()) throw ShapeMismatch("set_params: buffer size");
  std::size_t off = 0;
  for (auto& l : layers_) {
    auto p = l.net.params();
    std::copy(in.begin() + static_cast<std::ptrdiff_t>(off),
              in.begin() + static_cast<std::ptrdiff_t>(off + p.size()), p.begin());
    off += p.size();
  }
}

std::span<double> FlowModel::layer_params(int layer) {
  return layers_.at(static_cast<std::size_t>(layer)).net.params();
}

void FlowModel::check_ctx(std::span<const double> ctx) const {
  if (static_cast<int>(ctx.size()) != cfg_.context_width) {
    throw ShapeMismatch("context width " + std::to_string(ctx.size()) + " != " +
                        std::to_string(cfg_.context_width));
  }
}

EulerAngles FlowModel::forward_trace(const EulerAngles& e, std::span<const double> ctx,
                                     FlowWorkspace& ws, double* log_det) const {
  check_ctx(ctx);
  ws.layers.resize(layers_.size());
  EulerAngles cur = e;
  double ld = 0.0;
  for (std::size_t l = 0; l < layers_.size(); ++l) {
    const CouplingLayer& layer = layers_[l];
    LayerTrace& tr = ws.layers[l];
    build_features(cur, layer.transformed, ctx, tr.features);
    layer.net.forward(tr.features, tr.net_ws);
    tr.combo = apply_param_constraints(layer.net.output(tr.net_ws), layer.kernel_count);
    tr.theta_in = cur[layer.transformed];
    const double theta_out = combination_forward(tr.combo, tr.theta_in);
    ld += combination_log_det(tr.combo, tr.theta_in);
    cur.set(layer.transformed, theta_out);
  }
  if (log_det) *log_det = ld;
  return cur;
}

void FlowModel::accumulate_gradient(FlowWorkspace& ws, double lambda,
                                    std::span<double> grad) const {
  if (grad.size() != param_count()) throw ShapeMismatch("accumulate_gradient: grad size");
  if (ws.layers.size() != layers_.size()) throw StateMismatch("accumulate_gradient: stale trace");

  // Parameter offsets, innermost layer last.
  std::size_t total = param_count();
  double angle_adj[3] = {0.0, 0.0, 0.0};  // base distribution is flat

  auto& raw_adj = ws.raw_adj;
  auto& feat_adj = ws.feat_adj;

  for (std::size_t l = layers_.size(); l-- > 0;) {
    const CouplingLayer& layer = layers_[l];
    const LayerTrace& tr = ws.layers[l];
    total -= layer.net.param_count();
    const int t = layer.transformed;
    int a, b;
    untransformed_indices(t, a, b);

    const CombinationVjp vjp =
        combination_vjp(tr.combo, tr.theta_in, angle_adj[t], lambda);

    raw_adj.assign(3 * static_cast<std::size_t>(layer.kernel_count), 0.0);
    param_constraints_vjp(layer.net.output(tr.net_ws), tr.combo, vjp.weight_adj,
                          vjp.kernel_adj, raw_adj);

    feat_adj.assign(tr.features.size(), 0.0);
    layer.net.backward(tr.net_ws, raw_adj,
                       grad.subspan(total, layer.net.param_count()), feat_adj);

    // features were [cos a, sin a, cos b, sin b, ctx...]
    angle_adj[a] += -tr.features[1] * feat_adj[0] + tr.features[0] * feat_adj[1];
    angle_adj[b] += -tr.features[3] * feat_adj[2] + tr.features[2] * feat_adj[3];
    angle_adj[t] = vjp.theta_adj;
  }
}

double FlowModel::log_prob(const EulerAngles& e, std::span<const double> ctx,
                           DensityMode mode) const {
  thread_local FlowWorkspace ws;
  double ld = 0.0;
  forward_trace(e, ctx, ws, &ld);
  const double torus = neg_three_log_two_pi + ld;
  if (mode == DensityMode::Torus) return torus;

  // Haar: combine the partner preimage (omega+pi, pi-phi, kappa+pi) and the
  // chart factor 8pi^2 / |cos phi|.
  const EulerAngles partner(e.omega + std::numbers::pi, std::numbers::pi - e.phi,
                            e.kappa + std::numbers::pi);
  double ld2 = 0.0;
  forward_trace(partner, ctx, ws, &ld2);
  const double torus2 = neg_three_log_two_pi + ld2;
  const double log_8pi2 = std::log(8.0) + 2.0 * std::log(std::numbers::pi);
  return log_sum_exp(torus, torus2) + log_8pi2 - std::log(std::abs(std::cos(e.phi)));
}

double FlowModel::log_prob(const RotationMatrix& r, std::span<const double> ctx,
                           DensityMode mode) const {
  return log_prob(matrix_to_euler(r), ctx, mode);
}

std::vector<EulerAngles> FlowModel::sample_angles(int n, std::span<const double> ctx,
                                                  RandomSource& rng) const {
  check_ctx(ctx);
  std::vector<EulerAngles> out;
  out.reserve(static_cast<std::size_t>(n));
  for (int i = 0; i < n; ++i) {
    EulerAngles e(uniform_angle(rng), uniform_angle(rng), uniform_angle(rng));
    for (std::size_t l = layers_.size(); l-- > 0;) {
      e = layer_inverse(layers_[l], e, ctx);
    }
    out.push_back(e);
  }
  return out;
}

std::vector<RotationMatrix> FlowModel::sample(int n, std::span<const double> ctx,
                                              RandomSource& rng) const {
  std::vector<RotationMatrix> out;
  out.reserve(static_cast<std::size_t>(n));
  for (const EulerAngles& e : sample_angles(n, ctx, rng)) out.push_back(euler_to_matrix(e));
  return out;
}

RotationMatrix FlowModel::predict_mode(std::span<const double> ctx, int n_candidates,
                                       RandomSource& rng) const {
  if (n_candidates <= 0) throw InvalidParameter("predict_mode: need at least one candidate");
  const std::vector<EulerAngles> cands = sample_angles(n_candidates, ctx, rng);
  double best = -std::numeric_limits<double>::infinity();
  const EulerAngles* arg = &cands.front();
  for (const EulerAngles& e : cands) {
    const double lp = log_prob(e, ctx, DensityMode::Haar);
    if (lp > best) {
      best = lp;
      arg = &e;
    }
  }
  return euler_to_matrix(*arg);
}

EulerAngles layer_forward(const CouplingLayer& layer, const EulerAngles& e,
                          std::span<const double> ctx, double* log_det) {
  thread_local std::vector<double> feat;
  thread_local NetWorkspace nws;
  build_features(e, layer.transformed, ctx, feat);
  layer.net.forward(feat, nws);
  const MobiusCombination combo =
      apply_param_constraints(layer.net.output(nws), layer.kernel_count);
  const double theta_in = e[layer.transformed];
  if (log_det) *log_det = combination_log_det(combo, theta_in);
  EulerAngles out = e;
  out.set(layer.transformed, combination_forward(combo, theta_in));
  return out;
}

EulerAngles layer_inverse(const CouplingLayer& layer, const EulerAngles& e_prime,
                          std::span<const double> ctx, double eps) {
  thread_local std::vector<double> feat;
  thread_local NetWorkspace nws;
  build_features(e_prime, layer.transformed, ctx, feat);
  layer.net.forward(feat, nws);
  const MobiusCombination combo =
      apply_param_constraints(layer.net.output(nws), layer.kernel_count);
  EulerAngles out = e_prime;
  out.set(layer.transformed, combination_inverse(combo, e_prime[layer.transformed], eps));
  return out;
}

double nll_loss(const FlowModel& model, std::span<const EulerAngles> batch,
                std::span<const double> ctx, std::span<double> grad, FlowWorkspace& ws) {
  if (batch.empty()) throw InvalidParameter("nll_loss: empty batch");
  const int cw = model.context_width();
  if (ctx.size() != batch.size() * static_cast<std::size_t>(cw)) {
    throw ShapeMismatch("nll_loss: context buffer size");
  }
  const bool with_grad = !grad.empty();
  if (with_grad && grad.size() != model.param_count()) {
    throw ShapeMismatch("nll_loss: grad buffer size");
  }
  const double inv_n = 1.0 / static_cast<double>(batch.size());
  double loss = 0.0;
  for (std::size_t i = 0; i < batch.size(); ++i) {
    const std::span<const double> c = ctx.subspan(i * static_cast<std::size_t>(cw),
                                                  static_cast<std::size_t>(cw));
    double ld = 0.0;
    model.forward_trace(batch[i], c, ws, &ld);
    loss += -(neg_three_log_two_pi + ld) * inv_n;
    if (with_grad) model.accumulate_gradient(ws, -inv_n, grad);
  }
  return loss;
}

}  // namespace eulerflow
