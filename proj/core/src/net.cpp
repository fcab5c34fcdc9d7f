#include "eulerflow/net.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "eulerflow/errors.hpp"
#include "eulerflow/rng.hpp"

namespace eulerflow {

ConditionerNet::ConditionerNet(std::vector<int> widths, std::uint64_t seed)
    : widths_(std::move(widths)) {
  if (widths_.size() < 2) throw InvalidParameter("net needs at least input and output widths");
  for (int w : widths_)
    if (w <= 0) throw InvalidParameter("net width must be positive");

  std::size_t total = 0;
  for (std::size_t l = 0; l + 1 < widths_.size(); ++l) {
    w_off_.push_back(total);
    total += static_cast<std::size_t>(widths_[l]) * static_cast<std::size_t>(widths_[l + 1]);
    b_off_.push_back(total);
    total += static_cast<std::size_t>(widths_[l + 1]);
  }
  params_.assign(total, 0.0);

  RandomSource rng(seed);
  const std::size_t n_layers = widths_.size() - 1;
  for (std::size_t l = 0; l + 1 < n_layers; ++l) {
    // Hidden layers only; the final layer stays zero.
    const int fan_in = widths_[l], fan_out = widths_[l + 1];
    const double a = std::sqrt(6.0 / (fan_in + fan_out));
    double* w = params_.data() + w_off_[l];
    const std::size_t n = static_cast<std::size_t>(fan_in) * static_cast<std::size_t>(fan_out);
    for (std::size_t i = 0; i < n; ++i) w[i] = a * (2.0 * uniform01(rng) - 1.0);
    // biases stay zero
  }
}

void ConditionerNet::forward(std::span<const double> x, NetWorkspace& ws) const {
  if (static_cast<int>(x.size()) != input_width()) {
    throw ShapeMismatch("net forward: input size " + std::to_string(x.size()) +
                        " != " + std::to_string(input_width()));
  }
  const std::size_t n_layers = widths_.size() - 1;
  ws.acts.resize(n_layers + 1);
  ws.acts[0].assign(x.begin(), x.end());
  for (std::size_t l = 0; l < n_layers; ++l) {
    const int in = widths_[l], out = widths_[l + 1];
    auto& y = ws.acts[l + 1];
    y.assign(static_cast<std::size_t>(out), 0.0);
    const double* w = params_.data() + w_off_[l];
    const double* b = params_.data() + b_off_[l];
    const double* a = ws.acts[l].data();
    for (int o = 0; o < out; ++o) {
      double s = b[o];
      const double* wr = w + static_cast<std::size_t>(o) * static_cast<std::size_t>(in);
      for (int i = 0; i < in; ++i) s += wr[i] * a[i];
      y[static_cast<std::size_t>(o)] = (l + 1 < n_layers) ? std::tanh(s) : s;
    }
  }
}

std::span<const double> ConditionerNet::output(const NetWorkspace& ws) const {
  if (ws.acts.size() != widths_.size() ||
      ws.acts.back().size() != static_cast<std::size_t>(output_width())) {
    throw StateMismatch("net output: workspace does not match this net");
  }
  return ws.acts.back();
}

void ConditionerNet::backward(const NetWorkspace& ws, std::span<const double> out_adj,
                              std::span<double> param_grad, std::span<double> x_adj) const {
  if (ws.acts.size() != widths_.size()) throw StateMismatch("net backward: stale workspace");
  if (static_cast<int>(out_adj.size()) != output_width() ||
      param_grad.size() != params_.size() ||
      static_cast<int>(x_adj.size()) != input_width()) {
    throw ShapeMismatch("net backward: adjoint buffer sizes");
  }

  const std::size_t n_layers = widths_.size() - 1;
  std::vector<double> delta(out_adj.begin(), out_adj.end());
  std::vector<double> up;
  for (std::size_t l = n_layers; l-- > 0;) {
    const int in = widths_[l], out = widths_[l + 1];
    const double* a = ws.acts[l].data();
    double* gw = param_grad.data() + w_off_[l];
    double* gb = param_grad.data() + b_off_[l];
    up.assign(static_cast<std::size_t>(in), 0.0);
    const double* w = params_.data() + w_off_[l];
    for (int o = 0; o < out; ++o) {
      const double d = delta[static_cast<std::size_t>(o)];
      double* gwr = gw + static_cast<std::size_t>(o) * static_cast<std::size_t>(in);
      const double* wr = w + static_cast<std::size_t>(o) * static_cast<std::size_t>(in);
      gb[o] += d;
      for (int i = 0; i < in; ++i) {
        gwr[i] += d * a[i];
        up[static_cast<std::size_t>(i)] += wr[i] * d;
      }
    }
    if (l == 0) {
      for (int i = 0; i < in; ++i) x_adj[static_cast<std::size_t>(i)] += up[static_cast<std::size_t>(i)];
    } else {
      // chain through the tanh of the previous hidden layer
      const auto& act = ws.acts[l];
      delta.resize(static_cast<std::size_t>(in));
      for (int i = 0; i < in; ++i) {
        const double t = act[static_cast<std::size_t>(i)];
        delta[static_cast<std::size_t>(i)] = up[static_cast<std::size_t>(i)] * (1.0 - t * t);
      }
    }
  }
}

MobiusCombination apply_param_constraints(std::span<const double> raw, int kernel_count) {
  if (kernel_count <= 0) throw InvalidParameter("kernel_count must be positive");
  if (raw.size() != static_cast<std::size_t>(3 * kernel_count)) {
    throw ShapeMismatch("constraints: raw size != 3K");
  }
  const std::size_t k = static_cast<std::size_t>(kernel_count);
  MobiusCombination c;
  c.weights.resize(k);
  c.kernels.resize(k);

  double mx = raw[0];
  for (std::size_t i = 1; i < k; ++i) mx = std::max(mx, raw[i]);
  double z = 0.0;
  for (std::size_t i = 0; i < k; ++i) {
    c.weights[i] = std::exp(raw[i] - mx);
    z += c.weights[i];
  }
  for (std::size_t i = 0; i < k; ++i) c.weights[i] /= z;

  for (std::size_t i = 0; i < k; ++i) {
    const double u = raw[k + 2 * i], v = raw[k + 2 * i + 1];
    const double n = std::hypot(u, v);
    // factor = limit * tanh(n)/n, extended smoothly through n = 0
    const double f = (n < 1e-8) ? disk_radius_limit * (1.0 - n * n / 3.0)
                                : disk_radius_limit * std::tanh(n) / n;
    c.kernels[i] = DiskPoint{f * u, f * v};
  }
  return c;
}

void param_constraints_vjp(std::span<const double> raw, const MobiusCombination& combo,
                           std::span<const double> weight_adj,
                           std::span<const DiskPoint> kernel_adj,
                           std::span<double> raw_adj) {
  const std::size_t k = combo.weights.size();
  if (raw.size() != 3 * k || raw_adj.size() != 3 * k ||
      weight_adj.size() != k || kernel_adj.size() != k) {
    throw ShapeMismatch("constraints vjp: buffer sizes");
  }

  // softmax: l_adj_j = rho_j * (w_adj_j - sum_i w_adj_i rho_i)
  double inner = 0.0;
  for (std::size_t i = 0; i < k; ++i) inner += weight_adj[i] * combo.weights[i];
  for (std::size_t i = 0; i < k; ++i) raw_adj[i] += combo.weights[i] * (weight_adj[i] - inner);

  for (std::size_t i = 0; i < k; ++i) {
    const double u = raw[k + 2 * i], v = raw[k + 2 * i + 1];
    const double n = std::hypot(u, v);
    double f, fp_over_n;  // f(n) and f'(n)/n
    if (n < 1e-8) {
      f = disk_radius_limit * (1.0 - n * n / 3.0);
      fp_over_n = disk_radius_limit * (-2.0 / 3.0);
    } else {
      const double th = std::tanh(n);
      f = disk_radius_limit * th / n;
      const double fp = disk_radius_limit * ((1.0 - th * th) * n - th) / (n * n);
      fp_over_n = fp / n;
    }
    const double gu = kernel_adj[i].u, gv = kernel_adj[i].v;
    const double dot = gu * u + gv * v;
    raw_adj[k + 2 * i] += f * gu + fp_over_n * dot * u;
    raw_adj[k + 2 * i + 1] += f * gv + fp_over_n * dot * v;
  }
}

void AdamOptimizer::restore(std::int64_t t, std::vector<double> m, std::vector<double> v) {
  if (m.size() != m_.size() || v.size() != v_.size()) {
    throw StateMismatch("adam restore: moment size mismatch");
  }
  t_ = t;
  m_ = std::move(m);
  v_ = std::move(v);
}

void AdamOptimizer::step(std::span<double> params, std::span<const double> grads) {
  if (params.size() != m_.size() || grads.size() != m_.size()) {
    throw StateMismatch("adam step: parameter count does not match optimizer state");
  }
  ++t_;
  const double b1 = cfg_.beta1, b2 = cfg_.beta2;
  const double c1 = 1.0 - std::pow(b1, static_cast<double>(t_));
  const double c2 = 1.0 - std::pow(b2, static_cast<double>(t_));
  for (std::size_t i = 0; i < params.size(); ++i) {
    const double g = grads[i];
    m_[i] = b1 * m_[i] + (1.0 - b1) * g;
    v_[i] = b2 * v_[i] + (1.0 - b2) * g * g;
    const double mh = m_[i] / c1;
    const double vh = v_[i] / c2;
    params[i] -= cfg_.lr * mh / (std::sqrt(vh) + cfg_.eps);
  }
}

double clip_gradient_norm(std::span<double> grads, double max_norm) {
  double sq = 0.0;
  for (double g : grads) sq += g * g;
  const double norm = std::sqrt(sq);
  if (norm > max_norm && norm > 0.0) {
    const double s = max_norm / norm;
    for (double& g : grads) g *= s;
  }
  return norm;
}

}  // namespace eulerflow
