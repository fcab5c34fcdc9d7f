#include "eulerflow/mobius.hpp"

#include <cmath>
#include <string>

#include "eulerflow/errors.hpp"

namespace eulerflow {

namespace {

double norm_sq(const DiskPoint& w) { return w.u * w.u + w.v * w.v; }

void check_inside(const DiskPoint& w) {
  if (!(norm_sq(w) < 1.0)) {
    throw InvalidParameter("mobius kernel norm " + std::to_string(std::sqrt(norm_sq(w))) +
                           " not inside the unit disk");
  }
}

// Anchored lift of one kernel: value in [0, 2pi), fixed point at theta = 0.
double kernel_lift(const DiskPoint& w, double theta) {
  const Vec2 x{std::cos(theta), std::sin(theta)};
  const Vec2 g = mobius_apply(w, x);
  const Vec2 g0 = mobius_apply(w, Vec2{1.0, 0.0});
  return wrap_angle(std::atan2(g.y, g.x) - std::atan2(g0.y, g0.x));
}

double kernel_derivative(const DiskPoint& w, double ct, double st) {
  const double du = ct - w.u, dv = st - w.v;
  return (1.0 - norm_sq(w)) / (du * du + dv * dv);
}

}  // namespace

Vec2 mobius_apply(const DiskPoint& w, const Vec2& x) {
  check_inside(w);
  const double du = x.x - w.u, dv = x.y - w.v;
  const double s = (1.0 - norm_sq(w)) / (du * du + dv * dv);
  return Vec2{s * du - w.u, s * dv - w.v};
}

double mobius_forward(const DiskPoint& w, double theta) {
  check_inside(w);
  const Vec2 x{std::cos(theta), std::sin(theta)};
  const Vec2 g = mobius_apply(w, x);
  return wrap_angle(std::atan2(g.y, g.x));
}

double mobius_log_det(const DiskPoint& w, double theta) {
  check_inside(w);
  return std::log(kernel_derivative(w, std::cos(theta), std::sin(theta)));
}

void MobiusCombination::validate() const {
  if (weights.empty() || weights.size() != kernels.size()) {
    throw InvalidParameter("combination: weight/kernel count mismatch or empty");
  }
  double sum = 0.0;
  for (double w : weights) {
    if (!(w >= 0.0)) throw InvalidParameter("combination: negative weight");
    sum += w;
  }
  if (std::abs(sum - 1.0) > 1e-9) {
    throw InvalidParameter("combination: weights sum to " + std::to_string(sum));
  }
  for (const DiskPoint& k : kernels) {
    if (!(std::sqrt(norm_sq(k)) <= disk_radius_limit)) {
      throw InvalidParameter("combination: kernel outside radius margin");
    }
  }
}

double combination_forward(const MobiusCombination& c, double theta) {
  const double t = wrap_angle(theta);
  double acc = 0.0;
  const int k = c.size();
  for (int i = 0; i < k; ++i) acc += c.weights[static_cast<std::size_t>(i)] * kernel_lift(c.kernels[static_cast<std::size_t>(i)], t);
  return wrap_angle(acc);
}

double combination_derivative(const MobiusCombination& c, double theta) {
  const double ct = std::cos(theta), st = std::sin(theta);
  double acc = 0.0;
  const int k = c.size();
  for (int i = 0; i < k; ++i) acc += c.weights[static_cast<std::size_t>(i)] * kernel_derivative(c.kernels[static_cast<std::size_t>(i)], ct, st);
  return acc;
}

double combination_log_det(const MobiusCombination& c, double theta) {
  return std::log(combination_derivative(c, theta));
}

double combination_inverse(const MobiusCombination& c, double theta_prime,
                           double eps, int* iterations) {
  if (!(eps > 0.0)) throw InvalidParameter("combination_inverse: eps must be positive");
  const double target = wrap_angle(theta_prime);
  // The anchored lift runs from exactly 0 at theta=0 to exactly 2pi at
  // theta=2pi, so [0, 2pi] always brackets the target.
  double lo = 0.0, hi = two_pi;
  const int max_iters = static_cast<int>(std::ceil(std::log2(two_pi / eps)));
  int used = 0;
  for (; used < max_iters && (hi - lo) > eps; ++used) {
    const double mid = 0.5 * (lo + hi);
    // Lift value at an interior point equals the wrapped forward value.
    const double val = combination_forward(c, mid);
    if (val < target) lo = mid; else hi = mid;
  }
  if ((hi - lo) > eps * (1.0 + 1e-9)) {
    throw ConvergenceFailure("combination_inverse: bracket did not reach eps");
  }
  if (iterations) *iterations = used;
  return wrap_angle(0.5 * (lo + hi));
}

CombinationVjp combination_vjp(const MobiusCombination& c, double theta,
                               double out_adj, double logdet_adj) {
  const double t = wrap_angle(theta);
  const double ct = std::cos(t), st = std::sin(t);
  const int k = c.size();

  CombinationVjp out;
  out.weight_adj.assign(static_cast<std::size_t>(k), 0.0);
  out.kernel_adj.assign(static_cast<std::size_t>(k), DiskPoint{});

  const double der = combination_derivative(c, t);
  double dder_dtheta = 0.0;

  for (int i = 0; i < k; ++i) {
    const std::size_t ui = static_cast<std::size_t>(i);
    const DiskPoint& w = c.kernels[ui];
    const double rho = c.weights[ui];
    const double wn2 = w.u * w.u + w.v * w.v;

    // Evaluated at theta.
    const double du = ct - w.u, dv = st - w.v;
    const double D = du * du + dv * dv;
    const double s = (1.0 - wn2) / D;
    const double gx = s * du - w.u, gy = s * dv - w.v;

    // d s / d theta, with xdot = (-st, ct).
    const double d_dot_xdot = du * (-st) + dv * ct;
    const double ds_dtheta = -s * 2.0 * d_dot_xdot / D;
    dder_dtheta += rho * ds_dtheta;

    // d s / d w.
    const double dsu = (2.0 * s * du - 2.0 * w.u) / D;
    const double dsv = (2.0 * s * dv - 2.0 * w.v) / D;
    // d g / d w (|g| = 1, so dangle = gx dgy - gy dgx).
    const double dgx_du = dsu * du - (s + 1.0);
    const double dgx_dv = dsv * du;
    const double dgy_du = dsu * dv;
    const double dgy_dv = dsv * dv - (s + 1.0);
    const double da_du = gx * dgy_du - gy * dgx_du;
    const double da_dv = gx * dgy_dv - gy * dgx_dv;

    // Same partials at the anchor point theta = 0 (x = (1, 0)).
    const double du0 = 1.0 - w.u, dv0 = -w.v;
    const double D0 = du0 * du0 + dv0 * dv0;
    const double s0 = (1.0 - wn2) / D0;
    const double gx0 = s0 * du0 - w.u, gy0 = s0 * dv0 - w.v;
    const double dsu0 = (2.0 * s0 * du0 - 2.0 * w.u) / D0;
    const double dsv0 = (2.0 * s0 * dv0 - 2.0 * w.v) / D0;
    const double dgx0_du = dsu0 * du0 - (s0 + 1.0);
    const double dgx0_dv = dsv0 * du0;
    const double dgy0_du = dsu0 * dv0;
    const double dgy0_dv = dsv0 * dv0 - (s0 + 1.0);
    const double da0_du = gx0 * dgy0_du - gy0 * dgx0_du;
    const double da0_dv = gx0 * dgy0_dv - gy0 * dgx0_dv;

    const double lift = kernel_lift(w, t);
    out.weight_adj[ui] = out_adj * lift + logdet_adj * s / der;
    out.kernel_adj[ui].u = out_adj * rho * (da_du - da0_du);
    out.kernel_adj[ui].v = out_adj * rho * (da_dv - da0_dv);

    // d s / d w feeds the logdet path.
    out.kernel_adj[ui].u += logdet_adj * rho * dsu / der;
    out.kernel_adj[ui].v += logdet_adj * rho * dsv / der;
  }

  out.theta_adj = out_adj * der + logdet_adj * dder_dtheta / der;
  return out;
}

}  // namespace eulerflow
