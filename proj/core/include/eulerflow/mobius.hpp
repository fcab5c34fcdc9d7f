#pragma once

#include <vector>

#include "eulerflow/rotation.hpp"

namespace eulerflow {

// Point in the open unit disk; combination kernels keep ||w|| <= 1 - 1e-4.
struct DiskPoint {
  double u = 0.0;
  double v = 0.0;
};

inline constexpr double disk_radius_limit = 1.0 - 1e-4;

struct Vec2 {
  double x = 0.0;
  double y = 0.0;
};

// g_w(x) = ((1 - |w|^2) / |x - w|^2) (x - w) - w, for unit x.  Maps the unit
// circle to itself; identity at w = 0.  Throws InvalidParameter if |w| >= 1.
Vec2 mobius_apply(const DiskPoint& w, const Vec2& x);

// Angle form of g_w: theta -> atan2 of g_w((cos theta, sin theta)), in [0, 2pi).
double mobius_forward(const DiskPoint& w, double theta);

// log dtheta'/dtheta = log[(1 - |w|^2) / |x(theta) - w|^2].
double mobius_log_det(const DiskPoint& w, double theta);

// Convex combination of anchored Mobius kernels: each kernel's circle map is
// shifted so angle 0 is a fixed point, lifted to [0, 2pi), and the lifts are
// blended with the convex weights.  Strictly increasing in theta.
struct MobiusCombination {
  std::vector<double> weights;    // sum 1, nonnegative
  std::vector<DiskPoint> kernels; // same length, each inside the margin

  int size() const { return static_cast<int>(weights.size()); }
  // Throws InvalidParameter when the invariants above fail.
  void validate() const;
};

double combination_forward(const MobiusCombination& c, double theta);

// dtheta'/dtheta = sum_i w_i (1 - |k_i|^2)/|x(theta) - k_i|^2  (> 0).
double combination_derivative(const MobiusCombination& c, double theta);
double combination_log_det(const MobiusCombination& c, double theta);

// Bisection solve of combination_forward(c, theta) = theta_prime on the
// anchored lift.  Bracket [0, 2pi] is always valid; iteration count is
// ceil(log2(2pi/eps)).  Optional out-param reports iterations used.
double combination_inverse(const MobiusCombination& c, double theta_prime,
                           double eps = 1e-8, int* iterations = nullptr);

// Reverse-mode partials of (theta', log_det) w.r.t. theta, weights, kernels.
struct CombinationVjp {
  double theta_adj = 0.0;
  std::vector<double> weight_adj;
  std::vector<DiskPoint> kernel_adj;
};

// out_adj multiplies dtheta'/d(...), logdet_adj multiplies dlogdet/d(...).
CombinationVjp combination_vjp(const MobiusCombination& c, double theta,
                               double out_adj, double logdet_adj);

}  // namespace eulerflow
