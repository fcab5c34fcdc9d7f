#pragma once

#include <array>
#include <cmath>
#include <numbers>

#include "eulerflow/rng.hpp"

namespace eulerflow {

inline constexpr double two_pi = 2.0 * std::numbers::pi;

// Reduce to [0, 2pi).
inline double wrap_angle(double x) {
  double r = x - two_pi * std::floor(x / two_pi);
  if (r >= two_pi) r -= two_pi;  // floor rounding can land exactly on 2pi
  if (r < 0.0) r = 0.0;
  return r;
}

// Distance on the circle, in [0, pi].
inline double circular_distance(double a, double b) {
  const double d = wrap_angle(a - b);
  return std::min(d, two_pi - d);
}

// omega, phi, kappa: rotations about X, Y, Z; each canonically in [0, 2pi).
struct EulerAngles {
  double omega = 0.0;
  double phi = 0.0;
  double kappa = 0.0;

  EulerAngles() = default;
  EulerAngles(double o, double p, double k)
      : omega(wrap_angle(o)), phi(wrap_angle(p)), kappa(wrap_angle(k)) {}

  double operator[](int i) const { return i == 0 ? omega : (i == 1 ? phi : kappa); }
  void set(int i, double v) {
    v = wrap_angle(v);
    (i == 0 ? omega : (i == 1 ? phi : kappa)) = v;
  }
};

// Row-major 3x3.
struct RotationMatrix {
  std::array<double, 9> m{1, 0, 0, 0, 1, 0, 0, 0, 1};

  double operator()(int r, int c) const { return m[static_cast<std::size_t>(3 * r + c)]; }
  double& operator()(int r, int c) { return m[static_cast<std::size_t>(3 * r + c)]; }
};

struct UnitQuaternion {
  double w = 1.0, x = 0.0, y = 0.0, z = 0.0;
};

RotationMatrix matmul(const RotationMatrix& a, const RotationMatrix& b);
RotationMatrix transpose(const RotationMatrix& a);

// max(|R^T R - I|_inf, |det R - 1|); used by validation.
double rotation_defect(const RotationMatrix& r);

// Product R_kappa * R_phi * R_omega (Z, Y, X factors; X applied first).
RotationMatrix euler_to_matrix(const EulerAngles& e);

// Inverse of euler_to_matrix onto the canonical chart (cos phi >= 0 branch).
// In the degenerate band |R(2,0)| > 1 - 1e-12 only one angle combination is
// determined; the convention is kappa = 0 with the free angle folded into
// omega.  Throws InvalidRotation if the matrix fails validation (1e-6).
EulerAngles matrix_to_euler(const RotationMatrix& r);

RotationMatrix matrix_from_quat(const UnitQuaternion& q);
UnitQuaternion quat_from_matrix(const RotationMatrix& r);

// Rodrigues formula; axis must be unit length.
RotationMatrix axis_angle_matrix(const std::array<double, 3>& axis, double angle);

// Right-composed tangent perturbation: r * exp([sigma * n]_x), n ~ N(0, I3).
RotationMatrix perturb_tangent(const RotationMatrix& r, double sigma, RandomSource& rng);

// Uniform (Haar) rotation via a uniform unit quaternion.
RotationMatrix haar_sample(RandomSource& rng);

// arccos((tr(a^T b) - 1)/2), clamped; in [0, pi].
double geodesic_distance(const RotationMatrix& a, const RotationMatrix& b);

// Chordal mean of a set of rotations (principal quaternion direction).
RotationMatrix mean_rotation(const RotationMatrix* rs, std::size_t n);

}  // namespace eulerflow
