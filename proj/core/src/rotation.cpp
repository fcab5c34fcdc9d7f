#include "eulerflow/rotation.hpp"

#include <algorithm>
#include <cmath>

#include "eulerflow/errors.hpp"

namespace eulerflow {

RotationMatrix matmul(const RotationMatrix& a, const RotationMatrix& b) {
  RotationMatrix out;
  for (int i = 0; i < 3; ++i)
    for (int j = 0; j < 3; ++j) {
      double s = 0.0;
      for (int k = 0; k < 3; ++k) s += a(i, k) * b(k, j);
      out(i, j) = s;
    }
  return out;
}

RotationMatrix transpose(const RotationMatrix& a) {
  RotationMatrix out;
  for (int i = 0; i < 3; ++i)
    for (int j = 0; j < 3; ++j) out(i, j) = a(j, i);
  return out;
}

double rotation_defect(const RotationMatrix& r) {
  double worst = 0.0;
  for (int i = 0; i < 3; ++i)
    for (int j = 0; j < 3; ++j) {
      double s = 0.0;
      for (int k = 0; k < 3; ++k) s += r(k, i) * r(k, j);
      worst = std::max(worst, std::abs(s - (i == j ? 1.0 : 0.0)));
    }
  const double det = r(0, 0) * (r(1, 1) * r(2, 2) - r(1, 2) * r(2, 1)) -
                     r(0, 1) * (r(1, 0) * r(2, 2) - r(1, 2) * r(2, 0)) +
                     r(0, 2) * (r(1, 0) * r(2, 1) - r(1, 1) * r(2, 0));
  return std::max(worst, std::abs(det - 1.0));
}

RotationMatrix euler_to_matrix(const EulerAngles& e) {
  const double co = std::cos(e.omega), so = std::sin(e.omega);
  const double cp = std::cos(e.phi), sp = std::sin(e.phi);
  const double ck = std::cos(e.kappa), sk = std::sin(e.kappa);

  // R_omega = [1 0 0; 0 co so; 0 -so co]
  // R_phi   = [cp 0 -sp; 0 1 0; sp 0 cp]
  // R_kappa = [ck sk 0; -sk ck 0; 0 0 1]
  RotationMatrix r;
  r(0, 0) = ck * cp;
  r(0, 1) = ck * sp * so + sk * co;
  r(0, 2) = -ck * sp * co + sk * so;
  r(1, 0) = -sk * cp;
  r(1, 1) = -sk * sp * so + ck * co;
  r(1, 2) = sk * sp * co + ck * so;
  r(2, 0) = sp;
  r(2, 1) = -cp * so;
  r(2, 2) = cp * co;
  return r;
}

EulerAngles matrix_to_euler(const RotationMatrix& r) {
  const double defect = rotation_defect(r);
  if (!(defect <= 1e-6)) {
    throw InvalidRotation("matrix_to_euler: input defect " + std::to_string(defect) +
                          " exceeds 1e-6");
  }
  const double sp = r(2, 0);
  if (std::abs(sp) > 1.0 - 1e-12) {
    // Degenerate band: the 2x2 block determines a single angle combination.
    // kappa := 0 exactly; rows 0/1 give (cos, sin) of that combination in
    // entries r(1,1), r(1,2) regardless of the sign of sp.
    EulerAngles e;
    e.kappa = 0.0;
    e.phi = wrap_angle(sp > 0.0 ? std::numbers::pi / 2 : -std::numbers::pi / 2);
    e.omega = wrap_angle(std::atan2(r(1, 2), r(1, 1)));
    return e;
  }
  const double cp = std::hypot(r(2, 1), r(2, 2));  // canonical: cos phi >= 0
  EulerAngles e;
  e.phi = wrap_angle(std::atan2(sp, cp));
  e.omega = wrap_angle(std::atan2(-r(2, 1), r(2, 2)));
  e.kappa = wrap_angle(std::atan2(-r(1, 0), r(0, 0)));
  return e;
}

RotationMatrix matrix_from_quat(const UnitQuaternion& q) {
  const double w = q.w, x = q.x, y = q.y, z = q.z;
  RotationMatrix r;
  r(0, 0) = 1 - 2 * (y * y + z * z);
  r(0, 1) = 2 * (x * y - w * z);
  r(0, 2) = 2 * (x * z + w * y);
  r(1, 0) = 2 * (x * y + w * z);
  r(1, 1) = 1 - 2 * (x * x + z * z);
  r(1, 2) = 2 * (y * z - w * x);
  r(2, 0) = 2 * (x * z - w * y);
  r(2, 1) = 2 * (y * z + w * x);
  r(2, 2) = 1 - 2 * (x * x + y * y);
  return r;
}

UnitQuaternion quat_from_matrix(const RotationMatrix& r) {
  UnitQuaternion q;
  const double tr = r(0, 0) + r(1, 1) + r(2, 2);
  if (tr > 0.0) {
    double s = std::sqrt(tr + 1.0) * 2.0;
    q.w = 0.25 * s;
    q.x = (r(2, 1) - r(1, 2)) / s;
    q.y = (r(0, 2) - r(2, 0)) / s;
    q.z = (r(1, 0) - r(0, 1)) / s;
  } else if (r(0, 0) > r(1, 1) && r(0, 0) > r(2, 2)) {
    double s = std::sqrt(1.0 + r(0, 0) - r(1, 1) - r(2, 2)) * 2.0;
    q.w = (r(2, 1) - r(1, 2)) / s;
    q.x = 0.25 * s;
    q.y = (r(0, 1) + r(1, 0)) / s;
    q.z = (r(0, 2) + r(2, 0)) / s;
  } else if (r(1, 1) > r(2, 2)) {
    double s = std::sqrt(1.0 + r(1, 1) - r(0, 0) - r(2, 2)) * 2.0;
    q.w = (r(0, 2) - r(2, 0)) / s;
    q.x = (r(0, 1) + r(1, 0)) / s;
    q.y = 0.25 * s;
    q.z = (r(1, 2) + r(2, 1)) / s;
  } else {
    double s = std::sqrt(1.0 + r(2, 2) - r(0, 0) - r(1, 1)) * 2.0;
    q.w = (r(1, 0) - r(0, 1)) / s;
    q.x = (r(0, 2) + r(2, 0)) / s;
    q.y = (r(1, 2) + r(2, 1)) / s;
    q.z = 0.25 * s;
  }
  const double n = std::sqrt(q.w * q.w + q.x * q.x + q.y * q.y + q.z * q.z);
  q.w /= n; q.x /= n; q.y /= n; q.z /= n;
  return q;
}

RotationMatrix axis_angle_matrix(const std::array<double, 3>& axis, double angle) {
  const double c = std::cos(angle), s = std::sin(angle), t = 1.0 - c;
  const double x = axis[0], y = axis[1], z = axis[2];
  RotationMatrix r;
  r(0, 0) = t * x * x + c;
  r(0, 1) = t * x * y - s * z;
  r(0, 2) = t * x * z + s * y;
  r(1, 0) = t * x * y + s * z;
  r(1, 1) = t * y * y + c;
  r(1, 2) = t * y * z - s * x;
  r(2, 0) = t * x * z - s * y;
  r(2, 1) = t * y * z + s * x;
  r(2, 2) = t * z * z + c;
  return r;
}

RotationMatrix perturb_tangent(const RotationMatrix& r, double sigma, RandomSource& rng) {
  std::array<double, 3> v{sigma * normal01(rng), sigma * normal01(rng), sigma * normal01(rng)};
  const double n = std::sqrt(v[0] * v[0] + v[1] * v[1] + v[2] * v[2]);
  if (n < 1e-300) return r;
  return matmul(r, axis_angle_matrix({v[0] / n, v[1] / n, v[2] / n}, n));
}

RotationMatrix haar_sample(RandomSource& rng) {
  UnitQuaternion q;
  double n = 0.0;
  do {
    q.w = normal01(rng);
    q.x = normal01(rng);
    q.y = normal01(rng);
    q.z = normal01(rng);
    n = std::sqrt(q.w * q.w + q.x * q.x + q.y * q.y + q.z * q.z);
  } while (n < 1e-6);
  q.w /= n; q.x /= n; q.y /= n; q.z /= n;
  return matrix_from_quat(q);
}

double geodesic_distance(const RotationMatrix& a, const RotationMatrix& b) {
  // tr(a^T b)
  double tr = 0.0;
  for (int i = 0; i < 3; ++i)
    for (int k = 0; k < 3; ++k) tr += a(k, i) * b(k, i);
  const double c = std::clamp((tr - 1.0) / 2.0, -1.0, 1.0);
  return std::acos(c);
}

RotationMatrix mean_rotation(const RotationMatrix* rs, std::size_t n) {
  // Accumulate sum of q q^T (sign-consistent by construction) and take the
  // principal eigenvector by power iteration.
  std::array<double, 16> M{};
  for (std::size_t i = 0; i < n; ++i) {
    const UnitQuaternion q = quat_from_matrix(rs[i]);
    const std::array<double, 4> v{q.w, q.x, q.y, q.z};
    for (int a = 0; a < 4; ++a)
      for (int b = 0; b < 4; ++b) M[static_cast<std::size_t>(4 * a + b)] += v[static_cast<std::size_t>(a)] * v[static_cast<std::size_t>(b)];
  }
  std::array<double, 4> v{1, 0, 0, 0};
  for (int iter = 0; iter < 128; ++iter) {
    std::array<double, 4> w{};
    for (int a = 0; a < 4; ++a)
      for (int b = 0; b < 4; ++b) w[static_cast<std::size_t>(a)] += M[static_cast<std::size_t>(4 * a + b)] * v[static_cast<std::size_t>(b)];
    double norm = std::sqrt(w[0] * w[0] + w[1] * w[1] + w[2] * w[2] + w[3] * w[3]);
    if (norm < 1e-300) break;
    for (auto& x : w) x /= norm;
    v = w;
  }
  return matrix_from_quat(UnitQuaternion{v[0], v[1], v[2], v[3]});
}

}  // namespace eulerflow
