#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "eulerflow/rotation.hpp"

namespace eulerflow {

struct Dataset {
  std::string name;
  int context_width = 0;
  std::vector<RotationMatrix> train_rotations, test_rotations;
  // Flat row-major (count x context_width); empty when unconditional.
  std::vector<double> train_contexts, test_contexts;
  std::string generator_spec;  // JSON text describing how the data was made

  std::size_t train_count() const { return train_rotations.size(); }
  std::size_t test_count() const { return test_rotations.size(); }
};

// omega ~ N(0, sigma_sq), kappa ~ N(0, sigma_sq), phi ~ an even mixture of
// N(pi/2 + phi_mode_shift, sigma_phi_sq * sigma_sq) and
// N(-pi/2 + phi_mode_shift, sigma_phi_sq * sigma_sq); all wrapped.
// sigma_* are variances.  phi_mode_shift = -pi/2 moves the phi mass to the
// poles-free band around {0, pi}.
struct GimbalSpec {
  double sigma_sq = 0.1;
  double sigma_phi_sq = 0.1;
  double phi_mode_shift = 0.0;
  int train_n = 60000;
  int test_n = 12000;
  std::uint64_t seed = 0;
};
Dataset generate_gimbal(const GimbalSpec& spec);

enum class SyntheticKind { Peak, Cone, Cube, Line };
SyntheticKind synthetic_kind_from_string(const std::string& s);  // throws UnknownKind
std::string to_string(SyntheticKind k);

struct SyntheticSpec {
  int train_n = 60000;
  int test_n = 12000;
  std::uint64_t seed = 0;
};
// peak: one tangent-Gaussian mode (sigma 0.05 rad).
// cone: uniform spin about the Z axis, small tangent noise (sigma 0.04).
// cube: the 24 rotational symmetries of a cube, oriented so every mode sits
//       away from the chart's degenerate band; tangent blur sigma 0.1,
//       uniform mixture.
// line: half-turn sweep lying entirely in the chart's singular surface
//       (R(2,0) = 1 along the whole segment), tangent noise 0.05.
Dataset generate_synthetic(SyntheticKind kind, const SyntheticSpec& spec);

// The 24 blur centers used by the cube set, in sample order.
std::vector<RotationMatrix> cube_mode_centers();
// The c equispaced mode centers used by toy class c.
std::vector<RotationMatrix> toy_mode_centers(int c);

// Class c in {1..n_classes} puts c equispaced blurred modes around the Z
// axis; the context is the one-hot class indicator.
struct ToySpec {
  int n_classes = 4;
  double blur_sigma = 0.05;
  int train_n = 60000;
  int test_n = 12000;
  std::uint64_t seed = 0;
};
Dataset generate_conditional_toy(const ToySpec& spec);

// Binary container: magic/version, JSON header, little-endian float64
// records (9 matrix entries then context per sample, train block then test).
void save_dataset(const Dataset& ds, const std::filesystem::path& path);
Dataset load_dataset(const std::filesystem::path& path);

// One rotation per row: r00..r22, then ctx_0.. when conditional.
void export_csv(const Dataset& ds, const std::filesystem::path& path);

}  // namespace eulerflow
