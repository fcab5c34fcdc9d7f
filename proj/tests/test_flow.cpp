#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>
#include <vector>

#include "doctest.h"
#include "eulerflow/errors.hpp"
#include "eulerflow/flow.hpp"

using namespace eulerflow;

namespace {

constexpr double three_log_two_pi = 3.0 * 1.8378770664093454836;

double circ_diff(double a, double b) { return std::atan2(std::sin(a - b), std::cos(a - b)); }

FlowConfig small_config(int layers, int kernels, int ctx = 0) {
  FlowConfig cfg;
  cfg.layers = layers;
  cfg.kernels = kernels;
  cfg.context_width = ctx;
  cfg.hidden = {16, 16};
  cfg.seed = 9;
  return cfg;
}

FlowModel randomized(FlowConfig cfg, double scale, std::uint64_t seed) {
  FlowModel m(std::move(cfg));
  std::vector<double> p(m.param_count());
  m.get_params(p);
  RandomSource rng(seed);
  for (auto& x : p) x += scale * normal01(rng);
  m.set_params(p);
  return m;
}

EulerAngles random_angles(RandomSource& rng) {
  return {uniform_angle(rng), uniform_angle(rng), uniform_angle(rng)};
}

}  // namespace

TEST_CASE("construction rejects bad configs") {
  CHECK_THROWS_AS(FlowModel(small_config(0, 4)), InvalidParameter);
  CHECK_THROWS_AS(FlowModel(small_config(4, 0)), InvalidParameter);
  CHECK_THROWS_AS(FlowModel(small_config(4, 4, -1)), InvalidParameter);
}

TEST_CASE("layers transform angles round robin") {
  const FlowModel m(small_config(7, 4));
  for (int i = 0; i < m.layer_count(); ++i) {
    CHECK(m.layers()[(std::size_t)i].transformed == i % 3);
  }
}

TEST_CASE("parameter vector round trips and layer slices line up") {
  FlowModel m = randomized(small_config(4, 4), 0.5, 3);
  std::vector<double> p(m.param_count());
  m.get_params(p);
  std::size_t total = 0;
  for (int l = 0; l < m.layer_count(); ++l) total += m.layer_params(l).size();
  CHECK(total == m.param_count());

  FlowModel n(small_config(4, 4));
  n.set_params(p);
  std::vector<double> q(n.param_count());
  n.get_params(q);
  for (std::size_t i = 0; i < p.size(); ++i) CHECK(p[i] == q[i]);
  CHECK_THROWS_AS(m.set_params(std::vector<double>(3, 0.0)), ShapeMismatch);
}

TEST_CASE("fresh model is the uniform torus density") {
  const FlowModel m(small_config(6, 8));
  RandomSource rng(1);
  for (int i = 0; i < 100; ++i) {
    CHECK(std::abs(m.log_prob(random_angles(rng)) + three_log_two_pi) < 1e-9);
  }
  const RotationMatrix r = haar_sample(rng);
  CHECK(std::abs(m.log_prob(r) + three_log_two_pi) < 1e-9);
}

TEST_CASE("fresh layers pass angles through with zero log det") {
  const FlowModel m(small_config(3, 8));
  RandomSource rng(2);
  for (const CouplingLayer& layer : m.layers()) {
    const EulerAngles e = random_angles(rng);
    double ld = 1.0;
    const EulerAngles out = layer_forward(layer, e, {}, &ld);
    CHECK(circular_distance(out[layer.transformed], e[layer.transformed]) < 1e-12);
    CHECK(ld == doctest::Approx(0.0).epsilon(1e-13));
  }
}

TEST_CASE("coupling leaves the untransformed angles bit-identical") {
  RandomSource rng(4);
  for (int t = 0; t < 3; ++t) {
    FlowModel m = randomized(small_config(3, 6), 0.6, 100 + (std::uint64_t)t);
    const CouplingLayer& layer = m.layers()[(std::size_t)t];
    for (int i = 0; i < 50; ++i) {
      const EulerAngles e = random_angles(rng);
      const EulerAngles out = layer_forward(layer, e, {});
      int a = (t == 0) ? 1 : 0, b = (t == 2) ? 1 : 2;
      CHECK(out[a] == e[a]);
      CHECK(out[b] == e[b]);
      CHECK(out[t] != e[t]);  // randomized net, move expected
    }
  }
}

TEST_CASE("layer log det matches a finite difference") {
  RandomSource rng(5);
  for (int t = 0; t < 3; ++t) {
    FlowModel m = randomized(small_config(3, 6), 0.6, 200 + (std::uint64_t)t);
    const CouplingLayer& layer = m.layers()[(std::size_t)t];
    for (int i = 0; i < 100; ++i) {
      const EulerAngles e = random_angles(rng);
      double ld = 0.0;
      (void)layer_forward(layer, e, {}, &ld);
      const double h = 1e-6;
      EulerAngles ep = e, em = e;
      ep.set(t, e[t] + h);
      em.set(t, e[t] - h);
      const double fd = circ_diff(layer_forward(layer, ep, {})[t],
                                  layer_forward(layer, em, {})[t]) /
                        (2 * h);
      CHECK(std::exp(ld) == doctest::Approx(fd).epsilon(1e-5));
    }
  }
}

TEST_CASE("layer inverse round trips within 1e-7") {
  RandomSource rng(6);
  FlowModel m = randomized(small_config(3, 8), 0.7, 17);
  for (int i = 0; i < 1000; ++i) {
    const CouplingLayer& layer = m.layers()[(std::size_t)(i % 3)];
    const EulerAngles e = random_angles(rng);
    const EulerAngles fwd = layer_forward(layer, e, {});
    const EulerAngles back = layer_inverse(layer, fwd, {});
    for (int a = 0; a < 3; ++a) CHECK(circular_distance(back[a], e[a]) < 1e-7);
  }
}

TEST_CASE("stack inverse then forward reproduces the point") {
  RandomSource rng(7);
  for (int layers : {4, 24}) {
    // Per-layer solver error is amplified by the Lipschitz constants of every
    // downstream layer, so the deep stack gets gentler parameters; wild random
    // 24-layer stacks can amplify beyond any fixed solver tolerance.
    const double scale = layers <= 4 ? 0.5 : 0.15;
    FlowModel m = randomized(small_config(layers, 8), scale, 31 + (std::uint64_t)layers);
    const double eps = 1e-12;
    const double tol = layers <= 4 ? 1e-6 : 1e-5;
    for (int i = 0; i < 50; ++i) {
      const EulerAngles target = random_angles(rng);
      EulerAngles e = target;
      for (int l = m.layer_count(); l-- > 0;) {
        e = layer_inverse(m.layers()[(std::size_t)l], e, {}, eps);
      }
      FlowWorkspace ws;
      double ld = 0.0;
      const EulerAngles fwd = m.forward_trace(e, {}, ws, &ld);
      for (int a = 0; a < 3; ++a) CHECK(circular_distance(fwd[a], target[a]) < tol);
    }
  }
}

TEST_CASE("summed log dets equal the full Jacobian determinant") {
  RandomSource rng(8);
  for (int layers : {2, 4}) {
    FlowModel m = randomized(small_config(layers, 6), 0.6, 41 + (std::uint64_t)layers);
    FlowWorkspace ws;
    for (int i = 0; i < 20; ++i) {
      const EulerAngles e = random_angles(rng);
      double ld = 0.0;
      (void)m.forward_trace(e, {}, ws, &ld);
      const double h = 1e-5;
      double jac[3][3];
      for (int c = 0; c < 3; ++c) {
        EulerAngles ep = e, em = e;
        ep.set(c, e[c] + h);
        em.set(c, e[c] - h);
        double dum = 0.0;
        const EulerAngles fp = m.forward_trace(ep, {}, ws, &dum);
        const EulerAngles fm = m.forward_trace(em, {}, ws, &dum);
        for (int r = 0; r < 3; ++r) jac[r][c] = circ_diff(fp[r], fm[r]) / (2 * h);
      }
      const double det = jac[0][0] * (jac[1][1] * jac[2][2] - jac[1][2] * jac[2][1]) -
                         jac[0][1] * (jac[1][0] * jac[2][2] - jac[1][2] * jac[2][0]) +
                         jac[0][2] * (jac[1][0] * jac[2][1] - jac[1][1] * jac[2][0]);
      CHECK(det == doctest::Approx(std::exp(ld)).epsilon(1e-3));
    }
  }
}

TEST_CASE("density normalizes over the torus by importance sampling") {
  const FlowModel fresh(small_config(4, 8));
  RandomSource rng(9);
  CHECK(std::exp(fresh.log_prob(random_angles(rng)) + three_log_two_pi) ==
        doctest::Approx(1.0).epsilon(1e-12));

  // Modest parameter scale: uniform-proposal importance sampling needs the
  // density ratio bounded for the standard error to mean anything.
  FlowModel m = randomized(small_config(4, 8), 0.25, 57);
  const int n = 200000;
  double sum = 0.0, sumsq = 0.0;
  for (int i = 0; i < n; ++i) {
    const double w = std::exp(m.log_prob(random_angles(rng)) + three_log_two_pi);
    sum += w;
    sumsq += w * w;
  }
  const double mean = sum / n;
  const double se = std::sqrt((sumsq / n - mean * mean) / n);
  CHECK(std::abs(mean - 1.0) < 3.0 * se);
  CHECK(se < 0.02);
}

TEST_CASE("context changes the density, and width mismatches throw") {
  const FlowModel fresh(small_config(4, 6, 2));
  RandomSource rng(10);
  const EulerAngles e = random_angles(rng);
  const std::vector<double> c1{0.3, -0.8}, c2{-1.0, 0.4};
  CHECK(std::abs(fresh.log_prob(e, c1) + three_log_two_pi) < 1e-9);
  CHECK(std::abs(fresh.log_prob(e, c2) + three_log_two_pi) < 1e-9);
  CHECK_THROWS_AS((void)fresh.log_prob(e, std::vector<double>{1.0}), ShapeMismatch);
  CHECK_THROWS_AS((void)fresh.log_prob(e), ShapeMismatch);

  FlowModel m = randomized(small_config(4, 6, 2), 0.6, 71);
  CHECK(m.log_prob(e, c1) != m.log_prob(e, c2));
  RandomSource srng(3);
  CHECK_THROWS_AS((void)m.sample_angles(2, {}, srng), ShapeMismatch);
}

TEST_CASE("identity model samples uniform angles") {
  const FlowModel m(small_config(4, 4));
  RandomSource rng(11);
  const auto s = m.sample_angles(10000, {}, rng);
  for (int a = 0; a < 3; ++a) {
    std::vector<double> v(s.size());
    for (std::size_t i = 0; i < s.size(); ++i) v[i] = s[i][a];
    std::sort(v.begin(), v.end());
    double ks = 0.0;
    for (std::size_t i = 0; i < v.size(); ++i) {
      const double f = v[i] / two_pi;
      ks = std::max(ks, std::abs(f - (double)i / (double)v.size()));
      ks = std::max(ks, std::abs(f - (double)(i + 1) / (double)v.size()));
    }
    CHECK(ks < 0.02);
  }
}

TEST_CASE("matrix samples agree with angle samples and are valid rotations") {
  FlowModel m = randomized(small_config(5, 6), 0.5, 83);
  RandomSource r1(12), r2(12);
  const auto mats = m.sample(50, {}, r1);
  const auto angs = m.sample_angles(50, {}, r2);
  for (std::size_t i = 0; i < mats.size(); ++i) {
    CHECK(rotation_defect(mats[i]) < 1e-12);
    const RotationMatrix want = euler_to_matrix(angs[i]);
    for (int j = 0; j < 9; ++j) CHECK(mats[i].m[(std::size_t)j] == want.m[(std::size_t)j]);
  }
}

TEST_CASE("nll of the fresh model is the uniform entropy") {
  const FlowModel m(small_config(4, 4));
  RandomSource rng(13);
  std::vector<EulerAngles> batch;
  for (int i = 0; i < 32; ++i) batch.push_back(random_angles(rng));
  FlowWorkspace ws;
  CHECK(nll_loss(m, batch, {}, {}, ws) == doctest::Approx(three_log_two_pi).epsilon(1e-12));

  FlowModel r = randomized(small_config(4, 4), 0.5, 91);
  auto doubled = batch;
  doubled.insert(doubled.end(), batch.begin(), batch.end());
  const double l1 = nll_loss(r, batch, {}, {}, ws);
  const double l2 = nll_loss(r, doubled, {}, {}, ws);
  CHECK(l1 == doctest::Approx(l2).epsilon(1e-12));
  CHECK_THROWS_AS((void)nll_loss(r, {}, {}, {}, ws), InvalidParameter);
}

TEST_CASE("analytic gradient matches finite differences through the stack") {
  FlowModel m = randomized(small_config(2, 4), 0.4, 101);
  RandomSource rng(14);
  std::vector<EulerAngles> batch;
  for (int i = 0; i < 8; ++i) batch.push_back(random_angles(rng));

  FlowWorkspace ws;
  std::vector<double> grad(m.param_count(), 0.0);
  (void)nll_loss(m, batch, {}, grad, ws);

  std::vector<double> p(m.param_count());
  m.get_params(p);
  const double h = 1e-4;
  for (std::size_t i = 0; i < p.size(); ++i) {
    auto pp = p;
    pp[i] = p[i] + h;
    m.set_params(pp);
    const double fp = nll_loss(m, batch, {}, {}, ws);
    pp[i] = p[i] - h;
    m.set_params(pp);
    const double fm = nll_loss(m, batch, {}, {}, ws);
    const double fd = (fp - fm) / (2 * h);
    CHECK(std::abs(grad[i] - fd) <= 1e-3 * std::max(std::abs(fd), 1e-4));
  }
  m.set_params(p);
}

TEST_CASE("conditional gradient also passes a spot finite-difference check") {
  FlowModel m = randomized(small_config(2, 4, 2), 0.4, 103);
  RandomSource rng(15);
  std::vector<EulerAngles> batch;
  std::vector<double> ctx;
  for (int i = 0; i < 6; ++i) {
    batch.push_back(random_angles(rng));
    ctx.push_back(normal01(rng));
    ctx.push_back(normal01(rng));
  }
  FlowWorkspace ws;
  std::vector<double> grad(m.param_count(), 0.0);
  (void)nll_loss(m, batch, ctx, grad, ws);

  std::vector<double> p(m.param_count());
  m.get_params(p);
  const double h = 1e-4;
  RandomSource pick(16);
  for (int rep = 0; rep < 200; ++rep) {
    const std::size_t i = uniform_index(pick, p.size());
    auto pp = p;
    pp[i] = p[i] + h;
    m.set_params(pp);
    const double fp = nll_loss(m, batch, ctx, {}, ws);
    pp[i] = p[i] - h;
    m.set_params(pp);
    const double fm = nll_loss(m, batch, ctx, {}, ws);
    const double fd = (fp - fm) / (2 * h);
    CHECK(std::abs(grad[i] - fd) <= 1e-3 * std::max(std::abs(fd), 1e-4));
  }
  m.set_params(p);
}

TEST_CASE("predict_mode is deterministic and honors n_candidates") {
  FlowModel m = randomized(small_config(4, 6), 0.5, 107);
  RandomSource r1(20), r2(20), r3(20);
  const RotationMatrix a = m.predict_mode({}, 64, r1);
  const RotationMatrix b = m.predict_mode({}, 64, r2);
  for (int i = 0; i < 9; ++i) CHECK(a.m[(std::size_t)i] == b.m[(std::size_t)i]);
  const RotationMatrix c = m.predict_mode({}, 1, r3);
  RandomSource r4(20);
  const RotationMatrix want = euler_to_matrix(m.sample_angles(1, {}, r4)[0]);
  for (int i = 0; i < 9; ++i) CHECK(c.m[(std::size_t)i] == want.m[(std::size_t)i]);
  CHECK_THROWS_AS((void)m.predict_mode({}, 0, r1), InvalidParameter);
}

TEST_CASE("group density folds both chart preimages") {
  RandomSource rng(21);
  FlowModel m = randomized(small_config(3, 6), 0.5, 113);
  const double log_8pi2 = std::log(8.0) + 2.0 * std::log(std::numbers::pi);
  for (int i = 0; i < 50; ++i) {
    const RotationMatrix r = haar_sample(rng);
    const EulerAngles e = matrix_to_euler(r);
    const EulerAngles partner(e.omega + std::numbers::pi, std::numbers::pi - e.phi,
                              e.kappa + std::numbers::pi);
    const double want = log_sum_exp(m.log_prob(e), m.log_prob(partner)) + log_8pi2 -
                        std::log(std::abs(std::cos(e.phi)));
    CHECK(m.log_prob(r, {}, DensityMode::Haar) == doctest::Approx(want).epsilon(1e-10));
  }

  const FlowModel fresh(small_config(3, 6));
  for (int i = 0; i < 50; ++i) {
    const EulerAngles e = matrix_to_euler(haar_sample(rng));
    const double want = std::log((2.0 / std::numbers::pi) / std::abs(std::cos(e.phi)));
    CHECK(fresh.log_prob(e, {}, DensityMode::Haar) == doctest::Approx(want).epsilon(1e-10));
  }
}

TEST_CASE("log_sum_exp") {
  const double inf = std::numeric_limits<double>::infinity();
  CHECK(log_sum_exp(-inf, 2.5) == 2.5);
  CHECK(log_sum_exp(2.5, -inf) == 2.5);
  CHECK(log_sum_exp(0.0, 0.0) == doctest::Approx(std::log(2.0)).epsilon(1e-14));
  CHECK(log_sum_exp(-1000.0, -1001.0) ==
        doctest::Approx(-1000.0 + std::log(1.0 + std::exp(-1.0))).epsilon(1e-12));
  CHECK(log_sum_exp(3.0, -2.0) == doctest::Approx(log_sum_exp(-2.0, 3.0)).epsilon(1e-15));
}
