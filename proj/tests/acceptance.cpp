// End-to-end acceptance checks for the torus flow library.  Each numbered
// check prints exactly one PASS/FAIL line with the measured quantities and
// its wall time; the process exits nonzero if any check fails.

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdarg>
#include <cstdio>
#include <exception>
#include <numbers>
#include <string>
#include <vector>

#include "eulerflow/dataset.hpp"
#include "eulerflow/flow.hpp"
#include "eulerflow/mobius.hpp"
#include "eulerflow/rng.hpp"
#include "eulerflow/rotation.hpp"
#include "eulerflow/train.hpp"

using namespace eulerflow;

namespace {

constexpr double kPi = std::numbers::pi;
constexpr double kTwoPi = 2.0 * std::numbers::pi;
constexpr double kLogUniform = -3.0 * 1.8378770664093454836;  // -3 ln 2pi

struct Outcome {
  bool pass = false;
  std::string detail;
};

using clock_type = std::chrono::steady_clock;

double seconds_since(clock_type::time_point t0) {
  return std::chrono::duration<double>(clock_type::now() - t0).count();
}

int g_failures = 0;

template <typename Fn>
void run_check(int index, const char* name, double time_limit_s, Fn&& fn) {
  const auto t0 = clock_type::now();
  Outcome o;
  try {
    o = fn();
  } catch (const std::exception& e) {
    o.pass = false;
    o.detail = std::string("exception: ") + e.what();
  }
  const double secs = seconds_since(t0);
  if (time_limit_s > 0.0 && secs >= time_limit_s) {
    o.pass = false;
    o.detail += " [over time budget]";
  }
  if (!o.pass) ++g_failures;
  std::printf("%s [%2d] %s: %s (%.1fs)\n", o.pass ? "PASS" : "FAIL", index, name,
              o.detail.c_str(), secs);
  std::fflush(stdout);
}

double frob_diff(const RotationMatrix& a, const RotationMatrix& b) {
  double s = 0.0;
  for (int i = 0; i < 9; ++i) {
    const double d = a.m[i] - b.m[i];
    s += d * d;
  }
  return std::sqrt(s);
}

std::string fmt(const char* f, ...) {
  char buf[512];
  va_list ap;
  va_start(ap, f);
  std::vsnprintf(buf, sizeof buf, f, ap);
  va_end(ap);
  return buf;
}

FlowModel randomized_model(FlowConfig cfg, double scale, std::uint64_t seed) {
  FlowModel m(cfg);
  std::vector<double> p(m.param_count());
  m.get_params(p);
  RandomSource rng(seed);
  for (auto& x : p) x += scale * normal01(rng);
  m.set_params(p);
  return m;
}

// --- 1: rotation algebra ----------------------------------------------------

Outcome check_rotation_round_trips() {
  RandomSource rng(101);
  double worst = 0.0;
  for (int i = 0; i < 100000; ++i) {
    const RotationMatrix r = haar_sample(rng);
    const RotationMatrix back = euler_to_matrix(matrix_to_euler(r));
    worst = std::max(worst, frob_diff(r, back));
  }
  bool poles_exact = true;
  for (int i = 0; i < 2000 && poles_exact; ++i) {
    const double omega = uniform_angle(rng);
    const double kappa = uniform_angle(rng);
    const double delta = (uniform01(rng) * 2.0 - 1.0) * 1e-7;
    const double phi = (i % 2 ? kPi / 2 : 3 * kPi / 2) + delta;
    const EulerAngles rec = matrix_to_euler(euler_to_matrix({omega, phi, kappa}));
    poles_exact = rec.kappa == 0.0;
  }
  return {worst < 1e-9 && poles_exact,
          fmt("max frobenius %.2e over 1e5 round trips, pole kappa exact: %s", worst,
              poles_exact ? "yes" : "NO")};
}

// --- 2: circle map correctness ----------------------------------------------

Outcome check_mobius() {
  const DiskPoint w{0.5, 0.0};
  const double fwd = mobius_forward(w, kPi / 2);
  const double want = std::fmod(std::atan2(0.6, -0.8) + kTwoPi, kTwoPi);
  const double fwd_err = std::abs(fwd - want);
  const double ld_err = std::abs(mobius_log_det(w, kPi / 2) - std::log(0.6));

  RandomSource rng(202);
  double worst_rt = 0.0;
  int worst_iters = 0;
  const double eps = 1e-8;
  const int iter_bound = static_cast<int>(std::ceil(std::log2(kTwoPi / eps))) + 2;
  for (int trial = 0; trial < 1000; ++trial) {
    const int k = 3 + static_cast<int>(uniform_index(rng, 4));
    MobiusCombination c;
    double sum = 0.0;
    for (int i = 0; i < k; ++i) {
      const double wi = 0.1 + uniform01(rng);
      c.weights.push_back(wi);
      sum += wi;
      const double rad = 0.7 * std::sqrt(uniform01(rng));
      const double ang = uniform_angle(rng);
      c.kernels.push_back({rad * std::cos(ang), rad * std::sin(ang)});
    }
    for (auto& wi : c.weights) wi /= sum;
    const double theta = uniform_angle(rng);
    int iters = 0;
    const double back = combination_inverse(c, combination_forward(c, theta), eps, &iters);
    worst_rt = std::max(worst_rt, circular_distance(back, theta));
    worst_iters = std::max(worst_iters, iters);
  }
  const bool pass = fwd_err < 1e-12 && ld_err < 1e-10 && worst_rt <= 1e-8 &&
                    worst_iters <= iter_bound;
  return {pass, fmt("forward err %.1e, logdet err %.1e, worst round trip %.2e, iters %d <= %d",
                    fwd_err, ld_err, worst_rt, worst_iters, iter_bound)};
}

// --- 3: Monte Carlo normalization -------------------------------------------

Outcome check_normalization() {
  FlowConfig cfg;
  cfg.layers = 4;
  cfg.kernels = 8;
  cfg.hidden = {16, 16};
  cfg.seed = 3;
  const FlowModel fresh(cfg);
  // Drawn gently enough that the uniform proposal keeps a bounded density
  // ratio; wilder parameters need an adapted proposal, not more samples.
  const FlowModel rough = randomized_model(cfg, 0.25, 33);

  const int n = 1000000;
  RandomSource rng(303);
  std::string detail;
  bool pass = true;
  for (const FlowModel* m : {&fresh, &rough}) {
    double sum = 0.0, sumsq = 0.0;
    for (int i = 0; i < n; ++i) {
      const EulerAngles e{uniform_angle(rng), uniform_angle(rng), uniform_angle(rng)};
      const double y = std::exp(m->log_prob(e)) * kTwoPi * kTwoPi * kTwoPi;
      sum += y;
      sumsq += y * y;
    }
    const double mean = sum / n;
    const double var = std::max(0.0, sumsq / n - mean * mean);
    const double se = std::sqrt(var / n);
    pass = pass && std::abs(mean - 1.0) <= 3.0 * se + 1e-9;
    detail += fmt("%s: 1%+.2e (se %.1e)  ", m == &fresh ? "fresh" : "randomized",
                  mean - 1.0, se);
  }
  return {pass, detail};
}

// --- 4: analytic gradients vs finite differences ----------------------------

Outcome check_gradient_gate() {
  FlowConfig cfg;
  cfg.layers = 2;
  cfg.kernels = 4;
  cfg.hidden = {16, 16};
  cfg.seed = 4;
  FlowModel m = randomized_model(cfg, 0.4, 44);

  RandomSource rng(404);
  std::vector<EulerAngles> batch;
  for (int i = 0; i < 8; ++i) {
    batch.push_back({uniform_angle(rng), uniform_angle(rng), uniform_angle(rng)});
  }
  std::vector<double> p(m.param_count());
  m.get_params(p);
  std::vector<double> grad(p.size(), 0.0);
  FlowWorkspace ws;
  nll_loss(m, batch, {}, grad, ws);

  const double h = 1e-4;
  double worst_rel = 0.0;
  for (std::size_t i = 0; i < p.size(); ++i) {
    const double keep = p[i];
    p[i] = keep + h;
    m.set_params(p);
    const double up = nll_loss(m, batch, {}, {}, ws);
    p[i] = keep - h;
    m.set_params(p);
    const double dn = nll_loss(m, batch, {}, {}, ws);
    p[i] = keep;
    const double fd = (up - dn) / (2.0 * h);
    // Relative to the central difference, floored so dead-zero entries with
    // O(h^2) truncation noise do not divide by ~0.
    worst_rel = std::max(worst_rel, std::abs(grad[i] - fd) / std::max(std::abs(fd), 1e-4));
  }
  m.set_params(p);
  return {worst_rel < 1e-3,
          fmt("worst relative error %.2e over %zu parameters", worst_rel, p.size())};
}

// --- 5: identity initialization ---------------------------------------------

Outcome check_identity_density() {
  FlowConfig cfg;
  cfg.layers = 4;
  cfg.kernels = 16;
  cfg.seed = 5;
  const FlowModel m(cfg);
  RandomSource rng(505);
  double worst = 0.0;
  for (int i = 0; i < 100; ++i) {
    const EulerAngles e{uniform_angle(rng), uniform_angle(rng), uniform_angle(rng)};
    worst = std::max(worst, std::abs(m.log_prob(e) - kLogUniform));
  }
  return {worst < 1e-9, fmt("max |log_prob - (-3 ln 2pi)| = %.2e at 100 points", worst)};
}

// --- 6: desk-scale fit on the singular-band set ------------------------------

Outcome check_desk_gimbal() {
  GimbalSpec spec;  // sigma^2 = 0.1, modes on the degenerate band
  const Dataset data = generate_gimbal(spec);
  TrainConfig cfg = desk_preset();
  cfg.threads = 1;
  const TrainResult res = train(cfg, data);
  const double ll = res.history.back().test_ll;
  // The generator's own differential entropy caps the achievable mean test
  // LL near -0.35 nats, so the +2.5 target is not reachable by any density
  // model on this data; the check still reports the faithful number.
  return {ll >= 2.5,
          fmt("final test LL %.3f vs required >= 2.5 (uniform baseline %.2f; data entropy "
              "caps the achievable value near -0.35)",
              ll, kLogUniform)};
}

// --- 7: difficulty ordering across the synthetic families --------------------

Outcome check_difficulty_ordering() {
  TrainConfig cfg = desk_preset();
  cfg.threads = 1;
  const SyntheticKind kinds[] = {SyntheticKind::Peak, SyntheticKind::Cone, SyntheticKind::Cube,
                                 SyntheticKind::Line};
  double ll[4];
  double ref[4];
  std::string detail;
  for (int i = 0; i < 4; ++i) {
    SyntheticSpec spec;
    const Dataset data = generate_synthetic(kinds[i], spec);
    ll[i] = train(cfg, data).history.back().test_ll;
    // Model-free difficulty reference for the same split; shows whether an
    // ordering miss is a property of the data or of the training budget.
    ref[i] = kde_reference_ll(to_angles(data.train_rotations), to_angles(data.test_rotations),
                              4000, 2000, 11);
    detail += fmt("%s %.2f (kde %.2f)  ", data.name.c_str(), ll[i], ref[i]);
  }
  const bool pass = ll[0] > ll[1] && ll[1] > ll[2] && ll[2] > ll[3];
  const bool ref_ordered = ref[0] > ref[1] && ref[1] > ref[2] && ref[2] > ref[3];
  if (!pass && ref_ordered)
    detail +=
        "(model ordering violated; the kde references order strictly, so the miss is "
        "training-budget-bound: the 24-mode set needs far more than a desk-scale run to "
        "approach its ceiling, while the singular-band ridge converges early)";
  else
    detail += pass ? "(strictly ordered)" : "(ordering violated)";
  return {pass, detail};
}

// --- 8: conditional multimodality --------------------------------------------

Outcome check_conditional_toy() {
  ToySpec spec;  // 4 classes, one-hot context
  const Dataset data = generate_conditional_toy(spec);
  TrainConfig cfg = desk_preset();
  cfg.threads = 1;
  // Class 4 needs three visits to the kappa coordinate before its four modes
  // separate cleanly; the shallower stock preset leaves mass smeared along
  // ridges between them.
  cfg.layers = 9;
  cfg.iterations = 12000;
  const TrainResult res = train(cfg, data);

  // Class 4: samples should land near one of its four true modes.
  const std::vector<double> ctx4{0.0, 0.0, 0.0, 1.0};
  RandomSource rng(42);
  const auto samples = res.model.sample(2000, ctx4, rng);
  const auto modes = toy_mode_centers(4);
  const double cutoff = 15.0 * kPi / 180.0;
  int near = 0;
  for (const auto& s : samples) {
    double best = kPi;
    for (const auto& m : modes) best = std::min(best, geodesic_distance(s, m));
    if (best <= cutoff) ++near;
  }
  const double frac4 = static_cast<double>(near) / static_cast<double>(samples.size());

  // Class 1 is unimodal, so mode prediction should be nearly always right.
  std::vector<RotationMatrix> rots1;
  std::vector<double> ctx1;
  for (std::size_t i = 0; i < data.test_rotations.size() && rots1.size() < 500; ++i) {
    if (data.test_contexts[i * 4] == 1.0) {
      rots1.push_back(data.test_rotations[i]);
      for (int c = 0; c < 4; ++c) ctx1.push_back(data.test_contexts[i * 4 + c]);
    }
  }
  const MetricsReport rep = evaluate_pose(res.model, rots1, ctx1, 512, 8);
  const bool pass = frac4 >= 0.85 && rep.acc30 >= 0.9;
  return {pass, fmt("class-4 samples within 15 deg of a true mode: %.1f%% (need 85%%), "
                    "class-1 acc30 %.3f over %zu items (need 0.90)",
                    100.0 * frac4, rep.acc30, rots1.size())};
}

// --- 9: sampling agrees with the analytic marginal ---------------------------

Outcome check_sampling_marginal() {
  SyntheticSpec spec;
  spec.train_n = 20000;
  spec.test_n = 2000;
  const Dataset data = generate_synthetic(SyntheticKind::Peak, spec);
  TrainConfig cfg;
  cfg.layers = 3;  // one coupling step per angle; kappa carries the mode
  cfg.kernels = 8;
  cfg.hidden = {16, 16};
  cfg.batch = 128;
  cfg.lr = 1e-3;
  cfg.iterations = 1500;
  cfg.eval_every = 500;
  cfg.threads = 1;
  const TrainResult res = train(cfg, data);

  const int bins = 64;
  RandomSource rng(909);
  const auto angles = res.model.sample_angles(100000, {}, rng);
  std::vector<double> hist(bins, 0.0);
  for (const auto& a : angles) {
    int b = static_cast<int>(a.kappa / kTwoPi * bins);
    b = std::clamp(b, 0, bins - 1);
    hist[b] += 1.0;
  }
  for (auto& h : hist) h /= static_cast<double>(angles.size());

  // Integrate the other two angles on a 128-point grid, and kappa across each
  // bin with an 8-point midpoint rule.
  const int grid = 128;
  const int sub = 8;
  const double bin_w = kTwoPi / bins;
  std::vector<double> marginal(bins, 0.0);
  for (int b = 0; b < bins; ++b) {
    double mass = 0.0;
    for (int s = 0; s < sub; ++s) {
      const double kappa = (b + (s + 0.5) / sub) * bin_w;
      for (int i = 0; i < grid; ++i) {
        const double omega = (i + 0.5) * kTwoPi / grid;
        for (int j = 0; j < grid; ++j) {
          const double phi = (j + 0.5) * kTwoPi / grid;
          mass += std::exp(res.model.log_prob(EulerAngles{omega, phi, kappa}));
        }
      }
    }
    marginal[b] = mass * (kTwoPi / grid) * (kTwoPi / grid) * (bin_w / sub);
  }
  double total = 0.0;
  for (double m : marginal) total += m;
  for (auto& m : marginal) m /= total;

  double tv = 0.0;
  for (int b = 0; b < bins; ++b) tv += std::abs(hist[b] - marginal[b]);
  tv *= 0.5;
  return {tv < 0.03, fmt("total variation %.4f over %d bins (quadrature mass %.4f)", tv, bins,
                         total)};
}

// --- 10: bench behaves -------------------------------------------------------

Outcome check_bench() {
  GimbalSpec gs;
  gs.train_n = 4000;
  gs.test_n = 500;
  const Dataset data = generate_gimbal(gs);
  TrainConfig cfg;
  cfg.layers = 4;
  cfg.kernels = 8;
  cfg.hidden = {16, 16};
  cfg.batch = 128;
  cfg.lr = 1e-3;
  const double t1 = bench_ms_per_iteration(cfg, data, 20);
  cfg.layers = 8;
  const double t2 = bench_ms_per_iteration(cfg, data, 20);
  const bool pass = std::isfinite(t1) && t1 > 0.0 && t2 > t1;
  return {pass, fmt("4 layers %.2f ms/iter, 8 layers %.2f ms/iter", t1, t2)};
}

}  // namespace

int main() {
  std::printf("acceptance checks, one line each\n");
  run_check(1, "euler<->matrix round trips and pole recovery", 10.0, check_rotation_round_trips);
  run_check(2, "circle map forward/log-det/inverse", 30.0, check_mobius);
  run_check(3, "Monte Carlo normalization of exp(log_prob)", 120.0, check_normalization);
  run_check(4, "analytic gradient vs central differences", 120.0, check_gradient_gate);
  run_check(5, "identity-initialized density is uniform", 0.0, check_identity_density);
  run_check(6, "desk-scale fit on the singular-band set", 900.0, check_desk_gimbal);
  run_check(7, "difficulty ordering peak > cone > cube > line", 3600.0, check_difficulty_ordering);
  run_check(8, "conditional multimodal sampling and pose accuracy", 1200.0, check_conditional_toy);
  run_check(9, "sampled kappa histogram vs quadrature marginal", 0.0, check_sampling_marginal);
  run_check(10, "bench timing is positive and depth-monotone", 0.0, check_bench);
  std::printf("%d of 10 failed\n", g_failures);
  return g_failures == 0 ? 0 : 1;
}
