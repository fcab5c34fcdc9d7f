#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include "eulerflow/dataset.hpp"
#include "eulerflow/flow.hpp"

namespace eulerflow {

struct TrainConfig {
  int layers = 24;
  int kernels = 64;
  int batch = 1024;
  double lr = 1e-4;
  int iterations = 50000;
  std::uint64_t seed = 0;
  int eval_every = 500;
  std::filesystem::path checkpoint_path;  // empty: no checkpoint written
  std::filesystem::path log_path;         // JSON-lines snapshots; empty: none

  std::vector<int> hidden{64, 64};
  int threads = 1;
  double clip_norm = 100.0;

  void validate() const;  // throws InvalidParameter
};

// Full-size regime and a reduced one that trains in minutes on one core.
TrainConfig paper_preset();
TrainConfig desk_preset();

struct TrainSnapshot {
  int iter = 0;
  double train_loss = 0.0;  // minibatch mean NLL at this iteration
  double test_ll = 0.0;     // torus-mode mean log-likelihood on the test set
  double wall_ms = 0.0;     // mean wall-clock ms/iteration since last snapshot
};
std::string snapshot_to_json(const TrainSnapshot& s);

struct TrainResult {
  FlowModel model;
  std::vector<TrainSnapshot> history;
  std::vector<double> loss_history;  // one entry per iteration
};

// Adam on the minibatch mean NLL.  Deterministic for a fixed seed and thread
// count.  Writes JSONL snapshots / final checkpoint per the config.  Throws
// NonFiniteLoss (with the iteration index) if the loss leaves the reals.
TrainResult train(const TrainConfig& cfg, const Dataset& data);

// Mean log_prob over a set; result does not depend on item order or thread
// count (per-item values are sorted before summation).
double evaluate_ll(const FlowModel& model, std::span<const RotationMatrix> rots,
                   std::span<const double> ctx_flat, DensityMode mode = DensityMode::Torus,
                   int threads = 1);
double evaluate_ll(const FlowModel& model, std::span<const EulerAngles> angles,
                   std::span<const double> ctx_flat, DensityMode mode = DensityMode::Torus,
                   int threads = 1);

struct MetricsReport {
  double test_ll = 0.0;
  DensityMode mode = DensityMode::Torus;
  double acc15 = 0.0;
  double acc30 = 0.0;
  double median_error_deg = 0.0;
  double ms_per_iteration = -1.0;  // negative: not measured
};
std::string metrics_to_json(const MetricsReport& m);

// Accuracy-at-threshold and median geodesic error for a set of predicted
// rotations against ground truth.  test_ll is left at zero.
MetricsReport pose_metrics(std::span<const RotationMatrix> preds,
                           std::span<const RotationMatrix> truths);

// predict_mode per test item, geodesic error against ground truth.
// Candidate draws are seeded per item, so the report is independent of
// thread count and item order.
MetricsReport evaluate_pose(const FlowModel& model, std::span<const RotationMatrix> rots,
                            std::span<const double> ctx_flat, int n_candidates = 512,
                            std::uint64_t seed = 0, DensityMode ll_mode = DensityMode::Torus,
                            int threads = 1);

// Mean wall-clock ms per training iteration (5 warm-up iterations, then
// n_iters timed); model/optimizer state is scratch.
double bench_ms_per_iteration(const TrainConfig& cfg, const Dataset& data, int n_iters);

// Product-von-Mises kernel density estimate on the torus, bandwidth chosen
// by held-out likelihood over a concentration grid.  Model-free reference
// for "how much structure is in this data"; used by the trend tests.
double kde_reference_ll(std::span<const EulerAngles> train, std::span<const EulerAngles> test,
                        int max_train = 2000, int max_eval = 2000, std::uint64_t seed = 0);

std::vector<EulerAngles> to_angles(std::span<const RotationMatrix> rots);

}  // namespace eulerflow
