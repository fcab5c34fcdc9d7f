#include "eulerflow/train.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <exception>
#include <fstream>
#include <limits>
#include <numeric>
#include <thread>

#include <json.hpp>

#include "eulerflow/checkpoint.hpp"
#include "eulerflow/errors.hpp"
#include "eulerflow/rng.hpp"

namespace eulerflow {

namespace {

using nlohmann::json;
using clock_type = std::chrono::steady_clock;

double ms_between(clock_type::time_point a, clock_type::time_point b) {
  return std::chrono::duration<double, std::milli>(b - a).count();
}

// Runs f(i) for i in [0, n); workers get contiguous ranges.  Exceptions are
// collected and the first one rethrown on the caller thread.
template <class F>
void parallel_for(std::size_t n, int threads, F&& f) {
  const std::size_t t = std::min<std::size_t>(std::max(threads, 1), n);
  if (t <= 1) {
    for (std::size_t i = 0; i < n; ++i) f(i);
    return;
  }
  std::vector<std::exception_ptr> errs(t);
  std::vector<std::thread> pool;
  pool.reserve(t);
  for (std::size_t w = 0; w < t; ++w) {
    pool.emplace_back([&, w] {
      try {
        for (std::size_t i = w * n / t; i < (w + 1) * n / t; ++i) f(i);
      } catch (...) {
        errs[w] = std::current_exception();
      }
    });
  }
  for (auto& th : pool) th.join();
  for (auto& e : errs)
    if (e) std::rethrow_exception(e);
}

// Order-independent mean: sort, then sum.
double sorted_mean(std::vector<double>& v) {
  std::sort(v.begin(), v.end());
  double s = 0.0;
  for (double x : v) s += x;
  return s / static_cast<double>(v.size());
}

// Minibatch loss + gradient, split across workers; partials are combined in
// worker order so the result is fixed for a given thread count.
struct GradEngine {
  explicit GradEngine(std::size_t param_count, int threads)
      : threads_(std::max(threads, 1)), wss_(static_cast<std::size_t>(threads_)) {
    for (int w = 0; w < threads_; ++w)
      wgrads_.emplace_back(param_count, 0.0);
  }

  double run(const FlowModel& model, std::span<const EulerAngles> batch,
             std::span<const double> ctx, std::span<double> grad) {
    const std::size_t n = batch.size();
    const std::size_t cw = static_cast<std::size_t>(model.context_width());
    const std::size_t t = std::min<std::size_t>(static_cast<std::size_t>(threads_), n);
    if (t <= 1) return nll_loss(model, batch, ctx, grad, wss_[0]);

    std::vector<double> losses(t, 0.0);
    std::vector<std::exception_ptr> errs(t);
    std::vector<std::thread> pool;
    for (std::size_t w = 0; w < t; ++w) {
      pool.emplace_back([&, w] {
        try {
          const std::size_t b = w * n / t, e = (w + 1) * n / t;
          auto& wg = wgrads_[w];
          std::fill(wg.begin(), wg.end(), 0.0);
          losses[w] = nll_loss(model, batch.subspan(b, e - b),
                               ctx.empty() ? ctx : ctx.subspan(b * cw, (e - b) * cw),
                               wg, wss_[w]);
        } catch (...) {
          errs[w] = std::current_exception();
        }
      });
    }
    for (auto& th : pool) th.join();
    for (auto& e : errs)
      if (e) std::rethrow_exception(e);

    double loss = 0.0;
    for (std::size_t w = 0; w < t; ++w) {
      const std::size_t b = w * n / t, e = (w + 1) * n / t;
      const double share = static_cast<double>(e - b) / static_cast<double>(n);
      loss += share * losses[w];
      for (std::size_t i = 0; i < grad.size(); ++i) grad[i] += share * wgrads_[w][i];
    }
    return loss;
  }

  int threads_;
  std::vector<FlowWorkspace> wss_;
  std::vector<std::vector<double>> wgrads_;
};

// Everything one optimization step needs; shared by train() and the bench.
struct Stepper {
  Stepper(const TrainConfig& cfg, const Dataset& data)
      : cfg_(cfg),
        model_(FlowConfig{cfg.layers, cfg.kernels, data.context_width, cfg.hidden, cfg.seed}),
        train_angles_(to_angles(data.train_rotations)),
        train_ctx_(data.train_contexts),
        rng_(cfg.seed ^ 0x747261696eULL),
        adam_(0, AdamConfig{cfg.lr, 0.9, 0.999, 1e-8}),
        engine_(0, 1) {
    if (train_angles_.empty()) throw InvalidParameter("train: dataset has no training split");
    flat_.resize(model_.param_count());
    model_.get_params(flat_);
    grad_.assign(flat_.size(), 0.0);
    adam_ = AdamOptimizer(flat_.size(), AdamConfig{cfg.lr, 0.9, 0.999, 1e-8});
    engine_ = GradEngine(flat_.size(), cfg.threads);
    batch_.resize(static_cast<std::size_t>(cfg.batch));
    cw_ = static_cast<std::size_t>(data.context_width);
    if (cw_ > 0) bctx_.resize(static_cast<std::size_t>(cfg.batch) * cw_);
  }

  double step(int iter) {
    for (std::size_t b = 0; b < batch_.size(); ++b) {
      const std::size_t idx = uniform_index(rng_, train_angles_.size());
      batch_[b] = train_angles_[idx];
      if (cw_ > 0)
        std::copy_n(train_ctx_.begin() + static_cast<std::ptrdiff_t>(idx * cw_), cw_,
                    bctx_.begin() + static_cast<std::ptrdiff_t>(b * cw_));
    }
    std::fill(grad_.begin(), grad_.end(), 0.0);
    const double loss = engine_.run(model_, batch_, bctx_, grad_);
    if (!std::isfinite(loss)) {
      throw NonFiniteLoss("training loss is not finite at iteration " + std::to_string(iter),
                          static_cast<std::size_t>(iter));
    }
    clip_gradient_norm(grad_, cfg_.clip_norm);
    adam_.step(flat_, grad_);
    model_.set_params(flat_);
    return loss;
  }

  TrainConfig cfg_;
  FlowModel model_;
  std::vector<EulerAngles> train_angles_;
  std::vector<double> train_ctx_;
  RandomSource rng_;
  std::vector<double> flat_, grad_;
  AdamOptimizer adam_;
  GradEngine engine_;
  std::vector<EulerAngles> batch_;
  std::vector<double> bctx_;
  std::size_t cw_ = 0;
};

}  // namespace

void TrainConfig::validate() const {
  if (layers <= 0 || kernels <= 0) throw InvalidParameter("train config: layers/kernels must be positive");
  if (batch <= 0) throw InvalidParameter("train config: batch must be positive");
  if (iterations < 0) throw InvalidParameter("train config: negative iteration count");
  if (!(lr > 0.0)) throw InvalidParameter("train config: lr must be positive");
  if (eval_every <= 0) throw InvalidParameter("train config: eval_every must be positive");
  if (threads < 1) throw InvalidParameter("train config: threads must be at least 1");
  if (!(clip_norm > 0.0)) throw InvalidParameter("train config: clip_norm must be positive");
  for (int h : hidden)
    if (h <= 0) throw InvalidParameter("train config: hidden widths must be positive");
}

TrainConfig paper_preset() { return TrainConfig{}; }

TrainConfig desk_preset() {
  TrainConfig c;
  c.layers = 4;
  c.kernels = 16;
  c.batch = 256;
  c.lr = 1e-3;
  c.iterations = 5000;
  c.eval_every = 500;
  return c;
}

std::string snapshot_to_json(const TrainSnapshot& s) {
  return json{{"iter", s.iter},
              {"train_loss", s.train_loss},
              {"test_ll", s.test_ll},
              {"wall_ms", s.wall_ms}}
      .dump();
}

std::string metrics_to_json(const MetricsReport& m) {
  json j{{"test_ll", m.test_ll},
         {"mode", m.mode == DensityMode::Torus ? "torus" : "haar"},
         {"acc15", m.acc15},
         {"acc30", m.acc30},
         {"median_error_deg", m.median_error_deg}};
  if (m.ms_per_iteration >= 0.0)
    j["ms_per_iteration"] = m.ms_per_iteration;
  else
    j["ms_per_iteration"] = nullptr;
  return j.dump();
}

std::vector<EulerAngles> to_angles(std::span<const RotationMatrix> rots) {
  std::vector<EulerAngles> out;
  out.reserve(rots.size());
  for (const auto& r : rots) out.push_back(matrix_to_euler(r));
  return out;
}

TrainResult train(const TrainConfig& cfg, const Dataset& data) {
  cfg.validate();
  Stepper st(cfg, data);

  const auto test_angles = to_angles(data.test_rotations);
  const auto& eval_angles = test_angles.empty() ? st.train_angles_ : test_angles;
  const auto& eval_ctx = test_angles.empty() ? data.train_contexts : data.test_contexts;

  std::ofstream log;
  if (!cfg.log_path.empty()) {
    log.open(cfg.log_path);
    if (!log) throw IoError("cannot open training log: " + cfg.log_path.string());
  }

  TrainResult res;
  res.loss_history.reserve(static_cast<std::size_t>(cfg.iterations));

  auto window_start = clock_type::now();
  int window_iters = 0;
  for (int iter = 1; iter <= cfg.iterations; ++iter) {
    const double loss = st.step(iter);
    res.loss_history.push_back(loss);
    ++window_iters;

    if (iter % cfg.eval_every == 0 || iter == cfg.iterations) {
      const double wall = ms_between(window_start, clock_type::now()) /
                          static_cast<double>(std::max(window_iters, 1));
      TrainSnapshot snap;
      snap.iter = iter;
      snap.train_loss = loss;
      snap.test_ll = evaluate_ll(st.model_, eval_angles, eval_ctx,
                                 DensityMode::Torus, cfg.threads);
      snap.wall_ms = wall;
      res.history.push_back(snap);
      if (log) log << snapshot_to_json(snap) << '\n';
      window_start = clock_type::now();
      window_iters = 0;
    }
  }
  if (log) log.flush();

  if (!cfg.checkpoint_path.empty()) {
    save_checkpoint(make_checkpoint(st.model_, &st.adam_, cfg.seed), cfg.checkpoint_path);
  }
  res.model = std::move(st.model_);
  return res;
}

double evaluate_ll(const FlowModel& model, std::span<const EulerAngles> angles,
                   std::span<const double> ctx_flat, DensityMode mode, int threads) {
  const std::size_t n = angles.size();
  if (n == 0) throw InvalidParameter("evaluate_ll: empty set");
  const std::size_t cw = static_cast<std::size_t>(model.context_width());
  if (ctx_flat.size() != n * cw) throw ShapeMismatch("evaluate_ll: context size mismatch");
  std::vector<double> lp(n);
  parallel_for(n, threads, [&](std::size_t i) {
    lp[i] = model.log_prob(angles[i], cw ? ctx_flat.subspan(i * cw, cw) : ctx_flat.first(0), mode);
  });
  return sorted_mean(lp);
}

double evaluate_ll(const FlowModel& model, std::span<const RotationMatrix> rots,
                   std::span<const double> ctx_flat, DensityMode mode, int threads) {
  const std::size_t n = rots.size();
  if (n == 0) throw InvalidParameter("evaluate_ll: empty set");
  const std::size_t cw = static_cast<std::size_t>(model.context_width());
  if (ctx_flat.size() != n * cw) throw ShapeMismatch("evaluate_ll: context size mismatch");
  std::vector<double> lp(n);
  parallel_for(n, threads, [&](std::size_t i) {
    lp[i] = model.log_prob(rots[i], cw ? ctx_flat.subspan(i * cw, cw) : ctx_flat.first(0), mode);
  });
  return sorted_mean(lp);
}

MetricsReport pose_metrics(std::span<const RotationMatrix> preds,
                           std::span<const RotationMatrix> truths) {
  const std::size_t n = preds.size();
  if (n == 0) throw InvalidParameter("pose_metrics: empty set");
  if (truths.size() != n) throw ShapeMismatch("pose_metrics: size mismatch");
  std::vector<double> err_deg(n);
  for (std::size_t i = 0; i < n; ++i) {
    err_deg[i] = geodesic_distance(preds[i], truths[i]) * 180.0 / std::numbers::pi;
  }
  MetricsReport rep;
  std::size_t below15 = 0, below30 = 0;
  for (double e : err_deg) {
    if (e < 15.0) ++below15;
    if (e < 30.0) ++below30;
  }
  rep.acc15 = static_cast<double>(below15) / static_cast<double>(n);
  rep.acc30 = static_cast<double>(below30) / static_cast<double>(n);
  std::sort(err_deg.begin(), err_deg.end());
  rep.median_error_deg = (n % 2 == 1) ? err_deg[n / 2]
                                      : 0.5 * (err_deg[n / 2 - 1] + err_deg[n / 2]);
  return rep;
}

MetricsReport evaluate_pose(const FlowModel& model, std::span<const RotationMatrix> rots,
                            std::span<const double> ctx_flat, int n_candidates,
                            std::uint64_t seed, DensityMode ll_mode, int threads) {
  const std::size_t n = rots.size();
  if (n == 0) throw InvalidParameter("evaluate_pose: empty set");
  if (n_candidates <= 0) throw InvalidParameter("evaluate_pose: need at least one candidate");
  const std::size_t cw = static_cast<std::size_t>(model.context_width());
  if (ctx_flat.size() != n * cw) throw ShapeMismatch("evaluate_pose: context size mismatch");

  std::vector<RotationMatrix> preds(n);
  parallel_for(n, threads, [&](std::size_t i) {
    RandomSource rng(seed + 0x9e3779b97f4a7c15ULL * (i + 1));
    const auto ctx = cw ? ctx_flat.subspan(i * cw, cw) : ctx_flat.first(0);
    preds[i] = model.predict_mode(ctx, n_candidates, rng);
  });

  MetricsReport rep = pose_metrics(preds, rots);
  rep.mode = ll_mode;
  rep.test_ll = evaluate_ll(model, rots, ctx_flat, ll_mode, threads);
  return rep;
}

double bench_ms_per_iteration(const TrainConfig& cfg, const Dataset& data, int n_iters) {
  if (n_iters < 10) throw InvalidParameter("bench: need at least 10 iterations");
  cfg.validate();
  Stepper st(cfg, data);
  for (int i = 1; i <= 5; ++i) st.step(i);
  const auto t0 = clock_type::now();
  for (int i = 6; i < 6 + n_iters; ++i) st.step(i);
  return ms_between(t0, clock_type::now()) / static_cast<double>(n_iters);
}

namespace {

double log_bessel_i0(double x) {
  x = std::abs(x);
  if (x < 12.0) {
    const double q = 0.25 * x * x;
    double term = 1.0, sum = 1.0;
    for (int k = 1; k < 64; ++k) {
      term *= q / (static_cast<double>(k) * static_cast<double>(k));
      sum += term;
      if (term < sum * 1e-17) break;
    }
    return std::log(sum);
  }
  const double ix = 1.0 / x;
  const double corr =
      1.0 + ix * (0.125 + ix * (0.0703125 + ix * (0.0732421875 + ix * 0.112152099609375)));
  return x - 0.5 * std::log(two_pi * x) + std::log(corr);
}

double kde_mean_ll(std::span<const EulerAngles> fit, std::span<const EulerAngles> eval,
                   double kappa) {
  const double log_norm = std::log(static_cast<double>(fit.size())) +
                          3.0 * (std::log(two_pi) + log_bessel_i0(kappa));
  std::vector<double> lls(eval.size());
  std::vector<double> score(fit.size());
  for (std::size_t i = 0; i < eval.size(); ++i) {
    const auto& e = eval[i];
    double best = -std::numeric_limits<double>::infinity();
    for (std::size_t j = 0; j < fit.size(); ++j) {
      const auto& t = fit[j];
      score[j] = kappa * (std::cos(e.omega - t.omega) + std::cos(e.phi - t.phi) +
                          std::cos(e.kappa - t.kappa));
      best = std::max(best, score[j]);
    }
    double acc = 0.0;
    for (double s : score) acc += std::exp(s - best);
    lls[i] = best + std::log(acc) - log_norm;
  }
  return sorted_mean(lls);
}

std::vector<EulerAngles> subsample(std::span<const EulerAngles> src, std::size_t k,
                                   RandomSource& rng) {
  if (src.size() <= k) return {src.begin(), src.end()};
  std::vector<std::size_t> idx(src.size());
  std::iota(idx.begin(), idx.end(), 0);
  for (std::size_t i = 0; i < k; ++i) {
    std::swap(idx[i], idx[i + uniform_index(rng, src.size() - i)]);
  }
  std::vector<EulerAngles> out;
  out.reserve(k);
  for (std::size_t i = 0; i < k; ++i) out.push_back(src[idx[i]]);
  return out;
}

}  // namespace

double kde_reference_ll(std::span<const EulerAngles> train, std::span<const EulerAngles> test,
                        int max_train, int max_eval, std::uint64_t seed) {
  if (train.size() < 4 || test.empty()) throw InvalidParameter("kde: not enough data");
  if (max_train < 4 || max_eval < 1) throw InvalidParameter("kde: caps too small");
  RandomSource rng(seed ^ 0x6b6465ULL);
  const auto fit = subsample(train, static_cast<std::size_t>(max_train), rng);
  const auto eval = subsample(test, static_cast<std::size_t>(max_eval), rng);

  std::vector<EulerAngles> half_a, half_b;
  for (std::size_t i = 0; i < fit.size(); ++i) {
    (i % 2 == 0 ? half_a : half_b).push_back(fit[i]);
  }
  const double grid[] = {2, 4, 8, 16, 32, 64, 128, 256, 512, 1024};
  double best_kappa = grid[0];
  double best_ll = -std::numeric_limits<double>::infinity();
  for (double kappa : grid) {
    const double ll = kde_mean_ll(half_a, half_b, kappa);
    if (ll > best_ll) {
      best_ll = ll;
      best_kappa = kappa;
    }
  }
  return kde_mean_ll(fit, eval, best_kappa);
}

}  // namespace eulerflow
