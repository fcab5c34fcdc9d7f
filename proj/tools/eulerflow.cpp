// eulerflow: generate datasets, train/evaluate/sample the torus flow, and
// export data for external SO(3) visualizers.
//
// Exit codes: 0 success, 1 usage error, 2 runtime failure.

#include <cstdlib>
#include <fstream>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "eulerflow/checkpoint.hpp"
#include "eulerflow/dataset.hpp"
#include "eulerflow/errors.hpp"
#include "eulerflow/train.hpp"

namespace {

using nlohmann::json;
using namespace eulerflow;

int env_threads_default() {
  if (const char* s = std::getenv("EULER_FLOW_THREADS")) {
    try {
      const int v = std::stoi(s);
      if (v >= 1) return v;
    } catch (...) {
    }
    std::cerr << "warning: ignoring invalid EULER_FLOW_THREADS=\"" << s << "\"\n";
  }
  return 1;
}

std::vector<double> parse_ctx(const std::string& s) {
  std::vector<double> out;
  std::stringstream ss(s);
  std::string item;
  while (std::getline(ss, item, ',')) {
    if (item.empty()) continue;
    out.push_back(std::stod(item));
  }
  return out;
}

void emit(bool as_json, const json& doc, const std::string& plain) {
  if (as_json)
    std::cout << doc.dump() << '\n';
  else
    std::cout << plain << '\n';
}

struct TrainFlags {
  std::string preset = "paper";
  std::string config_file;
  int layers = 0, kernels = 0, batch = 0, iterations = 0, eval_every = 0, threads = 0;
  double lr = 0.0;
  std::uint64_t seed = 0;
  std::string hidden;

  CLI::Option *o_layers = nullptr, *o_kernels = nullptr, *o_batch = nullptr,
              *o_iterations = nullptr, *o_eval_every = nullptr, *o_threads = nullptr,
              *o_lr = nullptr, *o_seed = nullptr, *o_hidden = nullptr;

  void add_to(CLI::App* cmd) {
    cmd->add_option("--preset", preset, "Config preset: paper (24/64/1024/1e-4/50k) or desk (4/16/256/1e-3/5k)")
        ->check(CLI::IsMember({"paper", "desk"}));
    cmd->add_option("--config", config_file, "JSON config file (keys: layers, kernels, batch, lr, iterations, eval_every, seed, threads, hidden)");
    o_layers = cmd->add_option("--layers", layers, "Coupling layer count");
    o_kernels = cmd->add_option("--kernels", kernels, "Mobius kernels per layer (K)");
    o_batch = cmd->add_option("--batch", batch, "Minibatch size");
    o_lr = cmd->add_option("--lr", lr, "Adam learning rate");
    o_iterations = cmd->add_option("--iterations", iterations, "Training iterations");
    o_eval_every = cmd->add_option("--eval-every", eval_every, "Iterations between eval snapshots");
    o_seed = cmd->add_option("--seed", seed, "RNG seed");
    o_threads = cmd->add_option("--threads", threads, "Worker threads (env EULER_FLOW_THREADS when unset)");
    o_hidden = cmd->add_option("--hidden", hidden, "Conditioner hidden widths, comma separated (default 64,64)");
  }

  // flags > config file > preset
  TrainConfig resolve() const {
    TrainConfig cfg = (preset == "desk") ? desk_preset() : paper_preset();
    cfg.threads = env_threads_default();
    if (!config_file.empty()) {
      std::ifstream in(config_file);
      if (!in) throw IoError("cannot open config file: " + config_file);
      json j;
      try {
        in >> j;
      } catch (const json::exception& e) {
        throw CorruptRecord(std::string("config file is not valid json: ") + e.what());
      }
      if (j.contains("layers")) cfg.layers = j["layers"].get<int>();
      if (j.contains("kernels")) cfg.kernels = j["kernels"].get<int>();
      if (j.contains("batch")) cfg.batch = j["batch"].get<int>();
      if (j.contains("lr")) cfg.lr = j["lr"].get<double>();
      if (j.contains("iterations")) cfg.iterations = j["iterations"].get<int>();
      if (j.contains("eval_every")) cfg.eval_every = j["eval_every"].get<int>();
      if (j.contains("seed")) cfg.seed = j["seed"].get<std::uint64_t>();
      if (j.contains("threads")) cfg.threads = j["threads"].get<int>();
      if (j.contains("hidden")) cfg.hidden = j["hidden"].get<std::vector<int>>();
    }
    if (o_layers->count()) cfg.layers = layers;
    if (o_kernels->count()) cfg.kernels = kernels;
    if (o_batch->count()) cfg.batch = batch;
    if (o_lr->count()) cfg.lr = lr;
    if (o_iterations->count()) cfg.iterations = iterations;
    if (o_eval_every->count()) cfg.eval_every = eval_every;
    if (o_seed->count()) cfg.seed = seed;
    if (o_threads->count()) cfg.threads = threads;
    if (o_hidden->count()) {
      cfg.hidden.clear();
      for (double v : parse_ctx(hidden)) cfg.hidden.push_back(static_cast<int>(v));
    }
    cfg.validate();
    return cfg;
  }
};

int cmd_generate(const std::string& kind, const std::string& out_path, std::uint64_t seed,
                 int train_n, int test_n, double sigma_sq, double sigma_phi_sq,
                 double phi_mode_shift, int classes, double blur_sigma,
                 const std::string& csv_path, bool as_json) {
  Dataset ds;
  if (kind == "gimbal") {
    GimbalSpec spec;
    spec.sigma_sq = sigma_sq;
    spec.sigma_phi_sq = sigma_phi_sq;
    spec.phi_mode_shift = phi_mode_shift;
    spec.train_n = train_n;
    spec.test_n = test_n;
    spec.seed = seed;
    ds = generate_gimbal(spec);
  } else if (kind == "toy") {
    ToySpec spec;
    spec.n_classes = classes;
    spec.blur_sigma = blur_sigma;
    spec.train_n = train_n;
    spec.test_n = test_n;
    spec.seed = seed;
    ds = generate_conditional_toy(spec);
  } else {
    SyntheticSpec spec;
    spec.train_n = train_n;
    spec.test_n = test_n;
    spec.seed = seed;
    ds = generate_synthetic(synthetic_kind_from_string(kind), spec);
  }
  save_dataset(ds, out_path);
  if (!csv_path.empty()) export_csv(ds, csv_path);
  std::cerr << "wrote " << ds.train_count() << "+" << ds.test_count() << " rotations to "
            << out_path << "\n";
  emit(as_json,
       json{{"command", "generate"},
            {"kind", kind},
            {"path", out_path},
            {"name", ds.name},
            {"train_count", ds.train_count()},
            {"test_count", ds.test_count()},
            {"context_width", ds.context_width}},
       "ok: " + out_path);
  return 0;
}

int cmd_train(const TrainFlags& tf, const std::string& data_path, const std::string& out_path,
              const std::string& log_path, bool as_json) {
  TrainConfig cfg = tf.resolve();
  cfg.checkpoint_path = out_path;
  cfg.log_path = log_path;
  const Dataset ds = load_dataset(data_path);
  std::cerr << "training on " << ds.name << ": layers=" << cfg.layers << " K=" << cfg.kernels
            << " batch=" << cfg.batch << " lr=" << cfg.lr << " iters=" << cfg.iterations
            << " threads=" << cfg.threads << "\n";
  const TrainResult res = train(cfg, ds);
  for (const auto& s : res.history) std::cerr << snapshot_to_json(s) << "\n";
  const TrainSnapshot& last = res.history.back();
  emit(as_json,
       json{{"command", "train"},
            {"checkpoint", out_path},
            {"data", data_path},
            {"iterations", cfg.iterations},
            {"param_count", res.model.param_count()},
            {"final_train_loss", last.train_loss},
            {"final_test_ll", last.test_ll},
            {"wall_ms_per_iteration", last.wall_ms}},
       "final test_ll " + std::to_string(last.test_ll) + ", checkpoint: " + out_path);
  return 0;
}

int cmd_eval(const std::string& model_path, const std::string& data_path,
             const std::string& mode_str, bool pose, int candidates, std::uint64_t seed,
             int threads, bool as_json) {
  const FlowModel model = model_from_checkpoint(load_checkpoint(model_path));
  const Dataset ds = load_dataset(data_path);
  const DensityMode mode = (mode_str == "haar") ? DensityMode::Haar : DensityMode::Torus;
  json doc{{"command", "eval"}, {"model", model_path}, {"data", data_path}};
  std::string plain;
  if (pose) {
    const MetricsReport rep = evaluate_pose(model, ds.test_rotations, ds.test_contexts,
                                            candidates, seed, mode, threads);
    doc.update(json::parse(metrics_to_json(rep)));
    plain = metrics_to_json(rep);
  } else {
    MetricsReport rep;
    rep.mode = mode;
    rep.test_ll = evaluate_ll(model, ds.test_rotations, ds.test_contexts, mode, threads);
    doc["test_ll"] = rep.test_ll;
    doc["mode"] = mode_str;
    plain = "test_ll (" + mode_str + "): " + std::to_string(rep.test_ll);
  }
  emit(as_json, doc, plain);
  return 0;
}

int cmd_sample(const std::string& model_path, int n, const std::string& out_path,
               std::uint64_t seed, const std::string& ctx_str, bool as_json) {
  if (n < 1) throw InvalidParameter("sample: n must be at least 1");
  const FlowModel model = model_from_checkpoint(load_checkpoint(model_path));
  const std::vector<double> ctx = parse_ctx(ctx_str);
  RandomSource rng(seed);
  const auto rots = model.sample(n, ctx, rng);
  std::ofstream out(out_path);
  if (!out) throw IoError("cannot open for writing: " + out_path);
  out << "r00,r01,r02,r10,r11,r12,r20,r21,r22\n";
  out.precision(17);
  for (const auto& r : rots) {
    for (std::size_t i = 0; i < 9; ++i) out << (i ? "," : "") << r.m[i];
    out << '\n';
  }
  if (!out) throw IoError("write failed: " + out_path);
  emit(as_json, json{{"command", "sample"}, {"path", out_path}, {"count", n}},
       "wrote " + std::to_string(n) + " samples to " + out_path);
  return 0;
}

int cmd_bench(const TrainFlags& tf, const std::string& data_path, int iters, bool as_json) {
  TrainConfig cfg = tf.resolve();
  const Dataset ds = load_dataset(data_path);
  const double ms = bench_ms_per_iteration(cfg, ds, iters);
  emit(as_json,
       json{{"command", "bench"},
            {"ms_per_iteration", ms},
            {"layers", cfg.layers},
            {"kernels", cfg.kernels},
            {"batch", cfg.batch},
            {"threads", cfg.threads},
            {"iterations_timed", iters}},
       "ms/iteration: " + std::to_string(ms) + " (layers=" + std::to_string(cfg.layers) +
           ", K=" + std::to_string(cfg.kernels) + ", batch=" + std::to_string(cfg.batch) + ")");
  return 0;
}

int cmd_export_viz(const std::string& data_path, const std::string& model_path,
                   const std::string& out_path, int n, std::uint64_t seed,
                   const std::string& ctx_str, bool as_json) {
  std::size_t rows = 0;
  std::string source;
  if (!data_path.empty()) {
    const Dataset ds = load_dataset(data_path);
    export_csv(ds, out_path);
    rows = ds.train_count() + ds.test_count();
    source = "dataset";
  } else {
    const FlowModel model = model_from_checkpoint(load_checkpoint(model_path));
    const std::vector<double> ctx = parse_ctx(ctx_str);
    RandomSource rng(seed);
    const auto rots = model.sample(n, ctx, rng);
    std::ofstream out(out_path);
    if (!out) throw IoError("cannot open for writing: " + out_path);
    out << "r00,r01,r02,r10,r11,r12,r20,r21,r22,log_density\n";
    out.precision(17);
    for (const auto& r : rots) {
      for (std::size_t i = 0; i < 9; ++i) out << (i ? "," : "") << r.m[i];
      out << ',' << model.log_prob(r, ctx, DensityMode::Haar) << '\n';
    }
    if (!out) throw IoError("write failed: " + out_path);
    rows = rots.size();
    source = "model";
  }
  emit(as_json,
       json{{"command", "export-viz"}, {"path", out_path}, {"rows", rows}, {"source", source}},
       "wrote " + std::to_string(rows) + " rows to " + out_path);
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Normalizing flows over the Euler-angle torus for SO(3) densities"};
  app.require_subcommand(1);
  app.fallthrough(false);

  bool as_json = false;
  app.add_flag("--json", as_json, "Emit one machine-readable JSON document on stdout; logs go to stderr");

  // generate
  auto* g = app.add_subcommand("generate", "Sample a dataset and write it to disk");
  std::string g_kind, g_out, g_csv;
  std::uint64_t g_seed = 0;
  int g_train_n = 60000, g_test_n = 12000, g_classes = 4;
  double g_sigma_sq = 0.1, g_sigma_phi_sq = 0.1, g_phi_mode_shift = 0.0, g_blur = 0.05;
  g->add_option("--kind", g_kind, "gimbal | peak | cone | cube | line | toy")->required();
  g->add_option("--out", g_out, "Output dataset path")->required();
  g->add_option("--seed", g_seed, "RNG seed");
  g->add_option("--train-n", g_train_n, "Training rotations");
  g->add_option("--test-n", g_test_n, "Test rotations");
  g->add_option("--sigma-sq", g_sigma_sq, "gimbal: variance of omega and kappa");
  g->add_option("--sigma-phi-sq", g_sigma_phi_sq, "gimbal: phi variance factor (phi var = sigma-phi-sq * sigma-sq)");
  g->add_option("--phi-mode-shift", g_phi_mode_shift, "gimbal: shift both phi mode centers by this angle");
  g->add_option("--classes", g_classes, "toy: number of classes");
  g->add_option("--blur-sigma", g_blur, "toy: tangent blur around each mode");
  g->add_option("--csv", g_csv, "Also export as CSV to this path");

  // train
  auto* t = app.add_subcommand("train", "Fit the flow by maximum likelihood");
  std::string t_data, t_out, t_log;
  TrainFlags t_flags;
  t->add_option("--data", t_data, "Dataset path")->required();
  t->add_option("--out", t_out, "Checkpoint output path")->required();
  t->add_option("--log", t_log, "JSON-lines training log path");
  t_flags.add_to(t);

  // eval
  auto* e = app.add_subcommand("eval", "Evaluate a checkpoint on a dataset's test split");
  std::string e_model, e_data, e_mode = "torus";
  bool e_pose = false;
  int e_candidates = 512, e_threads = 0;
  std::uint64_t e_seed = 0;
  e->add_option("--model", e_model, "Checkpoint path")->required();
  e->add_option("--data", e_data, "Dataset path")->required();
  e->add_option("--mode", e_mode, "Density reporting mode: torus | haar")
      ->check(CLI::IsMember({"torus", "haar"}));
  e->add_flag("--pose", e_pose, "Also compute Acc@15/Acc@30/median error via mode prediction");
  e->add_option("--candidates", e_candidates, "Samples per mode prediction");
  e->add_option("--seed", e_seed, "RNG seed for mode prediction");
  auto* e_threads_opt = e->add_option("--threads", e_threads, "Worker threads");

  // sample
  auto* s = app.add_subcommand("sample", "Draw rotations from a checkpoint");
  std::string s_model, s_out, s_ctx;
  int s_n = 1000;
  std::uint64_t s_seed = 0;
  s->add_option("--model", s_model, "Checkpoint path")->required();
  s->add_option("-n,--count", s_n, "Number of samples");
  s->add_option("--out", s_out, "Output CSV path")->required();
  s->add_option("--seed", s_seed, "RNG seed");
  s->add_option("--ctx", s_ctx, "Context vector, comma separated (conditional models)");

  // bench
  auto* b = app.add_subcommand("bench", "Measure wall-clock ms per training iteration");
  std::string b_data;
  int b_iters = 50;
  TrainFlags b_flags;
  b->add_option("--data", b_data, "Dataset path")->required();
  b->add_option("--iters", b_iters, "Timed iterations (after 5 warm-ups)");
  b_flags.add_to(b);

  // export-viz
  auto* x = app.add_subcommand("export-viz", "Export rotations (+ log-density for models) as CSV for external SO(3) visualizers");
  std::string x_data, x_model, x_out, x_ctx;
  int x_n = 4096;
  std::uint64_t x_seed = 0;
  auto* x_data_opt = x->add_option("--data", x_data, "Dataset source");
  auto* x_model_opt = x->add_option("--model", x_model, "Checkpoint source");
  x->add_option("--out", x_out, "Output CSV path")->required();
  x->add_option("-n,--count", x_n, "Samples to draw (model source)");
  x->add_option("--seed", x_seed, "RNG seed (model source)");
  x->add_option("--ctx", x_ctx, "Context vector, comma separated (conditional models)");
  x_data_opt->excludes(x_model_opt);

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& help) {
    return app.exit(help);  // prints help to stdout, exit 0
  } catch (const CLI::ParseError& pe) {
    std::cerr << pe.what() << "\n\n" << app.help();
    return 1;
  }

  try {
    if (g->parsed()) {
      return cmd_generate(g_kind, g_out, g_seed, g_train_n, g_test_n, g_sigma_sq,
                          g_sigma_phi_sq, g_phi_mode_shift, g_classes, g_blur, g_csv, as_json);
    }
    if (t->parsed()) return cmd_train(t_flags, t_data, t_out, t_log, as_json);
    if (e->parsed()) {
      const int threads = e_threads_opt->count() ? e_threads : env_threads_default();
      return cmd_eval(e_model, e_data, e_mode, e_pose, e_candidates, e_seed, threads, as_json);
    }
    if (s->parsed()) return cmd_sample(s_model, s_n, s_out, s_seed, s_ctx, as_json);
    if (b->parsed()) return cmd_bench(b_flags, b_data, b_iters, as_json);
    if (x->parsed()) {
      if (x_data.empty() && x_model.empty()) {
        std::cerr << "export-viz: need --data or --model\n";
        return 1;
      }
      return cmd_export_viz(x_data, x_model, x_out, x_n, x_seed, x_ctx, as_json);
    }
    std::cerr << app.help();
    return 1;
  } catch (const Error& err) {
    std::cerr << "error: " << err.what() << "\n";
    return 2;
  } catch (const std::exception& ex) {
    std::cerr << "error: " << ex.what() << "\n";
    return 2;
  }
}
