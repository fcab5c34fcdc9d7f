#include "eulerflow/checkpoint.hpp"

#include <fstream>

#include <json.hpp>

#include "eulerflow/errors.hpp"

namespace eulerflow {

namespace {

using nlohmann::json;

constexpr const char* kFormat = "eulerflow-checkpoint";
constexpr int kVersion = 1;

}  // namespace

Checkpoint make_checkpoint(const FlowModel& model, const AdamOptimizer* opt,
                           std::uint64_t rng_seed) {
  Checkpoint ck;
  ck.config = model.config();
  ck.params.resize(model.param_count());
  model.get_params(ck.params);
  if (opt) {
    ck.has_optimizer = true;
    ck.optimizer_step = opt->step_count();
    ck.optimizer_config = opt->config();
    ck.optimizer_m.assign(opt->moment1().begin(), opt->moment1().end());
    ck.optimizer_v.assign(opt->moment2().begin(), opt->moment2().end());
  }
  ck.rng_seed = rng_seed;
  return ck;
}

FlowModel model_from_checkpoint(const Checkpoint& ck) {
  FlowModel model(ck.config);
  if (ck.params.size() != model.param_count()) {
    throw StateMismatch("checkpoint parameter count does not match architecture");
  }
  model.set_params(ck.params);
  return model;
}

void save_checkpoint(const Checkpoint& ck, const std::filesystem::path& path) {
  json doc{
      {"format", kFormat},
      {"version", kVersion},
      {"model_card",
       {{"layers", ck.config.layers},
        {"kernels", ck.config.kernels},
        {"context_width", ck.config.context_width},
        {"hidden", ck.config.hidden},
        {"base", "uniform-torus"},
        {"density_modes",
         {{"torus", "log-density w.r.t. d(omega) d(phi) d(kappa) on [0,2pi)^3"},
          {"haar",
           "log-density w.r.t. normalized Haar on SO(3); both Euler preimages "
           "summed, chart factor 8pi^2/|cos phi|"}}}}},
      {"seed", ck.config.seed},
      {"rng_seed", ck.rng_seed},
      {"params", ck.params},
  };
  if (ck.has_optimizer) {
    doc["optimizer"] = {{"kind", "adam"},
                        {"step", ck.optimizer_step},
                        {"lr", ck.optimizer_config.lr},
                        {"beta1", ck.optimizer_config.beta1},
                        {"beta2", ck.optimizer_config.beta2},
                        {"eps", ck.optimizer_config.eps},
                        {"m", ck.optimizer_m},
                        {"v", ck.optimizer_v}};
  }
  std::ofstream out(path);
  if (!out) throw IoError("cannot open for writing: " + path.string());
  out << doc.dump();
  if (!out) throw IoError("write failed: " + path.string());
}

Checkpoint load_checkpoint(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open: " + path.string());
  json doc;
  try {
    in >> doc;
  } catch (const json::exception& e) {
    throw CorruptRecord(std::string("checkpoint is not valid json: ") + e.what());
  }
  try {
    if (doc.at("format").get<std::string>() != kFormat) {
      throw CorruptRecord("not a checkpoint file: " + path.string());
    }
    const int version = doc.at("version").get<int>();
    if (version != kVersion) {
      throw FormatVersionMismatch("checkpoint version " + std::to_string(version) +
                                  " not supported");
    }
    Checkpoint ck;
    const auto& card = doc.at("model_card");
    ck.config.layers = card.at("layers").get<int>();
    ck.config.kernels = card.at("kernels").get<int>();
    ck.config.context_width = card.at("context_width").get<int>();
    ck.config.hidden = card.at("hidden").get<std::vector<int>>();
    ck.config.seed = doc.at("seed").get<std::uint64_t>();
    ck.rng_seed = doc.at("rng_seed").get<std::uint64_t>();
    ck.params = doc.at("params").get<std::vector<double>>();
    if (doc.contains("optimizer")) {
      const auto& opt = doc.at("optimizer");
      if (opt.at("kind").get<std::string>() != "adam") {
        throw CorruptRecord("unknown optimizer kind in checkpoint");
      }
      ck.has_optimizer = true;
      ck.optimizer_step = opt.at("step").get<std::int64_t>();
      ck.optimizer_config.lr = opt.at("lr").get<double>();
      ck.optimizer_config.beta1 = opt.at("beta1").get<double>();
      ck.optimizer_config.beta2 = opt.at("beta2").get<double>();
      ck.optimizer_config.eps = opt.at("eps").get<double>();
      ck.optimizer_m = opt.at("m").get<std::vector<double>>();
      ck.optimizer_v = opt.at("v").get<std::vector<double>>();
    }
    return ck;
  } catch (const json::exception& e) {
    throw CorruptRecord(std::string("checkpoint missing required fields: ") + e.what());
  }
}

}  // namespace eulerflow
