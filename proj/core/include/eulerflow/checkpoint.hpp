#pragma once

#include <cstdint>
#include <filesystem>
#include <vector>

#include "eulerflow/flow.hpp"
#include "eulerflow/net.hpp"

namespace eulerflow {

// Everything needed to resume a run: architecture, flat parameter vector,
// optional Adam state, and the RNG seed the run was started with.
struct Checkpoint {
  FlowConfig config;
  std::vector<double> params;

  bool has_optimizer = false;
  std::int64_t optimizer_step = 0;
  AdamConfig optimizer_config;
  std::vector<double> optimizer_m, optimizer_v;

  std::uint64_t rng_seed = 0;
};

Checkpoint make_checkpoint(const FlowModel& model, const AdamOptimizer* opt = nullptr,
                           std::uint64_t rng_seed = 0);
FlowModel model_from_checkpoint(const Checkpoint& ck);

// JSON container with a mandatory version field and a model card describing
// the architecture and the density reporting modes.  Doubles are stored at
// full round-trip precision, so save -> load reproduces parameters exactly.
void save_checkpoint(const Checkpoint& ck, const std::filesystem::path& path);
Checkpoint load_checkpoint(const std::filesystem::path& path);

}  // namespace eulerflow
