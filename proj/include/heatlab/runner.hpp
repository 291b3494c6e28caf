#pragma once

#include <optional>
#include <string>
#include <vector>

#include "heatlab/config.hpp"
#include "heatlab/mdp.hpp"

namespace heatlab::runner {

struct CellSpec {
  int n_nodes = 0;
  double delta = 0.0;
  std::uint64_t seed = 0;
};

struct CellOutputs {
  std::string checkpoint_path;  // empty: do not write
  std::string buffer_path;
  std::string trace_path;
  std::string load_checkpoint;  // heat algorithms: run a frozen policy, no training
  const mdp::ReplayBuffer* preloaded_offline = nullptr;
};

struct CellResult {
  std::string run_id;
  std::string algo;
  CellSpec spec;
  double radius_m = 0.0;
  double duration_s = 0.0;
  sim::RunMetrics metrics;
  long train_updates = 0;
  std::string status = "ok";
};

// One grid cell end to end: offline collection and pretraining when the
// algorithm needs it, then the online run.
CellResult run_cell(const config::ExperimentConfig& cfg, const CellSpec& spec,
                    const std::string& algo, const CellOutputs& outputs = {});

std::string csv_header();
std::string csv_row(const CellResult& r);

// Full sweep over the config's grid x seeds; cells run in parallel up to the
// HEATLAB_THREADS cap, rows are emitted in deterministic grid order.
std::string sweep_csv(const config::ExperimentConfig& cfg);

std::string trace_csv(const std::vector<sim::TraceRow>& trace);

std::string sf_table_csv();
std::string coupling_table_csv();

}  // namespace heatlab::runner
