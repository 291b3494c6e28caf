#include <cstdio>
#include <fstream>
#include <iostream>

#include <CLI11.hpp>

#include "heatlab/policies.hpp"
#include "heatlab/runner.hpp"

namespace {

using heatlab::config::ConfigError;
using heatlab::config::ExperimentConfig;

constexpr int kExitOk = 0;
constexpr int kExitConfigError = 1;
constexpr int kExitRuntimeError = 2;

ExperimentConfig load_config(const std::string& path) {
  if (path.empty()) return ExperimentConfig{};
  return heatlab::config::parse_config_file(path);
}

void emit(const std::string& path, const std::string& content) {
  if (path.empty()) {
    std::cout << content;
    return;
  }
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot open " + path + " for writing");
  out << content;
}

heatlab::runner::CellSpec first_cell(const ExperimentConfig& cfg, bool seed_given,
                                     std::uint64_t seed) {
  return heatlab::runner::CellSpec{cfg.nodes.front(), cfg.delta.front(),
                                   seed_given ? seed : cfg.seeds.front()};
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"heatlab: single-gateway LoRaWAN simulator and resource-allocation trainer"};
  app.require_subcommand(1);

  std::string config_path, algo_override, out_path, trace_path, buffer_path, ckpt_path;
  std::uint64_t seed = 0;
  bool seed_given = false;

  auto add_common = [&](CLI::App* cmd, bool with_algo) {
    cmd->add_option("--config", config_path, "experiment config file (INI)");
    if (with_algo) cmd->add_option("--algo", algo_override, "random | adrx | heat | heat-online");
    cmd->add_option("--seed", seed, "override the config's seed list with one seed")
        ->each([&](const std::string&) { seed_given = true; });
    cmd->add_option("--out", out_path, "output path (default: stdout)");
  };

  auto* dump = app.add_subcommand("dump-tables", "emit the SF characteristics and coupling tables as CSV");
  dump->add_option("--out", out_path, "directory to write sf_table.csv and coupling_table.csv");

  auto* simulate = app.add_subcommand("simulate", "run one scenario cell without training");
  add_common(simulate, true);
  simulate->add_option("--trace", trace_path, "write the per-uplink outcome trace CSV here");
  simulate->add_option("--ckpt", ckpt_path, "checkpoint to load for heat/heat-online");

  auto* collect = app.add_subcommand("collect-offline",
                                     "fill an offline replay buffer under the random-uniform policy");
  add_common(collect, false);

  auto* train = app.add_subcommand("train", "offline pretraining plus the online run");
  add_common(train, true);
  train->add_option("--buffer", buffer_path, "pre-collected offline buffer (JSON lines)");
  train->add_option("--trace", trace_path, "write the per-uplink outcome trace CSV here");

  auto* sweep = app.add_subcommand("sweep", "run the full grid x seeds and emit one CSV row per run");
  add_common(sweep, true);

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    return app.exit(e) == 0 ? kExitOk : kExitConfigError;
  }

  try {
    if (dump->parsed()) {
      if (out_path.empty()) {
        std::cout << heatlab::runner::sf_table_csv() << "\n" << heatlab::runner::coupling_table_csv();
      } else {
        emit(out_path + "/sf_table.csv", heatlab::runner::sf_table_csv());
        emit(out_path + "/coupling_table.csv", heatlab::runner::coupling_table_csv());
      }
      return kExitOk;
    }

    ExperimentConfig cfg = load_config(config_path);
    if (!algo_override.empty()) cfg.algo = algo_override;
    if (seed_given) cfg.seeds = {seed};
    cfg.validate();

    if (simulate->parsed()) {
      heatlab::runner::CellOutputs outputs;
      outputs.trace_path = trace_path;
      outputs.load_checkpoint = ckpt_path;
      if ((cfg.algo == "heat" || cfg.algo == "heat-online") && ckpt_path.empty()) {
        std::cerr << "note: running " << cfg.algo << " with a freshly initialized policy\n";
      }
      auto result = heatlab::runner::run_cell(cfg, first_cell(cfg, seed_given, seed), cfg.algo,
                                              outputs);
      emit(out_path, heatlab::runner::csv_header() + heatlab::runner::csv_row(result));
      return kExitOk;
    }

    if (collect->parsed()) {
      if (out_path.empty()) throw ConfigError("collect-offline requires --out <buffer.jsonl>");
      auto spec = first_cell(cfg, seed_given, seed);
      auto scenario = cfg.scenario(spec.n_nodes, spec.delta, spec.seed);
      heatlab::mdp::HistoryTracker tracker(scenario.sets);
      heatlab::policies::RandomUniform policy;
      auto col = heatlab::mdp::collect_offline(scenario, cfg.offline_minutes, policy, tracker,
                                               cfg.trade_off_lambda, cfg.buffer_capacity);
      col.buffer.save_jsonl(out_path);
      std::cerr << "collected " << col.buffer.size() << " transitions over "
                << cfg.offline_minutes << " simulated minutes\n";
      return kExitOk;
    }

    if (train->parsed()) {
      if (cfg.algo != "heat" && cfg.algo != "heat-online") {
        throw ConfigError("train requires --algo heat or heat-online");
      }
      auto spec = first_cell(cfg, seed_given, seed);
      heatlab::runner::CellOutputs outputs;
      outputs.trace_path = trace_path;
      std::optional<heatlab::mdp::ReplayBuffer> loaded;
      if (!buffer_path.empty()) {
        loaded = heatlab::mdp::ReplayBuffer::load_jsonl(buffer_path);
        outputs.preloaded_offline = &*loaded;
      }
      if (!out_path.empty()) outputs.checkpoint_path = out_path + "/checkpoint.bin";
      auto result = heatlab::runner::run_cell(cfg, spec, cfg.algo, outputs);
      std::string csv = heatlab::runner::csv_header() + heatlab::runner::csv_row(result);
      if (out_path.empty()) {
        std::cout << csv;
      } else {
        emit(out_path + "/metrics.csv", csv);
      }
      return kExitOk;
    }

    if (sweep->parsed()) {
      emit(out_path, heatlab::runner::sweep_csv(cfg));
      return kExitOk;
    }
  } catch (const ConfigError& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return kExitConfigError;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitRuntimeError;
  }
  return kExitOk;
}
