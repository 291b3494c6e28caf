#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "heatlab/heat.hpp"
#include "heatlab/sim.hpp"

namespace heatlab::config {

struct ConfigError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// Full experiment description: scenario grid, radio and MAC constants, MDP
// and training knobs, and output options. Parsed from INI-style files with
// strict unknown-key rejection; every key has a default.
struct ExperimentConfig {
  // [scenario]
  std::vector<int> nodes{32};
  std::vector<double> delta{2.0};
  double radius_m = 5000.0;
  double duration_s = 7200.0;
  std::vector<std::uint64_t> seeds{0, 1, 2, 3, 4, 5, 6, 7};

  // [phy]
  double carrier_hz = 470e6;
  double bandwidth_hz = 125e3;
  phy::CodingRate coding_rate{};
  double noise_figure_db = 6.0;
  double noise_density_dbm_hz = -174.0;
  double capture_threshold_db = 6.0;
  int lock_preambles = 4;
  double antenna_gain = 1.0;
  int preamble_symbols = 8;
  int payload_bytes = 20;
  int downlink_payload_bytes = 12;
  int n_channels = 8;

  // [mac]
  std::vector<int> usf_set{7, 8, 9, 10, 11, 12};
  std::vector<double> power_set{2, 5, 8, 11, 14, 17};
  std::vector<int> dsf_set{7, 8, 9, 10, 11, 12};
  std::vector<int> window_set{8, 16, 32, 64};
  double pa_efficiency = 0.25;
  double rx_power_mw = 36.3;
  bool half_duplex = true;
  double init_ptx_dbm = 14.0;
  int init_window = 16;

  // [mdp]
  double trade_off_lambda = 0.5;
  std::size_t buffer_capacity = 1000000;
  double offline_minutes = 25.0;

  // [train]
  double rho = 0.7;
  double alpha = 0.05;
  double beta_off = 1.0;
  double gamma0 = 0.5;
  double gamma_max = 0.99;
  long gamma_ramp_updates = 1000;
  double lr = 3e-4;
  double adam_beta1 = 0.9;
  double adam_beta2 = 0.999;
  double adam_eps = 1e-8;
  long pretrain_updates = 1500;
  int train_every = 2;
  int offline_steps_per_online = 1;
  int enum_cap = 0;
  bool alg2_literal_sign = false;
  int encoder_layers = 2;
  int model_dim = 32;
  int heads = 2;
  int ff_dim = 64;

  // [run]
  std::string algo = "random";
  std::string out;
  std::string trace;

  void validate() const;

  sim::Scenario scenario(int n_nodes, double traffic_delta, std::uint64_t seed) const;
  heat::HeatConfig heat_config(bool offline_module) const;
};

// INI-style parser: optional [section] headers, key = value lines, '#' or ';'
// comments. Unknown keys, malformed lines and out-of-range values raise
// ConfigError naming the line and key.
ExperimentConfig parse_config_text(const std::string& text);
ExperimentConfig parse_config_file(const std::string& path);

}  // namespace heatlab::config
