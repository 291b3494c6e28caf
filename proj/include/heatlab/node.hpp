#pragma once

#include <cstdint>
#include <stdexcept>
#include <vector>

#include "heatlab/phy.hpp"
#include "heatlab/rng.hpp"

namespace heatlab::mac {

// Configurable parameter domains. SF domains must stay within the 7..12 table;
// power and window sets are sorted ascending.
struct SetsSpec {
  std::vector<int> usf;               // uplink spreading factors
  std::vector<double> power_dbm;      // transmit powers
  std::vector<int> dsf;               // downlink spreading factors
  std::vector<int> window_symbols;    // receive window lengths, preamble symbols at DSF

  static SetsSpec defaults();
  void validate() const;
  std::size_t action_space_size() const {
    return usf.size() * power_dbm.size() * dsf.size() * window_symbols.size();
  }
};

// Index-encoded next-cycle parameters {USF, P, DSF, w}.
struct Action4 {
  int usf_i = 0;
  int p_i = 0;
  int dsf_i = 0;
  int w_i = 0;
  bool operator==(const Action4&) const = default;
};

struct MacParams {
  int payload_bytes = 20;
  int downlink_payload_bytes = 12;
  int preamble_symbols = 8;
  int n_channels = 8;
  double pa_efficiency = 0.25;
  double rx_power_mw = 36.3;
  double init_ptx_dbm = 14.0;
  int init_window_symbols = 16;
};

// Per-node state: placement, the four tunable parameters (as set indices),
// counters and the energy meter.
struct EndNode {
  int id = 0;
  double distance_m = 0.0;
  int usf_i = 0;
  int p_i = 0;
  int dsf_i = 0;
  int w_i = 0;
  double energy_joules = 0.0;
  long n_sent = 0;
  long n_succ = 0;
  double busy_until = 0.0;

  int usf(const SetsSpec& s) const { return s.usf[usf_i]; }
  double ptx_dbm(const SetsSpec& s) const { return s.power_dbm[p_i]; }
  int dsf(const SetsSpec& s) const { return s.dsf[dsf_i]; }
  int window_symbols(const SetsSpec& s) const { return s.window_symbols[w_i]; }
};

// Distance-banded initial assignment: nearest sixth of the radius gets the
// fastest SF, the outer band the slowest. Deterministic given placement.
void init_node_params(EndNode& node, double radius_m, const SetsSpec& sets, const MacParams& mac);

// Exponential inter-generation gap for delta packets per minute.
double next_uplink_gap_s(Rng& rng, double delta_per_min);

// ALOHA uplink start: uniform channel hop, fresh fading draw, energy debit.
phy::TransmissionAttempt begin_uplink(EndNode& node, double now, Rng& rng,
                                      const SetsSpec& sets, const MacParams& mac,
                                      const phy::LinkBudgetParams& link,
                                      std::uint64_t attempt_id);

struct RxSchedule {
  double rx1_open = 0.0;
  double rx1_close = 0.0;
  double rx2_open = 0.0;
  double rx2_close = 0.0;
};

// RX1 one second after uplink end, RX2 two seconds after; both windows sized
// w preamble symbols at the node's DSF.
RxSchedule open_receive_windows(const EndNode& node, double uplink_end, const SetsSpec& sets,
                                const phy::LinkBudgetParams& link);

// Parameter adoption: only a delivered downlink changes anything.
void apply_downlink_command(EndNode& node, const Action4& action, bool delivered,
                            const SetsSpec& sets);

double transmit_energy_j(double ptx_dbm, double airtime_s, const MacParams& mac);
double receive_energy_j(double window_s, const MacParams& mac);

}  // namespace heatlab::mac
