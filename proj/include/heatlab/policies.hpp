#pragma once

#include <deque>
#include <vector>

#include "heatlab/mdp.hpp"

namespace heatlab::policies {

// Uniform random over every action field, independently.
class RandomUniform : public mdp::Policy {
 public:
  mdp::Action4 act(int node_index, mdp::PolicyContext& ctx) override;
  const char* name() const override { return "random"; }
};

// Margin-driven ADR-style server policy: steps SF down, then power down,
// while the best recent SNR clears the demodulation floor plus an adaptive
// link margin. The margin itself moves 3 dB on loss-rate threshold crossings.
class AdrLike : public mdp::Policy {
 public:
  struct Config {
    int snr_window = 20;
    double initial_margin_db = 10.0;
    double margin_step_db = 3.0;
    double step_db = 3.0;             // one SF or power level per 3 dB of headroom
    double loss_low = 0.10;
    double loss_high = 0.30;
    int adaptation_period = 20;       // uplinks between margin adaptations
    double margin_min_db = 0.0;
    double margin_max_db = 30.0;
  };

  explicit AdrLike(int n_nodes, Config cfg = {});

  mdp::Action4 act(int node_index, mdp::PolicyContext& ctx) override;
  void observe_uplink(int node_index, const sim::UplinkReport& report) override;
  const char* name() const override { return "adrx"; }

  double margin_db(int node_index) const { return state_[node_index].margin_db; }

 private:
  struct NodeAdr {
    std::deque<double> snr_ring;  // delivered uplinks only
    double margin_db = 0.0;
    long window_sent = 0;
    long window_lost = 0;
  };
  Config cfg_;
  std::vector<NodeAdr> state_;
};

}  // namespace heatlab::policies
