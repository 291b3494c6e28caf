#include "heatlab/policies.hpp"

#include <algorithm>
#include <cmath>

#include "heatlab/phy.hpp"

namespace heatlab::policies {

mdp::Action4 RandomUniform::act(int, mdp::PolicyContext& ctx) {
  mdp::Action4 a;
  a.usf_i = static_cast<int>(ctx.rng.uniform_index(ctx.sets.usf.size()));
  a.p_i = static_cast<int>(ctx.rng.uniform_index(ctx.sets.power_dbm.size()));
  a.dsf_i = static_cast<int>(ctx.rng.uniform_index(ctx.sets.dsf.size()));
  a.w_i = static_cast<int>(ctx.rng.uniform_index(ctx.sets.window_symbols.size()));
  return a;
}

AdrLike::AdrLike(int n_nodes, Config cfg) : cfg_(cfg), state_(n_nodes) {
  for (auto& s : state_) s.margin_db = cfg_.initial_margin_db;
}

void AdrLike::observe_uplink(int node_index, const sim::UplinkReport& report) {
  NodeAdr& s = state_[node_index];
  s.window_sent += 1;
  if (report.delivered) {
    s.snr_ring.push_back(report.snr_db);
    if (static_cast<int>(s.snr_ring.size()) > cfg_.snr_window) s.snr_ring.pop_front();
  } else {
    s.window_lost += 1;
  }
  if (s.window_sent >= cfg_.adaptation_period) {
    double loss = static_cast<double>(s.window_lost) / static_cast<double>(s.window_sent);
    if (loss > cfg_.loss_high) {
      s.margin_db = std::min(cfg_.margin_max_db, s.margin_db + cfg_.margin_step_db);
    } else if (loss < cfg_.loss_low) {
      s.margin_db = std::max(cfg_.margin_min_db, s.margin_db - cfg_.margin_step_db);
    }
    s.window_sent = 0;
    s.window_lost = 0;
  }
}

mdp::Action4 AdrLike::act(int node_index, mdp::PolicyContext& ctx) {
  const mac::EndNode& node = ctx.nodes[node_index];
  NodeAdr& s = state_[node_index];
  mdp::Action4 a{node.usf_i, node.p_i, node.dsf_i, node.w_i};
  if (!s.snr_ring.empty()) {
    double snr_max = *std::max_element(s.snr_ring.begin(), s.snr_ring.end());
    static const phy::SfTable table;
    double floor_db = table.at(node.usf(ctx.sets)).demod_threshold_db;
    int steps = static_cast<int>(std::floor((snr_max - floor_db - s.margin_db) / cfg_.step_db));
    while (steps > 0) {
      if (a.usf_i > 0) {
        a.usf_i -= 1;
      } else if (a.p_i > 0) {
        a.p_i -= 1;
      } else {
        break;
      }
      steps -= 1;
    }
  }
  a.dsf_i = a.usf_i;  // serve the node at the SF it transmits with
  if (a.dsf_i >= static_cast<int>(ctx.sets.dsf.size())) {
    a.dsf_i = static_cast<int>(ctx.sets.dsf.size()) - 1;
  }
  return a;
}

}  // namespace heatlab::policies
