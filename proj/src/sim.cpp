#include "heatlab/sim.hpp"

#include <cmath>

namespace heatlab::sim {

namespace {
constexpr double kTwoPi = 6.28318530717958647692;
}

std::vector<mac::EndNode> deploy_nodes(const DeploymentConfig& config, Rng& rng) {
  config.validate();
  std::vector<mac::EndNode> nodes(config.n_nodes);
  for (int i = 0; i < config.n_nodes; ++i) {
    nodes[i].id = i;
    // r = R*sqrt(u) gives uniform density on the disk; the angle is dropped
    // since only the gateway distance enters the link budget.
    double u = rng.uniform01();
    rng.uniform01();  // angle draw, kept for stream-shape stability
    double r = config.radius_m * std::sqrt(u);
    if (r <= 0) r = 1e-3;  // zero-distance draws are invalid input downstream
    nodes[i].distance_m = r;
  }
  return nodes;
}

Simulator::Simulator(const Scenario& scenario, ServerCallback* server)
    : scenario_(scenario),
      server_(server),
      table_(),
      coupling_(),
      gateway_(scenario.link, table_, coupling_, scenario.half_duplex) {
  scenario_.deploy.validate();
  scenario_.sets.validate();
  if (scenario_.mac.preamble_symbols < scenario_.link.lock_preambles) {
    throw std::domain_error("preamble_symbols must be >= lock_preambles");
  }
  Rng deploy_rng = derive_rng(scenario_.deploy.seed, "deploy");
  nodes_ = deploy_nodes(scenario_.deploy, deploy_rng);
  runtime_.resize(nodes_.size());
  node_rngs_.reserve(nodes_.size());
  for (std::size_t i = 0; i < nodes_.size(); ++i) {
    init_node_params(nodes_[i], scenario_.deploy.radius_m, scenario_.sets, scenario_.mac);
    node_rngs_.push_back(derive_rng(scenario_.deploy.seed, "node", i));
  }
  metrics_.node_sent.assign(nodes_.size(), 0);
  metrics_.node_succ.assign(nodes_.size(), 0);
  metrics_.node_energy.assign(nodes_.size(), 0.0);
}

void Simulator::push(double time, EventKind kind, int node, std::uint64_t attempt_id) {
  queue_.push(Event{time, kind, node, next_seq_++, attempt_id});
}

void Simulator::handle_uplink_start(const Event& ev) {
  mac::EndNode& node = nodes_[ev.node];
  if (last_event_time_ < node.busy_until) {
    // Generation landed inside the node's transmit/receive phase; transmit
    // as soon as the node goes idle.
    push(node.busy_until, EventKind::UplinkStart, ev.node);
    return;
  }
  auto attempt = mac::begin_uplink(node, last_event_time_, node_rngs_[ev.node], scenario_.sets,
                                   scenario_.mac, scenario_.link, next_attempt_id_++);
  runtime_[ev.node].in_flight = attempt;
  gateway_.begin_uplink(attempt, last_event_time_);
  push(attempt.end_time, EventKind::UplinkEnd, ev.node, attempt.id);
  // Next generation follows the node's Poisson process regardless of outcome.
  double gap = mac::next_uplink_gap_s(node_rngs_[ev.node], scenario_.deploy.traffic_delta_per_min);
  double next_start = attempt.start_time + gap;
  if (next_start <= scenario_.deploy.duration_s) {
    push(next_start, EventKind::UplinkStart, ev.node);
  }
}

void Simulator::handle_uplink_end(const Event& ev) {
  mac::EndNode& node = nodes_[ev.node];
  NodeRuntime& rt = runtime_[ev.node];
  auto outcome = gateway_.end_uplink(ev.attempt_id, last_event_time_);
  bool delivered = outcome.verdict == gw::Verdict::Delivered;
  if (delivered) {
    node.n_succ += 1;
    metrics_.succ += 1;
    metrics_.node_succ[ev.node] += 1;
  }
  metrics_.sent += 1;
  metrics_.node_sent[ev.node] += 1;
  metrics_.verdict_counts[gw::verdict_name(outcome.verdict)] += 1;
  if (trace_enabled_) {
    trace_.push_back(TraceRow{last_event_time_, ev.node, rt.in_flight->channel, rt.in_flight->sf,
                              gw::verdict_name(outcome.verdict), outcome.measured_rssi_dbm,
                              outcome.measured_sinr_db});
  }
  rt.in_flight.reset();

  // Receive windows are the node's, sized from its current DSF/window config.
  rt.rx = mac::open_receive_windows(node, last_event_time_, scenario_.sets, scenario_.link);
  rt.rx2_suppressed = false;
  rt.pending_downlink.reset();
  push(rt.rx.rx1_open, EventKind::Rx1Open, ev.node);
  push(rt.rx.rx1_close, EventKind::Rx1Close, ev.node);
  push(rt.rx.rx2_open, EventKind::Rx2Open, ev.node);
  push(rt.rx.rx2_close, EventKind::Rx2Close, ev.node);
  node.busy_until = rt.rx.rx2_close;

  std::optional<mac::Action4> action;
  if (server_) {
    UplinkReport report{ev.node, delivered, outcome.measured_rssi_dbm, outcome.measured_sinr_db,
                        outcome.measured_rssi_dbm - gateway_.noise_floor(), last_event_time_};
    action = server_->on_uplink_processed(report, node);
  }
  if (action && delivered) {
    int dsf = node.dsf(scenario_.sets);
    auto air = phy::time_on_air(dsf, scenario_.mac.downlink_payload_bytes,
                                scenario_.mac.preamble_symbols, scenario_.link.bandwidth_hz,
                                scenario_.link.coding_rate);
    auto sched = gateway_.schedule_downlink(gw::DownlinkWindow{rt.rx.rx1_open, rt.rx.rx1_close},
                                            gw::DownlinkWindow{rt.rx.rx2_open, rt.rx.rx2_close},
                                            air.total_s);
    if (sched) {
      rt.pending_downlink = PendingDownlink{*action, sched->start, sched->end, sched->in_rx1};
      if (sched->in_rx1) rt.rx2_suppressed = true;
      push(sched->start, EventKind::DownlinkStart, ev.node);
      push(sched->end, EventKind::DownlinkEnd, ev.node);
      node.busy_until = std::max(node.busy_until, sched->end);
      metrics_.downlinks_scheduled += 1;
    } else {
      metrics_.downlinks_dropped += 1;
      if (server_) server_->on_downlink_result(ev.node, *action, false);
    }
  }
}

RunMetrics Simulator::run() {
  for (std::size_t i = 0; i < nodes_.size(); ++i) {
    double first = mac::next_uplink_gap_s(node_rngs_[i], scenario_.deploy.traffic_delta_per_min);
    if (first <= scenario_.deploy.duration_s) {
      push(first, EventKind::UplinkStart, static_cast<int>(i));
    }
  }
  while (!queue_.empty()) {
    Event ev = queue_.top();
    queue_.pop();
    if (ev.time < last_event_time_) throw std::logic_error("event time regression");
    last_event_time_ = ev.time;
    mac::EndNode& node = nodes_[ev.node];
    NodeRuntime& rt = runtime_[ev.node];
    switch (ev.kind) {
      case EventKind::UplinkStart:
        handle_uplink_start(ev);
        break;
      case EventKind::UplinkEnd:
        handle_uplink_end(ev);
        break;
      case EventKind::Rx1Open: {
        double len = rt.rx.rx1_close - rt.rx.rx1_open;
        double e = mac::receive_energy_j(len, scenario_.mac);
        node.energy_joules += e;
        break;
      }
      case EventKind::Rx2Open: {
        if (rt.rx2_suppressed) break;
        double len = rt.rx.rx2_close - rt.rx.rx2_open;
        double e = mac::receive_energy_j(len, scenario_.mac);
        node.energy_joules += e;
        break;
      }
      case EventKind::Rx1Close:
      case EventKind::Rx2Close:
        break;
      case EventKind::DownlinkStart:
        if (rt.pending_downlink && rt.pending_downlink->start == ev.time) {
          gateway_.begin_downlink(rt.pending_downlink->start, rt.pending_downlink->end);
        }
        break;
      case EventKind::DownlinkEnd:
        if (rt.pending_downlink && rt.pending_downlink->end == ev.time) {
          mac::apply_downlink_command(node, rt.pending_downlink->action, true, scenario_.sets);
          if (server_) server_->on_downlink_result(ev.node, rt.pending_downlink->action, true);
          rt.pending_downlink.reset();
        }
        break;
    }
  }
  for (std::size_t i = 0; i < nodes_.size(); ++i) {
    metrics_.node_energy[i] = nodes_[i].energy_joules;
    metrics_.energy_joules += nodes_[i].energy_joules;
  }
  return metrics_;
}

}  // namespace heatlab::sim
