#pragma once

#include <functional>
#include <map>
#include <optional>
#include <queue>
#include <string>
#include <vector>

#include "heatlab/gateway.hpp"
#include "heatlab/node.hpp"
#include "heatlab/phy.hpp"
#include "heatlab/rng.hpp"

namespace heatlab::sim {

struct DeploymentConfig {
  int n_nodes = 32;
  double radius_m = 5000.0;
  double traffic_delta_per_min = 2.0;
  double duration_s = 7200.0;
  std::uint64_t seed = 0;

  void validate() const {
    if (n_nodes < 1) throw std::domain_error("n_nodes must be >= 1");
    if (radius_m <= 0) throw std::domain_error("radius must be > 0");
    if (traffic_delta_per_min <= 0) throw std::domain_error("traffic rate must be > 0");
    if (duration_s < 0) throw std::domain_error("duration must be >= 0");
  }
};

struct Scenario {
  DeploymentConfig deploy;
  phy::LinkBudgetParams link;
  mac::SetsSpec sets = mac::SetsSpec::defaults();
  mac::MacParams mac;
  bool half_duplex = true;
};

struct RunMetrics {
  long sent = 0;
  long succ = 0;
  double energy_joules = 0.0;
  std::map<std::string, long> verdict_counts;
  long downlinks_scheduled = 0;
  long downlinks_dropped = 0;
  std::vector<long> node_sent;
  std::vector<long> node_succ;
  std::vector<double> node_energy;

  std::optional<double> pdr() const {
    if (sent == 0) return std::nullopt;
    return static_cast<double>(succ) / static_cast<double>(sent);
  }
  std::optional<double> eer() const {
    if (energy_joules <= 0) return std::nullopt;
    return static_cast<double>(succ) / energy_joules;
  }
};

struct TraceRow {
  double time = 0.0;
  int node = 0;
  int channel = 0;
  int sf = 0;
  std::string verdict;
  double rssi_dbm = 0.0;
  double sinr_db = 0.0;
};

// Everything the server side learns about one finished uplink.
struct UplinkReport {
  int node = 0;
  bool delivered = false;
  double rssi_dbm = 0.0;
  double sinr_db = 0.0;
  double snr_db = 0.0;  // interference-free margin, what an ADR-style server tracks
  double now = 0.0;
};

// Network-server hook. Called at the end of every uplink; the returned action
// is transmitted back only when the uplink itself was delivered (the server
// cannot answer a packet it never received).
class ServerCallback {
 public:
  virtual ~ServerCallback() = default;
  virtual std::optional<mac::Action4> on_uplink_processed(const UplinkReport& report,
                                                          const mac::EndNode& node) = 0;
  virtual void on_downlink_result(int, const mac::Action4&, bool) {}
};

// Uniform placement on the disk of the given radius (a conditioned-on-N
// realization of the homogeneous Poisson point process).
std::vector<mac::EndNode> deploy_nodes(const DeploymentConfig& config, Rng& rng);

// Deterministic event core. Event ties break on (time, kind rank, node, seq).
class Simulator {
 public:
  Simulator(const Scenario& scenario, ServerCallback* server);

  RunMetrics run();

  const std::vector<mac::EndNode>& nodes() const { return nodes_; }
  const std::vector<TraceRow>& trace() const { return trace_; }
  void set_trace_enabled(bool on) { trace_enabled_ = on; }

 private:
  enum class EventKind : int {
    DownlinkEnd = 0,
    UplinkEnd = 1,
    Rx1Close = 2,
    Rx2Close = 3,
    DownlinkStart = 4,
    Rx1Open = 5,
    Rx2Open = 6,
    UplinkStart = 7,
  };

  struct Event {
    double time;
    EventKind kind;
    int node;
    std::uint64_t seq;
    std::uint64_t attempt_id;
  };
  struct EventOrder {
    bool operator()(const Event& a, const Event& b) const {
      if (a.time != b.time) return a.time > b.time;
      if (a.kind != b.kind) return static_cast<int>(a.kind) > static_cast<int>(b.kind);
      if (a.node != b.node) return a.node > b.node;
      return a.seq > b.seq;
    }
  };

  void push(double time, EventKind kind, int node, std::uint64_t attempt_id = 0);
  void handle_uplink_start(const Event& ev);
  void handle_uplink_end(const Event& ev);

  struct PendingDownlink {
    mac::Action4 action;
    double start = 0.0;
    double end = 0.0;
    bool in_rx1 = false;
  };
  struct NodeRuntime {
    std::optional<PendingDownlink> pending_downlink;
    mac::RxSchedule rx;
    bool rx2_suppressed = false;
    std::optional<phy::TransmissionAttempt> in_flight;
  };

  Scenario scenario_;
  ServerCallback* server_;
  phy::SfTable table_;
  phy::SfOrthogonality coupling_;
  gw::Gateway gateway_;
  std::vector<mac::EndNode> nodes_;
  std::vector<NodeRuntime> runtime_;
  std::vector<Rng> node_rngs_;
  std::priority_queue<Event, std::vector<Event>, EventOrder> queue_;
  std::uint64_t next_seq_ = 0;
  std::uint64_t next_attempt_id_ = 1;
  double last_event_time_ = 0.0;
  RunMetrics metrics_;
  std::vector<TraceRow> trace_;
  bool trace_enabled_ = false;
};

}  // namespace heatlab::sim
