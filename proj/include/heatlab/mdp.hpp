#pragma once

#include <deque>
#include <optional>
#include <string>
#include <vector>

#include "heatlab/node.hpp"
#include "heatlab/rng.hpp"
#include "heatlab/sim.hpp"

namespace heatlab::mdp {

using mac::Action4;

// Per-node state: gateway distance plus the four tunable parameters,
// index-encoded against the configured sets. The global state is the
// length-N sequence of these.
struct NodeState5 {
  double d_norm = 0.0;  // distance / deployment radius, in [0, 1]
  int usf_i = 0;
  int p_i = 0;
  int dsf_i = 0;
  int w_i = 0;
  bool operator==(const NodeState5&) const = default;
};

NodeState5 state_of(const mac::EndNode& node, double radius_m);

// Dense feature encodings for the networks: d_norm followed by one-hot blocks.
int state_feature_dim(const mac::SetsSpec& sets);
int action_feature_dim(const mac::SetsSpec& sets);
void encode_state(const NodeState5& s, const mac::SetsSpec& sets, double* out);
void encode_action(const Action4& a, const mac::SetsSpec& sets, double* out);

int action_flat_index(const Action4& a, const mac::SetsSpec& sets);
Action4 action_from_flat(int index, const mac::SetsSpec& sets);

// Reward: -2*log2(1 - (1-lambda)*p - lambda*h), p the instantaneous delivery
// ratio and h the history value; the argument is clamped to [1e-6, 1].
inline constexpr double kRewardClampEps = 1e-6;
double reward(long inst_succ, long inst_sent, double h_value, double trade_off_lambda);

// Pooled per-parameter-cell delivery history with Laplace smoothing.
// Unvisited cells report the 0.5 prior.
class HistoryTracker {
 public:
  explicit HistoryTracker(const mac::SetsSpec& sets);
  void update(const Action4& cell, bool delivered);
  double value(const Action4& cell) const;
  long observations(const Action4& cell) const;

 private:
  struct Cell {
    long sent = 0;
    long succ = 0;
  };
  const Cell& at(const Action4& cell) const;
  mac::SetsSpec sets_;
  std::vector<Cell> cells_;
};

enum class Origin { Offline, Online };

struct Transition {
  int node = 0;
  long t_index = 0;
  NodeState5 s;
  Action4 a;
  double r = 0.0;
  NodeState5 s_next;
  Origin origin = Origin::Offline;
  double time = 0.0;
};

struct NotReady : std::runtime_error {
  NotReady() : std::runtime_error("replay buffer has no transition for some node") {}
};

// Capacity-bounded store of transitions, grouped per node, with snapshot
// sampling: a cut time drawn uniformly over the recorded snapshot times, then
// each node's latest transition at or before the cut. Rows of a sampled batch
// are therefore contemporaneous across nodes.
class ReplayBuffer {
 public:
  ReplayBuffer(int n_nodes, std::size_t capacity, Origin origin);

  void record(Transition t);
  std::size_t size() const { return size_; }
  int n_nodes() const { return static_cast<int>(per_node_.size()); }
  Origin origin() const { return origin_; }

  // Snapshot times at which every node already has at least one transition.
  std::vector<double> eligible_cuts() const;
  std::vector<Transition> batch_at_cut(double cut) const;
  std::vector<Transition> sample_global_batch(Rng& rng) const;

  std::vector<Transition> all() const;

  void save_jsonl(const std::string& path) const;
  static ReplayBuffer load_jsonl(const std::string& path);

 private:
  void evict_oldest();
  Origin origin_;
  std::size_t capacity_;
  std::size_t size_ = 0;
  std::vector<std::deque<Transition>> per_node_;
  std::deque<double> record_times_;  // FIFO-aligned with insertion order
};

// Union view over the offline and online buffers: sampling is uniform over
// the combined snapshot list, keeping each snapshot's cross-node consistency.
class HybridBuffer {
 public:
  HybridBuffer(const ReplayBuffer* offline, const ReplayBuffer* online)
      : offline_(offline), online_(online) {}
  std::vector<Transition> sample_global_batch(Rng& rng) const;

 private:
  const ReplayBuffer* offline_;
  const ReplayBuffer* online_;
};

// Policy hook: chooses the next-cycle parameters for one node given the full
// fleet view. Implementations must be indistinguishable to the simulator.
struct PolicyContext {
  const std::vector<mac::EndNode>& nodes;
  const mac::SetsSpec& sets;
  double radius_m;
  Rng& rng;
  const HistoryTracker& history;
  double now;
};

class Policy {
 public:
  virtual ~Policy() = default;
  virtual Action4 act(int node_index, PolicyContext& ctx) = 0;
  // Server-side observation of every uplink outcome (ADR-style policies).
  virtual void observe_uplink(int, const sim::UplinkReport&) {}
  virtual const char* name() const = 0;
};

// Training hook, notified after every recorded transition.
class Trainer {
 public:
  virtual ~Trainer() = default;
  virtual void on_transition_recorded(double now) = 0;
};

// MDP facade wired into the simulator's server callback: decision at every
// uplink end, reward finalized one step in arrears, transitions recorded into
// the sink buffer.
class Environment : public sim::ServerCallback {
 public:
  Environment(const mac::SetsSpec& sets, double radius_m, double trade_off_lambda, Policy& policy,
              Rng policy_rng, HistoryTracker& tracker, ReplayBuffer* sink, Trainer* trainer);

  void attach(const std::vector<mac::EndNode>& nodes);

  std::optional<Action4> on_uplink_processed(const sim::UplinkReport& report,
                                             const mac::EndNode& node) override;
  void on_downlink_result(int node, const Action4& action, bool delivered) override;

  const std::vector<mac::EndNode>* fleet = nullptr;  // set by attach via runner

 private:
  struct PendingStep {
    NodeState5 s;
    Action4 a;
    long sent = 0;
    long succ = 0;
  };
  mac::SetsSpec sets_;
  double radius_m_;
  double lambda_;
  Policy& policy_;
  Rng policy_rng_;
  HistoryTracker& tracker_;
  ReplayBuffer* sink_;
  Trainer* trainer_;
  std::vector<PendingStep> pending_;
  std::vector<long> t_index_;
};

// Runs the simulator under the given policy for the stated simulated time and
// fills (and returns) an offline buffer, plus the run metrics.
struct CollectResult {
  ReplayBuffer buffer;
  sim::RunMetrics metrics;
};
CollectResult collect_offline(const sim::Scenario& scenario, double minutes, Policy& policy,
                              HistoryTracker& tracker, double trade_off_lambda,
                              std::size_t capacity);

}  // namespace heatlab::mdp
