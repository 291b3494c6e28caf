#include "heatlab/mdp.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>

#include <json.hpp>

namespace heatlab::mdp {

using nlohmann::json;

NodeState5 state_of(const mac::EndNode& node, double radius_m) {
  NodeState5 s;
  s.d_norm = node.distance_m / radius_m;
  s.usf_i = node.usf_i;
  s.p_i = node.p_i;
  s.dsf_i = node.dsf_i;
  s.w_i = node.w_i;
  return s;
}

int state_feature_dim(const mac::SetsSpec& sets) {
  return 1 + static_cast<int>(sets.usf.size() + sets.power_dbm.size() + sets.dsf.size() +
                              sets.window_symbols.size());
}

int action_feature_dim(const mac::SetsSpec& sets) {
  return static_cast<int>(sets.usf.size() + sets.power_dbm.size() + sets.dsf.size() +
                          sets.window_symbols.size());
}

namespace {
void one_hot(double* out, int offset, int index) { out[offset + index] = 1.0; }
}  // namespace

void encode_state(const NodeState5& s, const mac::SetsSpec& sets, double* out) {
  int dim = state_feature_dim(sets);
  std::fill(out, out + dim, 0.0);
  out[0] = s.d_norm;
  int off = 1;
  one_hot(out, off, s.usf_i);
  off += static_cast<int>(sets.usf.size());
  one_hot(out, off, s.p_i);
  off += static_cast<int>(sets.power_dbm.size());
  one_hot(out, off, s.dsf_i);
  off += static_cast<int>(sets.dsf.size());
  one_hot(out, off, s.w_i);
}

void encode_action(const Action4& a, const mac::SetsSpec& sets, double* out) {
  int dim = action_feature_dim(sets);
  std::fill(out, out + dim, 0.0);
  int off = 0;
  one_hot(out, off, a.usf_i);
  off += static_cast<int>(sets.usf.size());
  one_hot(out, off, a.p_i);
  off += static_cast<int>(sets.power_dbm.size());
  one_hot(out, off, a.dsf_i);
  off += static_cast<int>(sets.dsf.size());
  one_hot(out, off, a.w_i);
}

int action_flat_index(const Action4& a, const mac::SetsSpec& sets) {
  int idx = a.usf_i;
  idx = idx * static_cast<int>(sets.power_dbm.size()) + a.p_i;
  idx = idx * static_cast<int>(sets.dsf.size()) + a.dsf_i;
  idx = idx * static_cast<int>(sets.window_symbols.size()) + a.w_i;
  return idx;
}

Action4 action_from_flat(int index, const mac::SetsSpec& sets) {
  Action4 a;
  a.w_i = index % static_cast<int>(sets.window_symbols.size());
  index /= static_cast<int>(sets.window_symbols.size());
  a.dsf_i = index % static_cast<int>(sets.dsf.size());
  index /= static_cast<int>(sets.dsf.size());
  a.p_i = index % static_cast<int>(sets.power_dbm.size());
  index /= static_cast<int>(sets.power_dbm.size());
  a.usf_i = index;
  return a;
}

double reward(long inst_succ, long inst_sent, double h_value, double trade_off_lambda) {
  if (inst_sent < 0) throw std::domain_error("inst_sent must be >= 0");
  double p = inst_sent == 0 ? h_value : static_cast<double>(inst_succ) / inst_sent;
  double arg = 1.0 - (1.0 - trade_off_lambda) * p - trade_off_lambda * h_value;
  arg = std::clamp(arg, kRewardClampEps, 1.0);
  return -2.0 * std::log2(arg);
}

HistoryTracker::HistoryTracker(const mac::SetsSpec& sets)
    : sets_(sets), cells_(sets.action_space_size()) {}

const HistoryTracker::Cell& HistoryTracker::at(const Action4& cell) const {
  return cells_[action_flat_index(cell, sets_)];
}

void HistoryTracker::update(const Action4& cell, bool delivered) {
  Cell& c = cells_[action_flat_index(cell, sets_)];
  c.sent += 1;
  if (delivered) c.succ += 1;
}

double HistoryTracker::value(const Action4& cell) const {
  const Cell& c = at(cell);
  return static_cast<double>(c.succ + 1) / static_cast<double>(c.sent + 2);
}

long HistoryTracker::observations(const Action4& cell) const { return at(cell).sent; }

ReplayBuffer::ReplayBuffer(int n_nodes, std::size_t capacity, Origin origin)
    : origin_(origin), capacity_(capacity), per_node_(n_nodes) {}

void ReplayBuffer::evict_oldest() {
  // Drop the globally oldest transition (FIFO across nodes).
  std::size_t victim = per_node_.size();
  double oldest = 0.0;
  for (std::size_t i = 0; i < per_node_.size(); ++i) {
    if (per_node_[i].empty()) continue;
    if (victim == per_node_.size() || per_node_[i].front().time < oldest) {
      victim = i;
      oldest = per_node_[i].front().time;
    }
  }
  if (victim == per_node_.size()) return;
  per_node_[victim].pop_front();
  record_times_.pop_front();
  size_ -= 1;
}

void ReplayBuffer::record(Transition t) {
  if (t.node < 0 || t.node >= static_cast<int>(per_node_.size())) {
    throw std::domain_error("transition node out of range");
  }
  if (!std::isfinite(t.r)) throw std::domain_error("transition reward must be finite");
  if (size_ >= capacity_) evict_oldest();
  per_node_[t.node].push_back(std::move(t));
  record_times_.push_back(per_node_[t.node].back().time);
  size_ += 1;
}

std::vector<double> ReplayBuffer::eligible_cuts() const {
  double ready_at = 0.0;
  for (const auto& q : per_node_) {
    if (q.empty()) return {};
    ready_at = std::max(ready_at, q.front().time);
  }
  std::vector<double> cuts;
  cuts.reserve(record_times_.size());
  for (double t : record_times_) {
    if (t >= ready_at) cuts.push_back(t);
  }
  std::sort(cuts.begin(), cuts.end());
  return cuts;
}

std::vector<Transition> ReplayBuffer::batch_at_cut(double cut) const {
  std::vector<Transition> batch;
  batch.reserve(per_node_.size());
  for (const auto& q : per_node_) {
    const Transition* latest = nullptr;
    for (const auto& t : q) {
      if (t.time <= cut) latest = &t;
      else break;
    }
    if (!latest) throw NotReady{};
    batch.push_back(*latest);
  }
  return batch;
}

std::vector<Transition> ReplayBuffer::sample_global_batch(Rng& rng) const {
  auto cuts = eligible_cuts();
  if (cuts.empty()) throw NotReady{};
  double cut = cuts[rng.uniform_index(cuts.size())];
  return batch_at_cut(cut);
}

std::vector<Transition> ReplayBuffer::all() const {
  std::vector<Transition> out;
  out.reserve(size_);
  for (const auto& q : per_node_) out.insert(out.end(), q.begin(), q.end());
  std::sort(out.begin(), out.end(), [](const Transition& a, const Transition& b) {
    if (a.time != b.time) return a.time < b.time;
    return a.node < b.node;
  });
  return out;
}

std::vector<Transition> HybridBuffer::sample_global_batch(Rng& rng) const {
  std::vector<double> off_cuts = offline_ ? offline_->eligible_cuts() : std::vector<double>{};
  std::vector<double> on_cuts = online_ ? online_->eligible_cuts() : std::vector<double>{};
  std::size_t total = off_cuts.size() + on_cuts.size();
  if (total == 0) throw NotReady{};
  std::size_t pick = rng.uniform_index(total);
  if (pick < off_cuts.size()) return offline_->batch_at_cut(off_cuts[pick]);
  return online_->batch_at_cut(on_cuts[pick - off_cuts.size()]);
}

namespace {
json state_to_json(const NodeState5& s) {
  return json::array({s.d_norm, s.usf_i, s.p_i, s.dsf_i, s.w_i});
}
NodeState5 state_from_json(const json& j) {
  NodeState5 s;
  s.d_norm = j.at(0).get<double>();
  s.usf_i = j.at(1).get<int>();
  s.p_i = j.at(2).get<int>();
  s.dsf_i = j.at(3).get<int>();
  s.w_i = j.at(4).get<int>();
  return s;
}
}  // namespace

inline constexpr int kReplayFormatVersion = 1;

void ReplayBuffer::save_jsonl(const std::string& path) const {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot open " + path + " for writing");
  json header{{"format", "heatlab-replay"},
              {"version", kReplayFormatVersion},
              {"n_nodes", static_cast<int>(per_node_.size())},
              {"origin", origin_ == Origin::Offline ? "offline" : "online"},
              {"capacity", capacity_}};
  out << header.dump() << "\n";
  for (const auto& t : all()) {
    json row{{"node", t.node},     {"t", t.t_index},
             {"s", state_to_json(t.s)},
             {"a", json::array({t.a.usf_i, t.a.p_i, t.a.dsf_i, t.a.w_i})},
             {"r", t.r},           {"s_next", state_to_json(t.s_next)},
             {"origin", t.origin == Origin::Offline ? "offline" : "online"},
             {"time", t.time}};
    out << row.dump() << "\n";
  }
}

ReplayBuffer ReplayBuffer::load_jsonl(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open " + path);
  std::string line;
  if (!std::getline(in, line)) throw std::runtime_error("replay file truncated: missing header");
  json header = json::parse(line);
  if (header.at("format").get<std::string>() != "heatlab-replay") {
    throw std::runtime_error("not a replay buffer file: " + path);
  }
  int version = header.at("version").get<int>();
  if (version != kReplayFormatVersion) {
    throw std::runtime_error("replay format version mismatch: file has " +
                             std::to_string(version) + ", this build reads " +
                             std::to_string(kReplayFormatVersion));
  }
  Origin origin =
      header.at("origin").get<std::string>() == "offline" ? Origin::Offline : Origin::Online;
  ReplayBuffer buf(header.at("n_nodes").get<int>(), header.at("capacity").get<std::size_t>(),
                   origin);
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    json row = json::parse(line);
    Transition t;
    t.node = row.at("node").get<int>();
    t.t_index = row.at("t").get<long>();
    t.s = state_from_json(row.at("s"));
    const auto& a = row.at("a");
    t.a = Action4{a.at(0).get<int>(), a.at(1).get<int>(), a.at(2).get<int>(), a.at(3).get<int>()};
    t.r = row.at("r").get<double>();
    t.s_next = state_from_json(row.at("s_next"));
    t.origin = row.at("origin").get<std::string>() == "offline" ? Origin::Offline : Origin::Online;
    t.time = row.at("time").get<double>();
    buf.record(std::move(t));
  }
  return buf;
}

Environment::Environment(const mac::SetsSpec& sets, double radius_m, double trade_off_lambda,
                         Policy& policy, Rng policy_rng, HistoryTracker& tracker,
                         ReplayBuffer* sink, Trainer* trainer)
    : sets_(sets),
      radius_m_(radius_m),
      lambda_(trade_off_lambda),
      policy_(policy),
      policy_rng_(policy_rng),
      tracker_(tracker),
      sink_(sink),
      trainer_(trainer) {}

void Environment::attach(const std::vector<mac::EndNode>& nodes) {
  fleet = &nodes;
  pending_.clear();
  t_index_.assign(nodes.size(), 0);
  for (const auto& n : nodes) {
    // The initial parameter assignment acts as step zero's action: the first
    // uplink's outcome is credited to it.
    NodeState5 s = state_of(n, radius_m_);
    pending_.push_back(PendingStep{s, Action4{n.usf_i, n.p_i, n.dsf_i, n.w_i}, n.n_sent, n.n_succ});
  }
}

std::optional<Action4> Environment::on_uplink_processed(const sim::UplinkReport& report,
                                                        const mac::EndNode& node) {
  PendingStep& pend = pending_[report.node];
  Action4 flown_cell{node.usf_i, node.p_i, node.dsf_i, node.w_i};
  tracker_.update(flown_cell, report.delivered);
  policy_.observe_uplink(report.node, report);

  NodeState5 cur = state_of(node, radius_m_);
  double h = tracker_.value(Action4{pend.s.usf_i, pend.s.p_i, pend.s.dsf_i, pend.s.w_i});
  double r = reward(node.n_succ - pend.succ, node.n_sent - pend.sent, h, lambda_);
  if (sink_) {
    sink_->record(Transition{report.node, t_index_[report.node]++, pend.s, pend.a, r, cur,
                             sink_->origin(), report.now});
  }

  PolicyContext ctx{*fleet, sets_, radius_m_, policy_rng_, tracker_, report.now};
  Action4 next = policy_.act(report.node, ctx);
  pend = PendingStep{cur, next, node.n_sent, node.n_succ};

  if (trainer_) trainer_->on_transition_recorded(report.now);
  return next;
}

void Environment::on_downlink_result(int node, const Action4& action, bool delivered) {
  // Parameter adoption is handled by the node itself; nothing to record here.
  (void)node;
  (void)action;
  (void)delivered;
}

CollectResult collect_offline(const sim::Scenario& scenario, double minutes, Policy& policy,
                              HistoryTracker& tracker, double trade_off_lambda,
                              std::size_t capacity) {
  sim::Scenario collect = scenario;
  collect.deploy.duration_s = minutes * 60.0;
  ReplayBuffer buffer(collect.deploy.n_nodes, capacity, Origin::Offline);
  Environment env(collect.sets, collect.deploy.radius_m, trade_off_lambda, policy,
                  derive_rng(collect.deploy.seed, "policy"), tracker, &buffer, nullptr);
  sim::Simulator simulator(collect, &env);
  env.attach(simulator.nodes());
  auto metrics = simulator.run();
  return CollectResult{std::move(buffer), std::move(metrics)};
}

}  // namespace heatlab::mdp
